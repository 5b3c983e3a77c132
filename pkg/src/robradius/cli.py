"""Command-line front end: data ingestion, study configuration, radius
computation, sensitivity back-out, simulation runs, and JSON reports.

Exit codes: 0 on success, 2 on configuration problems (bad config file,
unknown columns, malformed scenario), 3 on estimation failures (collinear
designs, bootstrap breakdown, ill-conditioned covariance).
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._solver import BACKEND, QpError
from .covariance import BootstrapConfig, BootstrapError, bootstrap_cov
from .cstest import CovarianceConditionError, build_system, cc_test, rcc_test
from .datamodel import (
    DataError,
    Dataset,
    Specification,
    build_mask,
    subsample_share,
    validate_study_specs,
)
from .radius import robustness_radius
from .regress import EstimationError, fit_study, medium_stats
from .sensitivity import SensitivityInputs, sensitivity_block
from .simlab import Scenario, run_scenario

EXIT_CONFIG = 2
EXIT_ESTIMATION = 3


class ConfigError(ValueError):
    """Bad command-line arguments or configuration file."""


# ---------------------------------------------------------------------------
# study configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    """Everything a radius run needs besides the data itself."""

    specifications: tuple
    data_path: str | None = None
    cluster_column: str | None = None
    alpha: float = 0.05
    variant: str = "rcc"
    df_convention: str = "rank"
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    output_path: str | None = None
    sensitivity: bool = False
    estimates_path: str | None = None
    covariance_path: str | None = None
    must_equal: tuple | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 0.5:
            raise ConfigError("alpha must lie in (0, 0.5]")
        if self.variant not in ("cc", "rcc"):
            raise ConfigError(f"unknown variant: {self.variant!r}")
        if self.df_convention not in ("rank", "rows"):
            raise ConfigError(f"unknown df convention: {self.df_convention!r}")

    @classmethod
    def from_dict(cls, payload) -> "StudyConfig":
        known = {
            "specifications", "data_path", "cluster_column", "alpha",
            "variant", "df_convention", "bootstrap", "output_path",
            "sensitivity", "estimates_path", "covariance_path", "must_equal",
        }
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        specs = tuple(
            Specification.from_dict(p) for p in payload.get("specifications", ())
        )
        must_equal = payload.get("must_equal")
        return cls(
            specifications=specs,
            data_path=payload.get("data_path"),
            cluster_column=payload.get("cluster_column"),
            alpha=float(payload.get("alpha", 0.05)),
            variant=payload.get("variant", "rcc"),
            df_convention=payload.get("df_convention", "rank"),
            bootstrap=BootstrapConfig.from_dict(payload.get("bootstrap", {})),
            output_path=payload.get("output_path"),
            sensitivity=bool(payload.get("sensitivity", False)),
            estimates_path=payload.get("estimates_path"),
            covariance_path=payload.get("covariance_path"),
            must_equal=None if must_equal is None else tuple(must_equal),
        )

    def to_dict(self) -> dict:
        return {
            "specifications": [s.to_dict() for s in self.specifications],
            "data_path": self.data_path,
            "cluster_column": self.cluster_column,
            "alpha": self.alpha,
            "variant": self.variant,
            "df_convention": self.df_convention,
            "bootstrap": {
                "replications": self.bootstrap.replications,
                "seed": self.bootstrap.seed,
                "cluster_column": self.bootstrap.cluster_column,
                "trim_threshold": self.bootstrap.trim_threshold,
                "mode": self.bootstrap.mode,
            },
            "output_path": self.output_path,
            "sensitivity": self.sensitivity,
            "estimates_path": self.estimates_path,
            "covariance_path": self.covariance_path,
            "must_equal": None if self.must_equal is None else list(self.must_equal),
        }


def load_config(path) -> StudyConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return StudyConfig.from_dict(payload)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV helpers (repr-precision floats so round trips are exact)
# ---------------------------------------------------------------------------


def read_estimates_csv(path):
    """One header row of labels, one data row of coefficients."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) != 2 or not rows[0]:
        raise ConfigError(f"{path}: expected a label row plus one value row")
    try:
        theta = np.array([float(v) for v in rows[1]])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric estimate cell: {exc}") from exc
    if len(rows[0]) != theta.shape[0]:
        raise ConfigError(f"{path}: label and value counts differ")
    return tuple(rows[0]), theta


def read_covariance_csv(path):
    """Header row of labels, then a square numeric matrix."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty covariance file")
    labels = tuple(rows[0])
    k = len(labels)
    if len(rows) != k + 1:
        raise ConfigError(f"{path}: expected {k} matrix rows, found {len(rows) - 1}")
    try:
        matrix = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric covariance cell: {exc}") from exc
    if matrix.shape != (k, k):
        raise ConfigError(f"{path}: covariance matrix is not square")
    return labels, matrix


def write_estimates_csv(path, labels, theta):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(labels)
        writer.writerow([repr(float(v)) for v in theta])


def write_covariance_csv(path, labels, matrix):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(labels)
        for row in np.asarray(matrix):
            writer.writerow([repr(float(v)) for v in row])


def write_trace_csv(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "statistic", "r_hat", "critical_value", "reject"])
        for b, stat, r_hat, cv, reject in trace:
            writer.writerow([repr(float(b)), repr(float(stat)), r_hat,
                             repr(float(cv)), int(reject)])


def write_histogram_csv(path, summary):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        edges = summary.histogram_edges
        for left, right, count in zip(edges[:-1], edges[1:],
                                      summary.histogram_counts):
            writer.writerow([repr(float(left)), repr(float(right)), int(count)])


def _emit_json(payload, out_path):
    text = json.dumps(payload, indent=2, default=_jsonable, sort_keys=False)
    if out_path is None:
        print(text)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and math.isinf(value):
        return "infinity"
    raise TypeError(f"not JSON-serializable: {type(value)!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _apply_overrides(config, args):
    updates = {}
    if args.data is not None:
        updates["data_path"] = args.data
    if args.alpha is not None:
        updates["alpha"] = args.alpha
    if args.variant is not None:
        updates["variant"] = args.variant
    if args.df_convention is not None:
        updates["df_convention"] = args.df_convention
    if args.out is not None:
        updates["output_path"] = args.out
    if args.seed is not None:
        updates["bootstrap"] = BootstrapConfig(
            replications=config.bootstrap.replications,
            seed=args.seed,
            cluster_column=config.bootstrap.cluster_column,
            trim_threshold=config.bootstrap.trim_threshold,
            mode=config.bootstrap.mode,
        )
    if not updates:
        return config
    merged = config.to_dict()
    merged.update(
        {k: v for k, v in updates.items() if k != "bootstrap"}
    )
    rebuilt = StudyConfig.from_dict(merged)
    if "bootstrap" in updates:
        rebuilt = StudyConfig(
            **{**rebuilt.__dict__, "bootstrap": updates["bootstrap"]}
        )
    return rebuilt


def _estimate_study(config):
    """Full pipeline: data, masks, fits, bootstrap covariance."""
    if config.data_path is None:
        raise ConfigError("config has no data_path")
    if not config.specifications:
        raise ConfigError("config has no specifications")
    main_idx = validate_study_specs(config.specifications)
    specs = [config.specifications[main_idx]] + [
        s for i, s in enumerate(config.specifications) if i != main_idx
    ]
    dataset = Dataset.from_csv(config.data_path,
                               cluster_column=config.cluster_column)
    bundle = fit_study(dataset, specs)
    cov_est = bootstrap_cov(dataset, specs, config.bootstrap, keep_draws=False)
    bundle = bundle.with_cov(cov_est.matrix)

    masks = [build_mask(dataset, s) for s in specs]
    shares = [subsample_share(mask, dataset.row_count) for mask in masks]
    must_equal = tuple(s.must_equal_main for s in specs[1:])

    sens_stats = None
    if config.sensitivity:
        stats = medium_stats(dataset, specs[0], masks[0])
        sens_stats = (stats.var_ratio, stats.r2_dx)
    return bundle, cov_est, shares, must_equal, sens_stats


def _load_precomputed(config):
    if config.estimates_path is None or config.covariance_path is None:
        raise ConfigError(
            "--precomputed needs estimates_path and covariance_path in the config"
        )
    labels, theta = read_estimates_csv(config.estimates_path)
    cov_labels, cov = read_covariance_csv(config.covariance_path)
    if labels != cov_labels:
        raise ConfigError("estimate and covariance labels disagree")
    return labels, theta, cov


def cmd_radius(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if args.precomputed:
        labels, theta, cov = _load_precomputed(config)
        estimates = [
            {"label": lab, "theta_hat": float(t), "se": None, "n": None,
             "share": None}
            for lab, t in zip(labels, theta)
        ]
        must_equal = config.must_equal
        sens_stats = None
    else:
        bundle, cov_est, shares, must_equal, sens_stats = _estimate_study(config)
        labels, theta, cov = bundle.labels, bundle.theta, bundle.cov
        estimates = [
            {
                "label": lab,
                "theta_hat": float(t),
                "se": float(se),
                "n": int(nj),
                "share": float(share),
            }
            for lab, t, se, nj, share in zip(
                labels, theta, bundle.se_conventional, bundle.n_per_spec, shares
            )
        ]

    rr = robustness_radius(
        theta, cov, alpha=config.alpha, variant=config.variant,
        must_equal=must_equal, df_convention=config.df_convention,
    )
    radius_dict = rr.to_dict()
    if not args.trace:
        radius_dict.pop("search_trace")

    sens = None
    if sens_stats is not None and rr.finite:
        sens = sensitivity_block(
            SensitivityInputs(b_rr=rr.b_rr, var_ratio=sens_stats[0],
                              r2_dx=sens_stats[1])
        )

    report = {
        "tool": "robradius",
        "version": __version__,
        "qp_backend": BACKEND,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": config.bootstrap.seed,
        "config": config.to_dict(),
        "estimates": estimates,
        "covariance": {"labels": list(labels), "matrix": np.asarray(cov)},
        "radius": radius_dict,
        "sensitivity": sens,
    }
    _emit_json(report, config.output_path)
    if args.trace_csv is not None:
        write_trace_csv(args.trace_csv, rr.search_trace)
    return 0


def cmd_test(args) -> int:
    if args.estimates is None or args.covariance is None:
        raise ConfigError("test needs --estimates and --covariance")
    if args.b is None or args.b < 0:
        raise ConfigError("test needs a nonnegative --b")
    labels, theta = read_estimates_csv(args.estimates)
    cov_labels, cov = read_covariance_csv(args.covariance)
    if labels != cov_labels:
        raise ConfigError("estimate and covariance labels disagree")
    system = build_system(theta.shape[0] - 1, args.b)
    alpha = 0.05 if args.alpha is None else args.alpha
    variant = args.variant or "rcc"
    df_convention = args.df_convention or "rank"
    runner = rcc_test if variant == "rcc" else cc_test
    outcome = runner(theta, cov, system, alpha, df_convention=df_convention)
    payload = outcome.to_dict()
    payload["b"] = args.b
    payload["labels"] = list(labels)
    _emit_json(payload, args.out)
    return 0


def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            payload = json.load(fh)
        scenario = Scenario.from_dict(payload)
    except (OSError, json.JSONDecodeError, KeyError, TypeError,
            ValueError) as exc:
        raise ConfigError(f"bad scenario {args.config}: {exc}") from exc
    threads = args.threads if args.threads is not None else 1
    if threads < 1:
        raise ConfigError("--threads must be at least 1")
    summary = run_scenario(scenario, keep_reps=args.trace, threads=threads)
    out = {
        "tool": "robradius",
        "version": __version__,
        "scenario": payload,
        "summary": summary.to_dict(include_reps=args.trace),
    }
    _emit_json(out, args.out)
    if args.hist_csv is not None:
        write_histogram_csv(args.hist_csv, summary)
    return 0


def cmd_sensitivity(args) -> int:
    if args.report is not None:
        try:
            with open(args.report, encoding="utf-8") as fh:
                report = json.load(fh)
            block = report["sensitivity"]
            inputs = SensitivityInputs(
                b_rr=float(block["b_rr"]),
                var_ratio=float(block["var_ratio"]),
                r2_dx=float(block["r2_dx"]),
            )
        except (OSError, json.JSONDecodeError, KeyError, TypeError,
                ValueError) as exc:
            raise ConfigError(f"bad report {args.report}: {exc}") from exc
    else:
        if args.b is None or args.var_ratio is None or args.r2_dx is None:
            raise ConfigError(
                "sensitivity needs --report, or --b with --var-ratio and --r2-dx"
            )
        try:
            inputs = SensitivityInputs(b_rr=args.b, var_ratio=args.var_ratio,
                                       r2_dx=args.r2_dx)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    _emit_json(sensitivity_block(inputs), args.out)
    return 0


def cmd_bootstrap_cov(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if config.data_path is None:
        raise ConfigError("config has no data_path")
    main_idx = validate_study_specs(config.specifications)
    specs = [config.specifications[main_idx]] + [
        s for i, s in enumerate(config.specifications) if i != main_idx
    ]
    dataset = Dataset.from_csv(config.data_path,
                               cluster_column=config.cluster_column)
    cov_est = bootstrap_cov(dataset, specs, config.bootstrap, keep_draws=False)
    labels = [s.label for s in specs]
    if args.out is not None:
        write_covariance_csv(args.out, labels, cov_est.matrix)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(labels)
        for row in cov_est.matrix:
            writer.writerow([repr(float(v)) for v in row])
    print(
        f"replications={config.bootstrap.replications} "
        f"trimmed={cov_est.n_trimmed} redrawn={cov_est.n_redrawn}",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robradius",
        description="Robustness radius for regression robustness checks",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--variant", choices=("cc", "rcc"), default=None)
        p.add_argument("--df-convention", choices=("rank", "rows"),
                       default=None, dest="df_convention")
        p.add_argument("--out", default=None)

    p = sub.add_parser("radius", help="compute the robustness radius")
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None, help="override config data_path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--precomputed", action="store_true",
                   help="read estimates/covariance CSVs instead of fitting")
    p.add_argument("--trace", action="store_true",
                   help="include the search trace in the report")
    p.add_argument("--trace-csv", default=None, dest="trace_csv")
    common(p)
    p.set_defaults(handler=cmd_radius)

    p = sub.add_parser("test", help="one band test at a fixed half-width")
    p.add_argument("--estimates", required=True)
    p.add_argument("--covariance", required=True)
    p.add_argument("--b", type=float, required=True)
    common(p)
    p.set_defaults(handler=cmd_test)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--trace", action="store_true",
                   help="include per-replication radii")
    p.add_argument("--hist-csv", default=None, dest="hist_csv")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("sensitivity", help="selection-on-unobservables mapping")
    p.add_argument("--report", default=None,
                   help="radius report JSON with a sensitivity block")
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--var-ratio", type=float, default=None, dest="var_ratio")
    p.add_argument("--r2-dx", type=float, default=None, dest="r2_dx")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_sensitivity)

    p = sub.add_parser("bootstrap-cov", help="bootstrap covariance only")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data", default=None)
    common(p)
    p.set_defaults(handler=cmd_bootstrap_cov)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DataError) as exc:
        print(f"robradius: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, BootstrapError, CovarianceConditionError,
            QpError) as exc:
        print(f"robradius: estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
