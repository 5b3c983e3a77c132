"""Joint covariance of the stacked coefficients across overlapping
subsamples: trimmed bootstrap (iid rows or whole clusters) plus a plug-in
iid cross-check built from the retained moment contributions.

One resample drives all specifications per replication, which is what
captures the cross-specification correlation the radius test exploits.
Replicate draws whose norm exceeds the trimming threshold are zeroed before
the covariance is formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import DataError, Dataset, build_mask
from .regress import EstimateBundle, EstimationError, fit_fwl, stack_estimates

#: default bootstrap replications
DEFAULT_REPLICATIONS = 1000

#: abort when more than this fraction of replications is unestimable
MAX_UNESTIMABLE_FRACTION = 0.10

#: redraw attempts per replication before giving up
MAX_REDRAWS_PER_REP = 50

#: eigenvalue floor, relative to trace, below which the matrix is rejected
PSD_TOL = 1e-10


class BootstrapError(RuntimeError):
    """Too many unestimable replications or a non-PSD result."""


@dataclass(frozen=True)
class BootstrapConfig:
    """Replication count, seed, resampling mode, and trimming threshold.

    ``trim_threshold`` is either a positive float or ``"auto"``, in which case
    the threshold grows like ``scale * exp(sqrt(n) / 8)`` and in practice only
    zeroes pathological draws.
    """

    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0
    cluster_column: str | None = None
    trim_threshold: float | str = "auto"
    mode: str = "iid-rows"

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("need at least 2 bootstrap replications")
        if self.mode not in ("iid-rows", "cluster"):
            raise ValueError(f"unknown bootstrap mode: {self.mode!r}")
        if self.trim_threshold != "auto" and float(self.trim_threshold) <= 0:
            raise ValueError("explicit trimming threshold must be positive")

    @classmethod
    def from_dict(cls, payload) -> "BootstrapConfig":
        return cls(
            replications=int(payload.get("replications", DEFAULT_REPLICATIONS)),
            seed=int(payload.get("seed", 0)),
            cluster_column=payload.get("cluster_column"),
            trim_threshold=payload.get("trim_threshold", "auto"),
            mode=payload.get("mode", "iid-rows"),
        )


@dataclass(frozen=True)
class CovarianceEstimate:
    """Symmetric PSD covariance with per-replication diagnostics."""

    matrix: np.ndarray
    n_trimmed: int
    replicate_draws: np.ndarray | None = None
    n_redrawn: int = 0

    def correlation(self) -> np.ndarray:
        sd = np.sqrt(np.diag(self.matrix))
        return self.matrix / np.outer(sd, sd)


def auto_trim_threshold(n: int, scale: float) -> float:
    """Default trimming threshold ``scale * exp(sqrt(n) / 8)``.

    Satisfies the required growth condition (its fourth power is
    ``O(exp(sqrt(n)))``) while leaving ordinary draws untouched.
    """
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if scale <= 0:
        raise ValueError("scale must be positive")
    return scale * float(np.exp(np.sqrt(n) / 8.0))


def _replication_rng(seed, rep, attempt):
    # counter-based streams keyed on (seed, replication, redraw attempt) so
    # serial and parallel evaluation orders agree
    return np.random.Generator(np.random.Philox(key=[(seed << 16) + attempt, rep]))


def _resample_indices(rng, n, mode, cluster_members):
    if mode == "iid-rows":
        return rng.integers(0, n, size=n)
    g = len(cluster_members)
    picks = rng.integers(0, g, size=g)
    return np.concatenate([cluster_members[p] for p in picks])


def _refit(dataset, specs):
    masks = [build_mask(dataset, s) for s in specs]
    fits = [fit_fwl(dataset, s, m) for s, m in zip(specs, masks)]
    return np.array([f.theta_hat for f in fits])


def bootstrap_cov(dataset: Dataset, specs, config: BootstrapConfig,
                  keep_draws: bool = True) -> CovarianceEstimate:
    """Trimmed bootstrap covariance of the stacked coefficient vector.

    Every replication resamples once (rows, or whole clusters holding the
    cluster count fixed), rebuilds all masks, and refits every specification
    jointly. Unestimable replications are redrawn and counted; more than 10%
    of them is an error.
    """
    theta_orig = _refit(dataset, specs)
    n = dataset.row_count
    if config.trim_threshold == "auto":
        tau = auto_trim_threshold(n, float(np.linalg.norm(theta_orig)) + 1.0)
    else:
        tau = float(config.trim_threshold)

    cluster_members = None
    if config.mode == "cluster":
        labels = dataset.cluster_labels()
        groups: dict = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        cluster_members = [np.array(v) for _, v in sorted(groups.items(),
                                                          key=lambda kv: str(kv[0]))]

    B = config.replications
    draws = np.empty((B, theta_orig.shape[0]))
    n_redrawn = 0
    n_trimmed = 0
    for rep in range(B):
        theta_b = None
        for attempt in range(MAX_REDRAWS_PER_REP):
            rng = _replication_rng(config.seed, rep, attempt)
            idx = _resample_indices(rng, n, config.mode, cluster_members)
            try:
                theta_b = _refit(dataset.take_rows(idx), specs)
                break
            except (DataError, EstimationError):
                n_redrawn += 1
        if theta_b is None:
            raise BootstrapError(
                f"replication {rep}: unestimable after {MAX_REDRAWS_PER_REP} redraws"
            )
        if np.linalg.norm(theta_b) > tau:
            theta_b = np.zeros_like(theta_b)
            n_trimmed += 1
        draws[rep] = theta_b

    if n_redrawn > MAX_UNESTIMABLE_FRACTION * B:
        raise BootstrapError(
            f"{n_redrawn} unestimable replications out of {B} "
            f"(limit {MAX_UNESTIMABLE_FRACTION:.0%})"
        )

    centered = draws - draws.mean(axis=0)
    matrix = centered.T @ centered / (B - 1)
    matrix = 0.5 * (matrix + matrix.T)
    _check_psd(matrix)
    return CovarianceEstimate(
        matrix=matrix,
        n_trimmed=n_trimmed,
        replicate_draws=draws if keep_draws else None,
        n_redrawn=n_redrawn,
    )


def plugin_cov_iid(bundle: EstimateBundle) -> CovarianceEstimate:
    """Plug-in covariance under iid rows, with the delta-method correction
    for the estimated denominator. Cross-check estimator only."""
    if bundle.moment_rows is None:
        raise ValueError("bundle has no retained moment contributions")
    n = bundle.n
    scale = n / bundle.n_per_spec  # pooled-mean to subsample-mean conversion
    psi = (bundle.moment_rows - bundle.theta * bundle.denom_rows) * scale
    psi = psi - psi.mean(axis=0)
    matrix = psi.T @ psi / n**2
    matrix = 0.5 * (matrix + matrix.T)
    _check_psd(matrix)
    return CovarianceEstimate(matrix=matrix, n_trimmed=0, replicate_draws=None)


def _check_psd(matrix):
    eigvals = np.linalg.eigvalsh(matrix)
    if eigvals[0] < -PSD_TOL * max(np.trace(matrix), np.finfo(float).tiny):
        raise BootstrapError(
            f"covariance has eigenvalue {eigvals[0]:.3e} beyond the PSD tolerance"
        )
