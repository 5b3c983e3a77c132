"""Weighted least-squares estimation of each specification's coefficient of
interest via partialling-out on its own subsample.

Each fit residualizes the treatment on an intercept plus the controls, then
takes the ratio of weighted cross-products with the outcome. Per-observation
moment contributions are laid out over the pooled sample (zero outside the
subsample) so the bootstrap and the plug-in covariance can reuse them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .datamodel import Dataset, Specification, SubsampleMask, build_mask

#: relative tolerance on pivoted-QR diagonals for the rank decision
RANK_RTOL = 1e-10


class EstimationError(ValueError):
    """Rank-deficient design or degenerate treatment variation."""


@dataclass(frozen=True)
class FwlFit:
    """One specification's partialled-out fit on its subsample."""

    label: str
    theta_hat: float
    residualized_treatment: np.ndarray
    denom: float
    residualized_outcome: np.ndarray
    se_conventional: float
    weights: np.ndarray
    n_rows: int
    index_set: np.ndarray


@dataclass(frozen=True)
class EstimateBundle:
    """Stacked coefficients with pooled-sample moment contributions.

    ``moment_rows[i, j]`` is the weighted cross-product contribution of row i
    to coefficient j, normalized by the subsample mean of the squared
    residualized treatment; ``denom_rows`` carries the matching squared-term
    contributions needed for the delta-method correction. ``cov`` starts
    unfilled and is attached by a covariance estimator.
    """

    labels: tuple
    theta: np.ndarray
    n: int
    n_per_spec: np.ndarray
    moment_rows: np.ndarray
    denom_rows: np.ndarray
    se_conventional: np.ndarray
    cov: np.ndarray | None = None

    def with_cov(self, cov) -> "EstimateBundle":
        return EstimateBundle(
            labels=self.labels,
            theta=self.theta,
            n=self.n,
            n_per_spec=self.n_per_spec,
            moment_rows=self.moment_rows,
            denom_rows=self.denom_rows,
            se_conventional=self.se_conventional,
            cov=np.asarray(cov, dtype=float),
        )


def _design_matrix(dataset, spec, rows):
    cols = [np.ones(rows.shape[0])]
    for name in spec.controls:
        for colname in dataset.design_columns(name):
            cols.append(dataset.numeric_column(colname)[rows])
    return np.column_stack(cols)


def _weighted_residualize(Z, y, w_sqrt, label):
    """Residual of y on Z under weights, with a pivoted-QR rank check."""
    Zw = Z * w_sqrt[:, None]
    q, r, piv = linalg.qr(Zw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int((diag > RANK_RTOL * diag.max()).sum()) if diag.size else 0
    if rank < Z.shape[1]:
        raise EstimationError(f"{label}: collinear controls (rank-deficient design)")
    coef = linalg.solve_triangular(r[:rank, :rank], q.T[:rank] @ (y * w_sqrt))
    full = np.zeros(Z.shape[1])
    full[piv[:rank]] = coef
    return y - Z @ full


def fit_fwl(dataset: Dataset, spec: Specification, mask: SubsampleMask) -> FwlFit:
    """Fit one specification by residualizing the treatment on its controls.

    Raises on collinear controls or when the treatment has no residual
    variation on the subsample.
    """
    rows = mask.index_set
    y = dataset.numeric_column(spec.outcome)[rows]
    d = dataset.numeric_column(spec.treatment)[rows]
    if spec.weights is not None:
        w = dataset.numeric_column(spec.weights)[rows]
        if np.any(w <= 0):
            raise EstimationError(f"{spec.label}: nonpositive weights")
    else:
        w = np.ones(rows.shape[0])
    w_sqrt = np.sqrt(w)

    Z = _design_matrix(dataset, spec, rows)
    u = _weighted_residualize(Z, d, w_sqrt, spec.label)

    n_j = rows.shape[0]
    denom = float(np.sum(w * u * u) / n_j)
    d_scale = float(np.sum(w * d * d) / n_j)
    if denom <= 1e-12 * max(d_scale, 1e-300):
        raise EstimationError(f"{spec.label}: treatment has no residual variation")

    theta = float(np.sum(w * u * y) / np.sum(w * u * u))

    y_res = _weighted_residualize(Z, y, w_sqrt, spec.label)
    # HC1-style standard error, reporting only
    e = y_res - theta * u
    k = Z.shape[1] + 1
    meat = float(np.sum((w * u * e) ** 2))
    bread = float(np.sum(w * u * u))
    se = np.sqrt(meat / bread**2 * n_j / max(n_j - k, 1))

    return FwlFit(
        label=spec.label,
        theta_hat=theta,
        residualized_treatment=u,
        denom=denom,
        residualized_outcome=y_res,
        se_conventional=se,
        weights=w,
        n_rows=mask.n_rows,
        index_set=rows,
    )


def stack_estimates(fits, masks) -> EstimateBundle:
    """Stack fits (main first) into pooled-layout moment contributions."""
    if len(fits) != len(masks):
        raise ValueError("fits and masks must align")
    n_rows = {f.n_rows for f in fits}
    if len(n_rows) != 1:
        raise ValueError("mismatched row counts across fits")
    n = n_rows.pop()
    k = len(fits)

    theta = np.array([f.theta_hat for f in fits])
    n_per_spec = np.array([f.index_set.shape[0] for f in fits])
    moment_rows = np.zeros((n, k))
    denom_rows = np.zeros((n, k))
    for j, f in enumerate(fits):
        wu = f.weights * f.residualized_treatment
        moment_rows[f.index_set, j] = wu * f.residualized_outcome / f.denom
        denom_rows[f.index_set, j] = wu * f.residualized_treatment / f.denom
    return EstimateBundle(
        labels=tuple(f.label for f in fits),
        theta=theta,
        n=n,
        n_per_spec=n_per_spec,
        moment_rows=moment_rows,
        denom_rows=denom_rows,
        se_conventional=np.array([f.se_conventional for f in fits]),
    )


def fit_study(dataset: Dataset, specs) -> EstimateBundle:
    """Masks plus fits plus stacking for an ordered list of specifications
    (main first)."""
    masks = [build_mask(dataset, s) for s in specs]
    fits = [fit_fwl(dataset, s, m) for s, m in zip(specs, masks)]
    return stack_estimates(fits, masks)


@dataclass(frozen=True)
class MediumRegressionStats:
    """Sample quantities feeding the unobservables sensitivity mapping."""

    var_ratio: float
    r2_dx: float


def medium_stats(dataset: Dataset, spec: Specification,
                 mask: SubsampleMask) -> MediumRegressionStats:
    """Residual-variance ratio and treatment-on-controls R^2 for the main
    specification's subsample."""
    rows = mask.index_set
    y = dataset.numeric_column(spec.outcome)[rows]
    d = dataset.numeric_column(spec.treatment)[rows]
    if spec.weights is not None:
        w = dataset.numeric_column(spec.weights)[rows]
    else:
        w = np.ones(rows.shape[0])
    w_sqrt = np.sqrt(w)

    Z = _design_matrix(dataset, spec, rows)
    u = _weighted_residualize(Z, d, w_sqrt, spec.label)
    y_res = _weighted_residualize(Z, y, w_sqrt, spec.label)

    var_u = float(np.sum(w * u * u) / np.sum(w))
    d_bar = float(np.sum(w * d) / np.sum(w))
    var_d = float(np.sum(w * (d - d_bar) ** 2) / np.sum(w))
    if var_d <= 0:
        raise EstimationError(f"{spec.label}: treatment is constant")
    r2_dx = max(0.0, min(1.0 - var_u / var_d, 1.0 - np.finfo(float).eps))

    theta = float(np.sum(w * u * y) / np.sum(w * u * u))
    e = y_res - theta * u
    var_e = float(np.sum(w * e * e) / np.sum(w))
    if var_e <= 0:
        raise EstimationError(f"{spec.label}: zero outcome residual variance")
    return MediumRegressionStats(var_ratio=var_u / var_e, r2_dx=r2_dx)
