"""Conditional chi-square test for the null that all robustness-check
coefficients lie within a band of the main coefficient.

The null ``max_j |theta_0 - theta_j| <= b`` is encoded as a system of paired
signed-difference inequalities. The test statistic is the squared Mahalanobis
distance from the estimate vector to the constraint polyhedron; its reference
distribution is chi-square with degrees of freedom given by the inequalities
active at the projection. The refined variant (RCC) sharpens the critical
value when exactly one constraint direction is active, interpolating toward a
one-sided test as the remaining inequalities become slack.

The projection is solved as a box-constrained QP in difference coordinates
``(mu_0, mu_0 - mu_1, ..., mu_0 - mu_m)``, where the paired rows collapse to
interval bounds on each difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._solver import solve_box_qp

#: maximum admissible condition number for the covariance matrix
MAX_CONDITION = 1e12

#: relative tolerance for deciding the rank of the active-row submatrix
RANK_TOL = 1e-10


class CovarianceConditionError(ValueError):
    """Covariance matrix too ill-conditioned (or not positive definite)."""


@dataclass(frozen=True)
class InequalitySystem:
    """Polyhedron {mu : A mu <= rhs} encoding the paired band inequalities.

    Rows 2j and 2j+1 (0-based) bound the signed differences
    ``+(mu_0 - mu_{j+1})`` and ``-(mu_0 - mu_{j+1})`` by ``rhs``; checks
    pinned to exact equality carry rhs 0 on both rows.
    """

    A: np.ndarray
    rhs: np.ndarray
    equality_rows: frozenset = field(default_factory=frozenset)

    @property
    def n_checks(self) -> int:
        return self.A.shape[0] // 2

    def check_bounds(self):
        """Per-check (lower, upper) bounds on delta_j = mu_0 - mu_j."""
        m = self.n_checks
        upper = self.rhs[0 : 2 * m : 2].copy()
        lower = -self.rhs[1 : 2 * m : 2]
        return lower, upper


def build_system(m, b, must_equal=None) -> InequalitySystem:
    """Build the 2m-row inequality system for band half-width ``b``.

    Parameters
    ----------
    m : int
        Number of robustness checks (the system has m + 1 columns).
    b : float
        Band half-width, >= 0.
    must_equal : sequence of bool, optional
        Checks whose rows are pinned to rhs 0 (exact equality with the main
        coefficient), regardless of ``b``.
    """
    if m < 1:
        raise ValueError("need at least one robustness check")
    if b < 0:
        raise ValueError("band half-width must be nonnegative")
    if must_equal is None:
        must_equal = [False] * m
    if len(must_equal) != m:
        raise ValueError("must_equal length must match the number of checks")

    A = np.zeros((2 * m, m + 1))
    rhs = np.empty(2 * m)
    eq_rows = []
    for j in range(m):
        A[2 * j, 0] = 1.0
        A[2 * j, j + 1] = -1.0
        A[2 * j + 1, 0] = -1.0
        A[2 * j + 1, j + 1] = 1.0
        if must_equal[j]:
            rhs[2 * j] = rhs[2 * j + 1] = 0.0
            eq_rows.extend([2 * j, 2 * j + 1])
        else:
            rhs[2 * j] = rhs[2 * j + 1] = b
    return InequalitySystem(A=A, rhs=rhs, equality_rows=frozenset(eq_rows))


@dataclass(frozen=True)
class TestOutcome:
    """Result of one accept/reject decision at a fixed band half-width."""

    statistic: float
    minimizer: np.ndarray
    active_rows: tuple
    r_hat: int
    r_hat_rows: int
    r_hat_rank: int
    critical_value: float
    reject: bool
    variant: str
    df_convention: str
    slack_stat: float | None = None

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "minimizer": list(self.minimizer),
            "active_rows": list(self.active_rows),
            "r_hat": self.r_hat,
            "r_hat_rows": self.r_hat_rows,
            "r_hat_rank": self.r_hat_rank,
            "critical_value": self.critical_value,
            "reject": self.reject,
            "variant": self.variant,
            "df_convention": self.df_convention,
            "slack_stat": self.slack_stat,
        }


def chi2_quantile(df, p) -> float:
    """Chi-square quantile; df = 0 returns 0 (never reject without activity)."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie strictly inside (0, 1)")
    if df < 0:
        raise ValueError("degrees of freedom must be nonnegative")
    if df == 0:
        return 0.0
    if df == 1:
        z = special.ndtri(0.5 * (1.0 + p))
        return float(z * z)
    return float(2.0 * special.gammaincinv(0.5 * df, p))


class ProjectionWorkspace:
    """Cached factorizations for repeated projections of one estimate vector.

    Only the band moves during a radius search; the quadratic form, the
    change of variables, and the per-check contrast variances are fixed and
    shared across many evaluations.
    """

    def __init__(self, theta_hat, cov):
        theta_hat = np.asarray(theta_hat, dtype=float)
        cov = np.asarray(cov, dtype=float)
        k = theta_hat.shape[0]
        if cov.shape != (k, k):
            raise ValueError("covariance shape does not match estimate vector")
        if not np.allclose(cov, cov.T, atol=1e-12 * (1.0 + np.abs(cov).max())):
            raise ValueError("covariance matrix is not symmetric")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > MAX_CONDITION:
            cond = np.inf if eigvals[0] <= 0 else eigvals[-1] / eigvals[0]
            raise CovarianceConditionError(
                f"covariance condition number {cond:.3e} exceeds "
                f"{MAX_CONDITION:.0e}; consider an explicit ridge adjustment"
            )
        self.theta_hat = theta_hat
        self.cov = cov
        self.m = k - 1
        self._vinv = np.linalg.inv(cov)
        # change of variables x = (mu_0, delta_1, ..., delta_m),
        # mu = S x with mu_0 = x_0 and mu_j = x_0 - delta_j
        S = np.zeros((k, k))
        S[:, 0] = 1.0
        for j in range(1, k):
            S[j, j] = -1.0
        self._S = S
        self._H = np.ascontiguousarray(S.T @ self._vinv @ S)
        x_hat = np.empty(k)
        x_hat[0] = theta_hat[0]
        x_hat[1:] = theta_hat[0] - theta_hat[1:]
        self._x_hat = x_hat
        # sd of the contrast theta_0 - theta_j, one per check
        d = np.diag(cov)
        self.diff_sd = np.sqrt(
            np.maximum(d[0] + d[1:] - 2.0 * cov[0, 1:], 0.0)
        )

    def _solve(self, lower, upper):
        k = self.m + 1
        lo = np.empty(k)
        hi = np.empty(k)
        lo[0], hi[0] = -np.inf, np.inf
        lo[1:], hi[1:] = lower, upper
        x, _ = solve_box_qp(self._H, self._x_hat, lo, hi)
        d = x - self._x_hat
        stat = float(d @ self._H @ d)
        return x, max(stat, 0.0)

    def project(self, system: InequalitySystem):
        """Project onto the polyhedron; returns (mu_hat, statistic)."""
        if system.n_checks != self.m:
            raise ValueError("system size does not match estimate vector")
        lower, upper = system.check_bounds()
        x, stat = self._solve(lower, upper)
        return self._S @ x, stat

    def test_band(self, lower, upper, alpha, variant, df_convention):
        """Accept/reject decision for interval bounds on each difference.

        Returns a plain tuple ``(stat, r_hat, critical, reject, delta,
        active_lo, active_hi, slack_stat)``; the dataclass wrapper is built
        only at the public entry points.
        """
        x, stat = self._solve(lower, upper)
        delta = x[1:]
        eps = 1e-7 * (1.0 + float(np.max(np.abs(upper))))
        active_hi = upper - delta <= eps
        active_lo = delta - lower <= eps
        active_check = active_hi | active_lo
        r_rank = int(active_check.sum())
        r_rows = int(active_hi.sum() + active_lo.sum())
        if r_rows == 0:
            stat = 0.0  # interior projection; kill floating-point dust
        r_hat = r_rank if df_convention == "rank" else r_rows

        slack_stat = None
        if variant == "rcc" and r_hat == 1:
            slack_stat = self._min_studentized_slack(
                delta, lower, upper, active_lo, active_hi
            )
            level = 1.0 - 2.0 * alpha * special.ndtr(slack_stat / 2.0)
            critical = chi2_quantile(1, level) if level > 0.0 else 0.0
        elif r_hat == 0:
            critical = 0.0
        else:
            critical = chi2_quantile(r_hat, 1.0 - alpha)
        return (
            stat, r_hat, critical, stat > critical,
            delta, active_lo, active_hi, slack_stat, r_rows, r_rank, x,
        )

    def _min_studentized_slack(self, delta, lower, upper, active_lo, active_hi):
        """Smallest studentized slack among inactive rows (0 with none left).

        Rows whose contrast has zero variance cannot bind and are skipped.
        """
        sd_floor = 1e-14 * (1.0 + float(self.diff_sd.max()))
        best = math.inf
        for j in range(self.m):
            sd = self.diff_sd[j]
            if sd <= sd_floor:
                continue
            if not active_hi[j] and math.isfinite(upper[j]):
                best = min(best, max(upper[j] - delta[j], 0.0) / sd)
            if not active_lo[j] and math.isfinite(lower[j]):
                best = min(best, max(delta[j] - lower[j], 0.0) / sd)
        return 0.0 if not math.isfinite(best) else float(best)


def project_qp(theta_hat, cov, system: InequalitySystem):
    """One-shot projection: minimizer and statistic for a single system."""
    return ProjectionWorkspace(theta_hat, cov).project(system)


def count_active(mu_hat, system: InequalitySystem, scale=None):
    """Identify active rows and the two degree-of-freedom counts.

    A row is active when its slack is within ``1e-7 * scale`` (scale defaults
    to ``1 + max |rhs|``, absolute-plus-relative because rhs may be exactly
    zero). The rank count is the rank of the active-row submatrix, which
    collapses antipodal pairs binding simultaneously at a zero band.
    """
    if scale is None:
        scale = 1.0 + float(np.max(np.abs(system.rhs)))
    eps = 1e-7 * scale
    slack = system.rhs - system.A @ np.asarray(mu_hat, dtype=float)
    active = np.flatnonzero(slack <= eps)
    if active.size == 0:
        return tuple(), 0, 0
    rank = int(np.linalg.matrix_rank(system.A[active], tol=RANK_TOL))
    return tuple(int(s) for s in active), int(active.size), rank


def _outcome(ws, system, alpha, variant, df_convention):
    if df_convention not in ("rank", "rows"):
        raise ValueError(f"unknown df convention: {df_convention!r}")
    if system.n_checks != ws.m:
        raise ValueError("system size does not match estimate vector")
    lower, upper = system.check_bounds()
    (stat, r_hat, critical, reject, _delta, active_lo, active_hi,
     slack_stat, r_rows, r_rank, x) = ws.test_band(
        lower, upper, alpha, variant, df_convention
    )
    rows = []
    for j in range(ws.m):
        if active_hi[j]:
            rows.append(2 * j)
        if active_lo[j]:
            rows.append(2 * j + 1)
    return TestOutcome(
        statistic=stat,
        minimizer=ws._S @ x,
        active_rows=tuple(rows),
        r_hat=r_hat,
        r_hat_rows=r_rows,
        r_hat_rank=r_rank,
        critical_value=critical,
        reject=bool(reject),
        variant=variant,
        df_convention=df_convention,
        slack_stat=slack_stat,
    )


def cc_test(theta_hat, cov, system, alpha, df_convention="rank") -> TestOutcome:
    """Conditional chi-square test of ``A theta <= rhs`` at level alpha."""
    _check_alpha(alpha)
    return _outcome(ProjectionWorkspace(theta_hat, cov), system, alpha,
                    "cc", df_convention)


def rcc_test(theta_hat, cov, system, alpha, df_convention="rank") -> TestOutcome:
    """Refined conditional chi-square test; differs from CC only when the
    active constraint set has a single direction."""
    _check_alpha(alpha)
    return _outcome(ProjectionWorkspace(theta_hat, cov), system, alpha,
                    "rcc", df_convention)


def run_test(workspace, system, alpha, variant="rcc", df_convention="rank"):
    """Test with a prebuilt workspace (used by the radius search)."""
    _check_alpha(alpha)
    if variant not in ("cc", "rcc"):
        raise ValueError(f"unknown variant: {variant!r}")
    return _outcome(workspace, system, alpha, variant, df_convention)


def _check_alpha(alpha):
    if not 0.0 < alpha <= 0.5:
        raise ValueError("significance level must lie in (0, 0.5]")
