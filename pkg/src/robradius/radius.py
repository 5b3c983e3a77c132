"""Robustness radius: smallest band half-width at which the band null
survives the conditional chi-square test, plus robustness classifications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cstest

#: audit grid size used to certify the accept/reject pattern is monotone
AUDIT_GRID = 64

#: doubling attempts past the max distance when equality pins force rejection
MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class RadiusReport:
    """Radius value, classifications, and the full search trace."""

    b_rr: float
    alpha: float
    variant: str
    df_convention: str
    max_distance: float
    fully_robust: bool
    sign_robust: bool
    per_check_distance: np.ndarray
    search_trace: tuple
    lw_test: cstest.TestOutcome
    tol: float
    non_monotone: bool = False

    @property
    def finite(self) -> bool:
        return math.isfinite(self.b_rr)

    def to_dict(self) -> dict:
        return {
            "b_rr": self.b_rr if self.finite else "infinity",
            "alpha": self.alpha,
            "variant": self.variant,
            "df_convention": self.df_convention,
            "max_distance": self.max_distance,
            "fully_robust": self.fully_robust,
            "sign_robust": self.sign_robust,
            "per_check_distance": list(self.per_check_distance),
            "tol": self.tol,
            "non_monotone": self.non_monotone,
            "lw_test": self.lw_test.to_dict(),
            "search_trace": [
                {
                    "b": b,
                    "statistic": t,
                    "r_hat": r,
                    "critical_value": cv,
                    "reject": rej,
                }
                for (b, t, r, cv, rej) in self.search_trace
            ],
        }


def _unpack(theta, cov):
    if cov is None:
        theta, cov = theta.theta, theta.cov
    return np.asarray(theta, dtype=float), np.asarray(cov, dtype=float)


def lu_white_full_robustness(theta, cov=None, alpha=0.05, variant="rcc",
                             df_convention="rank") -> cstest.TestOutcome:
    """All-equal test: the band null with every right-hand side pinned to 0."""
    theta, cov = _unpack(theta, cov)
    m = theta.shape[0] - 1
    system = cstest.build_system(m, 0.0)
    ws = cstest.ProjectionWorkspace(theta, cov)
    return cstest.run_test(ws, system, alpha, variant, df_convention)


def robustness_radius(theta, cov=None, alpha=0.05, variant="rcc",
                      must_equal=None, tol=None,
                      df_convention="rank") -> RadiusReport:
    """Locate the smallest non-rejected band half-width by grid audit plus
    bisection.

    Parameters
    ----------
    theta : array or EstimateBundle
        Stacked coefficients, main first. An object with ``theta``/``cov``
        attributes may be passed alone.
    cov : ndarray, optional
        Covariance of the stacked coefficients.
    must_equal : sequence of bool, optional
        Checks whose inequality stays pinned at 0 for every band value.
    tol : float, optional
        Bisection half-width; default ``1e-6 * (1 + max distance)``.
    """
    theta, cov = _unpack(theta, cov)
    if not 0.0 < alpha <= 0.5:
        raise ValueError("significance level must lie in (0, 0.5]")
    if variant not in ("cc", "rcc"):
        raise ValueError(f"unknown variant: {variant!r}")
    m = theta.shape[0] - 1
    if m < 1:
        raise ValueError("need at least one robustness check")
    if must_equal is None:
        must_equal = [False] * m
    must_equal = [bool(f) for f in must_equal]

    distances = np.abs(theta[0] - theta[1:])
    max_distance = float(distances.max())
    if tol is None:
        tol = 1e-6 * (1.0 + max_distance)
    if tol <= 0:
        raise ValueError("search tolerance must be positive")

    ws = cstest.ProjectionWorkspace(theta, cov)
    trace: list[tuple] = []
    pinned = np.array(must_equal)

    def evaluate(b: float) -> bool:
        upper = np.where(pinned, 0.0, b)
        stat, r_hat, cv, reject = ws.test_band(
            -upper, upper, alpha, variant, df_convention
        )[:4]
        trace.append((b, stat, r_hat, cv, bool(reject)))
        return bool(reject)

    lw = lu_white_full_robustness(theta, cov, alpha, variant, df_convention)

    def report(b_rr, non_monotone=False):
        return RadiusReport(
            b_rr=b_rr,
            alpha=alpha,
            variant=variant,
            df_convention=df_convention,
            max_distance=max_distance,
            fully_robust=bool(b_rr <= tol),
            sign_robust=bool(b_rr < abs(theta[0])),
            per_check_distance=distances,
            search_trace=tuple(trace),
            lw_test=lw,
            tol=tol,
            non_monotone=non_monotone,
        )

    if not evaluate(0.0):
        return report(0.0)

    free = [d for d, pinned in zip(distances, must_equal) if not pinned]
    b_hi = float(max(free)) if free else 0.0

    if b_hi == 0.0 or evaluate(b_hi):
        # only equality pins (or a pinned check) can keep rejection alive at
        # the max distance; probe geometrically before declaring no radius
        b_probe = max(b_hi, 1.0)
        found = None
        for _ in range(MAX_DOUBLINGS):
            if not evaluate(b_probe):
                found = b_probe
                break
            b_probe *= 2.0
        if found is None:
            return report(math.inf)
        b_hi = found

    grid = np.linspace(0.0, b_hi, AUDIT_GRID)
    rejects = [True] + [evaluate(b) for b in grid[1:-1]] + [False]

    first_accept = rejects.index(False)
    monotone = all(rejects[:first_accept]) and not any(rejects[first_accept:])

    lo = float(grid[first_accept - 1])
    hi = float(grid[first_accept])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if evaluate(mid):
            lo = mid
        else:
            hi = mid
    return report(hi, non_monotone=not monotone)
