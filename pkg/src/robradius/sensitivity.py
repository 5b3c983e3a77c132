"""Mapping between the robustness radius and an omitted-variable-bias
sensitivity parameter.

``tau_from_radius`` backs out the smallest relative selection on
unobservables consistent with non-rejection; ``bias_from_tau`` is its
inverse, the implied bias bound, with +infinity outside the admissible
region. The two are exact algebraic inverses on the finite branch.

Note on the finiteness condition: the published domain restriction compares
the squared selection ratio against ``sqrt(1 - r2_dx)`` while the bias
denominator requires ``1 - r2_dx - tau**2 > 0``; both are enforced here, and
the (stricter) denominator condition is what actually decides finiteness in
the mutual domain of the inverse pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SensitivityInputs:
    """Radius plus the main specification's sample quantities.

    var_ratio is var(treatment residual) / var(outcome residual) from the
    medium regressions; r2_dx is the R^2 of treatment on controls.
    """

    b_rr: float
    var_ratio: float
    r2_dx: float

    def __post_init__(self):
        if self.b_rr < 0:
            raise ValueError("radius must be nonnegative")
        if self.var_ratio <= 0:
            raise ValueError("variance ratio must be positive")
        if not 0.0 <= self.r2_dx < 1.0:
            raise ValueError("treatment-on-controls R^2 must lie in [0, 1)")


def tau_from_radius(inp: SensitivityInputs) -> float:
    """Smallest relative selection on unobservables that rationalizes the
    radius as an unobservables bias bound."""
    if inp.b_rr == 0.0:
        return 0.0
    b2v = inp.b_rr**2 * inp.var_ratio
    return math.sqrt(b2v * (1.0 - inp.r2_dx) / (inp.r2_dx + b2v))


def bias_from_tau(tau_bar: float, var_ratio: float, r2_dx: float) -> float:
    """Bias bound implied by a relative-selection cap; +inf outside the
    admissible region."""
    if tau_bar < 0:
        raise ValueError("selection ratio must be nonnegative")
    if var_ratio <= 0:
        raise ValueError("variance ratio must be positive")
    if not 0.0 <= r2_dx < 1.0:
        raise ValueError("treatment-on-controls R^2 must lie in [0, 1)")
    tau2 = tau_bar**2
    denom = 1.0 - r2_dx - tau2
    if tau2 > math.sqrt(1.0 - r2_dx) or denom <= 0.0:
        return math.inf
    return math.sqrt((tau2 * r2_dx) / (var_ratio * denom))


INTERPRETATION = (
    "smallest value of selection on unobservables relative to selection on "
    "included covariates consistent with not rejecting that bias from "
    "observables is at most as large as bias from unobservables"
)


def sensitivity_block(inp: SensitivityInputs) -> dict:
    """JSON-ready summary used by the command-line report."""
    tau = tau_from_radius(inp)
    return {
        "b_rr": inp.b_rr,
        "var_ratio": inp.var_ratio,
        "r2_dx": inp.r2_dx,
        "tau_bar": tau,
        "interpretation": INTERPRETATION,
    }
