"""Selection-on-unobservables mapping: inverse pair and domain edges."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robradius.sensitivity import (
    SensitivityInputs,
    bias_from_tau,
    sensitivity_block,
    tau_from_radius,
)


def test_zero_radius_gives_zero_tau():
    inp = SensitivityInputs(b_rr=0.0, var_ratio=1.3, r2_dx=0.4)
    assert tau_from_radius(inp) == 0.0


def test_input_validation():
    with pytest.raises(ValueError):
        SensitivityInputs(b_rr=-0.1, var_ratio=1.0, r2_dx=0.2)
    with pytest.raises(ValueError):
        SensitivityInputs(b_rr=0.1, var_ratio=0.0, r2_dx=0.2)
    with pytest.raises(ValueError):
        SensitivityInputs(b_rr=0.1, var_ratio=1.0, r2_dx=1.0)
    with pytest.raises(ValueError):
        bias_from_tau(-0.1, 1.0, 0.2)
    with pytest.raises(ValueError):
        bias_from_tau(0.1, -1.0, 0.2)
    with pytest.raises(ValueError):
        bias_from_tau(0.1, 1.0, 1.5)


def test_bias_infinite_outside_admissible_region():
    # denominator 1 - r2 - tau^2 vanishes at tau^2 = 1 - r2
    assert math.isinf(bias_from_tau(math.sqrt(0.6), 1.0, 0.4))
    assert math.isinf(bias_from_tau(1.0, 2.0, 0.3))
    assert math.isfinite(bias_from_tau(0.5, 1.0, 0.4))


def test_tau_stays_below_the_finiteness_bound():
    # the inverse image of finite radii: tau^2 < 1 - r2_dx
    for b in (0.01, 0.5, 5.0, 500.0):
        inp = SensitivityInputs(b_rr=b, var_ratio=2.0, r2_dx=0.3)
        tau = tau_from_radius(inp)
        assert 0.0 < tau**2 < 1.0 - inp.r2_dx


@settings(max_examples=100, deadline=None)
@given(
    b=st.floats(1e-4, 50.0),
    var_ratio=st.floats(1e-2, 1e2),
    r2=st.floats(1e-3, 0.95),
)
def test_round_trip_property(b, var_ratio, r2):
    # near the admissible bound (b^2 * var_ratio >> r2) the inverse is
    # ill-conditioned in tau, so the property is checked away from it
    inp = SensitivityInputs(b_rr=b, var_ratio=var_ratio, r2_dx=r2)
    tau = tau_from_radius(inp)
    back = bias_from_tau(tau, var_ratio, r2)
    assert back == pytest.approx(b, rel=1e-9 * (1.0 + b**2 * var_ratio / r2))


def test_monotone_in_radius():
    taus = [
        tau_from_radius(SensitivityInputs(b_rr=b, var_ratio=1.0, r2_dx=0.5))
        for b in (0.0, 0.1, 0.5, 1.0, 10.0)
    ]
    assert taus == sorted(taus)


def test_block_contents():
    block = sensitivity_block(
        SensitivityInputs(b_rr=0.2, var_ratio=1.1, r2_dx=0.3)
    )
    assert set(block) == {"b_rr", "var_ratio", "r2_dx", "tau_bar",
                          "interpretation"}
    assert block["tau_bar"] == pytest.approx(
        tau_from_radius(SensitivityInputs(b_rr=0.2, var_ratio=1.1, r2_dx=0.3))
    )
