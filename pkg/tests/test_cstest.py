"""Band inequality system, projection QP, and the conditional chi-square
test (plain and refined), including the kernel backends."""

import math

import numpy as np
import pytest
from scipy import stats

from robradius import _qppure
from robradius._solver import BACKEND
from robradius.cstest import (
    CovarianceConditionError,
    ProjectionWorkspace,
    build_system,
    cc_test,
    chi2_quantile,
    count_active,
    project_qp,
    rcc_test,
)

from conftest import random_cov

try:
    from robradius import _qpcore
except ImportError:
    _qpcore = None


# -- chi-square quantile ----------------------------------------------------


@pytest.mark.parametrize("df", [1, 2, 3, 5, 10])
@pytest.mark.parametrize("p", [0.5, 0.9, 0.95, 0.99])
def test_chi2_quantile_matches_reference(df, p):
    assert chi2_quantile(df, p) == pytest.approx(stats.chi2.ppf(p, df),
                                                rel=1e-10)


def test_chi2_quantile_df_zero_and_validation():
    assert chi2_quantile(0, 0.95) == 0.0
    with pytest.raises(ValueError):
        chi2_quantile(-1, 0.5)
    with pytest.raises(ValueError):
        chi2_quantile(2, 1.0)


# -- inequality system ------------------------------------------------------


def test_build_system_layout():
    system = build_system(2, 0.4)
    assert system.A.shape == (4, 3)
    np.testing.assert_array_equal(system.A[0], [1, -1, 0])
    np.testing.assert_array_equal(system.A[1], [-1, 1, 0])
    np.testing.assert_array_equal(system.A[2], [1, 0, -1])
    np.testing.assert_array_equal(system.A[3], [-1, 0, 1])
    np.testing.assert_array_equal(system.rhs, [0.4] * 4)
    lower, upper = system.check_bounds()
    np.testing.assert_array_equal(lower, [-0.4, -0.4])
    np.testing.assert_array_equal(upper, [0.4, 0.4])


def test_build_system_must_equal_pins_rows():
    system = build_system(2, 0.4, must_equal=[False, True])
    np.testing.assert_array_equal(system.rhs, [0.4, 0.4, 0.0, 0.0])
    assert system.equality_rows == frozenset({2, 3})


def test_build_system_validation():
    with pytest.raises(ValueError):
        build_system(0, 0.1)
    with pytest.raises(ValueError):
        build_system(1, -0.1)
    with pytest.raises(ValueError):
        build_system(2, 0.1, must_equal=[True])


# -- projection -------------------------------------------------------------


def test_project_closed_form_m1():
    # projecting (0, 1.5) onto mu0 = mu1 under identity covariance splits the
    # difference; the statistic is the squared gap over the contrast variance
    theta = np.array([0.0, 1.5])
    mu, stat = project_qp(theta, np.eye(2), build_system(1, 0.0))
    np.testing.assert_allclose(mu, [0.75, 0.75], atol=1e-12)
    assert stat == pytest.approx(1.5**2 / 2.0, abs=1e-12)


def test_project_interior_is_identity():
    theta = np.array([0.3, 0.2, 0.5])
    mu, stat = project_qp(theta, np.eye(3), build_system(2, 1.0))
    np.testing.assert_allclose(mu, theta, atol=1e-12)
    assert stat == pytest.approx(0.0, abs=1e-12)


def _brute_force_stat(theta, cov, b, grid=41):
    """Dense grid over the differences, closed-form profile over mu_0."""
    vinv = np.linalg.inv(cov)
    m = theta.shape[0] - 1
    k = m + 1
    S = np.zeros((k, k))
    S[:, 0] = 1.0
    for j in range(1, k):
        S[j, j] = -1.0
    H = S.T @ vinv @ S
    x_hat = np.concatenate([[theta[0]], theta[0] - theta[1:]])

    def value(delta):
        # minimize over x0 the quadratic (x - x_hat)' H (x - x_hat)
        d = np.concatenate([[0.0], delta]) - x_hat
        x0 = x_hat[0] - (H[0, 1:] @ d[1:]) / H[0, 0]
        d[0] = x0 - x_hat[0]
        return d @ H @ d

    lo, hi = -b, b
    best = math.inf
    for _ in range(3):  # refine the grid around the incumbent
        axes = [np.linspace(lo[j] if np.ndim(lo) else lo,
                            hi[j] if np.ndim(hi) else hi, grid)
                for j in range(m)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([mm.ravel() for mm in mesh], axis=1)
        vals = np.array([value(p) for p in pts])
        idx = int(vals.argmin())
        if vals[idx] < best:
            best = float(vals[idx])
        span = (np.asarray(hi) - np.asarray(lo)) / (grid - 1)
        center = pts[idx]
        lo = np.maximum(center - 2 * span, -b)
        hi = np.minimum(center + 2 * span, b)
    return best


@pytest.mark.parametrize("m", [1, 2, 3])
def test_project_matches_brute_force(m):
    rng = np.random.default_rng(100 + m)
    for _ in range(8):
        theta = rng.standard_normal(m + 1) * 1.5
        cov = random_cov(rng, m + 1)
        b = float(rng.uniform(0.05, 1.0))
        _, stat = project_qp(theta, cov, build_system(m, b))
        brute = _brute_force_stat(theta, cov, b)
        assert stat == pytest.approx(brute, abs=1e-4)


def test_statistic_scale_equivariance():
    rng = np.random.default_rng(7)
    theta = rng.standard_normal(4)
    cov = random_cov(rng, 4)
    b = 0.3
    _, stat = project_qp(theta, cov, build_system(3, b))
    for c in (0.1, 10.0):
        _, stat_c = project_qp(c * theta, c**2 * cov, build_system(3, c * b))
        assert stat_c == pytest.approx(stat, rel=1e-8)


def test_statistic_nonincreasing_in_band():
    rng = np.random.default_rng(8)
    theta = rng.standard_normal(4)
    cov = random_cov(rng, 4)
    stats_seq = [
        project_qp(theta, cov, build_system(3, b))[1]
        for b in np.linspace(0.0, 2.0, 15)
    ]
    assert all(s1 >= s2 - 1e-10 for s1, s2 in zip(stats_seq, stats_seq[1:]))


# -- activity counting ------------------------------------------------------


def test_count_active_rank_collapses_antipodal_pair():
    theta = np.array([0.0, 1.5])
    system = build_system(1, 0.0)
    mu, _ = project_qp(theta, np.eye(2), system)
    rows, n_rows, rank = count_active(mu, system)
    assert rows == (0, 1)
    assert n_rows == 2
    assert rank == 1


def test_count_active_interior():
    system = build_system(2, 1.0)
    rows, n_rows, rank = count_active(np.array([0.0, 0.1, -0.1]), system)
    assert rows == () and n_rows == 0 and rank == 0


# -- tests ------------------------------------------------------------------


def test_cc_example_two_sided_benchmark():
    theta = np.array([0.0, 1.5])
    out = cc_test(theta, np.eye(2), build_system(1, 0.0), alpha=0.05)
    assert out.statistic == pytest.approx(1.125, abs=1e-9)
    assert out.r_hat == 1
    assert out.critical_value == pytest.approx(3.8415, abs=5e-4)
    assert not out.reject


def test_df_convention_switch():
    theta = np.array([0.0, 1.5])
    out = cc_test(theta, np.eye(2), build_system(1, 0.0), alpha=0.05,
                  df_convention="rows")
    assert out.r_hat == 2
    assert out.r_hat_rank == 1
    assert out.critical_value == pytest.approx(stats.chi2.ppf(0.95, 2),
                                               abs=1e-6)


def test_no_active_rows_never_rejects():
    theta = np.array([0.1, 0.15, 0.05])
    out = cc_test(theta, np.eye(3), build_system(2, 0.5), alpha=0.05)
    assert out.statistic == 0.0
    assert out.r_hat == 0
    assert not out.reject


def test_rcc_rejects_whenever_cc_rejects():
    rng = np.random.default_rng(21)
    for _ in range(200):
        k = int(rng.integers(2, 5))
        theta = rng.standard_normal(k) * 1.2
        cov = random_cov(rng, k)
        system = build_system(k - 1, float(rng.uniform(0.0, 0.6)))
        cc = cc_test(theta, cov, system, alpha=0.05)
        rcc = rcc_test(theta, cov, system, alpha=0.05)
        if cc.reject:
            assert rcc.reject


def test_rcc_strictly_dominates_in_the_refinement_window():
    # one active side, statistic between the refined and the plain critical
    # value: the refinement rejects where the plain test does not
    theta = np.array([0.0, 3.18])
    system = build_system(1, 0.5)
    cc = cc_test(theta, np.eye(2), system, alpha=0.05)
    rcc = rcc_test(theta, np.eye(2), system, alpha=0.05)
    assert cc.r_hat == 1 and rcc.r_hat == 1
    assert rcc.critical_value < cc.critical_value
    assert rcc.reject and not cc.reject


def test_rcc_critical_value_between_one_and_two_sided():
    rng = np.random.default_rng(22)
    lo = stats.chi2.ppf(0.90, 1)  # one-sided limit at full slack
    hi = stats.chi2.ppf(0.95, 1)
    for _ in range(100):
        theta = rng.standard_normal(3)
        cov = random_cov(rng, 3)
        out = rcc_test(theta, cov, build_system(2, float(rng.uniform(0, 1))),
                       alpha=0.05)
        if out.slack_stat is not None:
            assert lo - 1e-9 <= out.critical_value <= hi + 1e-9


def test_workspace_rejects_bad_covariance():
    theta = np.zeros(2)
    with pytest.raises(ValueError, match="symmetric"):
        ProjectionWorkspace(theta, np.array([[1.0, 0.5], [0.2, 1.0]]))
    with pytest.raises(CovarianceConditionError):
        ProjectionWorkspace(theta, np.diag([1.0, 1e-15]))
    with pytest.raises(ValueError, match="shape"):
        ProjectionWorkspace(theta, np.eye(3))


def test_alpha_validation():
    theta = np.array([0.0, 1.0])
    system = build_system(1, 0.1)
    for bad in (0.0, 0.6, -0.1):
        with pytest.raises(ValueError):
            cc_test(theta, np.eye(2), system, alpha=bad)


# -- kernel backends --------------------------------------------------------


def _random_box_instance(rng):
    n = int(rng.integers(2, 12))
    A = rng.standard_normal((n, n))
    H = A @ A.T + 0.1 * np.eye(n)
    a = rng.standard_normal(n) * 2.0
    lo = -np.abs(rng.standard_normal(n)) * 1.5
    hi = np.abs(rng.standard_normal(n)) * 1.5
    lo[0], hi[0] = -np.inf, np.inf
    if n > 1 and rng.random() < 0.2:
        lo[1] = hi[1] = 0.0
    return H, a, lo, hi


def test_pure_kernel_satisfies_kkt():
    rng = np.random.default_rng(30)
    for _ in range(100):
        H, a, lo, hi = _random_box_instance(rng)
        x, _ = _qppure.solve_box_qp(H, a, lo, hi)
        assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)
        g = 2.0 * H @ (x - a)
        for i in range(len(a)):
            if lo[i] == hi[i]:
                continue
            if x[i] > lo[i] + 1e-9 and x[i] < hi[i] - 1e-9:
                assert abs(g[i]) < 1e-7 * (1 + np.abs(g).max())
            elif x[i] <= lo[i] + 1e-9:
                assert g[i] > -1e-7 * (1 + np.abs(g).max())
            else:
                assert g[i] < 1e-7 * (1 + np.abs(g).max())


@pytest.mark.skipif(_qpcore is None, reason="compiled kernel unavailable")
def test_compiled_kernel_matches_pure():
    rng = np.random.default_rng(31)
    for _ in range(500):
        H, a, lo, hi = _random_box_instance(rng)
        x1, _ = _qppure.solve_box_qp(H, a, lo, hi)
        x2, _ = _qpcore.solve_box_qp(H, a, lo, hi)
        np.testing.assert_allclose(x1, x2, atol=1e-9)


def test_backend_reports_a_known_value():
    assert BACKEND in ("compiled", "pure")
