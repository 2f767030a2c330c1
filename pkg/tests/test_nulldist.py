from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import kstwobign

from pecusum.errors import DegenerateDistributionError, InsufficientDataError
from pecusum.nulldist import (
    NullSpec,
    auto_bandwidth,
    critical_value,
    eigenvalues_of,
    estimate_lrc,
    fit_null,
    p_value,
    quantile_table,
    simulate_bridges,
    simulate_null,
    truncate_spectrum,
)
from pecusum.panel import FunctionalPanel, make_grid, make_uniform_grid

# discrete-monitoring correction for a Brownian maximum on a lattice of m steps
BGK_BETA = 0.5826


def test_auto_bandwidth():
    assert [auto_bandwidth(t) for t in (7, 8, 26, 27, 200, 1000)] == [1, 2, 2, 3, 5, 10]


def test_iid_variance_bandwidth_zero(rng):
    t, sigma = 2000, 1.7
    x = sigma * rng.standard_normal((t, 5))
    diag = np.diag(estimate_lrc(x, bandwidth=0).kernel)
    band = 3 * sigma**2 * math.sqrt(2 / t)
    assert np.all(np.abs(diag - sigma**2) < band)


def test_identical_curves_give_zero_kernel(rng):
    x = np.tile(rng.standard_normal(6), (30, 1))
    np.testing.assert_allclose(estimate_lrc(x).kernel, 0.0, atol=1e-25)


def test_ma1_long_run_variance():
    r = np.random.default_rng(7)
    eta = r.standard_normal(5001)
    eps = eta[1:] + 0.5 * eta[:-1]
    lrv = estimate_lrc(eps, bandwidth=30).kernel[0, 0]
    assert lrv == pytest.approx(2.25, rel=0.10)


def test_lrc_input_validation():
    with pytest.raises(InsufficientDataError):
        estimate_lrc(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        estimate_lrc(np.zeros((10, 2)), bandwidth=10)


def test_flat_top_kernel_runs(rng):
    lrc = estimate_lrc(rng.standard_normal((100, 4)), bandwidth=4, kernel_name="flat_top")
    assert lrc.kernel_name == "flat_top" and lrc.bandwidth == 4
    np.testing.assert_allclose(lrc.kernel, lrc.kernel.T)


def test_scaled_identity_operator():
    g = make_grid([0.0, 0.1, 0.5, 0.6, 1.0])
    lam = eigenvalues_of(2.5 * np.diag(1.0 / g.weights), g)
    np.testing.assert_allclose(lam, 2.5, rtol=1e-12)


def test_rank_one_kernel():
    g = make_uniform_grid(51)
    f = np.cos(np.pi * g.points)
    f /= math.sqrt(g.integrate(f * f))
    lam = eigenvalues_of(3.0 * np.outer(f, f), g)
    assert lam[0] == pytest.approx(3.0, rel=1e-12)
    np.testing.assert_allclose(lam[1:], 0.0, atol=1e-12)


def test_brownian_bridge_kernel_spectrum():
    g = make_uniform_grid(101)
    u = g.points
    k = np.minimum.outer(u, u) - np.outer(u, u)
    lam = eigenvalues_of(k, g)
    for j in (1, 2, 3):
        assert lam[j - 1] == pytest.approx(1 / (j * j * math.pi**2), rel=0.01)


def test_truncation():
    assert truncate_spectrum([1.0, 0.0, 0.0]) == 1
    assert truncate_spectrum([0.5, 0.3, 0.2], coverage=0.8) == 2
    assert truncate_spectrum(np.full(4, 0.25)) == 4


def test_nullspec_validation_and_json_roundtrip():
    with pytest.raises(ValueError):
        NullSpec(np.array([1.0, 2.0]), 1)
    with pytest.raises(ValueError):
        NullSpec(np.array([1.0]), 2)
    spec = NullSpec.from_eigenvalues([0.7, 0.2, 0.1], bridge_grid=20, n_draws=40, seed=9)
    back = NullSpec.from_json(spec.to_json())
    np.testing.assert_array_equal(back.eigenvalues, spec.eigenvalues)
    assert (back.n_bridges, back.bridge_grid, back.n_draws, back.seed) == (3, 20, 40, 9)
    np.testing.assert_array_equal(simulate_null(back), simulate_null(spec))
    with pytest.raises(ValueError):
        NullSpec.from_dict({**spec.to_dict(), "schema_version": 99})


def test_degenerate_spec():
    with pytest.raises(DegenerateDistributionError):
        simulate_null(NullSpec(np.zeros(3), 2, 10, 10, 0))


def test_bridges_pinned_and_unit_variance():
    b = simulate_bridges(np.random.default_rng(1), 4000, 50)
    assert not b[:, 0].any() and not b[:, -1].any()
    # Var B(x) = x (1 - x)
    assert b[:, 25].var() == pytest.approx(0.25, rel=0.08)


def test_linear_scaling_same_seed():
    spec = NullSpec.from_eigenvalues([0.6, 0.3], coverage=1.0, bridge_grid=30, n_draws=600, seed=4)
    base = simulate_null(spec)
    np.testing.assert_allclose(simulate_null(spec.scaled(3.0)), 3.0 * base, rtol=1e-14)


def test_draws_are_deterministic_and_sorted():
    spec = NullSpec.from_eigenvalues([1.0], bridge_grid=40, n_draws=700, seed=11)
    a, b = simulate_null(spec), simulate_null(spec)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.diff(a) >= 0)
    # prefix stability: the first blocks do not depend on n_draws
    big = simulate_null(NullSpec.from_eigenvalues([1.0], bridge_grid=40, n_draws=1024, seed=11))
    small = simulate_null(NullSpec.from_eigenvalues([1.0], bridge_grid=40, n_draws=512, seed=11))
    assert set(small) <= set(big)


@pytest.mark.slow
def test_single_eigenvalue_quantile_on_lattice():
    # on a 1000-step lattice the maximum sits below the continuous supremum;
    # the oracle shifts the Kolmogorov point by the discrete-monitoring term
    m = 1000
    ks = kstwobign.ppf(0.95)
    assert ks**2 == pytest.approx(1.8443, abs=2e-4)
    oracle = (ks - BGK_BETA / math.sqrt(m)) ** 2
    draws = simulate_null(NullSpec.from_eigenvalues([1.0], bridge_grid=m, n_draws=20000, seed=0))
    assert abs(critical_value(draws, 0.05) - oracle) < 0.03


def test_critical_value_order_statistic():
    d = np.arange(1, 101, dtype=float)
    assert critical_value(d, 0.05) == 95.0
    assert critical_value(np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), 0.5) == 0.0
    with pytest.raises(ValueError):
        critical_value(d, 1.0)
    assert quantile_table(d, (0.1,)) == {"0.1": 90.0}


def test_p_value_edges():
    d = np.arange(1, 100, dtype=float)
    assert p_value(d, 0.0) == 1.0
    assert p_value(d, 1000.0) == 1 / 100
    # 50 of 99 draws are >= the median
    assert p_value(d, 50.0) == 51 / 100


def test_fit_null_on_iid_panel(rng):
    n, t, g = 50, 120, 11
    grid = make_uniform_grid(g)
    p = FunctionalPanel(rng.standard_normal((n, t, g)), grid)
    spec = fit_null(p, bandwidth=0, coverage=1.0, n_draws=10, bridge_grid=10)
    # sqrt(N) * mean of iid N(0,1) has unit pointwise variance, so the operator trace is ~ 1
    assert spec.eigenvalues.sum() == pytest.approx(1.0, rel=0.15)
    res = fit_null(p, residuals=True, n_draws=10, bridge_grid=10)
    assert res.eigenvalues[0] > 0
