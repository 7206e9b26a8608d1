import math

import numpy as np
import pytest

from degennes import robin_oscillator as ro
from degennes.errors import ConfigurationError

from _oracles import half_line_mu1_dense


def mu_extrapolated(gamma, xi, spacing=0.004, dirichlet=False):
    p = ro.RobinParams(gamma, xi)
    g1 = ro.default_grid(p, spacing)
    v1 = ro.mu1(p, g1, dirichlet=dirichlet)
    v2 = ro.mu1(p, g1.refined(2), dirichlet=dirichlet)
    return (4.0 * v2 - v1) / 3.0


def test_neumann_half_line_ground_energy_is_one():
    # even Hermite extension of the gamma=0 problem
    assert mu_extrapolated(0.0, 0.0) == pytest.approx(1.0, abs=1e-6)


def test_dirichlet_limit_levels_three_and_seven():
    # odd Hermite extension: levels 3, 7, 11, ...
    assert mu_extrapolated(0.0, 0.0, dirichlet=True) == pytest.approx(3.0, abs=1e-6)
    p = ro.RobinParams(0.0, 0.0)
    grid = ro.default_grid(p, 0.004)
    v1 = ro.second_eigenvalue(ro.assemble(p, grid, dirichlet=True))
    v2 = ro.second_eigenvalue(ro.assemble(p, grid.refined(2), dirichlet=True))
    assert (4 * v2 - v1) / 3 == pytest.approx(7.0, abs=1e-4)


def test_large_xi_limit_approaches_one():
    p = ro.RobinParams(0.0, 5.0)
    assert ro.mu1(p) == pytest.approx(1.0, abs=1e-3)


def test_negative_xi_band_diverges():
    for gamma in (-1.0, 0.0, 1.0):
        assert ro.mu1(ro.RobinParams(gamma, -6.0)) > 20.0


def test_second_eigenvalue_against_dense_oracle():
    p = ro.RobinParams(0.0, 0.0)
    grid = ro.default_grid(p, 0.004)
    op = ro.assemble(p, grid)
    mu2 = ro.second_eigenvalue(op)
    dense = half_line_mu1_dense(0.0, 0.0, grid.t_max, grid.n, k=2)
    assert mu2 > ro.lowest_eigenpair(op).mu
    assert mu2 == pytest.approx(float(dense[1]), abs=1e-6)


def test_exponential_trial_bounds_negative_gamma():
    # Rayleigh quotient of exp(-t) at gamma=-1, xi=0, by direct quadrature
    t = np.linspace(0.0, 14.0, 28001)
    u = np.exp(-t)
    du = -u
    dt = t[1] - t[0]
    w = np.full(t.size, dt)
    w[0] = w[-1] = dt / 2
    q = np.sum(w * (du ** 2 + t ** 2 * u ** 2)) - 1.0
    quotient = q / np.sum(w * u ** 2)
    assert quotient == pytest.approx(-0.5, abs=1e-4)
    assert ro.mu1(ro.RobinParams(-1.0, 0.0)) <= quotient + 1e-9


def test_ground_state_positive_and_normalized():
    for gamma, xi in ((-1.0, 0.3), (0.0, 0.77), (2.0, 1.5)):
        p = ro.RobinParams(gamma, xi)
        op = ro.assemble(p, ro.default_grid(p))
        pair = ro.lowest_eigenpair(op)
        assert np.all(pair.phi[:-1] > 0)
        w = np.full(pair.phi.size, op.grid.spacing)
        w[0] = w[-1] = op.grid.spacing / 2
        assert np.sum(w * pair.phi ** 2) == pytest.approx(1.0, abs=1e-12)
        assert pair.residual <= 1e-10


def test_boundary_condition_consistency():
    for gamma, xi in ((-1.0, 0.3), (0.5, 1.0), (3.0, 2.0)):
        p = ro.RobinParams(gamma, xi)
        grid = ro.default_grid(p)
        pair = ro.lowest_eigenpair(ro.assemble(p, grid))
        dphi0 = ro.boundary_derivative(pair, grid.spacing)
        assert abs(dphi0 - gamma * pair.phi0) <= 10.0 * grid.spacing


def test_band_derivative_examples():
    # at xi=0: (0 - mu - gamma^2) phi(0)^2 < 0, and equals -2/sqrt(pi) at gamma=0
    val = ro.dmu_dxi(ro.RobinParams(0.0, 0.0))
    assert val < 0
    assert val == pytest.approx(-2.0 / math.sqrt(math.pi), abs=1e-4)


@pytest.mark.parametrize("gamma,xi", [(0.0, 0.5), (-1.0, 0.4), (1.0, 1.2), (0.3, 0.9)])
def test_band_derivative_matches_finite_differences(gamma, xi):
    grid = ro.default_grid(ro.RobinParams(gamma, xi), 0.004)
    step = 1e-3
    fd = (
        ro.mu1(ro.RobinParams(gamma, xi + step), grid)
        - ro.mu1(ro.RobinParams(gamma, xi - step), grid)
    ) / (2 * step)
    assert ro.dmu_dxi(ro.RobinParams(gamma, xi), grid) == pytest.approx(fd, abs=1e-4)


def test_lower_bound_estimate_for_negative_gamma():
    for gamma in (-0.5, -1.0, -2.0, -4.0):
        for xi in (0.0, 0.4, 1.0):
            for eps in (0.25, 0.5):
                lhs = ro.mu1(ro.RobinParams(gamma, xi))
                rhs = (1 - eps) * ro.mu1(ro.RobinParams(0.0, xi)) - gamma ** 2 / eps
                assert lhs >= rhs - 1e-6


def test_band_value_increasing_in_gamma():
    for xi in (0.3, 0.77, 1.5):
        vals = [ro.mu1(ro.RobinParams(g, xi)) for g in (-2.0, -1.0, 0.0, 1.0, 2.0)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_second_order_self_convergence():
    p = ro.RobinParams(-1.0, 0.4)
    grid = ro.default_grid(p, 0.008)
    v1 = ro.mu1(p, grid)
    v2 = ro.mu1(p, grid.refined(2))
    v3 = ro.mu1(p, grid.refined(4))
    order_ratio = (v1 - v2) / (v2 - v3)
    assert 3.0 < order_ratio < 5.0


def test_boundary_value_decays_with_xi():
    for gamma in (-1.0, 0.0, 1.0):
        vals = []
        for xi in (3.0, 6.0):
            p = ro.RobinParams(gamma, xi)
            pair = ro.lowest_eigenpair(ro.assemble(p, ro.default_grid(p)))
            vals.append(pair.phi0 ** 2)
        assert vals[1] * 10.0 < vals[0]


def test_grid_invariants_enforced():
    with pytest.raises(ConfigurationError):
        ro.HalfLineGrid(12.0, 32)
    with pytest.raises(ConfigurationError):
        ro.HalfLineGrid(12.0, 120)  # spacing 0.1 > 0.05
    with pytest.raises(ConfigurationError):
        ro.assemble(ro.RobinParams(0.0, 6.0), ro.HalfLineGrid(12.0, 2400))
    with pytest.raises(ConfigurationError):
        ro.RobinParams(float("nan"), 0.0)
