import math

import numpy as np
import pytest

from degennes import magnetic_eigensolver_2d as m2
from degennes import theta_profile as tp
from degennes.boundary_geometry import CircleCurve, EllipseCurve
from degennes.errors import ConfigurationError, DiagnosticsError, SolverError
from degennes.mesh2d import TriangleMesh, boundary_layer_mesh

from _oracles import disk_mu1_radial


def gamma_zero(s):
    return np.zeros_like(s)


@pytest.fixture(scope="module")
def disk():
    return CircleCurve(1.0)


@pytest.fixture(scope="module")
def disk_mesh(disk):
    return boundary_layer_mesh(disk, 0.08)


@pytest.fixture(scope="module")
def disk_problem(disk):
    return m2.MagneticProblem2D(disk, 0.08, 1.0, gamma_zero)


@pytest.fixture(scope="module")
def disk_state(disk_problem, disk_mesh):
    return m2.ground_state(disk_problem, disk_mesh)


# ---------------------------------------------------------------------------
# meshing
# ---------------------------------------------------------------------------

def test_mesh_respects_sizing_rule(disk_mesh):
    assert disk_mesh.max_edge <= 0.25 * math.sqrt(0.08) * (1 + 1e-12)
    assert np.all(disk_mesh.triangle_areas() > 0)


def test_mesh_boundary_nodes_on_curve(disk, disk_mesh):
    pts = disk_mesh.nodes[disk_mesh.boundary_nodes]
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) <= 1e-12
    assert np.max(disk_mesh.boundary_distance[disk_mesh.boundary_nodes]) == 0.0


def test_mesh_io_round_trip(tmp_path, disk_mesh):
    path = str(tmp_path / "mesh.npz")
    disk_mesh.save(path)
    back = TriangleMesh.load(path)
    assert np.array_equal(back.nodes, disk_mesh.nodes)
    assert np.array_equal(back.triangles, disk_mesh.triangles)
    assert back.h_target == disk_mesh.h_target


def test_too_coarse_mesh_rejected(disk, disk_mesh):
    problem = m2.MagneticProblem2D(disk, 0.01, 1.0, gamma_zero)
    with pytest.raises(ConfigurationError, match="0.25"):
        m2.assemble_forms(problem, disk_mesh)


# ---------------------------------------------------------------------------
# assembled forms
# ---------------------------------------------------------------------------

def test_constant_field_energy_matches_potential_integral(disk, disk_mesh, disk_problem):
    """Q(const) ~ |c|^2 int |A0|^2; the closed form over the unit disk is pi/8.

    The closed form itself is checked by independent fine quadrature at 1e-6;
    the assembled link-phase form matches at the discretization level only
    (the link phases saturate quadratically)."""
    r = np.linspace(0.0, 1.0, 20001)
    closed = 2.0 * math.pi * np.trapezoid((r ** 2 / 4.0) * r, r)
    assert closed == pytest.approx(math.pi / 8.0, abs=1e-6)

    K, M = m2.assemble_forms(disk_problem, disk_mesh)
    c = 2.3 + 0.0j
    u = np.full(disk_mesh.num_nodes, c)
    q = m2.quadratic_form_value(K, u)
    assert q == pytest.approx(abs(c) ** 2 * math.pi / 8.0, rel=0.05)


def test_form_is_hermitian(disk_problem, disk_mesh):
    K, _ = m2.assemble_forms(disk_problem, disk_mesh)
    rng = np.random.default_rng(0)
    n = disk_mesh.num_nodes
    for _ in range(5):
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        quv = np.vdot(u, K @ v)
        qvu = np.vdot(v, K @ u)
        nu = np.linalg.norm(u) * np.linalg.norm(v)
        assert abs(quv - np.conj(qvu)) <= 1e-12 * nu


def test_form_nonnegative_for_nonnegative_gamma(disk):
    h = 0.3
    mesh = boundary_layer_mesh(disk, h)
    problem = m2.MagneticProblem2D(disk, h, 1.0, lambda s: np.abs(np.sin(s)))
    K, _ = m2.assemble_forms(problem, mesh)
    rng = np.random.default_rng(1)
    n = mesh.num_nodes
    for _ in range(200):
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert m2.quadratic_form_value(K, u) >= 0.0


def test_discrete_diamagnetic_inequality(disk_problem, disk_mesh):
    # |u_i - e^{i theta} u_j| >= ||u_i| - |u_j||, so Q_A(u) >= Q_0(|u|)
    K, _ = m2.assemble_forms(disk_problem, disk_mesh)
    free = m2.MagneticProblem2D(
        disk_problem.curve, disk_problem.h, disk_problem.alpha, gamma_zero,
        potential=m2.VectorPotential(lambda x: np.zeros_like(x), "zero"),
    )
    K0, _ = m2.assemble_forms(free, disk_mesh)
    rng = np.random.default_rng(2)
    n = disk_mesh.num_nodes
    for _ in range(10):
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert m2.quadratic_form_value(K, u) >= m2.quadratic_form_value(K0, np.abs(u)) - 1e-10


def test_curl_residual_tiny(disk_problem, disk_mesh):
    assert m2.curl_residual(disk_problem, disk_mesh) <= 1e-8


# ---------------------------------------------------------------------------
# ground states
# ---------------------------------------------------------------------------

def test_ground_state_basic_properties(disk_state, disk_mesh):
    assert disk_state.mu1 > 0
    assert disk_state.residual <= 1e-10
    # M-normalization and the phase convention
    _, M = m2.assemble_forms(
        m2.MagneticProblem2D(CircleCurve(1.0), 0.08, 1.0, gamma_zero), disk_mesh
    )
    norm = np.sum(M * np.abs(disk_state.u) ** 2)
    assert norm == pytest.approx(1.0, abs=1e-10)
    integral = np.sum(M * disk_state.u)
    assert integral.imag == pytest.approx(0.0, abs=1e-10)
    assert disk_state.boundary_trace.shape == disk_mesh.boundary_nodes.shape


def test_ground_state_matches_radial_oracle(disk_state):
    oracle = disk_mu1_radial(0.08, 1.0, 0.0)
    assert disk_state.mu1 == pytest.approx(oracle, rel=5e-3)


def test_gauge_invariance_exact(disk_problem, disk_mesh, disk_state):
    cases = [
        lambda x: np.zeros(x.shape[:-1]),
        lambda x: 0.5 * x[..., 0] * x[..., 1],
    ]
    rng = np.random.default_rng(3)
    cfs = rng.standard_normal(4)
    cases.append(
        lambda x: cfs[0] * x[..., 0] + cfs[1] * x[..., 1] ** 3
        + cfs[2] * x[..., 0] ** 2 * x[..., 1] + cfs[3]
    )
    for phi in cases:
        alt = m2.ground_state(m2.gauge_transform(disk_problem, phi), disk_mesh)
        assert abs(alt.mu1 - disk_state.mu1) <= 1e-9 * abs(disk_state.mu1)
        assert np.max(np.abs(np.abs(alt.u) - np.abs(disk_state.u))) <= 1e-6


def test_monotone_in_gamma_and_bracketing(disk, disk_mesh):
    h = 0.08
    probs = [
        m2.MagneticProblem2D(disk, h, 1.0, lambda s, v=v: np.full_like(s, v))
        for v in (0.0, 0.5)
    ]
    mu = [m2.ground_state(p, disk_mesh).mu1 for p in probs]
    assert mu[0] <= mu[1]
    dirichlet = m2.ground_state(probs[0], disk_mesh, dirichlet=True).mu1
    assert mu[1] <= dirichlet


def test_mesh_convergence(disk):
    h = 0.05
    prob = m2.MagneticProblem2D(disk, h, 1.0, gamma_zero)
    v1 = m2.ground_state(prob, boundary_layer_mesh(disk, h)).mu1
    v2 = m2.ground_state(prob, boundary_layer_mesh(disk, h, refine=2.0)).mu1
    assert abs(v1 - v2) / abs(v2) <= 0.02


def test_solver_stagnation_reported(disk_problem, disk_mesh):
    with pytest.raises(SolverError):
        m2.ground_state(disk_problem, disk_mesh, k=6, maxiter=1, ncv=8, shift=-50.0)


# ---------------------------------------------------------------------------
# trial states
# ---------------------------------------------------------------------------

def test_trial_bounds_dominate_ground_energy(disk, disk_mesh, disk_state):
    prob = m2.MagneticProblem2D(disk, 0.08, 1.0, gamma_zero)
    for variant in ("plain", "curvature", "periodic"):
        bound = m2.trial_upper_bound(prob, 0.0, variant=variant, ns=1024, nt=320)
        assert bound >= disk_state.mu1


def test_plain_trial_reproduces_leading_order():
    disk = CircleCurve(1.0)
    h = 0.01
    prob = m2.MagneticProblem2D(disk, h, 1.0, gamma_zero)
    bound = m2.trial_upper_bound(prob, 0.0, variant="plain")
    theta0 = tp.theta(0.0).theta
    assert bound >= h * theta0
    assert bound - h * theta0 <= 25.0 * h ** 1.5


def test_periodic_trial_resolves_curvature_term():
    disk = CircleCurve(1.0)
    h = 0.01
    prob = m2.MagneticProblem2D(disk, h, 1.0, gamma_zero)
    bound = m2.trial_upper_bound(prob, 0.0, variant="periodic", ns=4096, nt=768)
    theta0 = tp.theta(0.0).theta
    target = -2.0 * tp.m3_constant(0.0) * h ** 1.5
    assert (bound - h * theta0) == pytest.approx(target, rel=0.15)


def test_trial_rejects_narrow_tube():
    ellipse = EllipseCurve(2.0, 1.0)  # tube width 0.25
    prob = m2.MagneticProblem2D(ellipse, 0.08, 1.0, gamma_zero)
    with pytest.raises(ConfigurationError):
        m2.trial_upper_bound(prob, 0.0)


# ---------------------------------------------------------------------------
# localization diagnostics
# ---------------------------------------------------------------------------

def test_localization_boundary_mass(disk, disk_mesh, disk_state):
    out = m2.localization_profile(
        disk_state, disk_mesh, disk, 0.08, {"kind": "boundary"}, 4 * math.sqrt(0.08)
    )
    assert out["mass_outside"] <= 0.01
    assert out["agmon_rate"] > 0


def test_localization_degenerate_bins(disk, disk_mesh, disk_state):
    with pytest.raises(DiagnosticsError):
        m2.localization_profile(
            disk_state, disk_mesh, disk, 0.08, {"kind": "boundary"}, 0.5,
            bin_width=100.0,
        )


def test_solution_export(disk_problem, disk_mesh, disk_state):
    csv = m2.solution_to_csv(disk_mesh, disk_state)
    lines = csv.strip().split("\n")
    assert lines[0] == "x1,x2,re_u,im_u,abs_u_sq"
    assert len(lines) == disk_mesh.num_nodes + 1
    js = m2.summary_json(disk_problem, disk_state)
    import json

    payload = json.loads(js)
    assert payload["mu1"] == disk_state.mu1
    assert payload["dof"] == disk_state.dof
