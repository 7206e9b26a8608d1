"""2D magnetic Schrodinger eigensolver with the De Gennes boundary term.

The quadratic form ||(h grad - iA)u||^2 + h^(1+alpha) int gamma |u|^2 is
discretized with P1 cotangent weights carrying link phases
exp(i/h int_edge A.dl) and a lumped mass matrix.  Because the form depends
on A only through edge line integrals, a gauge change A -> A + grad(phi)
conjugates the matrix by the diagonal unitary exp(i phi/h): the discrete
spectrum is gauge invariant to solver precision, and the accuracy is set by
the flux per element (kept O(1) small by the mesh rule), not by the size of
the gauge field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import theta_profile as tp
from .boundary_geometry import BoundaryCurve, arc_distance
from .errors import ConfigurationError, DiagnosticsError, DomainError, SolverError
from .mesh2d import DIAMETER_FACTOR, TriangleMesh

_EIGSH_SEED = 20240613


class VectorPotential:
    """A vector field plus composed gauge shifts, known through line integrals."""

    def __init__(self, func, name: str = "custom", gauges=()):
        self.func = func
        self.name = name
        self.gauges = tuple(gauges)

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)))

    def line_integrals(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """int A . dl along straight segments p -> q (Simpson, exact for cubics)."""
        mid = 0.5 * (p + q)
        d = q - p
        val = (
            np.einsum("ij,ij->i", self(p), d)
            + 4.0 * np.einsum("ij,ij->i", self(mid), d)
            + np.einsum("ij,ij->i", self(q), d)
        ) / 6.0
        for phi in self.gauges:
            val = val + (phi(q) - phi(p))
        return val

    def shifted(self, phi) -> "VectorPotential":
        """The gauge-transformed potential A + grad(phi), handled exactly."""
        return VectorPotential(self.func, self.name, self.gauges + (phi,))


def reference_potential() -> VectorPotential:
    """The symmetric gauge (-y/2, x/2) with unit magnetic field."""

    def a0(x):
        return 0.5 * np.stack([-x[..., 1], x[..., 0]], axis=-1)

    return VectorPotential(a0, name="symmetric")


@dataclass
class MagneticProblem2D:
    curve: BoundaryCurve
    h: float
    alpha: float
    gamma_fn: object                       # callable of arclength, vectorized
    potential: VectorPotential = field(default_factory=reference_potential)

    def __post_init__(self):
        if self.h <= 0 or self.alpha <= 0:
            raise DomainError("h and alpha must be positive")

    def gamma_min(self) -> float:
        s = np.linspace(0.0, self.curve.length, 4096, endpoint=False)
        return float(np.min(np.asarray(self.gamma_fn(s), dtype=float)))


@dataclass
class GroundState2D:
    mu1: float
    u: np.ndarray
    residual: float
    boundary_trace: np.ndarray
    eigenvalues: np.ndarray
    dof: int


def _check_mesh_rule(problem: MagneticProblem2D, mesh: TriangleMesh) -> None:
    bound = DIAMETER_FACTOR * math.sqrt(problem.h)
    if mesh.max_edge > bound * (1.0 + 1e-9):
        raise ConfigurationError(
            f"mesh too coarse for h={problem.h}: max element diameter "
            f"{mesh.max_edge:.4g} exceeds 0.25*sqrt(h) = {bound:.4g}"
        )


def _cotan_edge_weights(mesh: TriangleMesh):
    """Unique undirected edges with accumulated P1 stiffness weights."""
    tri = mesh.triangles
    pts = mesh.nodes
    pairs = []
    wts = []
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        i, j, k = tri[:, a], tri[:, b], tri[:, c]
        u = pts[i] - pts[k]
        v = pts[j] - pts[k]
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        cot = np.einsum("ij,ij->i", u, v) / np.abs(cross)
        e = np.stack([i, j], axis=1)
        e.sort(axis=1)
        pairs.append(e)
        wts.append(0.5 * cot)
    pairs = np.vstack(pairs)
    wts = np.concatenate(wts)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    weights = np.zeros(edges.shape[0])
    np.add.at(weights, inv, wts)
    return edges, weights


def _lumped_mass(mesh: TriangleMesh) -> np.ndarray:
    area = np.abs(mesh.triangle_areas())
    m = np.zeros(mesh.num_nodes)
    for c in range(3):
        np.add.at(m, mesh.triangles[:, c], area / 3.0)
    return m


def assemble_forms(problem: MagneticProblem2D, mesh: TriangleMesh):
    """Hermitian stiffness-with-links K and lumped mass diagonal M."""
    _check_mesh_rule(problem, mesh)
    edges, w = _cotan_edge_weights(mesh)
    p = mesh.nodes[edges[:, 0]]
    q = mesh.nodes[edges[:, 1]]
    theta = problem.potential.line_integrals(p, q) / problem.h
    link = np.exp(1j * theta)
    h2 = problem.h ** 2

    n = mesh.num_nodes
    diag = np.zeros(n, dtype=complex)
    np.add.at(diag, edges[:, 0], h2 * w)
    np.add.at(diag, edges[:, 1], h2 * w)

    s = mesh.boundary_s
    ds = problem.curve.length / s.size
    gam = np.asarray(problem.gamma_fn(s), dtype=float)
    diag[mesh.boundary_nodes] += problem.h ** (1.0 + problem.alpha) * gam * ds

    rows = np.concatenate([edges[:, 0], edges[:, 1], np.arange(n)])
    cols = np.concatenate([edges[:, 1], edges[:, 0], np.arange(n)])
    vals = np.concatenate([-h2 * w * np.conj(link), -h2 * w * link, diag])
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    M = _lumped_mass(mesh)
    return K, M


def quadratic_form_value(K: sp.csr_matrix, u: np.ndarray) -> float:
    return float(np.real(np.vdot(u, K @ u)))


def curl_residual(problem: MagneticProblem2D, mesh: TriangleMesh) -> float:
    """Max deviation of the per-element flux/area ratio from unit field."""
    tri = mesh.triangles
    pts = mesh.nodes
    flux = np.zeros(tri.shape[0])
    for a, b in ((0, 1), (1, 2), (2, 0)):
        flux += problem.potential.line_integrals(pts[tri[:, a]], pts[tri[:, b]])
    area = mesh.triangle_areas()
    return float(np.max(np.abs(flux / area - 1.0)))


def _default_shift(problem: MagneticProblem2D) -> float:
    gmin = problem.gamma_min()
    h = problem.h
    if gmin >= 0.0:
        # halfway to the anticipated ground energy h*Theta(eta_min) in (0, h]
        eta = min(h ** (problem.alpha - 0.5) * gmin, 8.0)
        try:
            guess = tp.theta(eta).theta
        except Exception:
            guess = 0.0
        return 0.5 * h * max(min(guess, 1.0), 0.0)
    # below the form's lower bound -2 gamma_-^2 h^(2 alpha) (epsilon=1/2 in the
    # standard Robin absorption estimate), but close enough for fast Lanczos
    return -2.0 * gmin ** 2 * h ** (2.0 * problem.alpha) - 0.5 * h


def ground_state(
    problem: MagneticProblem2D,
    mesh: TriangleMesh,
    k: int = 4,
    shift: float | None = None,
    dirichlet: bool = False,
    maxiter: int = 5000,
    ncv: int | None = None,
) -> GroundState2D:
    """Lowest generalized eigenpair of (K, M), phase-fixed and M-normalized."""
    K, M = assemble_forms(problem, mesh)
    keep = None
    if dirichlet:
        keep = np.setdiff1d(np.arange(mesh.num_nodes), mesh.boundary_nodes)
        K = K[keep][:, keep]
        M = M[keep]
    n = M.size
    d = 1.0 / np.sqrt(M)
    B = sp.diags(d) @ K @ sp.diags(d)
    sigma = _default_shift(problem) if shift is None else shift
    rng = np.random.default_rng(_EIGSH_SEED)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    try:
        vals, vecs = spla.eigsh(
            B, k=k, sigma=sigma, which="LM", v0=v0, tol=0, maxiter=maxiter, ncv=ncv
        )
    except spla.ArpackNoConvergence as exc:
        raise SolverError(
            f"eigensolver stagnation: {exc}", residuals=list(np.atleast_1d(exc.eigenvalues)),
        ) from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    y = vecs[:, 0]
    x = d * y

    integral = np.sum(M * x)
    if abs(integral) > 1e-12:
        x = x * np.exp(-1j * np.angle(integral))
    else:
        x = x * np.exp(-1j * np.angle(x[np.argmax(np.abs(x))]))

    mu1 = float(vals[0])
    res = float(np.linalg.norm(K @ x - mu1 * M * x))

    if keep is not None:
        full = np.zeros(mesh.num_nodes, dtype=complex)
        full[keep] = x
        x = full
    trace = x[mesh.boundary_nodes]
    return GroundState2D(
        mu1=mu1,
        u=x,
        residual=res,
        boundary_trace=trace,
        eigenvalues=np.asarray(vals, dtype=float),
        dof=n,
    )


def gauge_transform(problem: MagneticProblem2D, phi) -> MagneticProblem2D:
    """Same problem with potential A + grad(phi); spectra agree exactly."""

    def phi_nodes(x):
        return np.asarray(phi(np.asarray(x, dtype=float)), dtype=float)

    return MagneticProblem2D(
        curve=problem.curve,
        h=problem.h,
        alpha=problem.alpha,
        gamma_fn=problem.gamma_fn,
        potential=problem.potential.shifted(phi_nodes),
    )


# ---------------------------------------------------------------------------
# localization diagnostics
# ---------------------------------------------------------------------------

def localization_profile(
    state: GroundState2D,
    mesh: TriangleMesh,
    curve: BoundaryCurve,
    h: float,
    target: dict,
    radius: float,
    bin_width: float = 0.5,
) -> dict:
    """Mass outside a neighborhood of the target set plus an Agmon-rate fit.

    ``target`` kinds: {"kind": "boundary"} (distance to the boundary),
    {"kind": "points", "s": [...]} (euclidean distance to boundary points),
    {"kind": "arc", "s": s0} (arc distance of the boundary projection).
    """
    M = _lumped_mass(mesh)
    mass = M * np.abs(state.u) ** 2
    total = float(np.sum(mass))
    kind = target.get("kind")
    if kind == "boundary":
        dist = mesh.boundary_distance
    elif kind == "points":
        if "s_fraction" in target:
            s_pts = np.asarray(target["s_fraction"], dtype=float) * curve.length
        else:
            s_pts = np.asarray(target["s"], dtype=float)
        pts = curve.point(s_pts)
        dist = np.min(
            np.linalg.norm(mesh.nodes[:, None, :] - pts[None, :, :], axis=2), axis=1
        )
    elif kind == "arc":
        dist = arc_distance(curve, mesh.projection_s, float(target["s"]))
    else:
        raise DomainError(f"unknown target kind {kind!r}")

    inside = dist <= radius
    mass_outside = float(np.sum(mass[~inside])) / total

    # Agmon rate: slope of log ||u|| over bins of boundary distance / sqrt(h)
    tau = mesh.boundary_distance / math.sqrt(h)
    edges = np.arange(0.0, np.max(tau) + bin_width, bin_width)
    idx = np.digitize(tau, edges) - 1
    norms, centers = [], []
    for b in range(edges.size - 1):
        m = float(np.sum(mass[idx == b]))
        if m > 1e-28:
            norms.append(0.5 * math.log(m))
            centers.append(0.5 * (edges[b] + edges[b + 1]))
    if len(norms) < 3:
        raise DiagnosticsError("fewer than 3 nonempty distance bins for the rate fit")
    slope = np.polyfit(centers, norms, 1)[0]
    return {
        "mass_outside": mass_outside,
        "agmon_rate": float(-slope),
        "bins_used": len(norms),
    }


# ---------------------------------------------------------------------------
# trial states evaluated through the boundary-fitted form
# ---------------------------------------------------------------------------

def _smooth_plateau(t, t1, t2):
    """C2 cutoff: 1 on [0, t1], 0 beyond t2, quintic smoothstep between."""
    x = np.clip((np.asarray(t, dtype=float) - t1) / (t2 - t1), 0.0, 1.0)
    s = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    return 1.0 - s


def _smooth_plateau_d(t, t1, t2):
    x = np.clip((np.asarray(t, dtype=float) - t1) / (t2 - t1), 0.0, 1.0)
    ds = 30.0 * x * x * (1.0 - x) ** 2 / (t2 - t1)
    return -ds


def trial_upper_bound(
    problem: MagneticProblem2D,
    s0: float = 0.0,
    variant: str = "curvature",
    s_width: float | None = None,
    ns: int = 2048,
    nt: int = 640,
) -> float:
    """Rayleigh quotient of the boundary-layer trial state centered at s0.

    The profile across the boundary is the half-line ground state at the
    effective Robin parameter eta = h^(alpha-1/2) gamma(s0), modulated by the
    tangential phase exp(-i xi(eta) s / sqrt(h)).  ``variant="plain"`` uses an
    s-window of width h^(1/4) and the full Jacobian prefactor a^(-1/2);
    ``variant="curvature"`` freezes the curvature at s0 and widens the window
    (default h^(1/8), wider windows are admissible where the curvature is
    constant and sharpen the h^(3/2) resolution at desk-scale h).
    By the min-max principle the returned value is >= mu1.
    """
    from .boundary_geometry import tube_l2_norm_sq, tube_quadratic_form

    curve = problem.curve
    h = problem.h
    if curve.tube_width < 1.5 * math.sqrt(h):
        raise ConfigurationError(
            f"tube width {curve.tube_width:.3g} too narrow for the cutoff at h={h}"
        )
    eta = h ** (problem.alpha - 0.5) * float(problem.gamma_fn(np.asarray([s0]))[0])
    state = tp.theta_state(eta)
    level = state.fine
    xi_eta = state.record.xi_star
    from scipy.interpolate import CubicSpline

    t_nodes = level.grid.nodes()
    spl = CubicSpline(t_nodes, level.phi)
    dspl = spl.derivative()
    t_cap = t_nodes[-1]

    def prof(tau):
        tau = np.asarray(tau, dtype=float)
        out = np.where(tau <= t_cap, spl(np.minimum(tau, t_cap)), 0.0)
        return out

    def dprof(tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(tau <= t_cap, dspl(np.minimum(tau, t_cap)), 0.0)

    kappa0 = float(curve.curvature(np.asarray([s0]))[0])
    t2 = 0.98 * curve.tube_width
    t1 = 0.75 * t2
    sqh = math.sqrt(h)

    if s_width is None:
        s_width = h ** 0.125 if variant == "curvature" else h ** 0.25
    s_width = min(s_width, 0.9 * curve.length)
    half = 0.5 * s_width

    phase_k = xi_eta / sqh
    if variant == "periodic":
        # full-boundary window: the phase winding must match the enclosed
        # flux for the state to be single-valued, so the tangential momentum
        # is quantized on a lattice of spacing 2 pi sqrt(h) / |boundary|
        area = curve.enclosed_area()
        L = curve.length
        n_wind = round((xi_eta * L / sqh - area / h) / (2.0 * math.pi))
        xi_q = (area / h + 2.0 * math.pi * n_wind) * sqh / L
        phase_k = xi_q / sqh

    def bump(sigma):
        # normalized C1 window sqrt(8/3) cos^2(pi sigma) on (-1/2, 1/2)
        sigma = np.asarray(sigma, dtype=float)
        inside = np.abs(sigma) < 0.5
        return np.where(inside, math.sqrt(8.0 / 3.0) * np.cos(math.pi * sigma) ** 2, 0.0)

    def dbump(sigma):
        sigma = np.asarray(sigma, dtype=float)
        inside = np.abs(sigma) < 0.5
        return np.where(
            inside, -math.sqrt(8.0 / 3.0) * math.pi * np.sin(2.0 * math.pi * sigma), 0.0
        )

    def parts(S, T):
        rel = (S - s0) / s_width
        chi = _smooth_plateau(T, t1, t2)
        pr = prof(T / sqh)
        f = np.ones_like(rel) if variant == "periodic" else bump(rel)
        if variant == "plain":
            kap = curve.curvature(curve.wrap(S))
            pref = (1.0 - T * kap) ** (-0.5)
        else:
            pref = (1.0 - T * kappa0) ** (-0.5)
        phase = np.exp(-1j * phase_k * (S - s0))
        return rel, chi, pr, f, pref, phase

    def v(S, T):
        _, chi, pr, f, pref, phase = parts(S, T)
        return pref * phase * pr * chi * f

    def dv_dt(S, T):
        rel, chi, pr, f, pref, phase = parts(S, T)
        dchi = _smooth_plateau_d(T, t1, t2)
        dpr = dprof(T / sqh) / sqh
        if variant == "plain":
            kap = curve.curvature(curve.wrap(S))
            dpref = 0.5 * kap * (1.0 - T * kap) ** (-1.5)
        else:
            dpref = 0.5 * kappa0 * (1.0 - T * kappa0) ** (-1.5)
        return phase * f * (dpref * pr * chi + pref * (dpr * chi + pr * dchi))

    def dv_ds(S, T):
        rel, chi, pr, f, pref, phase = parts(S, T)
        if variant == "periodic":
            df = np.zeros_like(rel)
        else:
            df = dbump(rel) / s_width
        term = pref * phase * pr * chi * df
        if variant == "plain":
            kap = curve.curvature(curve.wrap(S))
            dkap = curve.curvature_derivative(curve.wrap(S))
            term = term + 0.5 * T * dkap * (1.0 - T * kap) ** (-1.5) * phase * pr * chi * f
        return term - 1j * phase_k * v(S, T)

    if variant == "periodic":
        s_range = (0.0, curve.length)
    else:
        s_range = (s0 - half, s0 + half)
    form = tube_quadratic_form(
        curve,
        h,
        problem.alpha,
        lambda s: problem.gamma_fn(curve.wrap(s)),
        v,
        s_range=s_range,
        t_max=t2 * 1.0001,
        ns=ns,
        nt=nt,
        dv_ds=dv_ds,
        dv_dt=dv_dt,
    )
    norm_sq = tube_l2_norm_sq(
        curve, v, s_range=s_range, t_max=t2 * 1.0001, ns=ns, nt=nt
    )
    return form / norm_sq


# ---------------------------------------------------------------------------
# export helpers
# ---------------------------------------------------------------------------

def solution_to_csv(mesh: TriangleMesh, state: GroundState2D) -> str:
    lines = ["x1,x2,re_u,im_u,abs_u_sq"]
    for (x, y), u in zip(mesh.nodes, state.u):
        lines.append(
            f"{x:.17g},{y:.17g},{u.real:.17g},{u.imag:.17g},{abs(u) ** 2:.17g}"
        )
    return "\n".join(lines) + "\n"


def summary_dict(problem: MagneticProblem2D, state: GroundState2D) -> dict:
    return {
        "mu1": state.mu1,
        "residual": state.residual,
        "dof": state.dof,
        "h": problem.h,
        "alpha": problem.alpha,
    }


def summary_json(problem: MagneticProblem2D, state: GroundState2D, **meta) -> str:
    payload = summary_dict(problem, state)
    payload.update(meta)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
