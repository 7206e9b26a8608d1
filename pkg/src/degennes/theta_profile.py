"""The spectral function Theta(gamma) of the half-plane Robin problem.

Theta(gamma) is the infimum over xi of the band function mu1(gamma, xi) of
the half-line oscillator.  The minimizer xi(gamma) is located as the root of
the band-derivative expression (xi^2 - mu1 - gamma^2)|phi(0)|^2, which both
certifies stationarity and makes the identity xi(gamma)^2 = Theta + gamma^2
hold by construction at each resolution.  Published constants are Richardson
extrapolated over two grid resolutions.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from . import robin_oscillator as ro
from .errors import ConditioningError, DomainError

XI_ROOT_XTOL = 1e-12
GAP_FLOOR = 1e-6


@dataclass
class ThetaLevel:
    """Everything computed at one grid resolution."""

    grid: ro.HalfLineGrid
    xi: float
    theta: float
    phi: np.ndarray         # samples on grid.nodes(), L2-normalized
    phi0: float
    gap: float
    moments: dict[int, float]
    m3_closed: float


@dataclass
class ThetaRecord:
    gamma: float
    theta: float
    xi_star: float
    phi0_sq: float
    moments: dict[int, float]
    m3: float
    gap: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "theta": self.theta,
            "xi_star": self.xi_star,
            "phi0_sq": self.phi0_sq,
            "m1": self.moments[1],
            "m2": self.moments[2],
            "m3": self.moments[3],
            "M3": self.m3,
            "gap": self.gap,
        }


@dataclass
class ThetaState:
    """Record plus the per-resolution data needed by downstream solves."""

    gamma: float
    coarse: ThetaLevel
    fine: ThetaLevel
    record: ThetaRecord


def _band_solve(gamma: float, xi: float, grid: ro.HalfLineGrid):
    op = ro.assemble(ro.RobinParams(gamma, xi), grid)
    return op, ro.lowest_eigenpair(op)


def _f_expr(gamma: float, xi: float, grid: ro.HalfLineGrid) -> float:
    _, pair = _band_solve(gamma, xi, grid)
    return (xi * xi - pair.mu - gamma * gamma) * pair.phi0 ** 2


def _locate_xi(gamma: float, grid: ro.HalfLineGrid) -> float:
    """Root of the band-derivative expression on (0, xi_cap]."""
    lo = 0.0
    f_lo = _f_expr(gamma, lo, grid)
    if f_lo >= 0.0:
        raise DomainError(f"band derivative not negative at xi=0 for gamma={gamma}")
    # Theta < 1 bounds the minimizer: xi(gamma)^2 = Theta + gamma^2 < 1 + gamma^2
    xi_cap = math.sqrt(1.0 + gamma * gamma) + 2.0
    hi = min(1.0, xi_cap)
    while _f_expr(gamma, hi, grid) < 0.0:
        if hi >= xi_cap:
            raise DomainError(
                f"no sign change of the band derivative up to xi={hi} for gamma={gamma}"
            )
        hi = min(hi * 2.0, xi_cap)
    return brentq(lambda x: _f_expr(gamma, x, grid), lo, hi, xtol=XI_ROOT_XTOL)


def _level(gamma: float, grid: ro.HalfLineGrid) -> ThetaLevel:
    xi = _locate_xi(gamma, grid)
    op, pair = _band_solve(gamma, xi, grid)
    mu2 = ro.second_eigenvalue(op)
    t = grid.nodes()
    w = np.full(t.size, grid.spacing)
    w[0] = w[-1] = grid.spacing / 2.0
    moments = {
        k: float(np.sum(w * (t - xi) ** k * pair.phi ** 2)) for k in (1, 2, 3)
    }
    # closed form for the third centered moment; see the commutator identity
    # with p = (t - xi)^2 (the often-quoted 1 - 2(gamma xi)^2 variant is an
    # algebra slip, both agree at gamma = 0)
    m3_closed = (1.0 + 2.0 * gamma * xi) * pair.phi0 ** 2 / 6.0
    return ThetaLevel(
        grid=grid,
        xi=xi,
        theta=pair.mu,
        phi=pair.phi,
        phi0=pair.phi0,
        gap=mu2 - pair.mu,
        moments=moments,
        m3_closed=m3_closed,
    )


def _extrapolate(coarse: float, fine: float) -> float:
    # one Richardson step for a second-order scheme
    return (4.0 * fine - coarse) / 3.0


@functools.lru_cache(maxsize=256)
def _state_cached(gamma_key: float, spacing: float) -> ThetaState:
    gamma = float(gamma_key)
    if abs(gamma) > ro.GAMMA_BOX:
        raise DomainError(f"|gamma| <= {ro.GAMMA_BOX} supported, got {gamma}")
    xi_guess = math.sqrt(1.0 + gamma * gamma)
    t_max = max(12.0, xi_guess + 2.0 + 8.0)
    # negative gamma develops an exp(gamma t) boundary layer; refine with it
    spacing_eff = spacing / (1.0 + max(-gamma, 0.0))
    n = int(math.ceil(t_max / spacing_eff))
    grid_c = ro.HalfLineGrid(t_max, n)
    coarse = _level(gamma, grid_c)
    fine = _level(gamma, grid_c.refined(2))

    theta_r = _extrapolate(coarse.theta, fine.theta)
    xi_r = _extrapolate(coarse.xi, fine.xi)
    phi0_sq = _extrapolate(coarse.phi0 ** 2, fine.phi0 ** 2)
    moments = {
        k: _extrapolate(coarse.moments[k], fine.moments[k]) for k in (1, 2, 3)
    }
    m3 = _extrapolate(coarse.m3_closed, fine.m3_closed)
    gap = _extrapolate(coarse.gap, fine.gap)
    record = ThetaRecord(
        gamma=gamma,
        theta=theta_r,
        xi_star=xi_r,
        phi0_sq=phi0_sq,
        moments=moments,
        m3=m3,
        gap=gap,
        diagnostics={
            "spacing": spacing,
            "xi_identity_residual": xi_r ** 2 - theta_r - gamma ** 2,
            "level_delta_theta": fine.theta - coarse.theta,
        },
    )
    return ThetaState(gamma=gamma, coarse=coarse, fine=fine, record=record)


def theta_state(gamma: float, spacing: float = ro.DEFAULT_SPACING) -> ThetaState:
    return _state_cached(float(gamma), float(spacing))


def theta(gamma: float, spacing: float = ro.DEFAULT_SPACING) -> ThetaRecord:
    """Theta(gamma) with minimizer, boundary value, moments and gap."""
    return theta_state(gamma, spacing).record


def theta_derivative(gamma: float) -> float:
    """d(Theta)/d(gamma), which equals |phi_gamma(0)|^2."""
    return theta(gamma).phi0_sq


def moments(gamma: float) -> dict[int, float]:
    """Centered moments int (t - xi(gamma))^k phi^2 dt for k = 1, 2, 3."""
    return dict(theta(gamma).moments)


def m3_constant(gamma: float) -> float:
    """Closed-form third-moment constant (1 + 2 gamma xi(gamma)) |phi(0)|^2 / 6."""
    return theta(gamma).m3


def curvature_constant(gamma: float) -> float:
    """Constant C(gamma) in the two-term law mu1 ~ h Theta - 2 C kappa_max h^{3/2}.

    C(gamma) = (1 - gamma xi(gamma)) |phi_gamma(0)|^2 / 6, obtained from the
    quasi-mode coefficient 2C = phi(0)^2/2 - m3.  Reduces to the universal
    constant m3_constant(0) = Theta'(0)/6 at gamma = 0.
    """
    rec = theta(gamma)
    return (1.0 - gamma * rec.xi_star) * rec.phi0_sq / 6.0


def theta_grid(gammas) -> list[ThetaRecord]:
    return [theta(g) for g in gammas]


# ---------------------------------------------------------------------------
# regularized resolvent
# ---------------------------------------------------------------------------

@dataclass
class ResolventResult:
    values: np.ndarray
    projection_norm: float

    def __array__(self, dtype=None, copy=None):
        arr = np.asarray(self.values)
        return arr.astype(dtype) if dtype is not None else arr


def _level_mass(level: ThetaLevel) -> np.ndarray:
    dt = level.grid.spacing
    w = np.full(level.grid.n + 1, dt)
    w[0] = w[-1] = dt / 2.0
    return w


def regularized_resolvent(
    gamma: float,
    f,
    state: ThetaState | None = None,
    which: str = "fine",
) -> ResolventResult:
    """Solve (H[gamma] - Theta) u = f on the orthogonal complement of phi.

    ``f`` may be an array on the level's nodes or a callable of t.  The
    component of f along phi is projected out first and its norm reported.
    """
    if state is None:
        state = theta_state(gamma)
    level = state.fine if which == "fine" else state.coarse
    if level.gap < GAP_FLOOR:
        raise ConditioningError(
            f"spectral gap {level.gap:.3e} below {GAP_FLOOR}; resolvent ill-conditioned"
        )
    grid = level.grid
    t = grid.nodes()
    fv = np.asarray(f(t) if callable(f) else f, dtype=float)
    if fv.shape != t.shape:
        raise DomainError(f"f has shape {fv.shape}, expected {t.shape}")

    w = _level_mass(level)
    phi = level.phi
    coef = float(np.sum(w * fv * phi))
    f_perp = fv - coef * phi
    projection_norm = abs(coef)

    # unknowns exclude the Dirichlet node at t_max
    op = ro.assemble(ro.RobinParams(gamma, level.xi), grid)
    n = op.size
    k_shift = sp.diags(
        [op.offdiag, op.diag - level.theta * op.mass, op.offdiag],
        offsets=[-1, 0, 1],
        format="csc",
    )
    mphi = (op.mass * phi[:n])[:, None]
    bordered = sp.bmat([[k_shift, mphi], [mphi.T, None]], format="csc")
    rhs = np.concatenate([op.mass * f_perp[:n], [0.0]])
    sol = spla.spsolve(bordered, rhs)
    u = np.zeros_like(fv)
    u[:n] = sol[:n]
    return ResolventResult(values=u, projection_norm=projection_norm)


# ---------------------------------------------------------------------------
# perturbation coefficients of the weighted one-dimensional family
# ---------------------------------------------------------------------------

@dataclass
class PerturbationCoeffs:
    d0: float
    d1: float
    d2: float
    d3: float
    eta: float
    beta: float
    alpha: float
    h: float
    eta_eff: float


def _center_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    d[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dt)
    return d


def _coeffs_at_level(state: ThetaState, which: str, beta: float):
    level = state.fine if which == "fine" else state.coarse
    grid = level.grid
    t = grid.nodes()
    w = _level_mass(level)
    phi = level.phi
    shifted = t - level.xi

    u1 = 2.0 * regularized_resolvent(
        state.gamma, shifted * phi, state=state, which=which
    ).values
    d1 = -2.0 * level.moments[1]
    d2 = 1.0 - 2.0 * float(np.sum(w * shifted * phi * u1))
    dphi = _center_derivative(phi, grid.spacing)
    d3 = beta * float(np.sum(w * phi * (dphi + shifted ** 3 * phi)))
    return d1, d2, d3, u1


def perturbation_coefficients(
    alpha: float,
    eta: float,
    beta: float,
    h: float,
    return_functions: bool = False,
):
    """Expansion coefficients d0..d3 of the curvature-perturbed band minimum.

    d0 is Theta evaluated at the effective Robin parameter h^(alpha-1/2) eta
    (no series truncation), d1 vanishes with the first moment, d2 is assembled
    through the regularized resolvent, and d3 carries the curvature surrogate
    beta linearly.
    """
    if alpha < 0.5:
        raise DomainError(f"alpha >= 1/2 required, got {alpha}")
    if abs(eta) > ro.GAMMA_BOX or abs(beta) > ro.GAMMA_BOX:
        raise DomainError("|eta| and |beta| must be <= 8")
    if not (0.0 < h < 1.0):
        raise DomainError(f"h must lie in (0, 1), got {h}")

    eta_eff = h ** (alpha - 0.5) * eta
    state = theta_state(eta_eff)
    d1c, d2c, d3c, _ = _coeffs_at_level(state, "coarse", beta)
    d1f, d2f, d3f, u1f = _coeffs_at_level(state, "fine", beta)

    coeffs = PerturbationCoeffs(
        d0=state.record.theta,
        d1=_extrapolate(d1c, d1f),
        d2=_extrapolate(d2c, d2f),
        d3=_extrapolate(d3c, d3f),
        eta=eta,
        beta=beta,
        alpha=alpha,
        h=h,
        eta_eff=eta_eff,
    )
    if not return_functions:
        return coeffs

    level = state.fine
    t = level.grid.nodes()
    shifted = t - level.xi
    phi = level.phi
    u2 = regularized_resolvent(
        eta_eff, 2.0 * shifted * u1f, state=state, which="fine"
    ).values
    dphi = _center_derivative(phi, level.grid.spacing)
    g3 = beta * (dphi + (shifted ** 3 - level.xi ** 2 * shifted) * phi)
    u3 = -regularized_resolvent(eta_eff, g3, state=state, which="fine").values
    functions = {"t": t, "u0": phi, "u1": u1f, "u2": u2, "u3": u3}
    return coeffs, functions


# ---------------------------------------------------------------------------
# export helpers
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("gamma", "theta", "xi_star", "phi0_sq", "m1", "m2", "m3", "M3", "gap")


def records_to_csv(records, extra_columns: dict | None = None) -> str:
    """Render records as CSV text (comma separated, 17 significant digits)."""
    cols = list(CSV_COLUMNS)
    extras = extra_columns or {}
    cols += list(extras)
    lines = [",".join(cols)]
    for i, rec in enumerate(records):
        row = rec.to_dict()
        for name, values in extras.items():
            row[name] = values[i]
        lines.append(",".join(f"{row[c]:.17g}" for c in cols))
    return "\n".join(lines) + "\n"


def record_to_json(record: ThetaRecord, **meta) -> str:
    payload = dict(record.to_dict())
    payload.update(meta)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
