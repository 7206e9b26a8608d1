"""Orchestrates h-sweeps, expansion fits, and numerical claim verdicts.

A sweep runs the 2D eigensolver over a decreasing list of h values for one
problem template (curve + alpha + boundary function), optionally attaching
trial upper bounds and localization metrics per case.  The fits subtract the
exact half-plane leading term (computed from the 1D profile, never fitted)
and least-squares the correction coefficients; verdicts compare them to the
predicted constants with fixed tolerances and report margins.

For disk-like domains the ground state's tangential momentum is quantized on
a lattice of spacing 2 pi sqrt(h)/|boundary| by flux single-valuedness, which
adds a nonnegative oscillatory O(h^2) term to the energy.  Fit grids are
therefore chosen at "resonant" h values where the lattice passes through the
band minimum; the selection uses only 1D quantities.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import brentq

from . import magnetic_eigensolver_2d as m2
from . import theta_profile as tp
from .boundary_geometry import curve_from_descriptor
from .errors import DiagnosticsError, DomainError, FittingError
from .mesh2d import boundary_layer_mesh

DEFAULT_H_GRID = (0.08, 0.056, 0.04, 0.028, 0.02)


# ---------------------------------------------------------------------------
# boundary-function descriptors
# ---------------------------------------------------------------------------

def gamma_from_descriptor(desc: dict, curve):
    """Vectorized gamma(s) plus its minimum and minimizing arclength."""
    kind = desc.get("type")
    if kind == "constant":
        value = float(desc["value"])

        def fn(s):
            return np.full_like(np.asarray(s, dtype=float), value)

        return fn, {"min": value, "argmin_s": 0.0, "constant": True}
    if kind == "cosine":
        off = float(desc.get("offset", 0.0))
        amp = float(desc.get("amplitude", 1.0))
        winding = int(desc.get("winding", 1))
        phase = float(desc.get("phase", 0.0))
        length = curve.length

        def fn(s):
            ang = 2.0 * math.pi * winding * np.asarray(s, dtype=float) / length + phase
            return off + amp * np.cos(ang)

        s_dense = np.linspace(0.0, length, 8192, endpoint=False)
        vals = fn(s_dense)
        i = int(np.argmin(vals))
        return fn, {"min": float(vals[i]), "argmin_s": float(s_dense[i]), "constant": False}
    raise DomainError(f"unknown gamma descriptor type {kind!r}")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepCase:
    h: float
    alpha: float
    gamma: dict
    mu1: float | None = None
    trial_bound: float | None = None
    localization: dict = field(default_factory=dict)
    dof: int | None = None
    residual: float | None = None
    error: str | None = None


@dataclass
class FitResult:
    model: str
    coefficients: list
    residuals: list
    expected: float | None = None
    rel_error: float | None = None


@dataclass
class SweepReport:
    template: dict
    cases: list
    fits: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "template": self.template,
            "cases": [asdict(c) for c in self.cases],
            "fits": [asdict(f) for f in self.fits],
            "verdicts": self.verdicts,
        }
        return json.dumps(payload, sort_keys=True, indent=2, default=float) + "\n"

    def case_csv(self) -> str:
        cols = ["h", "alpha", "mu1", "trial_bound", "dof", "residual", "error"]
        lines = [",".join(cols)]
        for c in self.cases:
            row = []
            for name in cols:
                v = getattr(c, name)
                if v is None:
                    row.append("")
                elif isinstance(v, float):
                    row.append(f"{v:.17g}")
                else:
                    row.append(str(v))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _radius_value(spec, h: float) -> float:
    if isinstance(spec, dict) and "sqrt_h_multiple" in spec:
        return float(spec["sqrt_h_multiple"]) * math.sqrt(h)
    if isinstance(spec, dict):
        return float(spec["value"])
    return float(spec)


def run_case(template: dict, h: float) -> SweepCase:
    """One (template, h) solve; failures are captured, not raised."""
    case = SweepCase(h=h, alpha=float(template["alpha"]), gamma=template["gamma"])
    try:
        curve = curve_from_descriptor(template["curve"])
        gamma_fn, _ = gamma_from_descriptor(template["gamma"], curve)
        mesh = boundary_layer_mesh(curve, h, refine=float(template.get("refine", 1.0)))
        problem = m2.MagneticProblem2D(curve, h, case.alpha, gamma_fn)
        state = m2.ground_state(problem, mesh)
        case.mu1 = state.mu1
        case.dof = state.dof
        case.residual = state.residual
        variant = template.get("trial_variant")
        if variant:
            s0 = float(template.get("trial_s0", 0.0))
            case.trial_bound = m2.trial_upper_bound(problem, s0, variant=variant)
        for loc in template.get("localization", ()):
            r = _radius_value(loc["radius"], h)
            case.localization[loc["name"]] = m2.localization_profile(
                state, mesh, curve, h, loc["target"], r
            )
    except Exception as exc:  # per-case isolation by contract
        case.error = f"{type(exc).__name__}: {exc}"
    return case


def _run_case_star(args):
    return run_case(*args)


def sweep(template: dict, h_list, jobs: int = 1) -> SweepReport:
    """Run the template over decreasing h; individual failures are recorded."""
    h_list = list(h_list)
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise DomainError("h_list must be strictly decreasing")
    if jobs > 1 and len(h_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            cases = list(ex.map(_run_case_star, [(template, h) for h in h_list]))
    else:
        cases = [run_case(template, h) for h in h_list]
    return SweepReport(template=template, cases=cases)


# ---------------------------------------------------------------------------
# resonant h grids (1D-computable quantization bookkeeping)
# ---------------------------------------------------------------------------

def momentum_lattice_offset(curve, alpha: float, gamma0: float, h: float) -> float:
    """Signed fractional distance of the band minimum from the momentum lattice."""
    xi = tp.theta(h ** (alpha - 0.5) * gamma0).xi_star
    g = (xi * curve.length / math.sqrt(h) - curve.enclosed_area() / h) / (2.0 * math.pi)
    return g - round(g)

def resonant_h_grid(curve, alpha: float, gamma0: float, h_min: float, h_max: float, count: int = 9):
    """h values where the quantized tangential momentum hits the band minimum."""

    def g(h):
        xi = tp.theta(h ** (alpha - 0.5) * gamma0).xi_star
        return (xi * curve.length / math.sqrt(h) - curve.enclosed_area() / h) / (2.0 * math.pi)

    g_ends = sorted((g(h_min), g(h_max)))
    k_lo = int(math.ceil(g_ends[0]))
    k_hi = int(math.floor(g_ends[1]))
    hs = [brentq(lambda h, k=k: g(h) - k, h_min, h_max, xtol=1e-13) for k in range(k_lo, k_hi + 1)]
    hs = np.sort(np.asarray(hs))[::-1]
    if hs.size > count:
        idx = np.unique(np.round(np.geomspace(1, hs.size, count)).astype(int) - 1)
        hs = hs[idx]
    return [float(h) for h in hs]


# ---------------------------------------------------------------------------
# expansion fits
# ---------------------------------------------------------------------------

def expected_curvature_constant(alpha: float, gamma: float) -> float:
    """Constant multiplying -2 kappa_max h^(3/2) in the two-term law."""
    if alpha > 0.5:
        return tp.m3_constant(0.0)
    return tp.curvature_constant(gamma)


def fit_powers(cases, subtract, powers) -> tuple[np.ndarray, np.ndarray]:
    """LSQ of mu1 - h*subtract(h) against the given powers of h."""
    ok = [c for c in cases if c.error is None and c.mu1 is not None]
    if len(ok) < len(powers) + 1:
        raise FittingError(f"need more than {len(powers)} successful cases")
    hs = np.array([c.h for c in ok])
    r = np.array([c.mu1 - c.h * subtract(c.h) for c in ok])
    G = np.array([[h ** p for p in powers] for h in hs])
    if np.linalg.matrix_rank(G) < len(powers):
        raise FittingError("rank-deficient design matrix")
    coef, _, _, _ = np.linalg.lstsq(G, r, rcond=None)
    resid = r - G @ coef
    return coef, resid


def fit_expansion(report: SweepReport, model: str) -> FitResult:
    """Fit one named correction model and attach it to the report."""
    template = report.template
    curve = curve_from_descriptor(template["curve"])
    alpha = float(template["alpha"])
    _, gmeta = gamma_from_descriptor(template["gamma"], curve)
    gamma0 = gmeta["min"]
    theta0 = tp.theta(0.0).theta
    m3 = tp.m3_constant(0.0)

    if model == "leading":
        ok = [c for c in report.cases if c.error is None]
        if not ok:
            raise FittingError("no successful cases")
        ratios = []
        for c in ok:
            eta = c.h ** (alpha - 0.5) * gamma0
            if abs(eta) <= 8.0:
                lead = tp.theta(eta).theta
            else:
                lead = -(gamma0 ** 2) * c.h ** (2.0 * alpha - 1.0)
            ratios.append(c.mu1 / (c.h * lead))
        coef = [float(np.mean(ratios))]
        resid = [float(x - 1.0) for x in ratios]
        fit = FitResult(model, coef, resid, expected=1.0, rel_error=abs(coef[0] - 1.0))
    elif model == "two_term_alpha1":
        s = np.linspace(0.0, curve.length, 4096, endpoint=False)
        gamma_fn, _ = gamma_from_descriptor(template["gamma"], curve)
        drive = np.max(curve.curvature(s) - 3.0 * np.asarray(gamma_fn(s)))
        expected = -2.0 * m3 * drive
        coef, resid = fit_powers(report.cases, lambda h: theta0, (1.5, 2.0))
        fit = FitResult(
            model,
            [float(x) for x in coef],
            [float(x) for x in resid],
            expected=float(expected),
            rel_error=abs(coef[0] / expected - 1.0) if expected else None,
        )
    elif model == "two_term_gamma_const":
        if not gmeta["constant"]:
            raise FittingError("model requires constant gamma")
        kmax = curve.max_curvature
        expected = -2.0 * expected_curvature_constant(alpha, gamma0) * kmax
        coef, resid = fit_powers(
            report.cases,
            lambda h: tp.theta(h ** (alpha - 0.5) * gamma0).theta,
            (1.5, 2.0),
        )
        fit = FitResult(
            model,
            [float(x) for x in coef],
            [float(x) for x in resid],
            expected=float(expected),
            rel_error=abs(coef[0] / expected - 1.0),
        )
    elif model == "two_term_gamma_var":
        if gmeta["constant"]:
            raise FittingError("model requires non-constant gamma")
        expected = 6.0 * m3 * gamma0
        coef, resid = fit_powers(
            report.cases, lambda h: theta0, (alpha + 0.5, 1.5, 1.625)
        )
        fit = FitResult(
            model,
            [float(x) for x in coef],
            [float(x) for x in resid],
            expected=float(expected),
            rel_error=abs(coef[0] / expected - 1.0),
        )
    else:
        raise FittingError(f"unknown model {model!r}")
    report.fits.append(fit)
    return fit


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

def _verdict(passed: bool, margin: float, details: dict) -> dict:
    return {"pass": bool(passed), "margin": float(margin), "details": details}


def verify_theorem(report: SweepReport, theorem_id: str, tolerance: float | None = None) -> dict:
    """Fixed check plans per claim family, returning pass/fail with margin."""
    template = report.template
    curve = curve_from_descriptor(template["curve"])
    alpha = float(template["alpha"])
    _, gmeta = gamma_from_descriptor(template["gamma"], curve)
    gamma0 = gmeta["min"]
    ok = [c for c in report.cases if c.error is None and c.mu1 is not None]

    if theorem_id == "leading_order":
        if len(ok) < 2:
            return _verdict(False, 0.0, {"incomplete": "need at least 2 cases"})
        kmax = curve.max_curvature
        errs, errs_corrected = [], []
        for c in sorted(ok, key=lambda c: -c.h):
            eta = c.h ** (alpha - 0.5) * gamma0
            lead = tp.theta(eta).theta
            corr = lead - 2.0 * expected_curvature_constant(alpha, eta) * kmax * math.sqrt(c.h)
            errs.append(abs(c.mu1 / c.h - lead) / abs(lead))
            errs_corrected.append(abs(c.mu1 / c.h - corr) / abs(lead))
        decreasing = all(b < a * (1.0 + 1e-9) for a, b in zip(errs, errs[1:]))
        tol = 0.05
        passed = decreasing and errs_corrected[-1] <= tol
        margin = tol - errs_corrected[-1]
        return _verdict(
            passed,
            margin,
            {
                "ratio_errors": errs,
                "curvature_corrected_errors": errs_corrected,
                "decreasing": decreasing,
                "tolerance": tol,
            },
        )

    if theorem_id in ("curvature_alpha1", "curvature_const_gamma", "gamma_term"):
        model = {
            "curvature_alpha1": "two_term_alpha1",
            "curvature_const_gamma": "two_term_gamma_const",
            "gamma_term": "two_term_gamma_var",
        }[theorem_id]
        fit = fit_expansion(report, model)
        tol = 0.10 if (theorem_id == "curvature_alpha1" and gamma0 == 0.0) else 0.15
        passed = fit.rel_error is not None and fit.rel_error <= tol
        return _verdict(
            passed,
            tol - (fit.rel_error if fit.rel_error is not None else 1.0),
            {"fitted": fit.coefficients[0], "expected": fit.expected, "tolerance": tol},
        )

    if theorem_id in ("gamma_min_localization", "curvature_localization"):
        name = "target"
        misses = [
            c.localization[name]["mass_outside"] for c in ok if name in c.localization
        ]
        if not misses:
            return _verdict(False, 0.0, {"incomplete": "no localization metrics"})
        worst = max(misses)
        tol = 0.10 if tolerance is None else tolerance
        return _verdict(worst <= tol, tol - worst, {"mass_outside": misses, "tolerance": tol})

    if theorem_id == "boundary_concentration":
        misses = [
            c.localization["boundary"]["mass_outside"]
            for c in ok
            if "boundary" in c.localization
        ]
        if not misses:
            return _verdict(False, 0.0, {"incomplete": "no boundary metrics"})
        worst = max(misses)
        tol = 0.01
        return _verdict(worst <= tol, tol - worst, {"mass_outside": misses, "tolerance": tol})

    raise DomainError(f"unknown theorem id {theorem_id!r}")


# ---------------------------------------------------------------------------
# named check plans (CLI surface)
# ---------------------------------------------------------------------------

def _disk(r=1.0):
    return {"type": "circle", "radius": r, "center": [0.0, 0.0]}


def _const(v):
    return {"type": "constant", "value": v}


CHECK_PLANS = {
    "leading-disk-neg-gamma": {
        "description": "disk, alpha=1/2, gamma=-1: mu1/h approaches Theta(-1) "
        "with the curvature-corrected value within 5% at h=0.02",
        "template": {"curve": _disk(), "alpha": 0.5, "gamma": _const(-1.0)},
        "h_list": [0.08, 0.04, 0.02],
        "theorems": ["leading_order"],
    },
    "leading-disk-dirichlet-regime": {
        "description": "disk, alpha=1/4, gamma=+1: mu1/h approaches 1",
        "template": {"curve": _disk(), "alpha": 0.25, "gamma": _const(1.0)},
        "h_list": [0.08, 0.04, 0.02],
        "theorems": ["leading_order"],
    },
    "curvature-alpha1": {
        "description": "disk, alpha=1, gamma=0: fitted h^(3/2) coefficient vs -2*M3",
        "template": {"curve": _disk(), "alpha": 1.0, "gamma": _const(0.0)},
        "h_grid": ("resonant", 0.013, 0.1, 9),
        "theorems": ["curvature_alpha1"],
    },
    "curvature-alpha1-gamma02": {
        "description": "disk, alpha=1, gamma=0.2: fitted coefficient vs -2*M3*(kappa-3*gamma)_max",
        "template": {"curve": _disk(), "alpha": 1.0, "gamma": _const(0.2)},
        "h_grid": ("resonant", 0.013, 0.1, 9),
        "theorems": ["curvature_alpha1"],
    },
    "curvature-halfalpha-gamma03": {
        "description": "disk, alpha=1/2, gamma=0.3: fitted coefficient vs -2*C(0.3)*kappa_max",
        "template": {"curve": _disk(), "alpha": 0.5, "gamma": _const(0.3)},
        "h_grid": ("resonant", 0.013, 0.1, 9),
        "theorems": ["curvature_const_gamma"],
    },
    "gamma-term-alpha34": {
        "description": "disk, alpha=3/4, gamma=1+0.5cos(s): fitted h^(alpha+1/2) "
        "coefficient vs 6*M3*gamma_min",
        "template": {
            "curve": _disk(),
            "alpha": 0.75,
            "gamma": {"type": "cosine", "offset": 1.0, "amplitude": 0.5, "winding": 1},
        },
        "h_grid": ("geometric", 0.012, 0.1, 12),
        "theorems": ["gamma_term"],
    },
    "localization-gamma-min-quarter": {
        "description": "disk, alpha=1/4, gamma=cos(s): mass concentrates within "
        "arc distance 0.5 of the gamma minimum at s=pi",
        "template": {
            "curve": _disk(),
            "alpha": 0.25,
            "gamma": {"type": "cosine", "offset": 0.0, "amplitude": 1.0, "winding": 1},
            "localization": [
                {"name": "target", "target": {"kind": "arc", "s": math.pi}, "radius": 0.5},
                {"name": "boundary", "target": {"kind": "boundary"}, "radius": {"sqrt_h_multiple": 4}},
            ],
        },
        "h_list": [0.01],
        "theorems": ["gamma_min_localization", "boundary_concentration"],
    },
    "localization-ellipse-vertices": {
        "description": "ellipse(2,1), alpha=1, gamma=0: mass concentrates near "
        "the two maximal-curvature vertices (desk-scale threshold)",
        "template": {
            "curve": {"type": "ellipse", "a": 2.0, "b": 1.0},
            "alpha": 1.0,
            "gamma": _const(0.0),
            "localization": [
                {
                    "name": "target",
                    "target": {"kind": "points", "s_fraction": [0.0, 0.5]},
                    "radius": 0.5,
                },
                {"name": "boundary", "target": {"kind": "boundary"}, "radius": {"sqrt_h_multiple": 4}},
            ],
        },
        "h_list": [0.01],
        "theorems": ["curvature_localization", "boundary_concentration"],
        "localization_tolerance": 0.30,
    },
}


def resolve_plan_h_list(plan: dict) -> list:
    if "h_list" in plan:
        return list(plan["h_list"])
    kind, h_min, h_max, count = plan["h_grid"]
    curve = curve_from_descriptor(plan["template"]["curve"])
    alpha = float(plan["template"]["alpha"])
    _, gmeta = gamma_from_descriptor(plan["template"]["gamma"], curve)
    if kind == "resonant" and gmeta["constant"]:
        return resonant_h_grid(curve, alpha, gmeta["min"], h_min, h_max, count)
    return [float(h) for h in np.geomspace(h_max, h_min, count)]


def run_check_plan(name: str, jobs: int = 1) -> SweepReport:
    if name not in CHECK_PLANS:
        raise DomainError(f"unknown check plan {name!r}")
    plan = CHECK_PLANS[name]
    h_list = resolve_plan_h_list(plan)
    report = sweep(plan["template"], h_list, jobs=jobs)
    for tid in plan["theorems"]:
        tol = plan.get("localization_tolerance") if tid.endswith("localization") else None
        report.verdicts[tid] = verify_theorem(report, tid, tolerance=tol)
    return report
