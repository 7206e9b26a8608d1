"""Smooth planar boundary curves and their tubular-neighborhood calculus.

Curves are arclength-parametrized, counterclockwise, with the outward normal
nu(s); an interior point at depth t is x = M(s) - t nu(s) and the coordinate
Jacobian is a(s, t) = 1 - t kappa(s).  The sign convention makes the
curvature of a convex domain positive so that a stays positive across the
tube.  The module also carries the boundary-adapted gauge whose curl equals
a, and quadrature for the boundary-fitted quadratic form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ellipe, ellipeinc

from .errors import DomainError


@dataclass(frozen=True)
class TubeCoords:
    s: float
    t: float


class BoundaryCurve:
    """Base class; subclasses provide point/tangent/curvature in arclength."""

    length: float

    def wrap(self, s):
        return np.mod(s, self.length)

    def point(self, s) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, s) -> np.ndarray:
        raise NotImplementedError

    def curvature(self, s):
        raise NotImplementedError

    def curvature_derivative(self, s):
        raise NotImplementedError

    def outward_normal(self, s) -> np.ndarray:
        t = self.tangent(s)
        # CCW parametrization: outward normal is the tangent rotated by -90deg
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    @property
    def max_curvature(self) -> float:
        s = np.linspace(0.0, self.length, 2048, endpoint=False)
        return float(np.max(np.abs(self.curvature(s))))

    def enclosed_area(self) -> float:
        s, pts = self.boundary_samples(8192)
        x, y = pts[:, 0], pts[:, 1]
        return float(
            0.5 * np.abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        )

    @property
    def tube_width(self) -> float:
        return 0.5 / self.max_curvature

    def boundary_samples(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        s = np.linspace(0.0, self.length, n, endpoint=False)
        return s, self.point(s)

    def descriptor(self) -> dict:
        raise NotImplementedError


class CircleCurve(BoundaryCurve):
    def __init__(self, radius: float = 1.0, center=(0.0, 0.0)):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)
        self.length = 2.0 * math.pi * self.radius

    def point(self, s):
        phi = np.asarray(s, dtype=float) / self.radius
        return self.center + self.radius * np.stack(
            [np.cos(phi), np.sin(phi)], axis=-1
        )

    def tangent(self, s):
        phi = np.asarray(s, dtype=float) / self.radius
        return np.stack([-np.sin(phi), np.cos(phi)], axis=-1)

    def curvature(self, s):
        return np.full_like(np.asarray(s, dtype=float), 1.0 / self.radius)

    def curvature_derivative(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def enclosed_area(self) -> float:
        return math.pi * self.radius ** 2

    def descriptor(self):
        return {"type": "circle", "radius": self.radius, "center": list(self.center)}


class EllipseCurve(BoundaryCurve):
    """Ellipse (a cos u, b sin u) with a >= b, arclength via elliptic integrals."""

    def __init__(self, a: float, b: float):
        if not (a >= b > 0):
            raise DomainError("need a >= b > 0")
        self.a = float(a)
        self.b = float(b)
        self.m = 1.0 - (self.b / self.a) ** 2
        self.quarter = float(self.a * ellipe(self.m))
        self.length = 4.0 * self.quarter
        # coarse u(s) table to seed Newton inversion
        u = np.linspace(0.0, 2.0 * math.pi, 4097)
        self._table_s = self._arclength(u)
        self._table_u = u

    def _arclength(self, u):
        u = np.asarray(u, dtype=float)
        # s(u) = a [E(m) - E(pi/2 - u | m)], extended by quasi-periodicity
        return self.a * (ellipe(self.m) - ellipeinc(math.pi / 2.0 - u, self.m))

    def _speed(self, u):
        return np.sqrt((self.a * np.sin(u)) ** 2 + (self.b * np.cos(u)) ** 2)

    def param_of_arclength(self, s):
        s = self.wrap(s)
        u = np.interp(s, self._table_s, self._table_u)
        for _ in range(30):
            du = (self._arclength(u) - s) / self._speed(u)
            u = u - du
            if np.max(np.abs(du)) < 1e-14:
                break
        return u

    def point(self, s):
        u = self.param_of_arclength(s)
        return np.stack([self.a * np.cos(u), self.b * np.sin(u)], axis=-1)

    def tangent(self, s):
        u = self.param_of_arclength(s)
        sp = self._speed(u)
        return np.stack([-self.a * np.sin(u) / sp, self.b * np.cos(u) / sp], axis=-1)

    def curvature(self, s):
        u = self.param_of_arclength(s)
        return self.a * self.b / self._speed(u) ** 3

    def curvature_derivative(self, s):
        u = self.param_of_arclength(s)
        sp = self._speed(u)
        # d/du of speed^2 = (a^2 - b^2) sin(2u)
        dsp = (self.a ** 2 - self.b ** 2) * np.sin(2.0 * u) / (2.0 * sp)
        dkappa_du = -3.0 * self.a * self.b * dsp / sp ** 4
        return dkappa_du / sp

    def enclosed_area(self) -> float:
        return math.pi * self.a * self.b

    def descriptor(self):
        return {"type": "ellipse", "a": self.a, "b": self.b}


class SplineCurve(BoundaryCurve):
    """Closed curve through sample points, reparametrized by arclength."""

    def __init__(self, points, resolution: int = 4096):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise DomainError("need at least 4 planar points")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        closed = np.vstack([pts, pts[:1]])
        chord = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))]
        )
        spline = CubicSpline(chord, closed, bc_type="periodic", axis=0)
        # arclength table on a dense parameter grid
        u = np.linspace(0.0, chord[-1], resolution + 1)
        d = spline(u, 1)
        speed = np.linalg.norm(d, axis=1)
        s_tab = np.concatenate(
            [[0.0], np.cumsum((speed[1:] + speed[:-1]) / 2.0 * np.diff(u))]
        )
        self.length = float(s_tab[-1])
        self._spline = spline
        self._u_of_s = CubicSpline(s_tab, u)
        self._points = pts

    def _u(self, s):
        return np.clip(self._u_of_s(self.wrap(s)), 0.0, None)

    def point(self, s):
        return self._spline(self._u(s))

    def tangent(self, s):
        d = self._spline(self._u(s), 1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def curvature(self, s):
        u = self._u(s)
        d1 = self._spline(u, 1)
        d2 = self._spline(u, 2)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def curvature_derivative(self, s):
        s = np.asarray(s, dtype=float)
        ds = 1e-5 * self.length
        return (self.curvature(s + ds) - self.curvature(s - ds)) / (2.0 * ds)

    def descriptor(self):
        return {"type": "spline", "points": self._points.tolist()}


def curve_from_descriptor(desc: dict) -> BoundaryCurve:
    kind = desc.get("type")
    if kind == "circle":
        return CircleCurve(desc.get("radius", 1.0), desc.get("center", (0.0, 0.0)))
    if kind == "ellipse":
        return EllipseCurve(desc["a"], desc["b"])
    if kind == "spline":
        return SplineCurve(desc["points"])
    raise DomainError(f"unknown curve type {kind!r}")


def curvature(curve: BoundaryCurve, s: float) -> float:
    return float(curve.curvature(curve.wrap(s)))


def arc_distance(curve: BoundaryCurve, s1, s2):
    d = np.abs(curve.wrap(s1) - curve.wrap(s2))
    return np.minimum(d, curve.length - d)


def to_tube(curve: BoundaryCurve, x, t_max: float | None = None) -> TubeCoords:
    """Project x onto the boundary and return (arclength, depth)."""
    x = np.asarray(x, dtype=float)
    if t_max is None:
        t_max = curve.tube_width
    s_probe, pts = curve.boundary_samples(2048)
    i0 = int(np.argmin(np.sum((pts - x) ** 2, axis=1)))
    s = float(s_probe[i0])
    d0 = float(np.linalg.norm(pts[i0] - x))
    if d0 > t_max * (1.0 + 1e-6) + 1e-9:
        raise DomainError(f"point {x.tolist()} outside the tube (dist~{d0:.4g})")
    for _ in range(60):
        m = curve.point(s)
        tan = curve.tangent(s)
        f = float(np.dot(x - m, tan))
        nu = curve.outward_normal(s)
        t_cur = float(np.dot(m - x, nu))
        # fp = -(1 - kappa t) stays negative inside the tube; clamp for safety
        fp = min(-(1.0 - curve.curvature(s) * t_cur), -0.05)
        step = f / fp
        s = float(curve.wrap(s - step))
        if abs(step) < 1e-13:
            break
    m = curve.point(s)
    t = float(np.dot(m - x, curve.outward_normal(s)))
    if not np.isfinite(t) or t < -1e-9 or t > t_max * (1.0 + 1e-9):
        raise DomainError(f"point {x.tolist()} outside the tube (t={t:.4g})")
    return TubeCoords(s=s, t=max(t, 0.0))


def from_tube(curve: BoundaryCurve, c: TubeCoords) -> np.ndarray:
    return curve.point(c.s) - c.t * curve.outward_normal(c.s)


def local_gauge(curve: BoundaryCurve, s: float, t: float) -> tuple[float, float]:
    """Boundary-adapted gauge (A_s, A_t) with curl equal to 1 - t kappa(s)."""
    kappa = float(curve.curvature(curve.wrap(s)))
    return (-t * (1.0 - 0.5 * t * kappa), 0.0)


# ---------------------------------------------------------------------------
# quadrature of the boundary-fitted quadratic form
# ---------------------------------------------------------------------------

def _stencil_derivative(values: np.ndarray, step: float, axis: int) -> np.ndarray:
    """Fourth-order central differences, one-sided second order at the ends."""
    v = np.moveaxis(values, axis, 0)
    d = np.empty_like(v)
    d[2:-2] = (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * step)
    for i in (0, 1):
        d[i] = (-3.0 * v[i] + 4.0 * v[i + 1] - v[i + 2]) / (2.0 * step)
        d[-1 - i] = (3.0 * v[-1 - i] - 4.0 * v[-2 - i] + v[-3 - i]) / (2.0 * step)
    return np.moveaxis(d, 0, axis)


def _grids(curve, s_range, t_max, ns, nt):
    s0, s1 = s_range
    periodic = abs((s1 - s0) - curve.length) < 1e-12
    if periodic:
        s = s0 + np.arange(ns) * (s1 - s0) / ns
        ws = np.full(ns, (s1 - s0) / ns)
    else:
        s = np.linspace(s0, s1, ns + 1)
        ws = np.full(ns + 1, (s1 - s0) / ns)
        ws[0] = ws[-1] = (s1 - s0) / (2 * ns)
    t = np.linspace(0.0, t_max, nt + 1)
    wt = np.full(nt + 1, t_max / nt)
    wt[0] = wt[-1] = t_max / (2 * nt)
    return s, ws, t, wt, periodic


def tube_quadratic_form(
    curve: BoundaryCurve,
    h: float,
    alpha: float,
    gamma_fn,
    v,
    *,
    s_range=None,
    t_max: float | None = None,
    ns: int = 1024,
    nt: int = 512,
    dv_ds=None,
    dv_dt=None,
    use_gauge: bool = True,
    leak_tol: float = 1e-8,
) -> float:
    """Quadratic form of the magnetic operator in boundary coordinates.

    Evaluates, by tensor trapezoid quadrature,

        int [ |h dv/dt|^2 + a^-2 |h dv/ds - i A_s v|^2 ] a ds dt
        + h^(1+alpha) int gamma(s) |v(s, 0)|^2 ds,

    with the boundary-adapted gauge (A_s = -t(1 - t kappa/2), A_t = 0), or
    with zero gauge if ``use_gauge`` is false.  ``v`` (and the optional
    analytic derivatives) are callables of (s, t) broadcasting over grids.
    """
    if t_max is None:
        t_max = curve.tube_width * 0.999
    if t_max > curve.tube_width + 1e-12:
        raise DomainError(f"t_max={t_max} exceeds tube width {curve.tube_width}")
    if s_range is None:
        s_range = (0.0, curve.length)
    s, ws, t, wt, periodic = _grids(curve, s_range, t_max, ns, nt)

    S, T = np.meshgrid(s, t, indexing="ij")
    V = np.asarray(v(S, T), dtype=complex)
    amp = float(np.max(np.abs(V)))
    if amp > 0 and float(np.max(np.abs(V[:, -1]))) > leak_tol * amp:
        raise DomainError("trial field leaks past the tube truncation depth")

    Vs = dv_ds(S, T) if dv_ds is not None else _stencil_derivative(V, s[1] - s[0], 0)
    Vt = dv_dt(S, T) if dv_dt is not None else _stencil_derivative(V, t[1] - t[0], 1)

    kappa = curve.curvature(curve.wrap(s))[:, None]
    a = 1.0 - T * kappa
    if use_gauge:
        a_s = -T * (1.0 - 0.5 * T * kappa)
    else:
        a_s = np.zeros_like(T)

    dens = (np.abs(h * Vt) ** 2 + np.abs(h * Vs - 1j * a_s * V) ** 2 / a ** 2) * a
    w2 = ws[:, None] * wt[None, :]
    bulk = float(np.sum(w2 * dens))

    gam = np.asarray(gamma_fn(s), dtype=float)
    boundary = h ** (1.0 + alpha) * float(np.sum(ws * gam * np.abs(V[:, 0]) ** 2))
    return bulk + boundary


def tube_l2_norm_sq(
    curve: BoundaryCurve,
    v,
    *,
    s_range=None,
    t_max: float | None = None,
    ns: int = 1024,
    nt: int = 512,
) -> float:
    """Weighted L2 norm int |v|^2 a ds dt over the tube."""
    if t_max is None:
        t_max = curve.tube_width * 0.999
    if s_range is None:
        s_range = (0.0, curve.length)
    s, ws, t, wt, _ = _grids(curve, s_range, t_max, ns, nt)
    S, T = np.meshgrid(s, t, indexing="ij")
    V = np.asarray(v(S, T), dtype=complex)
    a = 1.0 - T * curve.curvature(curve.wrap(s))[:, None]
    return float(np.sum(ws[:, None] * wt[None, :] * np.abs(V) ** 2 * a))
