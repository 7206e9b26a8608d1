"""Independent oracles used only by the test suite.

These deliberately use different discretizations/algorithms than the library:
dense eigensolves with ghost-point boundary rows, golden-section searches,
backward shooting, and the polar separation of the disk problem.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import eigh_tridiagonal


def half_line_mu1_dense(gamma: float, xi: float, t_max: float, n: int, k: int = 1):
    """Ghost-point finite differences (non-variational assembly path)."""
    dt = t_max / n
    t = np.linspace(0.0, t_max, n + 1)[:-1]
    v = (t - xi) ** 2
    diag = 2.0 / dt**2 + v
    # ghost point u(-1) = u(1) - 2 dt gamma u(0); symmetrized boundary row
    diag = diag.copy()
    diag[0] = (2.0 / dt**2) + v[0] + 2.0 * gamma / dt
    off = np.full(n - 1, -1.0 / dt**2)
    off = off.copy()
    off[0] = -math.sqrt(2.0) / dt**2
    w = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1), eigvals_only=True)
    return w if k > 1 else float(w[0])


def golden_min(f, lo: float, hi: float, tol: float = 1e-10):
    """Plain golden-section minimization."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def theta_dense_oracle(gamma: float, spacing: float = 0.004):
    """Theta(gamma), xi(gamma) via dense solves + golden section + Richardson."""
    t_max = max(12.0, math.sqrt(1.0 + gamma * gamma) + 10.0)
    out = []
    for fac in (1, 2):
        n = int(round(t_max / spacing)) * fac
        xi, th = golden_min(
            lambda x: half_line_mu1_dense(gamma, x, t_max, n),
            0.0,
            math.sqrt(1.0 + gamma * gamma) + 1.0,
        )
        out.append((xi, th))
    (xi1, th1), (xi2, th2) = out
    return (4 * xi2 - xi1) / 3.0, (4 * th2 - th1) / 3.0


def disk_mu1_radial(
    h: float,
    alpha: float,
    gamma: float,
    radius: float = 1.0,
    n: int = 6000,
    r_in: float = 1e-3,
    m_pad: int = 14,
):
    """Disk ground energy by polar separation: min over angular momentum m.

    Variational trapezoid discretization of the radial form
    int (h^2 g'^2 + (h m / r - r/2)^2 g^2) r dr + h^(1+alpha) gamma R g(R)^2
    with Dirichlet at r_in, Richardson extrapolated over two resolutions.
    """
    xi0 = 0.7681836531807124
    m_star = (radius**2 / 2.0 - xi0 * math.sqrt(h) * radius) / h
    m_lo = max(1, int(m_star) - m_pad)
    m_hi = int(m_star) + m_pad + 2

    def mu_m(m: int, nn: int) -> float:
        r = np.linspace(r_in, radius, nn + 1)
        dr = r[1] - r[0]
        pot = (h * m / r - r / 2.0) ** 2
        w = np.full(nn + 1, dr)
        w[0] = w[-1] = dr / 2.0
        rw = w * r
        # unknowns: nodes 1..nn (Dirichlet at r_in), Robin-by-form at R
        rmid = 0.5 * (r[1:] + r[:-1])
        stiff = h * h * rmid / dr
        diag = np.empty(nn)
        diag[:-1] = stiff[:-1] + stiff[1:]
        diag[-1] = stiff[-1]
        diag += pot[1:] * rw[1:]
        diag[-1] += h ** (1.0 + alpha) * gamma * radius
        off = -stiff[1:]
        mass = rw[1:]
        s = 1.0 / np.sqrt(mass)
        dd = diag * s * s
        ee = off * s[:-1] * s[1:]
        wv = eigh_tridiagonal(dd, ee, select="i", select_range=(0, 0), eigvals_only=True)
        return float(wv[0])

    best = math.inf
    for m in range(m_lo, m_hi + 1):
        v1 = mu_m(m, n)
        v2 = mu_m(m, 2 * n)
        val = (4.0 * v2 - v1) / 3.0
        best = min(best, val)
    return best
