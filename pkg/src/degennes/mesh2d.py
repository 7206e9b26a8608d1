"""Boundary-fitted triangular meshes for star-shaped smooth domains.

The mesh is a ladder of rings swept along spokes from the domain center to
equally spaced boundary points, with a normal refinement layer near the
boundary (factor 4 within a few magnetic lengths) and a small triangle fan
closing the center.  All element diameters respect the magnetic-length rule
diameter <= 0.25 sqrt(h) used by the 2D eigensolver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .boundary_geometry import BoundaryCurve
from .errors import ConfigurationError

DIAMETER_FACTOR = 0.25   # max element diameter in units of sqrt(h)
LAYER_REFINE = 4         # normal refinement factor inside the boundary layer
LAYER_EXTENT = 4.0       # boundary-layer depth in units of sqrt(h)


@dataclass
class TriangleMesh:
    nodes: np.ndarray            # (N, 2) float64
    triangles: np.ndarray        # (T, 3) int, counterclockwise
    boundary_nodes: np.ndarray   # (B,) node indices ordered along the boundary
    boundary_s: np.ndarray       # (B,) arclength of each boundary node
    boundary_distance: np.ndarray  # (N,) distance of every node to the boundary
    projection_s: np.ndarray     # (N,) arclength of each node's boundary projection
    h_target: float
    max_edge: float = field(default=0.0)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def save(self, path: str) -> None:
        """Write the mesh as an .npz archive (documented keys, 0-based indices)."""
        np.savez(
            path,
            nodes=self.nodes,
            triangles=self.triangles,
            boundary_nodes=self.boundary_nodes,
            boundary_s=self.boundary_s,
            boundary_distance=self.boundary_distance,
            projection_s=self.projection_s,
            h_target=np.array([self.h_target]),
            max_edge=np.array([self.max_edge]),
        )

    @classmethod
    def load(cls, path: str) -> "TriangleMesh":
        z = np.load(path)
        return cls(
            nodes=z["nodes"],
            triangles=z["triangles"],
            boundary_nodes=z["boundary_nodes"],
            boundary_s=z["boundary_s"],
            boundary_distance=z["boundary_distance"],
            projection_s=z["projection_s"],
            h_target=float(z["h_target"][0]),
            max_edge=float(z["max_edge"][0]),
        )


def boundary_projection(curve: BoundaryCurve, points: np.ndarray, samples: int = 8192):
    """Distance to the boundary and arclength of the nearest boundary point."""
    s_dense, pts = curve.boundary_samples(samples)
    tree = cKDTree(pts)
    d, idx = tree.query(points)
    return d, s_dense[idx]


def boundary_layer_mesh(
    curve: BoundaryCurve,
    h: float,
    *,
    refine: float = 1.0,
    center=None,
) -> TriangleMesh:
    """Graded spoke-and-ring mesh satisfying the magnetic sizing rule for h.

    ``refine`` > 1 shrinks every target length by that factor (used by the
    mesh-convergence checks).
    """
    if h <= 0:
        raise ConfigurationError("h must be positive")
    target = DIAMETER_FACTOR * math.sqrt(h) / refine
    delta = target / math.sqrt(2.0)     # quad legs; diagonals then meet the rule
    delta_fine = delta / LAYER_REFINE

    length = curve.length
    n_s = int(math.ceil(length / delta))
    s = np.arange(n_s) * (length / n_s)
    bpts = curve.point(s)
    if center is None:
        center = bpts.mean(axis=0)
    center = np.asarray(center, dtype=float)

    spoke = bpts - center
    spoke_len = np.linalg.norm(spoke, axis=1)
    r_fan = 0.9 * delta
    usable = spoke_len - r_fan
    if np.min(usable) <= 0:
        raise ConfigurationError("domain too small for the requested mesh size")
    u_min, u_max = float(np.min(usable)), float(np.max(usable))

    depth_layer = min(LAYER_EXTENT * math.sqrt(h), 0.95 * u_min)
    q_layer = depth_layer / u_min
    dq_fine = delta_fine / u_max
    n_fine = max(int(math.ceil(q_layer / dq_fine)), 1)
    q_fine = np.linspace(0.0, q_layer, n_fine + 1)
    dq_coarse = delta / u_max
    n_coarse = max(int(math.ceil((1.0 - q_layer) / dq_coarse)), 1)
    q_coarse = np.linspace(q_layer, 1.0, n_coarse + 1)[1:]
    q = np.concatenate([q_fine, q_coarse])
    n_rings = q.size

    # node(m, j) = boundary point pulled toward the center by depth q_j*usable_m
    frac = q[None, :] * (usable / spoke_len)[:, None]
    nodes = bpts[:, None, :] * (1.0 - frac[:, :, None]) + center[None, None, :] * frac[:, :, None]
    nodes = nodes.reshape(-1, 2)
    center_idx = nodes.shape[0]
    nodes = np.vstack([nodes, center[None, :]])

    def nid(m, j):
        return (m % n_s) * n_rings + j

    tris = []
    for j in range(n_rings - 1):
        for m in range(n_s):
            a = nid(m, j)
            b = nid(m + 1, j)
            cc = nid(m + 1, j + 1)
            d = nid(m, j + 1)
            if (m + j) % 2 == 0:
                tris.append((a, b, cc))
                tris.append((a, cc, d))
            else:
                tris.append((a, b, d))
                tris.append((b, cc, d))
    last = n_rings - 1
    for m in range(n_s):
        tris.append((nid(m, last), nid(m + 1, last), center_idx))
    triangles = np.asarray(tris, dtype=np.int64)

    # enforce counterclockwise orientation
    p = nodes[triangles]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = cross < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    boundary_nodes = np.arange(n_s) * n_rings
    dist, proj_s = boundary_projection(curve, nodes)
    dist[boundary_nodes] = 0.0
    proj_s[boundary_nodes] = s

    mesh = TriangleMesh(
        nodes=nodes,
        triangles=triangles,
        boundary_nodes=boundary_nodes,
        boundary_s=s,
        boundary_distance=dist,
        projection_s=proj_s,
        h_target=h,
    )
    e = mesh.edges()
    mesh.max_edge = float(
        np.max(np.linalg.norm(nodes[e[:, 0]] - nodes[e[:, 1]], axis=1))
    )
    return mesh
