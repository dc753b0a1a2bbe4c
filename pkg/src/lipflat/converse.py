"""Lower bounds that certify a set resists small perturbations.

A continuous self-map of the planar unit ball that barely moves the boundary
still covers a slightly smaller ball; we verify this at grid scale with exact
winding numbers. From it, a near-isometric image of a dense sample of the
ball keeps content bounded below, and any Lipschitz map can be perturbed by
an arbitrarily small capped linear correction so its image has positive
content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .content import packing_lower_bound
from .metric import LipschitzMap


def _median_nn(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < 2:
        return 1.0
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    return float(np.median(d.min(axis=1)))


@dataclass(frozen=True)
class GridMap:
    """A map of the planar unit ball sampled on a lattice plus a boundary loop."""

    nodes: np.ndarray
    values: np.ndarray
    boundary_nodes: np.ndarray
    boundary_values: np.ndarray
    resolution: int

    def __post_init__(self):
        for arr in (self.nodes, self.values, self.boundary_nodes, self.boundary_values):
            if not np.isfinite(arr).all():
                raise ValueError("grid map contains non-finite values")
        if self.nodes.shape != self.values.shape:
            raise ValueError("node and value arrays must align")
        if self.boundary_nodes.shape != self.boundary_values.shape:
            raise ValueError("boundary node and value arrays must align")

    @property
    def n(self):
        return self.nodes.shape[1]

    @property
    def step(self):
        return 2.0 / (self.resolution - 1)

    @property
    def boundary_disp(self):
        return float(
            np.linalg.norm(self.boundary_values - self.boundary_nodes, axis=1).max()
        )

    @classmethod
    def from_function(cls, f, resolution=64):
        """Sample f on the lattice points of the closed unit ball.

        f maps an (n, 2) array to an (n, 2) array. The boundary loop is the
        unit circle sampled at 4 * resolution angles.
        """
        if resolution < 2:
            raise ValueError("resolution must be at least 2")
        ax = np.linspace(-1.0, 1.0, resolution)
        X, Y = np.meshgrid(ax, ax)
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        nodes = nodes[np.linalg.norm(nodes, axis=1) <= 1.0 + 1e-12]
        angles = np.arange(4 * resolution) * (2.0 * np.pi / (4 * resolution))
        bnodes = np.column_stack([np.cos(angles), np.sin(angles)])
        return cls(
            nodes=nodes,
            values=np.asarray(f(nodes), dtype=float),
            boundary_nodes=bnodes,
            boundary_values=np.asarray(f(bnodes), dtype=float),
            resolution=int(resolution),
        )

    def save_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "node_x", "node_y", "image_x", "image_y"])
            for nd, vl in zip(self.nodes, self.values):
                w.writerow(["interior", repr(nd[0]), repr(nd[1]), repr(vl[0]), repr(vl[1])])
            for nd, vl in zip(self.boundary_nodes, self.boundary_values):
                w.writerow(["boundary", repr(nd[0]), repr(nd[1]), repr(vl[0]), repr(vl[1])])

    @classmethod
    def load_csv(cls, path, resolution):
        import csv

        interior_n, interior_v, bd_n, bd_v = [], [], [], []
        with open(path, newline="") as fh:
            rdr = csv.reader(fh)
            header = next(rdr)
            if header[:1] != ["kind"]:
                raise ValueError("expected a grid-map CSV with a kind column")
            for row in rdr:
                node = [float(row[1]), float(row[2])]
                val = [float(row[3]), float(row[4])]
                if row[0] == "boundary":
                    bd_n.append(node)
                    bd_v.append(val)
                else:
                    interior_n.append(node)
                    interior_v.append(val)
        return cls(
            nodes=np.array(interior_n),
            values=np.array(interior_v),
            boundary_nodes=np.array(bd_n),
            boundary_values=np.array(bd_v),
            resolution=int(resolution),
        )


def _winding_numbers(loop, targets):
    """Integer winding of the closed polyline loop around each target."""
    x1 = loop[:, 0][:, None] - targets[:, 0][None, :]
    y1 = loop[:, 1][:, None] - targets[:, 1][None, :]
    nxt = np.roll(loop, -1, axis=0)
    x2 = nxt[:, 0][:, None] - targets[:, 0][None, :]
    y2 = nxt[:, 1][:, None] - targets[:, 1][None, :]
    up = (y1 <= 0) & (y2 > 0)
    down = (y1 > 0) & (y2 <= 0)
    cross = x1 * y2 - x2 * y1
    return (up & (cross > 0)).sum(axis=0) - (down & (cross < 0)).sum(axis=0)


def _image_simplex_diameter(gmap):
    """Max image distance across one lattice step (nearest-neighbor pairs)."""
    step = gmap.step
    keys = {}
    for idx, nd in enumerate(gmap.nodes):
        keys[(round((nd[0] + 1.0) / step), round((nd[1] + 1.0) / step))] = idx
    worst = 0.0
    for (i, j), a in keys.items():
        for nb in ((i + 1, j), (i, j + 1), (i + 1, j + 1)):
            b = keys.get(nb)
            if b is not None:
                worst = max(worst, float(np.linalg.norm(gmap.values[a] - gmap.values[b])))
    return worst


def degree_coverage(gmap, eps):
    """Certify that the image covers B(0, 1 - eps) up to grid slack.

    Requires the boundary displacement to be below eps. A target lattice node
    within radius 1 - eps - 2 * step counts as covered when the boundary image
    loop winds around it a nonzero number of times, or when it lies within
    one image-simplex diameter of a sampled image point.
    """
    if gmap.n != 2:
        raise ValueError("degree computation is implemented for the plane only")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    disp = gmap.boundary_disp
    if disp >= eps:
        raise ValueError(
            "boundary moves by %g which is not below eps=%g" % (disp, eps)
        )
    radius = 1.0 - eps - 2.0 * gmap.step
    targets = gmap.nodes[np.linalg.norm(gmap.nodes, axis=1) <= radius]
    if len(targets) == 0:
        return True, 1.0
    wind = _winding_numbers(gmap.boundary_values, targets)
    covered_mask = wind != 0
    if not covered_mask.all():
        diam = _image_simplex_diameter(gmap)
        rest = ~covered_mask
        d_img = np.linalg.norm(
            targets[rest][:, None, :] - gmap.values[None, :, :], axis=2
        ).min(axis=1)
        covered_mask[np.nonzero(rest)[0][d_img <= diam]] = True
    frac = float(covered_mask.mean())
    return bool(covered_mask.all()), frac


def rect_lower_bound(E, f, K, eps, delta=None, density_slack=0.1, slack_factor=0.5):
    """Content floor for a near-isometric image of a dense ball sample.

    Checks exhaustively that f contracts no pair below d/K - eps, checks that
    E fills the unit ball at grid scale up to density_slack, then compares
    the packing content of f(E) at a resolution-coupled delta against
    (1 - slack_factor) / (4 K sqrt(n)).
    """
    E = np.asarray(E, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    npts, n = E.shape
    if len(f.values) != npts:
        raise ValueError("f must be sampled on E")
    if K <= 0:
        raise ValueError("K must be positive")
    # pair condition: image distance >= source distance / K - eps
    for i in range(npts - 1):
        src = np.linalg.norm(E[i + 1 :] - E[i], axis=1)
        img = f.target.norm(f.values[i + 1 :] - f.values[i])
        bad = img < src / K - eps - 1e-12
        if bad.any():
            j = i + 1 + int(np.nonzero(bad)[0][0])
            raise ValueError(
                "pair (%d, %d) contracts below d/K - eps: %g < %g"
                % (i, j, img[bad][0], (src / K - eps)[bad][0])
            )
    if delta is None:
        delta = 4.0 * _median_nn(E)
    # density at grid scale: every cell of side delta whose center sits well
    # inside the ball must contain a sample point
    cells = np.floor((E + 1.0) / delta).astype(int)
    occupied = set(map(tuple, cells))
    axes = [np.arange(int(np.ceil(2.0 / delta))) for _ in range(n)]
    mesh = np.stack(np.meshgrid(*axes), axis=-1).reshape(-1, n)
    centers = (mesh + 0.5) * delta - 1.0
    inside = np.linalg.norm(centers, axis=1) <= 1.0 - delta
    total = int(inside.sum())
    if total:
        hit = sum(1 for c in mesh[inside] if tuple(c) in occupied)
        density = hit / total
        if density < 1.0 - density_slack:
            raise ValueError(
                "sample fills only %.3f of the ball at scale %g" % (density, delta)
            )
    content = packing_lower_bound(f.values, float(n), delta, f.target)
    threshold = (1.0 - slack_factor) / (4.0 * K * np.sqrt(n))
    return content, bool(content.value >= threshold)


def positive_image_perturb(A, f, eps, delta=None):
    """Capped linear correction giving the image positive content.

    Estimates a derivative of f by least squares around the densest sample
    point, boosts its singular values to at least eps / 4, and adds the
    difference as a correction capped outside the unit ball around that
    point. The correction and its Lipschitz constant stay below eps.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if len(A) == 0:
        raise ValueError("empty sample")
    if eps <= 0:
        raise ValueError("eps must be positive")
    npts, n = A.shape
    if len(f.values) != npts:
        raise ValueError("f must be sampled on A")
    m = f.target.dim
    if m < n:
        raise ValueError("target dimension must be at least the source dimension")

    r = 4.0 * _median_nn(A)
    d = np.linalg.norm(A[:, None, :] - A[None, :, :], axis=2)
    counts = (d <= r).sum(axis=1)
    x0_idx = int(np.argmax(counts))
    x0 = A[x0_idx]

    nb = np.nonzero(d[x0_idx] <= r)[0]
    X = A[nb] - x0
    Y = f.values[nb] - f.values[x0_idx]
    D = np.linalg.lstsq(X, Y, rcond=None)[0].T if len(nb) > 1 else np.zeros((m, n))

    U, sing, Vt = np.linalg.svd(D, full_matrices=False)
    boosted = np.maximum(sing, eps / 4.0)
    S = U @ np.diag(boosted) @ Vt
    T = S - D

    diffs = A - x0
    radii = np.linalg.norm(diffs, axis=1)
    scale = np.where(radii > 1.0, 1.0 / np.maximum(radii, 1.0), 1.0)
    Tstar = (diffs @ T.T) * scale[:, None]
    f_star = LipschitzMap(f.source, f.target, f.values + Tstar)

    if delta is None:
        delta = 4.0 * _median_nn(A)
    content = packing_lower_bound(f_star.values, float(n), delta, f.target)
    return f_star, content
