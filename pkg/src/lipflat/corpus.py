"""Deterministic point-set generators for the geometry the pipeline separates.

Self-similar dusts (four-corner and fractional-dimension variants) supply the
scattered sets whose content a good perturbation can collapse; segments,
circles and Lipschitz graphs supply the rectifiable sets where no small
perturbation can. All generators are closed-form and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import FiniteMetricSpace, save_points_csv
from .normgeom import NormedSpace


@dataclass(frozen=True)
class GeneratedSet:
    """A generated planar point set with its spacing and provenance."""

    kind: str
    points: np.ndarray
    spacing: float
    provenance: dict

    @property
    def n(self):
        return len(self.points)

    def to_space(self, space=None):
        if space is None:
            space = NormedSpace.euclidean(2)
        return FiniteMetricSpace.from_coords(self.points, space=space)

    def save_csv(self, path):
        save_points_csv(path, self.points)


def _min_spacing(points):
    n = len(points)
    if n < 2:
        return 0.0
    from scipy.spatial.distance import pdist

    return float(pdist(points).min())


def _corner_cells(depth, r):
    """Centers of the 4^depth cells of the corner construction with ratio r."""
    if depth == 0:
        return np.array([[0.5, 0.5]])
    idx = np.arange(4**depth)
    x = np.zeros(len(idx))
    y = np.zeros(len(idx))
    rem = idx.copy()
    for level in range(1, depth + 1):
        digit = (rem // 4 ** (depth - level)) % 4
        off = (1.0 - r) * r ** (level - 1)
        x += (digit % 2) * off
        y += (digit // 2) * off
    half = r**depth / 2.0
    return np.stack([x + half, y + half], axis=1)


def four_corner(depth):
    """Centers of the 4^depth squares of the four-corner construction.

    Contraction ratio 1/4 in the unit square; axis-adjacent sibling centers
    sit exactly 3 * 4**-depth apart.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    pts = _corner_cells(depth, 0.25)
    return GeneratedSet(
        kind="four_corner",
        points=pts,
        spacing=_min_spacing(pts),
        provenance={"depth": int(depth)},
    )


def dust(s, depth):
    """Corner construction with contraction tuned to similarity dimension s.

    The contraction is r = 4**(-1/s); s must lie in (0, 2) away from 1, where
    the four-corner set already covers the dimension-1 case.
    """
    if not 0 < s < 2:
        raise ValueError("dust dimension s must lie in (0, 2)")
    if s == 1:
        raise ValueError("dust dimension s = 1 excluded; use four_corner")
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    r = 4.0 ** (-1.0 / s)
    pts = _corner_cells(depth, r)
    return GeneratedSet(
        kind="dust",
        points=pts,
        spacing=_min_spacing(pts),
        provenance={"s": float(s), "depth": int(depth), "r": r},
    )


def segment(n):
    """n equispaced points on the unit segment, embedded on the x-axis."""
    if n < 2:
        raise ValueError("segment needs at least 2 points")
    t = np.linspace(0.0, 1.0, n)
    pts = np.stack([t, np.zeros(n)], axis=1)
    return GeneratedSet(
        kind="segment", points=pts, spacing=float(t[1] - t[0]), provenance={"n": int(n)}
    )


def circle(n):
    """n equispaced points on a unit-diameter circle centered in the unit square."""
    if n < 3:
        raise ValueError("circle needs at least 3 points")
    ang = 2.0 * np.pi * np.arange(n) / n
    pts = np.stack([0.5 + 0.5 * np.cos(ang), 0.5 + 0.5 * np.sin(ang)], axis=1)
    return GeneratedSet(
        kind="circle", points=pts, spacing=_min_spacing(pts), provenance={"n": int(n)}
    )


def _default_graph_fn(t):
    return 0.15 * np.sin(2.0 * np.pi * t)


def lipschitz_graph(n, g=None):
    """Points (t, g(t)) for t equispaced on [0, 1]; default g is a small sine."""
    if n < 2:
        raise ValueError("lipschitz_graph needs at least 2 points")
    fn = g if g is not None else _default_graph_fn
    t = np.linspace(0.0, 1.0, n)
    pts = np.stack([t, np.asarray([float(fn(v)) for v in t])], axis=1)
    return GeneratedSet(
        kind="lipschitz_graph",
        points=pts,
        spacing=_min_spacing(pts),
        provenance={"n": int(n), "g": "default" if g is None else "custom"},
    )


def crossing_segments(n):
    """Two transversal diagonals of the unit square, n points each.

    When the exact crossing point appears on both diagonals it is kept once,
    so the count is 2n - 1 for odd n and 2n for even n.
    """
    if n < 2:
        raise ValueError("crossing_segments needs at least 2 points per branch")
    t = np.linspace(0.0, 1.0, n)
    a = np.stack([t, t], axis=1)
    b = np.stack([t, 1.0 - t], axis=1)
    keep = ~np.any(np.all(np.abs(b[:, None, :] - a[None, :, :]) == 0.0, axis=2), axis=1)
    pts = np.vstack([a, b[keep]])
    return GeneratedSet(
        kind="crossing_segments",
        points=pts,
        spacing=_min_spacing(pts),
        provenance={"n": int(n)},
    )


_GENERATORS = {
    "four_corner": four_corner,
    "dust": dust,
    "segment": segment,
    "circle": circle,
    "lipschitz_graph": lipschitz_graph,
    "crossing_segments": crossing_segments,
}


def generate(kind, **params):
    """Dispatch to a generator by kind name."""
    if kind not in _GENERATORS:
        raise ValueError(
            "unknown kind %r; choose from %s" % (kind, sorted(_GENERATORS))
        )
    return _GENERATORS[kind](**params)


def distort_check(sigma, space, bins=20):
    """Max and histogram of |D(x, y) - norm(sigma(x) - sigma(y))| over pairs."""
    n = space.n
    vals = sigma.values
    diffs = []
    for i in range(n - 1):
        img = sigma.target.norm(vals[i][None, :] - vals[i + 1 :])
        diffs.append(np.abs(space.D[i, i + 1 :] - img))
    if not diffs:
        return {"max": 0.0, "histogram": {"counts": [], "edges": []}, "pairs": 0}
    allv = np.concatenate(diffs)
    top = float(allv.max())
    counts, edges = np.histogram(allv, bins=bins, range=(0.0, max(top, 1e-300)))
    return {
        "max": top,
        "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
        "pairs": int(allv.size),
    }
