"""Hausdorff-style content estimates at a fixed covering scale.

Covers are built from balls centered at input points. Every cover element is
charged its nominal diameter to the power s, so a greedy cover of k balls at
scale delta is worth k * delta**s. Greedy covers give upper bounds for the
minimal cover value, greedy packings give lower bounds; the two are reported
by separate functions and never conflated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .normgeom import NormedSpace

# relative slack when testing whether a point sits inside a ball, so that
# points exactly on the boundary (common for lattice data) count as covered
_BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class ContentEstimate:
    """A cover (or packing) of a finite set with its charged value."""

    s: float
    delta: float
    value: float
    cover: tuple  # of (center tuple, radius)
    method: str

    def to_json(self):
        return {
            "s": self.s,
            "delta": self.delta,
            "value": self.value,
            "method": self.method,
            "cover": [{"center": list(c), "radius": r} for c, r in self.cover],
        }


def _as_points(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return np.zeros((0, pts.shape[1] if pts.ndim == 2 else 1))
    return pts


def _space_for(points, space):
    if space is None:
        return NormedSpace.euclidean(points.shape[1])
    if space.dim != points.shape[1]:
        raise ValueError("points dimension does not match the space")
    return space


def _pairwise_dist(points, space):
    n = len(points)
    if space.p == 2:
        from scipy.spatial.distance import cdist

        return cdist(points, points)
    D = np.zeros((n, n))
    for i in range(n):
        row = space.norm(points[i][None, :] - points[i:])
        D[i, i:] = row
        D[i:, i] = row
    return D


def greedy_content(points, s, delta, space=None):
    """Greedy ball-cover upper bound for the content at scale delta.

    Balls have radius delta/2 and are centered at input points; each round
    picks the ball covering the most uncovered points, ties broken by the
    smallest center index. The value is (number of balls) * delta**s.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if s <= 0:
        raise ValueError("s must be positive")
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        return ContentEstimate(s=float(s), delta=float(delta), value=0.0, cover=(), method="greedy")
    space = _space_for(pts, space)
    radius = delta / 2.0
    D = _pairwise_dist(pts, space)
    inside = D <= radius * (1.0 + _BOUNDARY_RTOL)
    uncovered = np.ones(n, dtype=bool)
    chosen = []
    while uncovered.any():
        gains = (inside & uncovered[None, :]).sum(axis=1)
        c = int(np.argmax(gains))  # argmax takes the first max: smallest index
        chosen.append(c)
        uncovered &= ~inside[c]
    cover = tuple((tuple(pts[c]), radius) for c in chosen)
    value = float(len(chosen)) * float(delta) ** s
    return ContentEstimate(s=float(s), delta=float(delta), value=value, cover=cover, method="greedy")


def packing_lower_bound(points, s, delta, space=None):
    """Greedy packing lower bound: disjoint balls of diameter delta/2.

    Scans points in ascending index order, keeping a point when it is more
    than delta/2 from every kept point. The value is count * (delta/2)**s.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if s <= 0:
        raise ValueError("s must be positive")
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        return ContentEstimate(s=float(s), delta=float(delta), value=0.0, cover=(), method="packing")
    space = _space_for(pts, space)
    kept = [0]
    for i in range(1, n):
        d = space.norm(pts[i][None, :] - pts[kept])
        if np.min(d) > delta / 2.0:
            kept.append(i)
    cover = tuple((tuple(pts[i]), delta / 4.0) for i in kept)
    value = float(len(kept)) * (float(delta) / 2.0) ** s
    return ContentEstimate(s=float(s), delta=float(delta), value=value, cover=cover, method="packing")


def grid_content(points, s, r):
    """Box-count upper bound: occupied cells of an origin-anchored grid.

    Each occupied cell of side r is charged (r * sqrt(k))**s, the s-th power
    of the cell diameter in R^k.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if s <= 0:
        raise ValueError("s must be positive")
    pts = _as_points(points)
    n = len(pts)
    k = pts.shape[1]
    diam = float(r) * float(np.sqrt(k))
    if n == 0:
        return ContentEstimate(s=float(s), delta=diam, value=0.0, cover=(), method="grid")
    cells = np.floor(pts / r).astype(np.int64)
    occupied = np.unique(cells, axis=0)
    centers = (occupied + 0.5) * r
    cover = tuple((tuple(c), diam / 2.0) for c in centers)
    value = float(len(occupied)) * diam**s
    return ContentEstimate(s=float(s), delta=diam, value=value, cover=cover, method="grid")


def covers(points, cover, space=None):
    """True when every point lies in some cover element (with boundary slack)."""
    pts = _as_points(points)
    if len(pts) == 0:
        return True
    space = _space_for(pts, space)
    ok = np.zeros(len(pts), dtype=bool)
    for center, radius in cover:
        c = np.asarray(center, dtype=float)
        d = space.norm(pts - c[None, :])
        ok |= d <= radius * (1.0 + _BOUNDARY_RTOL) + 1e-15
    return bool(ok.all())


def cover_slack(points, cover, space=None):
    """Worst-case interior margin of the cover.

    For each point, its best margin is max over elements of radius - distance;
    the slack is the min over points. Positive slack rho means any perturbation
    moving points by less than rho keeps the cover valid.
    """
    pts = _as_points(points)
    if len(pts) == 0 or not cover:
        return 0.0
    space = _space_for(pts, space)
    margins = np.full(len(pts), -np.inf)
    for center, radius in cover:
        c = np.asarray(center, dtype=float)
        d = space.norm(pts - c[None, :])
        margins = np.maximum(margins, radius - d)
    return float(margins.min())
