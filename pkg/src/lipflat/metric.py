"""Finite metric spaces, neighborhood graphs, fragments, nets and embeddings.

Everything downstream works on a FiniteMetricSpace: a validated distance
matrix, optionally backed by coordinates in a normed space. Curve fragments
are vertex paths with arc-length parameters, the discrete stand-in for
bi-Lipschitz curves. The Kuratowski embedding sends a space into sup-norm
coordinates built from distances to a net.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .normgeom import NormedSpace

_EXHAUSTIVE_TRIANGLE_LIMIT = 500


def validate_metric(D, sample_seed=0):
    """Check a square matrix for metric axioms.

    Returns a diagnostics dict with ok flag and the first violating pair or
    triple per failure kind. Triples are checked exhaustively up to 500 points
    and on a seeded sample of middle points above that.
    """
    D = np.asarray(D, dtype=float)
    diag = {
        "ok": True,
        "not_square": None,
        "negative": None,
        "asymmetry": None,
        "diagonal": None,
        "zero_offdiagonal": None,
        "triangle": None,
    }
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        diag["ok"] = False
        diag["not_square"] = list(D.shape)
        return diag
    n = D.shape[0]
    neg = np.argwhere(D < 0)
    if len(neg):
        diag["ok"] = False
        diag["negative"] = [int(neg[0][0]), int(neg[0][1])]
    asym = np.argwhere(np.abs(D - D.T) > 1e-12 * (1.0 + np.abs(D)))
    if len(asym):
        diag["ok"] = False
        diag["asymmetry"] = [int(asym[0][0]), int(asym[0][1])]
    bad_diag = np.argwhere(np.abs(np.diag(D)) > 0)
    if len(bad_diag):
        diag["ok"] = False
        diag["diagonal"] = [int(bad_diag[0][0])]
    off = D + np.diag(np.full(n, np.inf))
    zero = np.argwhere(off == 0)
    if len(zero):
        diag["ok"] = False
        diag["zero_offdiagonal"] = [int(zero[0][0]), int(zero[0][1])]
    if n <= _EXHAUSTIVE_TRIANGLE_LIMIT:
        mids = range(n)
    else:
        rng = np.random.default_rng(sample_seed)
        mids = sorted(rng.choice(n, size=200, replace=False).tolist())
    tol = 1e-12
    for j in mids:
        slack = D - (D[:, [j]] + D[[j], :])
        bad = np.argwhere(slack > tol * (1.0 + D))
        if len(bad):
            i, k = int(bad[0][0]), int(bad[0][1])
            diag["ok"] = False
            diag["triangle"] = [i, int(j), k]
            break
    return diag


class FiniteMetricSpace:
    """A finite metric space given by a distance matrix, optionally with coords."""

    def __init__(self, D, coords=None, space=None, labels=None, validate=True):
        D = np.array(D, dtype=float)
        if validate:
            diag = validate_metric(D)
            if not diag["ok"]:
                problems = {k: v for k, v in diag.items() if k != "ok" and v is not None}
                raise ValueError("not a metric: %s" % (problems,))
        self.D = D
        self.D.setflags(write=False)
        self.n = D.shape[0]
        if coords is not None:
            coords = np.array(coords, dtype=float)
            if coords.shape[0] != self.n:
                raise ValueError("coords row count does not match distance matrix")
            coords.setflags(write=False)
        self.coords = coords
        self.space = space
        self.labels = list(labels) if labels is not None else None

    @classmethod
    def from_coords(cls, coords, space=None, labels=None):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2:
            raise ValueError("coords must be a 2-d array of points")
        if space is None:
            space = NormedSpace.euclidean(coords.shape[1])
        if space.dim != coords.shape[1]:
            raise ValueError("coords dimension does not match the space")
        n = len(coords)
        if space.p == 2:
            from scipy.spatial.distance import cdist

            D = cdist(coords, coords)
        else:
            D = np.zeros((n, n))
            for i in range(n):
                row = space.norm(coords[i][None, :] - coords[i:])
                D[i, i:] = row
                D[i:, i] = row
        np.fill_diagonal(D, 0.0)
        off = D + np.diag(np.full(n, np.inf))
        if n > 1 and off.min() <= 0:
            i, j = np.unravel_index(int(np.argmin(off)), off.shape)
            raise ValueError("points %d and %d coincide" % (i, j))
        return cls(D, coords=coords, space=space, labels=labels, validate=False)

    def distance(self, i, j):
        return float(self.D[i, j])

    def diameter(self):
        return float(self.D.max()) if self.n else 0.0

    def separation(self):
        """Smallest nonzero pairwise distance."""
        if self.n < 2:
            return 0.0
        off = self.D + np.diag(np.full(self.n, np.inf))
        return float(off.min())

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        D = self.D[np.ix_(indices, indices)]
        coords = self.coords[indices] if self.coords is not None else None
        labels = [self.labels[i] for i in indices] if self.labels is not None else None
        return FiniteMetricSpace(D, coords=coords, space=self.space, labels=labels, validate=False)

    def to_json(self):
        out = {"n": self.n}
        if self.coords is not None:
            out["kind"] = "cloud"
            out["coords"] = self.coords.tolist()
            if self.space is not None:
                out["norm"] = self.space.descriptor()
        else:
            out["kind"] = "matrix"
            out["D"] = self.D.tolist()
        if self.labels is not None:
            out["labels"] = self.labels
        return out

    @classmethod
    def from_json(cls, obj):
        labels = obj.get("labels")
        if obj["kind"] == "cloud":
            coords = np.asarray(obj["coords"], dtype=float)
            space = None
            if "norm" in obj:
                space = NormedSpace.from_descriptor(obj["norm"], dim=coords.shape[1])
            return cls.from_coords(coords, space=space, labels=labels)
        return cls(np.asarray(obj["D"], dtype=float), labels=labels)

    def __repr__(self):
        backing = "cloud" if self.coords is not None else "matrix"
        return "FiniteMetricSpace(n=%d, %s)" % (self.n, backing)


def save_points_csv(path, coords):
    """Write a point cloud as CSV with header x1..xk, one point per row."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x%d" % (j + 1) for j in range(coords.shape[1])])
        for row in coords:
            w.writerow([repr(float(v)) for v in row])


def save_matrix_csv(path, D):
    """Write a distance matrix as CSV with header d1..dn, one row per point."""
    D = np.asarray(D, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d%d" % (j + 1) for j in range(D.shape[1])])
        for row in D:
            w.writerow([repr(float(v)) for v in row])


def load_csv(path, space=None):
    """Load a FiniteMetricSpace from a point-cloud or distance-matrix CSV.

    Cloud files have header x1..xk; matrix files have header d1..dn.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty CSV file %s" % path)
    header = [h.strip() for h in rows[0]]
    body = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    if header and header[0].startswith("x"):
        return FiniteMetricSpace.from_coords(body, space=space)
    if header and header[0].startswith("d"):
        return FiniteMetricSpace(body)
    raise ValueError("unrecognized CSV header %r: expected x1..xk or d1..dn" % (header[:3],))


@dataclass(frozen=True)
class Graph:
    """Simple undirected weighted graph over the points of a space."""

    n: int
    edges: np.ndarray  # (E, 2) int, each row i < j
    lengths: np.ndarray  # (E,) float

    def neighbor_lists(self):
        out = [[] for _ in range(self.n)]
        for (i, j), w in zip(self.edges, self.lengths):
            out[i].append((int(j), float(w)))
            out[j].append((int(i), float(w)))
        return out


def neighborhood_graph(space, mode=None, k=16, r=None):
    """Weighted undirected graph on the space: complete, knn(k) or radius(r).

    mode=None picks complete up to 2000 points and knn(16) above.
    """
    n = space.n
    if mode is None:
        mode = "complete" if n <= 2000 else "knn"
    if mode == "complete":
        iu = np.triu_indices(n, k=1)
        edges = np.stack(iu, axis=1).astype(int)
        lengths = space.D[iu]
    elif mode == "knn":
        if k < 1:
            raise ValueError("k must be at least 1")
        k_eff = min(int(k), n - 1)
        pair_set = set()
        order = np.argsort(space.D + np.diag(np.full(n, np.inf)), axis=1, kind="stable")
        for i in range(n):
            for j in order[i, :k_eff]:
                a, b = (i, int(j)) if i < j else (int(j), i)
                pair_set.add((a, b))
        edges = np.array(sorted(pair_set), dtype=int).reshape(-1, 2)
        lengths = space.D[edges[:, 0], edges[:, 1]] if len(edges) else np.zeros(0)
    elif mode == "radius":
        if r is None or r <= 0:
            raise ValueError("radius mode needs r > 0")
        iu = np.triu_indices(n, k=1)
        mask = space.D[iu] <= r
        edges = np.stack(iu, axis=1)[mask].astype(int)
        lengths = space.D[iu][mask]
    else:
        raise ValueError("unknown graph mode %r" % (mode,))
    edges = np.ascontiguousarray(edges)
    lengths = np.ascontiguousarray(np.asarray(lengths, dtype=float))
    edges.setflags(write=False)
    lengths.setflags(write=False)
    return Graph(n=n, edges=edges, lengths=lengths)


@dataclass(frozen=True)
class CurveFragment:
    """A discrete curve: point indices at strictly increasing parameters.

    The recorded biLip pair (lower, upper) brackets every pairwise ratio
    D(gamma(t_j), gamma(t_k)) / |t_j - t_k|; construction verifies this.
    """

    space: FiniteMetricSpace
    params: np.ndarray
    indices: np.ndarray
    biLip: tuple = field(default=(0.0, 1.0))

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        indices = np.asarray(self.indices, dtype=int)
        if len(params) != len(indices) or len(params) < 2:
            raise ValueError("fragment needs at least two points with matching params")
        if not np.all(np.diff(params) > 0):
            raise ValueError("params must be strictly increasing")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "indices", indices)
        lo, hi = self.biLip
        if lo <= 0:
            raise ValueError("lower biLip constant must be positive")
        gaps = np.abs(params[:, None] - params[None, :])
        dists = self.space.D[np.ix_(indices, indices)]
        mask = ~np.eye(len(params), dtype=bool)
        ratios = dists[mask] / gaps[mask]
        if ratios.min() < lo - 1e-12 or ratios.max() > hi + 1e-12:
            raise ValueError(
                "recorded biLip (%g, %g) violated: measured (%g, %g)"
                % (lo, hi, ratios.min(), ratios.max())
            )

    def __len__(self):
        return len(self.params)

    def edge_lengths(self):
        return np.diff(self.params)

    def total_length(self):
        return float(self.params[-1] - self.params[0])


def fragment_from_path(space, path):
    """Arc-length parametrized fragment through the given vertex path.

    Parameters are cumulative distances along consecutive path points; the
    biLip constants are measured over all pairs. Repeated points are rejected
    because they break the lower biLip bound.
    """
    path = np.asarray(path, dtype=int)
    if len(path) < 2:
        raise ValueError("path needs at least two points")
    if len(set(path.tolist())) != len(path):
        raise ValueError("path revisits a point; fragments must be injective")
    steps = space.D[path[:-1], path[1:]]
    if np.any(steps <= 0):
        raise ValueError("consecutive path points must be distinct")
    params = np.concatenate([[0.0], np.cumsum(steps)])
    gaps = np.abs(params[:, None] - params[None, :])
    dists = space.D[np.ix_(path, path)]
    mask = ~np.eye(len(path), dtype=bool)
    ratios = dists[mask] / gaps[mask]
    lo, hi = float(ratios.min()), float(ratios.max())
    if lo <= 0:
        raise ValueError("path contains coincident points")
    return CurveFragment(space=space, params=params, indices=path, biLip=(lo, hi))


class LipschitzMap:
    """Pointwise images of a space in a normed target, with measured constant."""

    def __init__(self, source, target, values):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != source.n:
            raise ValueError("one value row per point required")
        if values.shape[1] != target.dim:
            raise ValueError("value width does not match the target dimension")
        self.source = source
        self.target = target
        values.setflags(write=False)
        self.values = values
        self.lip = self._measure_lip()

    def _measure_lip(self):
        n = self.source.n
        if n < 2:
            return 0.0
        best = 0.0
        for i in range(n - 1):
            diffs = self.values[i][None, :] - self.values[i + 1 :]
            dn = self.target.norm(diffs)
            dd = self.source.D[i, i + 1 :]
            good = dd > 0
            if np.any(good):
                best = max(best, float((dn[good] / dd[good]).max()))
        return best

    def image_space(self):
        """The image points as a FiniteMetricSpace in the target norm."""
        return FiniteMetricSpace.from_coords(self.values, space=self.target)

    def displacement_from(self, other_values):
        diffs = self.values - np.atleast_2d(np.asarray(other_values, dtype=float))
        return float(self.target.norm(diffs).max())

    def __repr__(self):
        return "LipschitzMap(n=%d -> dim %d, lip=%.6g)" % (
            self.source.n,
            self.target.dim,
            self.lip,
        )


def max_epsilon_net(space, eps):
    """Greedy net, scanning points in ascending index order.

    Net points are pairwise at least eps apart and every point of the space
    lies within eps of some net point.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    net = []
    for i in range(space.n):
        if not net or space.D[i, net].min() >= eps:
            net.append(i)
    return net


def kuratowski_embed(space, net):
    """Distance coordinates F(x) = (D(x, net_1), ..., D(x, net_m)) in sup norm."""
    if net is None or len(net) == 0:
        raise ValueError("net must be nonempty")
    net = list(net)
    values = space.D[:, net]
    target = NormedSpace.lp(len(net), np.inf)
    return LipschitzMap(space, target, values)
