"""Direction cones, fragment profiles, tangent-field fitting and partitioning.

Directions of travel are read off curve fragments as per-edge increments of a
map's values. A tangent field assigns each point of a set a d-dimensional
subspace fitted to the increments passing through it, together with a score
for how much fragment length disobeys the assigned cone. Partitioning clusters
the fitted subspaces so each piece has a single working frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_UNIT_TOL = 1e-10


def cone_membership(v, w, theta):
    """True when v lies in the theta-cone around the unit vector w.

    Membership means v . w >= (1 - theta) * ||v|| in the Euclidean sense, so
    it is scale invariant in v and widens as theta grows.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > _UNIT_TOL:
        raise ValueError("w must be a unit vector")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    return bool(float(v @ w) >= (1.0 - theta) * float(np.linalg.norm(v)))


def _frame_array(W, dim):
    if W is None:
        return np.zeros((dim, 0))
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[1] and not np.allclose(W.T @ W, np.eye(W.shape[1]), atol=1e-8):
        raise ValueError("frame must be orthonormal")
    return W


def complement_membership(v, W, theta):
    """True when v points mostly away from span(W).

    Tests ||proj_{W-perp}(v)|| >= (1 - theta) * ||v||; the empty frame makes
    the projection the identity, so every v qualifies.
    """
    v = np.asarray(v, dtype=float)
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    W = _frame_array(W, len(v))
    if W.shape[1] == 0:
        return True
    resid = v - W @ (W.T @ v)
    return bool(np.linalg.norm(resid) >= (1.0 - theta) * np.linalg.norm(v))


def _in_direction_set(increments, dirset):
    """Boolean mask: which rows of increments belong to the direction set.

    dirset is ("cone", w, theta) or ("complement", W, theta).
    """
    kind = dirset[0]
    incs = np.atleast_2d(increments)
    norms = np.linalg.norm(incs, axis=1)
    if kind == "cone":
        _, w, theta = dirset
        w = np.asarray(w, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > _UNIT_TOL:
            raise ValueError("cone axis must be a unit vector")
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        return incs @ w >= (1.0 - theta) * norms
    if kind == "complement":
        _, W, theta = dirset
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        W = _frame_array(W, incs.shape[1])
        if W.shape[1] == 0:
            return np.ones(len(incs), dtype=bool)
        resid = incs - (incs @ W) @ W.T
        return np.linalg.norm(resid, axis=1) >= (1.0 - theta) * norms
    raise ValueError("unknown direction set kind %r" % (kind,))


@dataclass(frozen=True)
class DirectionProfile:
    """Per-edge increments of F along a fragment, classified by a direction set."""

    fragment_id: int
    increments: np.ndarray  # (q-1, m)
    lengths: np.ndarray  # (q-1,)
    fraction_in: float

    @property
    def in_direction(self):
        return self.fraction_in == 1.0


def fragment_profile(fragment, F, dirset, fragment_id=0):
    """Classify a fragment's nonzero F-increments against a direction set.

    fraction_in is the length-weighted share of edges with nonzero increment
    that belong to the set; a fragment with only zero increments scores 0.
    """
    if len(fragment) < 2:
        raise ValueError("fragment needs at least two points")
    idx = fragment.indices
    incs = F.values[idx[1:]] - F.values[idx[:-1]]
    lens = fragment.edge_lengths()
    nz = np.linalg.norm(incs, axis=1) > 0
    if not nz.any():
        frac = 0.0
    else:
        member = _in_direction_set(incs[nz], dirset)
        frac = float(lens[nz][member].sum() / lens[nz].sum())
    return DirectionProfile(
        fragment_id=fragment_id, increments=incs, lengths=lens, fraction_in=frac
    )


@dataclass(frozen=True)
class TangentField:
    """Per-point d-frames on a subset, with the cone-violation score.

    violation is the total length of incident fragment edges whose increment
    escapes the theta-cone around the assigned frame (for d = 0 every nonzero
    increment escapes the trivial frame).
    """

    points: np.ndarray  # indices into the ambient space
    frames: np.ndarray  # (len(points), m, d)
    d: int
    theta: float
    violation: float
    per_point_violation: np.ndarray

    def frame_at(self, position):
        return self.frames[position]


def _incident_edges(fragments, wanted):
    """Map point index -> list of (increment row id); rows collected globally."""
    rows_inc = []
    rows_len = []
    incident = {int(p): [] for p in wanted}
    row = 0
    for frag in fragments:
        idx = frag.indices
        lens = frag.edge_lengths()
        for j in range(len(idx) - 1):
            a, b = int(idx[j]), int(idx[j + 1])
            rows_inc.append((a, b))
            rows_len.append(float(lens[j]))
            if a in incident:
                incident[a].append(row)
            if b in incident:
                incident[b].append(row)
            row += 1
    return rows_inc, np.asarray(rows_len, dtype=float), incident


def fit_tangent_field(S, F, fragments, d, theta):
    """Fit a d-dimensional frame at each point of S from fragment increments.

    The frame at x spans the top-d right singular directions of the
    length-weighted difference quotients of edges incident to x. Points with
    no incident edges get the first d coordinate directions. The violation
    score totals incident edge length whose increment lies in the conical
    complement of the assigned frame.
    """
    m = F.target.dim
    if d > m:
        raise ValueError("d exceeds the target dimension")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    S = np.asarray(sorted(int(i) for i in S), dtype=int)
    rows_inc, rows_len, incident = _incident_edges(fragments, S)
    inc_vals = (
        np.array([F.values[b] - F.values[a] for a, b in rows_inc], dtype=float)
        if rows_inc
        else np.zeros((0, m))
    )
    frames = np.zeros((len(S), m, d))
    per_point = np.zeros(len(S))
    for pos, x in enumerate(S):
        rows = incident.get(int(x), [])
        if d > 0:
            if rows:
                incs = inc_vals[rows]
                lens = rows_len[rows]
                good = lens > 0
                quot = incs[good] / lens[good][:, None]
                A = quot * np.sqrt(lens[good])[:, None]
                _, sv, VT = np.linalg.svd(A, full_matrices=True)
                frames[pos] = VT[:d].T
            else:
                frames[pos] = np.eye(m)[:, :d]
        if rows:
            incs = inc_vals[rows]
            lens = rows_len[rows]
            nz = np.linalg.norm(incs, axis=1) > 0
            if nz.any():
                W = frames[pos] if d > 0 else None
                bad = _in_direction_set(incs[nz], ("complement", W, theta))
                per_point[pos] = float(lens[nz][bad].sum())
    return TangentField(
        points=S,
        frames=frames,
        d=int(d),
        theta=float(theta),
        violation=float(per_point.sum()),
        per_point_violation=per_point,
    )


def _projector_kmeans(projectors, M, seed, restarts=10, iters=60):
    """k-means on projector matrices under the Frobenius metric."""
    n = len(projectors)
    flat = projectors.reshape(n, -1)
    best = None
    for rep in range(restarts):
        rng = np.random.default_rng([int(seed), rep])
        centers = flat[rng.choice(n, size=min(M, n), replace=False)]
        assign = np.zeros(n, dtype=int)
        for _ in range(iters):
            dist = ((flat[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_assign = np.argmin(dist, axis=1)
            if np.array_equal(new_assign, assign) and _ > 0:
                break
            assign = new_assign
            for c in range(len(centers)):
                mask = assign == c
                if mask.any():
                    centers[c] = flat[mask].mean(axis=0)
        inertia = float(((flat - centers[assign]) ** 2).sum())
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, assign.copy())
    return best[1]


def _chordal_frame(mean_projector, d):
    """Closest rank-d projector frame to a mean of projectors."""
    sym = 0.5 * (mean_projector + mean_projector.T)
    vals, vecs = np.linalg.eigh(sym)
    return vecs[:, ::-1][:, :d]


def partition_by_field(S, field, theta, M):
    """Group the points of S into pieces with shared frames.

    Clusters the per-point frames on the Grassmannian (chordal metric via
    projectors, seeded k-means with 10 restarts), re-derives each cluster's
    frame from its mean projector, and keeps a point only when its own frame
    sits inside the theta-cone of the cluster frame (largest principal sine
    below 1 - theta). Returns (pieces, unassigned) where pieces is a list of
    (point index array, frame).
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    S = np.asarray(sorted(int(i) for i in S), dtype=int)
    pos_of = {int(x): i for i, x in enumerate(field.points)}
    missing = [int(x) for x in S if int(x) not in pos_of]
    if missing:
        raise ValueError("field not defined on point %d" % missing[0])
    positions = np.array([pos_of[int(x)] for x in S], dtype=int)
    d = field.d
    m = field.frames.shape[1]
    if d == 0 or len(S) == 0:
        if len(S) == 0:
            return [], np.zeros(0, dtype=int)
        return [(S, np.zeros((m, 0)))], np.zeros(0, dtype=int)
    frames = field.frames[positions]
    projectors = np.einsum("nij,nkj->nik", frames, frames)
    assign = _projector_kmeans(projectors, M, seed=0)
    pieces = []
    unassigned = []
    for c in sorted(set(assign.tolist())):
        mask = assign == c
        Wc = _chordal_frame(projectors[mask].mean(axis=0), d)
        keep = []
        for i in np.nonzero(mask)[0]:
            overlap = Wc.T @ frames[i]
            # largest principal sine between the frames
            smin = np.linalg.svd(overlap, compute_uv=False).min() if d else 1.0
            sin_max = np.sqrt(max(0.0, 1.0 - smin * smin))
            if sin_max < (1.0 - theta):
                keep.append(i)
            else:
                unassigned.append(i)
        if keep:
            pieces.append((S[np.array(keep, dtype=int)], Wc))
    return pieces, S[np.array(sorted(unassigned), dtype=int)] if unassigned else np.zeros(0, dtype=int)
