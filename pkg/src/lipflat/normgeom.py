"""Finite dimensional normed spaces and the constants used to budget perturbations.

A NormedSpace is R^m with either a p-norm or the gauge of a symmetric polytope.
On top of that this module computes operator norms (exact where the unit ball
has a usable vertex description, sampled lower bounds elsewhere), coordinate
bases adapted to a subspace, and the constants that control how much assembling
scalar functions into a vector map can inflate a Lipschitz budget.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

_CHUNK = 256
_MAX_SIGN_DIM = 16


def p_norm(v, p):
    """The p-norm of a vector, or of each row of an array of vectors.

    p may be any real in [1, inf]; 1, 2 and inf use exact formulas.
    """
    if p < 1:
        raise ValueError("p must be at least 1, got %r" % (p,))
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    a = np.abs(v)
    if p == np.inf:
        return a.max(axis=-1) if a.size else np.zeros(a.shape[:-1])
    if p == 1:
        return a.sum(axis=-1)
    if p == 2:
        return np.sqrt((a * a).sum(axis=-1))
    # guard against overflow for large p on moderate values
    m = a.max(axis=-1, keepdims=True)
    m = np.where(m == 0, 1.0, m)
    return (((a / m) ** p).sum(axis=-1)) ** (1.0 / p) * m[..., 0]


def polytope_norm(v, vertices):
    """Gauge norm of v for the symmetric convex body conv(vertices, -vertices).

    Computed as the atomic-norm linear program min sum |c| s.t. sum c_i u_i = v.
    """
    U = np.asarray(vertices, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return _gauge_lp(v, U)
    return np.array([_gauge_lp(row, U) for row in v.reshape(-1, U.shape[1])]).reshape(
        v.shape[:-1]
    )


def _gauge_lp(v, U):
    if np.allclose(v, 0.0, atol=0.0):
        return 0.0
    k = U.shape[0]
    # variables: c+ and c- stacked, both nonnegative
    cost = np.ones(2 * k)
    A_eq = np.hstack([U.T, -U.T])
    res = linprog(cost, A_eq=A_eq, b_eq=v, bounds=(0, None), method="highs")
    if not res.success:
        raise ValueError("vector lies outside the span of the polytope vertices")
    return float(res.fun)


class NormedSpace:
    """R^m with a p-norm or a symmetric-polytope gauge norm.

    The bi-equivalence constant C with the Euclidean norm is recorded so that
    (1/C) ||v||_2 <= norm(v) <= C ||v||_2.
    """

    def __init__(self, dim, p=None, vertices=None):
        if dim < 1:
            raise ValueError("dimension must be a positive integer")
        self.dim = int(dim)
        if (p is None) == (vertices is None):
            raise ValueError("specify exactly one of p or vertices")
        if p is not None:
            if p < 1:
                raise ValueError("p must be at least 1")
            self.p = float(p)
            self.vertices = None
            self.C = float(dim) ** abs(0.5 - (0.0 if p == np.inf else 1.0 / p))
        else:
            U = np.atleast_2d(np.asarray(vertices, dtype=float))
            if U.shape[1] != dim:
                raise ValueError("vertex dimension does not match dim")
            if np.linalg.matrix_rank(U) < dim:
                raise ValueError("polytope vertices must span the space")
            self.p = None
            U = np.vstack([U, -U])
            U.setflags(write=False)
            self.vertices = U
            self.C = self._polytope_equivalence_constant(U)

    @staticmethod
    def _polytope_equivalence_constant(U):
        R = float(np.sqrt((U * U).sum(axis=1)).max())
        dim = U.shape[1]
        if dim == 1:
            r_in = float(np.abs(U).max())
        else:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(U)
            # rows are (normal, offset) with normal . x + offset <= 0, |normal| = 1
            r_in = float((-hull.equations[:, -1]).min())
        return max(R, 1.0 / r_in, 1.0)

    @classmethod
    def lp(cls, dim, p):
        return cls(dim, p=p)

    @classmethod
    def euclidean(cls, dim):
        return cls(dim, p=2)

    @classmethod
    def polytope(cls, vertices):
        vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        return cls(vertices.shape[1], vertices=vertices)

    @property
    def kind(self):
        return "p" if self.p is not None else "polytope"

    def norm(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError("vector dimension does not match the space")
        if self.p is not None:
            return p_norm(v, self.p)
        return polytope_norm(v, self.vertices)

    def dual_norm(self, y):
        """Norm of the linear functional x -> y . x."""
        y = np.asarray(y, dtype=float)
        if self.p is not None:
            if self.p == 1:
                return p_norm(y, np.inf)
            if self.p == np.inf:
                return p_norm(y, 1)
            q = self.p / (self.p - 1.0)
            return p_norm(y, q)
        return float(np.abs(self.vertices @ y).max())

    def unit_ball_vertices(self):
        """Extreme points of the unit ball when available, else None."""
        if self.p is None:
            return self.vertices
        if self.p == 1:
            eye = np.eye(self.dim)
            return np.vstack([eye, -eye])
        if self.p == np.inf and self.dim <= _MAX_SIGN_DIM:
            return _sign_vertices(self.dim)
        return None

    def descriptor(self):
        if self.p is not None:
            return {"p": "inf" if self.p == np.inf else self.p}
        return {"general": self.vertices[: len(self.vertices) // 2].tolist()}

    @classmethod
    def from_descriptor(cls, desc, dim=None):
        if "p" in desc:
            p = np.inf if desc["p"] == "inf" else float(desc["p"])
            if dim is None:
                raise ValueError("p-norm descriptor needs an explicit dimension")
            return cls.lp(dim, p)
        return cls.polytope(np.asarray(desc["general"], dtype=float))

    def __repr__(self):
        if self.p is not None:
            return "NormedSpace(dim=%d, p=%s)" % (self.dim, self.p)
        return "NormedSpace(dim=%d, polytope with %d vertices)" % (
            self.dim,
            len(self.vertices) // 2,
        )


def _sign_vertices(m):
    """All vectors in {-1, +1}^m, one per row."""
    if m > _MAX_SIGN_DIM:
        raise ValueError("sign vertex enumeration capped at dimension %d" % _MAX_SIGN_DIM)
    bits = np.arange(2**m)[:, None] >> np.arange(m)[None, :]
    return np.where(bits & 1, 1.0, -1.0)


def _chunk_rng(seed, *indices):
    parts = [int(seed) & 0xFFFFFFFF]
    for ix in indices:
        if isinstance(ix, str):
            parts.append(zlib.crc32(ix.encode()))
        else:
            parts.append(int(ix) & 0xFFFFFFFF)
    return np.random.default_rng(parts)


def _ratio_ascent(ratio, x0, rng, iters=60):
    """Greedy local ascent of a scale-invariant ratio function.

    Never returns less than ratio(x0), so merging ascent peaks with raw sample
    maxima keeps estimates monotone in the sample budget.
    """
    x = np.array(x0, dtype=float)
    best = ratio(x)
    m = x.shape[0]
    step = 0.5
    dirs = np.vstack([np.eye(m), -np.eye(m)])
    for _ in range(iters):
        extra = rng.standard_normal((4, m))
        norms = np.sqrt((extra * extra).sum(axis=1, keepdims=True))
        extra = extra / np.where(norms == 0, 1.0, norms)
        improved = False
        for d in np.vstack([dirs, extra]):
            cand = x + step * d
            val = ratio(cand)
            if val > best:
                best, x = val, cand
                improved = True
        if not improved:
            step *= 0.5
            if step < 1e-12:
                break
    return best


def _sampled_max_ratio(ratio_many, ratio_one, dim, samples, seed, extra_candidates=None):
    """Chunked, seeded maximization of a ratio over random directions.

    The estimate is the max over complete chunks of (chunk max, ascent from the
    chunk's best point) plus the raw prefix of the final partial chunk, so it is
    nondecreasing in `samples` and independent of evaluation order.
    """
    best = -np.inf
    if extra_candidates is not None and len(extra_candidates):
        vals = ratio_many(np.asarray(extra_candidates, dtype=float))
        if len(vals):
            best = float(np.max(vals))
    n_full, partial = divmod(max(int(samples), 0), _CHUNK)
    for c in range(n_full):
        rng = _chunk_rng(seed, c)
        xs = rng.standard_normal((_CHUNK, dim))
        vals = ratio_many(xs)
        i = int(np.argmax(vals))
        peak = _ratio_ascent(ratio_one, xs[i], _chunk_rng(seed, c, 1))
        best = max(best, float(vals[i]), peak)
    if partial:
        rng = _chunk_rng(seed, n_full)
        xs = rng.standard_normal((_CHUNK, dim))[:partial]
        vals = ratio_many(xs)
        best = max(best, float(np.max(vals)))
    return best


def operator_norm(T, dom, cod=None, samples=2048, seed=0):
    """Operator norm of the matrix T from dom to cod.

    cod=None means the codomain is the reals with absolute value. Exact when
    the domain ball has enumerable vertices (l1, small l-infinity, polytope),
    for l2 -> l2, and for real-valued functionals on any l_p. Otherwise a
    seeded sampling lower bound with local ascent, monotone in `samples`.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if dom.dim == 0:
        raise ValueError("zero-dimensional domain rejected")
    if T.shape[1] != dom.dim:
        raise ValueError("matrix width %d does not match domain dimension %d" % (T.shape[1], dom.dim))
    if cod is not None and T.shape[0] != cod.dim:
        raise ValueError("matrix height %d does not match codomain dimension %d" % (T.shape[0], cod.dim))

    def cod_norm(rows):
        return np.abs(rows[..., 0]) if cod is None else cod.norm(rows)

    if cod is None:
        if T.shape[0] != 1:
            raise ValueError("real-valued functional must be a single row")
        return float(dom.dual_norm(T[0]))
    verts = dom.unit_ball_vertices()
    if verts is not None:
        return float(np.max(cod_norm(verts @ T.T)))
    if dom.p == 2 and cod.p == 2:
        return float(np.linalg.svd(T, compute_uv=False)[0])
    if cod.dim == 1:
        return float(dom.dual_norm(T[0]))

    def ratio_many(xs):
        dn = dom.norm(xs)
        good = dn > 0
        out = np.zeros(len(xs))
        out[good] = cod_norm(xs[good] @ T.T) / dn[good]
        return out

    def ratio_one(x):
        dn = dom.norm(x)
        if dn <= 0:
            return 0.0
        return float(cod_norm((T @ x)[None, :])[0] / dn)

    cols = T.T.copy()
    return _sampled_max_ratio(ratio_many, ratio_one, dom.dim, samples, seed, extra_candidates=cols)


def _coordinate_matrix(basis):
    """Rows are the coordinate functionals of the basis (columns of `basis`)."""
    m = basis.shape[0]
    if basis.shape != (m, m) or abs(np.linalg.det(basis)) < 1e-12:
        raise ValueError("basis must be square and nondegenerate")
    return np.linalg.inv(basis)


def unconditional_constant(basis, space, samples=4096, seed=0):
    """Least K with norm(sum l_i b_i*(x) b_i) <= K ||l||_inf norm(x), estimated.

    Exhausts sign patterns of l (the extreme points of the l-infinity ball) and
    maximizes over sampled x with local ascent. Always at least 1.
    """
    B = np.asarray(basis, dtype=float)
    Bstar = _coordinate_matrix(B)
    m = space.dim
    signs = _sign_vertices(m) if m <= _MAX_SIGN_DIM else None

    def ratio_many(xs):
        coords = xs @ Bstar.T  # (n, m)
        xn = space.norm(xs)
        good = xn > 0
        out = np.zeros(len(xs))
        if not np.any(good):
            return out
        if signs is not None:
            # flipped[k, n, :] = B @ (signs[k] * coords[n])
            flipped = np.einsum("ij,kj,nj->kni", B, signs, coords[good])
            vals = space.norm(flipped).max(axis=0)
        else:
            rng = _chunk_rng(seed, "signs", len(xs))
            s = np.where(rng.random((64, m)) < 0.5, -1.0, 1.0)
            flipped = np.einsum("ij,kj,nj->kni", B, s, coords[good])
            vals = space.norm(flipped).max(axis=0)
        out[good] = vals / xn[good]
        return out

    def ratio_one(x):
        return float(ratio_many(x[None, :])[0])

    cands = B.T.copy()
    val = _sampled_max_ratio(ratio_many, ratio_one, m, samples, seed, extra_candidates=cands)
    return max(val, 1.0)


@dataclass(frozen=True)
class AdaptedBasis:
    """A unit basis with coordinate functionals and a projection pair for W.

    P projects onto W, Q = Id - P, and x = P(x) + sum_i b_i*(Q x) b_i exactly.
    The stored constants are measured, not assumed.
    """

    space: NormedSpace
    d: int
    W: np.ndarray
    basis: np.ndarray
    functionals: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    K_p: float
    K_d: float
    K_u: float
    tildeK: float = field(default=np.nan)

    def reconstruct(self, x):
        x = np.asarray(x, dtype=float)
        coords = (x @ self.Q.T) @ self.functionals.T
        return x @ self.P.T + coords @ self.basis.T

    def serialize(self):
        return {
            "basis": self.basis.tolist(),
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "constants": {
                "K_p": self.K_p,
                "K_d": self.K_d,
                "K_u": self.K_u,
                "tildeK": self.tildeK,
            },
        }


def _orthonormalize(W):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.ndim != 2:
        raise ValueError("W must be a matrix with one column per direction")
    if W.shape[1] == 0:
        return W
    if np.linalg.matrix_rank(W) < W.shape[1]:
        raise ValueError("W must have full column rank")
    Q, R = np.linalg.qr(W)
    # fix signs so the frame is deterministic
    Q = Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    return Q

def _orthonormal_completion(W):
    """Columns: the d columns spanning range(W) followed by its complement."""
    m, d = W.shape
    full, _ = np.linalg.qr(np.hstack([W, np.eye(m)]))
    out = np.hstack([W, full[:, d:m]]) if d else full[:, :m]
    return out


def _projection_from_Z(W, Wperp, Z):
    # range is span(W); G^T W = I for G = W + Wperp Z, so P is a projection
    G = W + Wperp @ Z
    return W @ G.T


def _minimize_projection_norm(space, W, Wperp, samples, seed):
    """Coordinate descent on Z to shrink the operator norm of P(Z)."""
    d = W.shape[1]
    k = Wperp.shape[1]
    Z = np.zeros((k, d))

    def pnorm(Z):
        return operator_norm(_projection_from_Z(W, Wperp, Z), space, space, samples=samples, seed=seed)

    best = pnorm(Z)
    for _ in range(3):
        improved = False
        for a in range(k):
            for b in range(d):
                lo, hi = Z[a, b] - 2.0, Z[a, b] + 2.0
                for _ in range(36):
                    m1 = lo + (hi - lo) / 3.0
                    m2 = hi - (hi - lo) / 3.0
                    Z1 = Z.copy()
                    Z1[a, b] = m1
                    Z2 = Z.copy()
                    Z2[a, b] = m2
                    if pnorm(Z1) <= pnorm(Z2):
                        hi = m2
                    else:
                        lo = m1
                mid = 0.5 * (lo + hi)
                Zc = Z.copy()
                Zc[a, b] = mid
                val = pnorm(Zc)
                if val < best - 1e-12:
                    best, Z = val, Zc
                    improved = True
        if not improved:
            break
    return Z


def adapted_basis(space, W, samples=2048, seed=0):
    """Build a basis and projection pair adapted to the subspace spanned by W.

    Euclidean targets get an orthonormal completion and orthogonal projections.
    d = 0 gets P = 0, Q = Id and the space's standard unit basis. Otherwise the
    projection onto W is optimized numerically to shrink its operator norm,
    starting from the Euclidean-orthogonal one.
    """
    m = space.dim
    if W is None:
        W = np.zeros((m, 0))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] != m:
        raise ValueError("frame rows must match the space dimension")
    d = W.shape[1]
    if d > m:
        raise ValueError("subspace dimension exceeds the space dimension")
    W = _orthonormalize(W)

    if d == 0:
        basis = np.eye(m)
        scale = space.norm(basis.T)
        basis = basis / scale[None, :]
        P = np.zeros((m, m))
        Q = np.eye(m)
    elif space.p == 2:
        basis = _orthonormal_completion(W)
        P = W @ W.T
        Q = np.eye(m) - P
    else:
        basis = np.eye(m)
        scale = space.norm(basis.T)
        basis = basis / scale[None, :]
        full = _orthonormal_completion(W)
        Wperp = full[:, d:]
        if d == m:
            P = np.eye(m)
        else:
            Z = _minimize_projection_norm(space, W, Wperp, samples=min(samples, 512), seed=seed)
            P = _projection_from_Z(W, Wperp, Z)
        Q = np.eye(m) - P

    functionals = _coordinate_matrix(basis)
    K_p = max(float(space.dual_norm(row)) for row in functionals)
    K_d = max(
        operator_norm(P, space, space, samples=samples, seed=seed),
        operator_norm(Q, space, space, samples=samples, seed=seed),
    )
    K_u = unconditional_constant(basis, space, samples=samples, seed=seed)
    ab = AdaptedBasis(
        space=space,
        d=d,
        W=W,
        basis=basis,
        functionals=functionals,
        P=P,
        Q=Q,
        K_p=K_p,
        K_d=K_d,
        K_u=K_u,
    )
    witness = tilde_k_witness(ab, space, samples=samples, seed=seed)
    object.__setattr__(ab, "tildeK", witness)
    return ab


def tilde_k_witness(basis, space=None, samples=2048, seed=0):
    """Max of norm(P x + sum_i l_i b_i*(Q x) b_i) / norm(x) over signs l.

    A lower-bound witness for the constant that budgets the vector assembly;
    never below 1 for a valid adapted basis.
    """
    ab = basis
    space = space if space is not None else ab.space
    m = space.dim
    B, Bstar, P, Q = ab.basis, ab.functionals, ab.P, ab.Q
    if m <= _MAX_SIGN_DIM:
        signs = _sign_vertices(m)
    else:
        rng = _chunk_rng(seed, "tilde-signs")
        signs = np.where(rng.random((128, m)) < 0.5, -1.0, 1.0)

    def ratio_many(xs):
        xs = np.atleast_2d(xs)
        xn = space.norm(xs)
        good = xn > 0
        out = np.zeros(len(xs))
        if not np.any(good):
            return out
        px = xs[good] @ P.T
        coords = (xs[good] @ Q.T) @ Bstar.T
        combos = np.einsum("ij,kj,nj->kni", B, signs, coords)
        vals = space.norm(px[None, :, :] + combos).max(axis=0)
        out[good] = vals / xn[good]
        return out

    def ratio_one(x):
        return float(ratio_many(x[None, :])[0])

    cands = [B.T, np.eye(m)]
    if ab.d:
        cands.append(ab.W.T)
    cands = np.vstack(cands)
    val = _sampled_max_ratio(ratio_many, ratio_one, m, samples, seed, extra_candidates=cands)
    return max(val, 1.0)
