"""Budgeted Lipschitz perturbations that flatten a set's image.

The scalar step prices monotone travel through a neighborhood of the target
set at a discount delta and computes the cheapest admissible arrival value by
a shortest-path sweep. The vector step runs one scalar perturbation per
coordinate functional of an adapted basis and reassembles a map. Gluing
merges per-piece perturbations with compactly supported cutoffs, rescaling
lands the result inside a Lipschitz budget, and flatten chains the whole
pipeline and measures what happened.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .content import greedy_content
from .metric import LipschitzMap, fragment_from_path, neighborhood_graph
from .normgeom import adapted_basis
from .tangent import fit_tangent_field, partition_by_field

_TINY = 1e-12


def neighborhood_V(space, S, margin):
    """Indices strictly within margin of S (S itself included)."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    S = np.asarray(S, dtype=int)
    if len(S) == 0:
        return np.zeros(0, dtype=int)
    d_to_S = space.D[:, S].min(axis=1)
    return np.nonzero(d_to_S < margin)[0]


def scalar_perturb(graph, F, T, V, delta, short_edge_cap=None, slope_cap=None):
    """Cheapest arrival values for one coordinate functional.

    Travel along an edge pays the variation |t(y) - t(z)| of t = T(F(.))
    plus the rate delta*||T||*len, except that a discounted edge (both
    endpoints in V and, when a cap is set, no longer than it) pays the rate
    alone. f(x) is the cheapest arrival at x over all paths from anywhere,
    seeded with t itself, so f <= t everywhere, every edge satisfies
    |f(y) - f(z)| <= |t(y) - t(z)| + delta*||T||*len, and every discounted
    edge satisfies |f(y) - f(z)| <= delta*||T||*len.

    slope_cap, when set, additionally clamps every edge weight at
    slope_cap*||T||*len, so on a complete graph Lip f <= slope_cap*||T||.
    The caller must keep slope_cap strictly above Lip(t)/||T||, otherwise
    near-aligned edges travel at no net charge and the arrival values sink
    far below t.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    T = np.asarray(T, dtype=float)
    normT = float(F.target.dual_norm(T))
    if normT <= 0:
        raise ValueError("functional T must be nonzero")
    n = F.source.n
    TF = F.values @ T
    Vmask = np.zeros(n, dtype=bool)
    Vmask[np.asarray(V, dtype=int)] = True

    e = graph.edges
    ln = graph.lengths
    if len(e):
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        lens = np.concatenate([ln, ln])
    else:
        src = dst = np.zeros(0, dtype=int)
        lens = np.zeros(0)
    discounted = Vmask[src] & Vmask[dst]
    if short_edge_cap is not None:
        discounted &= lens <= short_edge_cap
    variation = np.abs(TF[dst] - TF[src])
    weights = np.where(discounted, 0.0, variation) + delta * normT * lens
    if slope_cap is not None:
        weights = np.minimum(weights, slope_cap * normT * lens)

    # virtual source reaches every node at cost TF - min(TF), shifted by 1 so
    # all stored weights stay strictly positive for the sparse sweep
    t0 = float(TF.min())
    all_src = np.concatenate([src, np.full(n, n)])
    all_dst = np.concatenate([dst, np.arange(n)])
    all_w = np.concatenate([weights, TF - t0 + 1.0])
    mat = csr_matrix((all_w, (all_src, all_dst)), shape=(n + 1, n + 1))
    dist = dijkstra(mat, directed=True, indices=n)
    return dist[:n] + (t0 - 1.0)


def scalar_bounds_check(graph, TF, f, V, delta, normT, short_edge_cap=None):
    """Edge-wise excesses over the perturbation's increment bounds.

    eq31_max_excess is max over all edges of |df| - (|dTF| + 3*delta*||T||*len);
    flat_max_excess is max over discounted edges of |df| - 3*delta*||T||*len.
    Nonpositive excesses mean the bounds hold.
    """
    TF = np.asarray(TF, dtype=float)
    f = np.asarray(f, dtype=float)
    n = len(TF)
    Vmask = np.zeros(n, dtype=bool)
    Vmask[np.asarray(V, dtype=int)] = True
    e = graph.edges
    ln = graph.lengths
    if not len(e):
        return {
            "eq31_max_excess": 0.0,
            "flat_max_excess": 0.0,
            "flat_edges": 0,
            "edges": 0,
        }
    df = np.abs(f[e[:, 0]] - f[e[:, 1]])
    dTF = np.abs(TF[e[:, 0]] - TF[e[:, 1]])
    rate = 3.0 * delta * normT * ln
    eq31 = float((df - (dTF + rate)).max())
    scope = Vmask[e[:, 0]] & Vmask[e[:, 1]]
    if short_edge_cap is not None:
        scope &= ln <= short_edge_cap
    flat = float((df[scope] - rate[scope]).max()) if scope.any() else 0.0
    return {
        "eq31_max_excess": eq31,
        "flat_max_excess": flat,
        "flat_edges": int(scope.sum()),
        "edges": int(len(e)),
    }


def vector_perturb(
    space,
    F,
    piece,
    theta,
    eps,
    graph=None,
    margin=None,
    delta=None,
    short_edge_cap=None,
    lip_budget=None,
    samples=512,
    seed=0,
):
    """Perturb F near one piece (S_i, W_i) of the target decomposition.

    Builds a basis adapted to W_i, perturbs each active coordinate functional
    b_i* o Q by the scalar step against V = neighborhood of S_i, and
    reassembles sigma = P(F(.)) + sum f_i b_i. Functionals with vanishing
    norm keep their original coordinates, so d = m returns sigma = F.

    When lip_budget leaves headroom of at least delta/2 over Lip F after
    dividing out the basis constant, the scalar steps run with the matching
    slope cap and the assembled map satisfies Lip sigma <= lip_budget
    directly; a tighter budget is left for the caller's rescale.
    """
    S_i, W_i = piece
    S_i = np.asarray(S_i, dtype=int)
    target = F.target
    m = target.dim
    if graph is None:
        graph = neighborhood_graph(space)
    spacing = space.separation()
    if margin is None:
        margin = 2.0 * spacing if spacing > 0 else 1.0
    if delta is None:
        delta = 1.0 - theta
    ab = adapted_basis(target, W_i, samples=samples, seed=seed)
    V = neighborhood_V(space, S_i, margin)
    Trows = ab.functionals @ ab.Q
    norms = np.array([target.dual_norm(row) for row in Trows])
    scale = norms.max() if len(norms) else 0.0
    slope_cap = None
    if lip_budget is not None and ab.tildeK > 0:
        headroom = lip_budget / ab.tildeK
        if headroom >= F.lip + delta / 2.0:
            slope_cap = headroom
    coords = np.zeros((space.n, m))
    checks = []
    active = []
    sup_dev_fn = 0.0
    for i in range(m):
        TFi = F.values @ Trows[i]
        if norms[i] <= _TINY * max(scale, 1.0):
            coords[:, i] = TFi
            continue
        f_i = scalar_perturb(graph, F, Trows[i], V, delta, short_edge_cap, slope_cap)
        coords[:, i] = f_i
        active.append(i)
        sup_dev_fn = max(sup_dev_fn, float(np.abs(f_i - TFi).max()))
        checks.append(
            scalar_bounds_check(graph, TFi, f_i, V, delta, norms[i], short_edge_cap)
        )
    values = F.values @ ab.P.T + coords @ ab.basis.T
    sigma = LipschitzMap(space, target, values)
    dev = target.norm(sigma.values - F.values)
    info = {
        "piece_size": int(len(S_i)),
        "V_size": int(len(V)),
        "delta": float(delta),
        "margin": float(margin),
        "short_edge_cap": None if short_edge_cap is None else float(short_edge_cap),
        "slope_cap": None if slope_cap is None else float(slope_cap),
        "active_functionals": active,
        "functional_norms": norms.tolist(),
        "sup_dev_scalar": sup_dev_fn,
        "sup_move": float(dev.max()) if len(dev) else 0.0,
        "eq31_max_excess": max((c["eq31_max_excess"] for c in checks), default=0.0),
        "flat_max_excess": max((c["flat_max_excess"] for c in checks), default=0.0),
        "constants": {
            "K_p": ab.K_p,
            "K_d": ab.K_d,
            "K_u": ab.K_u,
            "tildeK": ab.tildeK,
        },
    }
    return sigma, ab, info


def glue(F, pieces, eps=None):
    """Merge per-piece perturbations with compactly supported cutoffs.

    pieces is a list of (S_i, sigma_i, rho0_i). The inflations B(S_i, rho0_i)
    must be pairwise disjoint; each sigma_i must deviate from F by less than
    eps on its inflation when eps is given. The cutoff is 1 on S_i and falls
    to 0 at distance rho0_i / 2.
    """
    space = F.source
    n = space.n
    values = F.values.copy()
    masks = []
    devs = []
    L = F.lip
    rho_min = np.inf
    for S_i, sigma_i, rho0 in pieces:
        if rho0 <= 0:
            raise ValueError("rho0 must be positive")
        S_i = np.asarray(S_i, dtype=int)
        if len(S_i) == 0:
            raise ValueError("empty piece cannot be glued")
        dS = space.D[:, S_i].min(axis=1)
        inflated = dS <= rho0
        for prev in masks:
            if np.any(prev & inflated):
                raise ValueError("inflated pieces overlap; shrink rho0 or the pieces")
        masks.append(inflated)
        dev_vals = F.target.norm(sigma_i.values[inflated] - F.values[inflated])
        dev = float(dev_vals.max()) if len(dev_vals) else 0.0
        if eps is not None and dev >= eps:
            raise ValueError(
                "piece deviates by %g, not below eps=%g on its inflation" % (dev, eps)
            )
        devs.append(dev)
        chi = np.maximum(rho0 / 2.0 - dS, 0.0) / (rho0 / 2.0)
        values = values + chi[:, None] * (sigma_i.values - F.values)
        L = max(L, sigma_i.lip)
        rho_min = min(rho_min, rho0)
    sigma = LipschitzMap(space, F.target, values)
    eps_meas = max(devs, default=0.0)
    bound = L + (2.0 * eps_meas / rho_min if np.isfinite(rho_min) else 0.0) + 1e-9
    if sigma.lip > bound:
        raise RuntimeError(
            "glued map has Lipschitz constant %g above the bound %g" % (sigma.lip, bound)
        )
    info = {
        "L": float(L),
        "eps_measured": float(eps_meas),
        "rho0_min": float(rho_min) if np.isfinite(rho_min) else None,
        "bound": float(bound),
        "lip_sigma": float(sigma.lip),
        "piece_devs": [float(d) for d in devs],
    }
    return sigma, info


def shrink_to_budget(f, L, eps):
    """Scale a map toward zero to buy Lipschitz slack below L.

    Returns g = (L - delta) f / L with delta = eps / (2 L ||f||_inf), so
    Lip g <= L - delta while the values move by eps / (2 L) at most relative
    to ||f||_inf. A map with zero sup norm is returned unchanged.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if L <= 0:
        raise ValueError("budget L must be positive")
    if f.lip > L + 1e-9:
        raise ValueError("Lip f = %g exceeds the budget L = %g" % (f.lip, L))
    sup = float(f.target.norm(f.values).max()) if f.source.n else 0.0
    if sup == 0.0:
        return f, {"delta": 0.0, "sup_move": 0.0}
    delta = eps / (2.0 * L * sup)
    g = LipschitzMap(f.source, f.target, (L - delta) / L * f.values)
    return g, {"delta": float(delta), "sup_move": float(delta / L * sup)}


@dataclass
class PerturbationReport:
    """Measured outcome of one flattening run."""

    lip_sigma: float
    sup_move: float
    content_before: object
    content_after: object
    flat_radius: float
    distortion: float
    parameters: dict
    epshat: float
    chat: object
    eq31_max_excess: float
    flat_max_excess: float
    constants: dict
    pieces: list
    glue_info: object
    shrink_info: object
    discarded: int
    leftover: int
    failure: object

    def to_json(self):
        return {
            "lip_sigma": self.lip_sigma,
            "sup_move": self.sup_move,
            "content_before": self.content_before.to_json() if self.content_before else None,
            "content_after": self.content_after.to_json() if self.content_after else None,
            "content_ratio": self.content_ratio(),
            "flat_radius": self.flat_radius,
            "distortion": self.distortion,
            "parameters": self.parameters,
            "epshat": self.epshat,
            "chat": self.chat,
            "eq31_max_excess": self.eq31_max_excess,
            "flat_max_excess": self.flat_max_excess,
            "constants": self.constants,
            "pieces": self.pieces,
            "glue": self.glue_info,
            "shrink": self.shrink_info,
            "discarded": self.discarded,
            "leftover": self.leftover,
            "failure": self.failure,
        }

    def content_ratio(self):
        if self.content_before is None or self.content_before.value == 0:
            return None
        if self.content_after is None:
            return None
        return self.content_after.value / self.content_before.value


def _norm_rows(target, rows):
    return target.norm(rows)


def _default_fragments(space, S, k=3):
    """Two-point fragments from a small-k neighbor graph restricted to S."""
    S = np.asarray(S, dtype=int)
    if len(S) < 2:
        return []
    sub = space.subset(S)
    g = neighborhood_graph(sub, mode="knn", k=min(k, len(S) - 1))
    frags = []
    for a, b in g.edges:
        frags.append(fragment_from_path(space, [int(S[a]), int(S[b])]))
    return frags


def _piece_projection_slack(space, target, S, sigma_vals, F_vals, piece_of, Ps, max_dist):
    """Max pair slack (|dsigma| - |P dF|) / d over S-pairs within max_dist."""
    S = np.asarray(S, dtype=int)
    worst = 0.0
    for a_pos in range(len(S) - 1):
        i = S[a_pos]
        js = S[a_pos + 1 :]
        dd = space.D[i, js]
        sel = dd <= max_dist
        if not sel.any():
            continue
        js_sel = js[sel]
        dsig = target.norm(sigma_vals[i][None, :] - sigma_vals[js_sel])
        pi = piece_of.get(int(i), -1)
        same = np.array([piece_of.get(int(j), -2) == pi for j in js_sel])
        dF = F_vals[i][None, :] - F_vals[js_sel]
        pflat = np.zeros(len(js_sel))
        if pi >= 0 and same.any():
            P = Ps[pi]
            pflat[same] = target.norm(dF[same] @ P.T)
        slack = (dsig - pflat) / dd[sel]
        worst = max(worst, float(slack.max()))
    return worst


def _flat_radius(space, target, pieces_idx, sigma_vals, F_vals, Ps, kappas):
    """Largest rho such that all same-piece pairs closer than rho are flat."""
    violating = np.inf
    diam = 0.0
    for pc, S_i in enumerate(pieces_idx):
        S_i = np.asarray(S_i, dtype=int)
        P = Ps[pc]
        kappa = kappas[pc]
        for a_pos in range(len(S_i) - 1):
            i = S_i[a_pos]
            js = S_i[a_pos + 1 :]
            dd = space.D[i, js]
            diam = max(diam, float(dd.max()))
            dsig = target.norm(sigma_vals[i][None, :] - sigma_vals[js])
            pflat = target.norm((F_vals[i][None, :] - F_vals[js]) @ P.T)
            bad = dsig > pflat + kappa * dd + 1e-12
            if bad.any():
                violating = min(violating, float(dd[bad].min()))
    if not np.isfinite(violating):
        return diam
    return max(0.0, violating * (1.0 - 1e-9))


def flatten(
    space,
    S,
    F,
    d,
    eps,
    theta=0.9,
    fragments=None,
    M=4,
    delta=None,
    margin=None,
    short_edge_cap=None,
    content_s=None,
    content_delta=None,
    graph=None,
    lip_budget=None,
    samples=512,
    seed=0,
):
    """Run the full flattening pipeline and measure the outcome.

    Fits a tangent field on S, partitions it into pieces with shared frames,
    disjointifies the pieces, perturbs F near each piece, glues, and rescales
    into the Lipschitz budget (tildeK * Lip F unless lip_budget overrides
    it). The report carries measured
    contents at the resolution-coupled scale, the flatness slack, and every
    constant used. Failure modes (piece deviation too large, vanishing
    partition, insufficient content drop) return sigma = F or the candidate
    sigma with the failure recorded, never an exception.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    S = np.asarray(sorted(set(int(i) for i in np.asarray(S, dtype=int).ravel())), dtype=int)
    target = F.target
    m = target.dim
    spacing = space.separation()
    if content_delta is None:
        content_delta = 2.0 * spacing if spacing > 0 else 2.0 * eps
    if content_s is None:
        content_s = float(max(d, 1))
    if margin is None:
        margin = 2.0 * spacing if spacing > 0 else 1.0
    if short_edge_cap is None:
        short_edge_cap = 1.5 * spacing if spacing > 0 else None
    if delta is None:
        delta = min(1.0 - theta, 0.7 * eps)
    params = {
        "d": int(d),
        "eps": float(eps),
        "theta": float(theta),
        "delta": float(delta),
        "margin": float(margin),
        "short_edge_cap": None if short_edge_cap is None else float(short_edge_cap),
        "content_s": float(content_s),
        "content_delta": float(content_delta),
        "M": int(M),
        "lip_budget": None if lip_budget is None else float(lip_budget),
        "samples": int(samples),
        "seed": int(seed),
    }

    def finish(sigma, pieces_idx, Ps, kappas, infos, glue_info, shrink_info,
               discarded, leftover, failure, constants):
        before = greedy_content(F.values[S], content_s, content_delta, target) if len(S) else None
        after = greedy_content(sigma.values[S], content_s, content_delta, target) if len(S) else None
        piece_of = {}
        for pc, S_i in enumerate(pieces_idx):
            for x in S_i:
                piece_of[int(x)] = pc
        epshat = 0.0
        if len(S) >= 2:
            epshat = _piece_projection_slack(
                space, target, S, sigma.values, F.values, piece_of, Ps, content_delta
            )
        chat = None
        if before is not None and before.value > 0 and epshat > 0 and content_s >= d:
            chat = after.value / (epshat ** (content_s - d) * before.value)
        flat_radius = 0.0
        if pieces_idx:
            flat_radius = _flat_radius(space, target, pieces_idx, sigma.values, F.values, Ps, kappas)
        from .corpus import distort_check

        distortion = distort_check(sigma, space)["max"]
        dev = target.norm(sigma.values - F.values)
        report = PerturbationReport(
            lip_sigma=float(sigma.lip),
            sup_move=float(dev.max()) if len(dev) else 0.0,
            content_before=before,
            content_after=after,
            flat_radius=float(flat_radius),
            distortion=float(distortion),
            parameters=params,
            epshat=float(epshat),
            chat=chat,
            eq31_max_excess=max((i["eq31_max_excess"] for i in infos), default=0.0),
            flat_max_excess=max((i["flat_max_excess"] for i in infos), default=0.0),
            constants=constants,
            pieces=infos,
            glue_info=glue_info,
            shrink_info=shrink_info,
            discarded=int(discarded),
            leftover=int(leftover),
            failure=failure,
        )
        if (
            report.failure is None
            and before is not None
            and before.value > 0
            and after.value >= 0.8 * before.value
        ):
            report.failure = "content"
        return sigma, report

    if d >= m or len(S) == 0:
        note = "degenerate" if d >= m and len(S) else None
        return finish(F, [], [], [], [], None, None, 0, 0, note, {})

    if graph is None:
        graph = neighborhood_graph(space)
    if fragments is None:
        fragments = _default_fragments(space, S)
    field = fit_tangent_field(S, F, fragments, d, theta)
    pieces, leftover_idx = partition_by_field(S, field, theta, M)
    if not pieces:
        return finish(F, [], [], [], [], None, None, 0, len(leftover_idx), "partition", {})

    # disjointify: drop points of each piece within 2*rho0 of any other piece
    if len(pieces) > 1:
        dmin = np.inf
        for a in range(len(pieces)):
            for b in range(a + 1, len(pieces)):
                dmin = min(dmin, float(space.D[np.ix_(pieces[a][0], pieces[b][0])].min()))
        rho0 = min(eps, dmin / 2.0)
    else:
        rho0 = eps
    discarded = 0
    kept_pieces = []
    for a, (S_a, W_a) in enumerate(pieces):
        others = [pieces[b][0] for b in range(len(pieces)) if b != a]
        if others:
            other_all = np.concatenate(others)
            dist_other = space.D[np.ix_(S_a, other_all)].min(axis=1)
            keep = dist_other > 2.0 * rho0
            discarded += int((~keep).sum())
            S_a = S_a[keep]
        if len(S_a):
            kept_pieces.append((S_a, W_a))
    if not kept_pieces:
        return finish(F, [], [], [], [], None, None, discarded, len(leftover_idx),
                      "disjointification", {})

    infos = []
    sigmas = []
    Ps = []
    kappas = []
    constants = {}
    for S_a, W_a in kept_pieces:
        sigma_a, ab, info = vector_perturb(
            space,
            F,
            (S_a, W_a),
            theta,
            eps,
            graph=graph,
            margin=margin,
            delta=delta,
            short_edge_cap=short_edge_cap,
            lip_budget=lip_budget,
            samples=samples,
            seed=seed,
        )
        sigmas.append(sigma_a)
        infos.append(info)
        Ps.append(ab.P)
        active_norms = [info["functional_norms"][i] for i in info["active_functionals"]]
        kappas.append(3.0 * delta * float(np.sum(active_norms)))
        for key, val in info["constants"].items():
            constants[key] = max(constants.get(key, 0.0), val)

    pieces_idx = [S_a for S_a, _ in kept_pieces]
    bad = [i for i, inf_ in enumerate(infos) if inf_["sup_move"] >= eps]
    if bad:
        return finish(
            F, pieces_idx, Ps, kappas, infos, None, None, discarded,
            len(leftover_idx), "piece_deviation", constants,
        )

    glue_pieces = [(S_a, sig, rho0) for (S_a, _), sig in zip(kept_pieces, sigmas)]
    sigma_glued, glue_info = glue(F, glue_pieces, eps=eps)

    budget = lip_budget if lip_budget is not None else constants.get("tildeK", 1.0) * F.lip
    shrink_info = None
    sigma_final = sigma_glued
    if budget > 0 and sigma_glued.lip > budget:
        center = sigma_glued.values.mean(axis=0)
        centered = LipschitzMap(space, target, sigma_glued.values - center[None, :])
        lip_raw = centered.lip
        # aim a hair below the budget so rounding in the scale cannot poke over
        want_delta = lip_raw - budget * (1.0 - 1e-12)
        sup_c = float(target.norm(centered.values).max())
        if sup_c > 0 and want_delta > 0:
            # delta = eps/(2 L sup) with L = lip_raw must equal want_delta
            eps_shrink = want_delta * 2.0 * lip_raw * sup_c
            shrunk, shrink_info = shrink_to_budget(centered, lip_raw, eps_shrink)
            sigma_final = LipschitzMap(space, target, shrunk.values + center[None, :])
            shrink_info = dict(shrink_info)
            shrink_info["budget"] = float(budget)
            shrink_info["lip_before"] = float(lip_raw)

    return finish(
        sigma_final, pieces_idx, Ps, kappas, infos, glue_info, shrink_info,
        discarded, len(leftover_idx), None, constants,
    )
