"""Command line experiment runner with machine-readable reports.

Every subcommand writes a JSON report embedding the artifact version and the
full configuration, so identical configs produce bit-identical reports. Exit
status: 0 success, 1 malformed config or precondition failure, 2 assertion
or acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, converse, corpus, figures
from .content import greedy_content, grid_content, packing_lower_bound
from .metric import (
    FiniteMetricSpace,
    LipschitzMap,
    kuratowski_embed,
    load_csv,
    max_epsilon_net,
    save_points_csv,
)
from .normgeom import NormedSpace, unconditional_constant, adapted_basis
from .perturb import flatten
from .tangent import fit_tangent_field, partition_by_field

_NORMS = {"l1": 1.0, "l2": 2.0, "linf": np.inf}


class _Parser(argparse.ArgumentParser):
    # malformed configs exit 1, reserving 2 for failed acceptance checks
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write("%s: error: %s\n" % (self.prog, message))
        sys.exit(1)


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_report(path, command, options, payload):
    options = {k: v for k, v in options.items() if not callable(v)}
    report = {
        "version": __version__,
        "command": command,
        "config": _sanitize(options),
        "report": _sanitize(payload),
    }
    text = json.dumps(report, sort_keys=True, indent=2)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return report


def _load_space(path, p=2.0):
    if not os.path.exists(path):
        raise ValueError("input file %r does not exist" % path)
    return load_csv(path, space=NormedSpace.lp(2, p) if p else None)


def _report_path(out, default_stem):
    if out is None:
        return None
    stem, _ = os.path.splitext(out)
    return stem + ".json"


def _cmd_gen(args):
    params = {}
    if args.kind in ("four_corner", "dust"):
        params["depth"] = args.depth
    if args.kind == "dust":
        params["s"] = args.s
    if args.kind in ("segment", "circle", "lipschitz_graph", "crossing_segments"):
        params["n"] = args.count
    gs = corpus.generate(args.kind, **params)
    if args.out:
        gs.save_csv(args.out)
        if not args.no_figures:
            figures.save_points_figure(
                os.path.splitext(args.out)[0] + ".png", gs.points, title=args.kind
            )
    payload = {
        "kind": gs.kind,
        "n": gs.n,
        "spacing": gs.spacing,
        "provenance": gs.provenance,
        "points_csv": args.out,
    }
    _write_report(_report_path(args.out, args.kind), "gen", vars(args), payload)
    return 0


def _cmd_embed(args):
    space = _load_space(args.set)
    net = max_epsilon_net(space, args.eps)
    F = kuratowski_embed(space, net)
    slack = np.inf
    for i in range(space.n - 1):
        img = F.target.norm(F.values[i][None, :] - F.values[i + 1 :])
        slack = min(slack, float((img - space.D[i, i + 1 :]).min()))
    if args.out:
        save_points_csv(args.out, F.values)
    payload = {
        "net_size": len(net),
        "net": [int(i) for i in net],
        "eps": args.eps,
        "lip": F.lip,
        "min_pair_slack": None if space.n < 2 else slack,
        "values_csv": args.out,
    }
    _write_report(_report_path(args.out, "embed"), "embed", vars(args), payload)
    return 0


def _cmd_content(args):
    space = _load_space(args.set)
    pts = space.coords if space.coords is not None else None
    if pts is None:
        raise ValueError("content needs a point cloud CSV with coordinates")
    delta = args.delta if args.delta is not None else 2.0 * space.separation()
    if args.method == "greedy":
        est = greedy_content(pts, args.s, delta, space.space)
    elif args.method == "packing":
        est = packing_lower_bound(pts, args.s, delta, space.space)
    else:
        est = grid_content(pts, args.s, delta)
    if args.out and not args.no_figures and args.method != "grid":
        figures.save_cover_figure(
            os.path.splitext(args.out)[0] + ".png",
            pts,
            est.cover,
            delta,
            est.value,
            title=args.method,
        )
    _write_report(args.out, "content", vars(args), est.to_json())
    return 0


def _cmd_tangent(args):
    space = _load_space(args.set)
    if space.coords is None:
        raise ValueError("tangent needs a point cloud CSV with coordinates")
    target = NormedSpace.lp(space.coords.shape[1], 2)
    F = LipschitzMap(space, target, space.coords)
    S = np.arange(space.n)
    from .perturb import _default_fragments

    frags = _default_fragments(space, S)
    field = fit_tangent_field(S, F, frags, args.d, args.theta)
    pieces, leftover = partition_by_field(S, field, args.theta, args.M)
    payload = {
        "d": args.d,
        "theta": args.theta,
        "violation": field.violation,
        "fragments": len(frags),
        "piece_sizes": [len(p[0]) for p in pieces],
        "leftover": len(leftover),
    }
    _write_report(args.out, "tangent", vars(args), payload)
    return 0


def _cmd_flatten(args):
    space = _load_space(args.set)
    if space.coords is None:
        raise ValueError("flatten needs a point cloud CSV with coordinates")
    if args.embed_eps is not None:
        net = max_epsilon_net(space, args.embed_eps)
        F = kuratowski_embed(space, net)
    else:
        target = NormedSpace.lp(space.coords.shape[1], _NORMS[args.target])
        F = LipschitzMap(space, target, space.coords)
    S = np.arange(space.n)
    sigma, report = flatten(
        space,
        S,
        F,
        args.d,
        args.eps,
        theta=args.theta,
        delta=args.delta,
        content_s=args.s,
        content_delta=args.content_delta,
        samples=args.samples,
        seed=args.seed,
    )
    if args.out and not args.no_figures:
        figures.save_flatten_figure(
            os.path.splitext(args.out)[0] + ".png",
            F.values,
            sigma.values,
            title="flatten d=%d eps=%g" % (args.d, args.eps),
        )
    _write_report(args.out, "flatten", vars(args), report.to_json())
    return 2 if report.failure is not None else 0


def _cmd_converse(args):
    if args.mode == "segment":
        gs = corpus.segment(args.n)
        # stretch [0, 1] onto [-1, 1] so the sample fills the unit ball
        coords = 2.0 * gs.points[:, :1] - 1.0
        space = FiniteMetricSpace.from_coords(coords, space=NormedSpace.lp(1, 2))
        f = LipschitzMap(space, NormedSpace.lp(1, 2), coords)
        content, passes = converse.rect_lower_bound(coords, f, K=args.K, eps=args.eps)
        floor = 0.2
        ok = passes and content.value >= floor
        payload = {
            "mode": "segment",
            "content": content.to_json(),
            "threshold": (1.0 - 0.5) / (4.0 * args.K * 1.0),
            "floor": floor,
            "pass": ok,
        }
        _write_report(args.out, "converse", vars(args), payload)
        return 0 if ok else 2
    gmap = converse.GridMap.from_function(lambda x: x, resolution=args.resolution)
    covered, frac = converse.degree_coverage(gmap, args.eps)
    if args.out and not args.no_figures:
        figures.save_boundary_figure(
            os.path.splitext(args.out)[0] + ".png",
            gmap.boundary_nodes,
            gmap.boundary_values,
            title="identity boundary loop",
        )
    payload = {
        "mode": "ball",
        "covered": covered,
        "covered_fraction": frac,
        "boundary_disp": gmap.boundary_disp,
    }
    _write_report(args.out, "converse", vars(args), payload)
    return 0 if covered else 2


def _verify_checks(quick):
    checks = []

    def add(name, fn):
        checks.append((name, fn))

    def four_corner_exact():
        gs = corpus.four_corner(4)
        delta = np.sqrt(2.0) * 4.0 ** -4
        est = greedy_content(gs.points, 1.0, delta)
        return abs(est.value - np.sqrt(2.0)) < 1e-12, "value=%r" % est.value

    def segment_unit():
        gs = corpus.segment(101)
        est = greedy_content(gs.points, 1.0, 0.05)
        return 0.9 <= est.value <= 1.1, "value=%r" % est.value

    def unconditional_oracle():
        space = NormedSpace.euclidean(2)
        basis = np.column_stack([[1.0, 0.0], [1.0 / np.sqrt(2), 1.0 / np.sqrt(2)]])
        got = unconditional_constant(basis, space, samples=4096, seed=0)
        return abs(got - (1.0 + np.sqrt(2.0))) < 2e-3, "K_u=%r" % got

    def euclidean_budget():
        rng = np.random.default_rng(7)
        W = np.linalg.qr(rng.standard_normal((4, 2)))[0]
        ab = adapted_basis(NormedSpace.euclidean(4), W, samples=256, seed=0)
        return ab.tildeK <= 1.0 + 1e-9, "tildeK=%r" % ab.tildeK

    def kuratowski_circle():
        space = corpus.circle(64).to_space()
        net = max_epsilon_net(space, 0.1)
        F = kuratowski_embed(space, net)
        slack = np.inf
        for i in range(space.n - 1):
            img = F.target.norm(F.values[i][None, :] - F.values[i + 1 :])
            slack = min(slack, float((img - space.D[i, i + 1 :]).min()))
        return F.lip <= 1.0 + 1e-12 and slack >= -0.2, "lip=%r slack=%r" % (F.lip, slack)

    def flatten_four_corner():
        gs = corpus.four_corner(4)
        space = gs.to_space()
        F = LipschitzMap(space, NormedSpace.euclidean(2), gs.points)
        # at depth 4 the arrival values sink by about 0.08, so the move
        # allowance has to sit above that while staying well under diam
        sigma, rep = flatten(space, np.arange(space.n), F, 0, 0.12, samples=128)
        ratio = rep.content_ratio()
        ok = (
            rep.failure is None
            and rep.eq31_max_excess <= 1e-9
            and rep.flat_max_excess <= 1e-9
            and ratio is not None
            and ratio <= 0.8
        )
        return ok, "failure=%r ratio=%r" % (rep.failure, ratio)

    def converse_segment():
        gs = corpus.segment(101)
        # the density precondition wants the sample to fill the unit ball,
        # so stretch [0, 1] onto [-1, 1]
        coords = 2.0 * gs.points[:, :1] - 1.0
        space = FiniteMetricSpace.from_coords(coords, space=NormedSpace.lp(1, 2))
        f = LipschitzMap(space, NormedSpace.lp(1, 2), coords)
        content, passes = converse.rect_lower_bound(coords, f, K=1.0, eps=0.01)
        return passes and content.value >= 0.2, "content=%r" % content.value

    def degree_identity():
        gmap = converse.GridMap.from_function(lambda x: x, resolution=32)
        covered, frac = converse.degree_coverage(gmap, 0.1)
        return covered, "fraction=%r" % frac

    add("four_corner_content_exact", four_corner_exact)
    add("segment_content_unit", segment_unit)
    add("unconditional_constant_oracle", unconditional_oracle)
    add("euclidean_budget_one", euclidean_budget)
    add("kuratowski_circle_slack", kuratowski_circle)
    if not quick:
        add("flatten_four_corner_depth4", flatten_four_corner)
    add("converse_segment_floor", converse_segment)
    add("degree_identity_covered", degree_identity)
    return checks


def _cmd_verify(args):
    results = []
    all_ok = True
    for name, fn in _verify_checks(args.quick):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crash of verify
            ok, detail = False, "error: %s" % exc
        results.append({"name": name, "pass": bool(ok), "detail": detail})
        all_ok = all_ok and ok
    _write_report(args.out, "verify", vars(args), {"checks": results, "pass": all_ok})
    return 0 if all_ok else 2


def _build_parser():
    parser = _Parser(prog="lipflat", description=__doc__)
    parser.add_argument("--version", action="version", version="lipflat " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-o", "--out", default=None, help="output path (report JSON)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        p.add_argument(
            "--threads",
            type=int,
            default=int(os.environ.get("LIPFLAT_THREADS", "1")),
            help="worker cap (recorded; modules are deterministic)",
        )

    p = sub.add_parser("gen", help="generate a corpus point set")
    p.add_argument("kind", choices=sorted(
        ["four_corner", "dust", "segment", "circle", "lipschitz_graph", "crossing_segments"]
    ))
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--count", "--n", dest="count", type=int, default=101)
    p.add_argument("--s", type=float, default=1.5)
    common(p)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("embed", help="greedy net + distance-coordinate embedding")
    p.add_argument("--set", required=True, help="point cloud or matrix CSV")
    p.add_argument("--eps", type=float, required=True)
    common(p)
    p.set_defaults(fn=_cmd_embed)

    p = sub.add_parser("content", help="content estimate at a scale")
    p.add_argument("--set", required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--method", choices=["greedy", "packing", "grid"], default="greedy")
    common(p)
    p.set_defaults(fn=_cmd_content)

    p = sub.add_parser("tangent", help="fit and partition a tangent field")
    p.add_argument("--set", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--M", type=int, default=4)
    common(p)
    p.set_defaults(fn=_cmd_tangent)

    p = sub.add_parser("flatten", help="full flattening pipeline")
    p.add_argument("--set", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--target", choices=sorted(_NORMS), default="l2")
    p.add_argument("--embed-eps", type=float, default=None,
                   help="embed via distance coordinates first")
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--s", type=float, default=None, help="content exponent")
    p.add_argument("--content-delta", type=float, default=None)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(fn=_cmd_flatten)

    p = sub.add_parser("converse", help="rectifiable lower-bound checks")
    p.add_argument("mode", choices=["segment", "ball"])
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--K", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=64)
    common(p)
    p.set_defaults(fn=_cmd_converse)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--quick", action="store_true")
    common(p)
    p.set_defaults(fn=_cmd_verify)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValueError as exc:
        sys.stderr.write("lipflat: %s\n" % exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
