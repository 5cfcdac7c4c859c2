"""Command line entry point: coarea-lab {gen,cut,interp,sweep,verify,accept}."""

import argparse
import json
import sys

import numpy as np

from . import geometry
from .chains import Chain1
from .complex import CubicalComplex, build_cube_domain
from .cuts import CutSchedule
from .harness import (dumps, gen_spiral, gen_tree, random_chain, run_acceptance, spiral_components,
                      cut_schedule)
from .interpolation import Decomposition, MuCoefficients, cone_k_bound, interpolate_decomposed
from .sweep import (FamilyParseError, FPrime, LocalizedFamily, ScheduleError, random_family,
                    report_csv, sample_points, schedule, verify_bounds)


def _common(p):
    p.add_argument("--n", type=int, default=4, help="ambient dimension")
    p.add_argument("--p", type=float, default=16, help="scale parameter")
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--m", type=int, default=None, help="size parameter (segments, cube dimension, subdivisions)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol-root", type=float, default=geometry.ROOT_TOL)
    p.add_argument("--tol-push", type=float, default=1e-6)
    p.add_argument("--delta", type=float, default=None, help="ball radius budget of generated families")
    p.add_argument("--out", default="-", help="output file, '-' for stdout")


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _read(path):
    with open(path) as fh:
        return fh.read()


def cmd_gen(a):
    if a.kind == "tree":
        text = gen_tree(a.depth, max(a.n, 2)).to_json()
    elif a.kind == "spiral":
        if a.analyze:
            text = dumps(spiral_components(turns=a.turns))
        else:
            xs, fam = gen_spiral(turns=a.turns, samples=a.m or 41)
            text = json.dumps({"x": xs.tolist(), "chains": [json.loads(c.to_json()) for c in fam]})
    elif a.kind == "random":
        rng = np.random.default_rng(a.seed)
        text = random_chain(rng, a.n, a.m or 8).to_json()
    elif a.kind == "family":
        sched = schedule(a.n, a.p, a.alpha)
        X = CubicalComplex.cube(a.m or 1)
        text = random_family(X, a.n, sched, seed=a.seed, delta=a.delta).validate().to_json()
    elif a.kind == "complex":
        text = build_cube_domain(a.n, a.m or 1).to_json()
    else:
        text = schedule(a.n, a.p, a.alpha).tower().to_json()
    _emit(text, a.out)


def cmd_cut(a):
    tau = Chain1.from_json(_read(a.chain))
    T = schedule(tau.n, a.p, a.alpha).tower()
    sch = cut_schedule(tau, T, a.q, np.random.default_rng(a.seed))
    _emit(sch.to_json(), a.out)


def cmd_interp(a):
    tau = Chain1.from_json(_read(a.chain))
    T = schedule(tau.n, a.p, a.alpha).tower()
    sch = CutSchedule.from_json(_read(a.schedule))
    if a.mu:
        mu = MuCoefficients.from_json(_read(a.mu))
    elif a.threshold:
        mu = MuCoefficients.threshold(sch.q, [int(v) for v in a.threshold.split(",")])
    else:
        mu = MuCoefficients.ones(sch.q)
    dec = Decomposition(tau, sch, T, a.tol_push)
    res = interpolate_decomposed(dec, mu)
    out = {"chain": json.loads(res.total.to_json()), "mass": res.total.mass(), "mass_C": res.C.mass(),
           "cones": {str(k): c.mass() for k, c in res.cones.items()},
           "cone_bounds": {str(k): cone_k_bound(tau, sch, mu, k, T, dec=dec) for k in range(1, sch.levels + 1)},
           "jumps": res.jumps, "leaves": res.leaves}
    _emit(dumps(out), a.out)


def _family(a):
    if a.family:
        return LocalizedFamily.from_json(_read(a.family))
    sched = schedule(a.n, a.p, a.alpha)
    return random_family(CubicalComplex.cube(a.m or 1), a.n, sched, seed=a.seed, delta=a.delta).validate()


def cmd_sweep(a):
    fam = _family(a)
    sched = schedule(fam.n, a.p, a.alpha)
    fp = FPrime(fam, sched, tol=a.tol_push, seed=a.seed).build()
    rng = np.random.default_rng(a.seed)
    pts = [fam.X.coords(v) for v in fam.X.vertices()] + sample_points(fam.X, rng, a.points)
    rep = verify_bounds(fp, pts)
    rep["cells"] = [r.summary() for r in fp.records.values()]
    if a.csv:
        rows = [dict(r, p=sched.p) for r in rep["points"]]
        with open(a.csv, "w") as fh:
            fh.write(report_csv(rows))
    _emit(dumps(rep), a.out)
    return 0 if rep["ok"] else 1


def cmd_verify(a):
    fam = _family(a)
    sched = schedule(fam.n, a.p, a.alpha)
    fp = FPrime(fam, sched, tol=a.tol_push, seed=a.seed).build()
    rng = np.random.default_rng(a.seed)
    certs = [fp.certify_point(x) for x in sample_points(fam.X, rng, a.points)]
    mono = []
    for cell in fam.X.cells:
        if cell[1]:
            x = sample_points(CubicalComplex(fam.X.d, fam.X.q, [cell]), rng, 1, dims=[len(cell[1])])[0]
            mono.append(fp.g_monotonicity(cell, x)[0])
    rep = {"points": len(certs),
           "count_failures": sum(c.count > c.dim for c in certs),
           "threshold_failures": sum(not c.threshold_ok for c in certs),
           "min_slack_b": min(min(c.slack_b) for c in certs) if certs else None,
           "max_g_increase": max(mono) if mono else 0.0}
    rep["ok"] = (rep["count_failures"] == 0 and rep["threshold_failures"] == 0
                 and (rep["min_slack_b"] is None or rep["min_slack_b"] >= -1e-9) and rep["max_g_increase"] <= 1e-9)
    _emit(dumps(rep), a.out)
    return 0 if rep["ok"] else 1


def cmd_accept(a):
    code, report, outcomes = run_acceptance({"suite": a.suite, "seed": a.seed})
    for o in outcomes:
        print(o.line(), file=sys.stderr)
    _emit(dumps(report), a.out)
    return code


def build_parser():
    ap = argparse.ArgumentParser(prog="coarea-lab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate example chains, families, complexes")
    g.add_argument("kind", choices=["tree", "spiral", "random", "family", "complex", "tower"])
    g.add_argument("--depth", type=int, default=12)
    g.add_argument("--turns", type=int, default=6)
    g.add_argument("--analyze", action="store_true", help="spiral: emit admissible-set components")
    _common(g)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("cut", help="admissible cut schedule for a chain")
    c.add_argument("--chain", required=True)
    c.add_argument("--q", type=int, default=1, help="cuts per level")
    _common(c)
    c.set_defaults(func=cmd_cut)

    i = sub.add_parser("interp", help="interpolated chain A(tau; s, mu)")
    i.add_argument("--chain", required=True)
    i.add_argument("--schedule", required=True)
    i.add_argument("--mu", default=None)
    i.add_argument("--threshold", default=None, help="comma-separated threshold indices")
    _common(i)
    i.set_defaults(func=cmd_interp)

    for name, fn, text in (("sweep", cmd_sweep, "build F' and check the final bounds"),
                           ("verify", cmd_verify, "certify the inductive extension")):
        s = sub.add_parser(name, help=text)
        if name == "sweep":
            s.add_argument("action", nargs="?", choices=["run"], default="run")
            s.add_argument("--csv", default=None, help="also write per-point rows as CSV")
        s.add_argument("--family", default=None)
        s.add_argument("--points", type=int, default=100)
        _common(s)
        s.set_defaults(func=fn)

    acc = sub.add_parser("accept", help="run the acceptance suite")
    acc.add_argument("--suite", default="all")
    _common(acc)
    acc.set_defaults(func=cmd_accept)
    return ap


def main(argv=None):
    a = build_parser().parse_args(argv)
    geometry.ROOT_TOL = a.tol_root
    try:
        code = a.func(a)
    except FamilyParseError as exc:
        print(json.dumps({"error": "family", "where": exc.where, "message": str(exc)}), file=sys.stderr)
        return 2
    except (ScheduleError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
