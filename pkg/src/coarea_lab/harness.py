"""Example generators and the acceptance suite."""

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .chains import Chain0, Chain1
from .complex import CubicalComplex
from .cones import A_op, cone_bound, cones_by_level
from .cuts import (CutSchedule, boundary_pieces, crossing_profile, cut_bar, cut_delta,
                   find_admissible_cut, localize_all)
from .geometry import beta, boundary_field, tower_field
from .interpolation import (Decomposition, MuCoefficients, cone_k_bound, interpolate_decomposed)
from .sweep import (FPrime, random_family, sample_points, schedule, threads,
                    verify_bounds, _pmap)


# ---------------------------------------------------------------------------
# tree

TREE_MASS_BOUND = 2 / 3 + 3 * math.sqrt(2)
# the acceptance text prints this bound as 3.90934..., about one less than the formula
# (2/3 + 3 sqrt(2) - 1 = 3.90931); the generated tree is checked against both values
TREE_MASS_PRINTED = 3.90934


def gen_tree(depth, n=2):
    """Truncated ternary tree hanging from the top side of the unit square.

    The root edge drops from (1/2, 1) to (1/2, 1/3). A node at depth k has three children
    one step h = 4^-(k+1) lower, shifted sideways by -a h, b h and +a h with a = 0.5, 0.45
    and b = 0.1, -0.1 on even and odd k. Every edge is at most sqrt(2) h long, sibling
    subtrees are disjoint and no two edges are collinear, so the segment set is already
    canonical. Extra coordinates are zero.
    """
    if not 0 <= depth <= 12:
        raise ValueError("depth must lie in 0..12")
    P = np.array([[0.5, 1 / 3]])
    segs = [np.array([[[0.5, 1 / 3], [0.5, 1.0]]])]
    for k in range(depth):
        h = 0.25 ** (k + 1)
        a, b = (0.5, 0.1) if k % 2 == 0 else (0.45, -0.1)
        off = np.array([[-a * h, -h], [b * h, -h], [a * h, -h]])
        child = (P[:, None, :] + off[None]).reshape(-1, 2)
        # children sit lower, so (child, parent) is the lexicographic orientation on y ties
        segs.append(_oriented(child, np.repeat(P, 3, axis=0)))
        P = child
    seg = np.concatenate(segs)
    if n > 2:
        seg = np.concatenate([seg, np.zeros(seg.shape[:2] + (n - 2,))], axis=2)
    order = np.lexsort(seg.reshape(len(seg), -1).T[::-1])
    return Chain1(seg[order], n=n, canonical=True)


def _oriented(p, q):
    """Segments with the lexicographically smaller endpoint first."""
    swap = (p[:, 0] > q[:, 0]) | ((p[:, 0] == q[:, 0]) & (p[:, 1] > q[:, 1]))
    a = np.where(swap[:, None], q, p)
    b = np.where(swap[:, None], p, q)
    return np.stack([a, b], axis=1)


def tree_leaves(tau):
    """Boundary points off the square's boundary."""
    pts = tau.boundary().points
    xy = pts[:, :2]
    on = np.any((xy <= 1e-12) | (xy >= 1 - 1e-12), axis=1)
    return pts[~on]


def tree_cut(tau, eps, resolution=2048):
    """Lowest s in the widest run with crossings(s) * eps <= mass, and its crossing count."""
    fld = boundary_field(tau.n)
    grid, counts = crossing_profile(tau, fld, eps, resolution)
    ok = counts * eps <= tau.mass()
    ok[0] = False
    edges = np.flatnonzero(np.diff(np.r_[0, ok.astype(int), 0]))
    runs = sorted(zip(edges[::2], edges[1::2]), key=lambda r: (r[0] - r[1], r[0]))
    start, stop = runs[0]
    s = float(grid[(start + stop) // 2])
    rep = fld.crossing_report(tau.segments[:, 0], tau.segments[:, 1], s)
    return s, rep["count"]


# ---------------------------------------------------------------------------
# spiral

class RightSideField:
    """Distance to the side {y_1 = 1} of the square."""

    def dist(self, points):
        return 1.0 - np.atleast_2d(points)[:, 0]


def _clip_square(pts):
    """Pieces of a polyline inside [0,1]^2 (Liang-Barsky per segment)."""
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        t0, t1 = 0.0, 1.0
        for p, q in ((-d[0], a[0]), (d[0], 1 - a[0]), (-d[1], a[1]), (d[1], 1 - a[1])):
            if p == 0:
                if q < 0:
                    t0, t1 = 1.0, 0.0
            elif p < 0:
                t0 = max(t0, q / p)
            else:
                t1 = min(t1, q / p)
        if t1 > t0:
            out.append([a + t0 * d, a + t1 * d])
    return np.array(out).reshape(-1, 2, 2)


def spiral_chain(center, radius=0.2, turns=6, samples_per_turn=48):
    """Two interleaved arms joined at the centre, with legs to the bottom side, clipped."""
    m = int(turns * samples_per_turn)
    th = np.linspace(0, 2 * np.pi * turns, m + 1)
    r = radius * th / th[-1]
    arm = np.stack([np.cos(th) * r, np.sin(th) * r], axis=1)
    path = np.concatenate([(-arm)[::-1], arm[1:]]) + center
    start = np.array([path[0, 0] - 0.05, 0.0])
    end = np.array([path[-1, 0] + 0.05, 0.0])
    path = np.concatenate([[start], path, [end]])
    return Chain1(_clip_square(path), n=2)


def gen_spiral(turns=6, speed=0.5, radius=0.2, samples=41):
    """Family x -> spiral centred at (1/2 + speed x, 1/2), x sampled on [0, 1]."""
    if turns < 2:
        raise ValueError("need at least two turns")
    xs = np.linspace(0, 1, samples)
    return xs, [spiral_chain(np.array([0.5 + speed * x, 0.5]), radius, turns) for x in xs]


def spiral_components(turns=6, speed=0.5, radius=0.2, samples=41, eps=0.5, resolution=4096):
    """Admissible cut levels per x, split into runs below and above the centre's level.

    Levels s measure distance to the right side, s in (0, eps). The spiral centre sits at
    level 1/2 - speed x; runs below it are "left", runs above it "right". The gap is the
    distance from the centre level to the nearest admissible s.
    """
    xs, fam = gen_spiral(turns, speed, radius, samples)
    fld = RightSideField()
    rows = []
    for x, tau in zip(xs, fam):
        grid, counts = crossing_profile(tau, fld, eps, resolution)
        ok = counts * eps <= tau.mass()
        sc = 0.5 - speed * x
        edges = np.flatnonzero(np.diff(np.r_[0, ok.astype(int), 0]))
        comps = []
        for a, b in zip(edges[::2], edges[1::2]):
            lo, hi = float(grid[a]), float(grid[b - 1])
            comps.append({"lo": lo, "hi": hi, "side": "left" if hi < sc else ("right" if lo > sc else "both")})
        adm = grid[ok]
        gap = float(np.min(np.abs(adm - sc))) if len(adm) else float("inf")
        rows.append({"x": float(x), "center_level": sc, "components": comps, "gap": gap,
                     "sides": sorted({c["side"] for c in comps})})
    first, last = rows[0], rows[-1]
    obstructed = (first["sides"] == ["left"] and last["sides"] == ["right"]
                  and all("both" not in r["sides"] for r in rows) and min(r["gap"] for r in rows) > 0)
    return {"rows": rows, "obstructed": bool(obstructed), "min_gap": min(r["gap"] for r in rows)}


# ---------------------------------------------------------------------------
# random instances

def random_chain(rng, n, segments):
    """Random polyline in the cube with both endpoints on faces."""
    pts = rng.random((segments + 1, n))
    for e in (0, -1):
        pts[e, rng.integers(n)] = float(rng.integers(2))
    return Chain1.polyline(pts)


def random_face_chain(rng, tower, segments=4):
    """Random polyline inside one facet, some vertices snapped to deeper levels."""
    n = tower.n
    c, side = int(rng.integers(n)), float(rng.integers(2))
    pts = rng.random((segments + 1, n))
    pts[:, c] = side
    for i in range(len(pts)):
        if rng.random() < 0.4:
            N = tower.grid(min(int(rng.integers(2, n)), n - 2))
            free = [a for a in range(n) if a != c]
            for a in rng.choice(free, size=int(rng.integers(1, n - 1)), replace=False):
                pts[i, a] = np.round(pts[i, a] * N) / N
    return Chain1.polyline(pts)


def cut_schedule(tau, tower, q, rng, levels=None):
    """q admissible cuts per level with crossings kept off every earlier level set."""
    K = tower.n - 2 if levels is None else levels
    S, cert, avoid = np.zeros((K, q)), np.zeros((K, q), dtype=int), []
    for l in range(1, K + 1):
        vals = []
        for _ in range(q):
            r = find_admissible_cut(tau, l, tower, rng_seed=rng, pick="random", avoid=avoid)
            vals.append((r.s, r.count))
            avoid.append((tower_field(tower, l), r.s))
        vals.sort(reverse=True)
        S[l - 1] = [v[0] for v in vals]
        cert[l - 1] = [v[1] for v in vals]
    return CutSchedule(S, cert)


# ---------------------------------------------------------------------------
# acceptance suite

@dataclass
class Outcome:
    criterion: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.criterion}: {self.name} ({self.seconds:.2f}s)"


def _timed(fn):
    def wrap(cfg):
        t = time.perf_counter()
        out = fn(cfg)
        out.seconds = time.perf_counter() - t
        return out
    wrap.__name__ = fn.__name__
    return wrap


@_timed
def check_tree(cfg):
    t = time.perf_counter()
    tau = gen_tree(12)
    dt = time.perf_counter() - t
    m = tau.mass()
    leaves = len(tree_leaves(tau))
    ok = m <= min(TREE_MASS_BOUND, TREE_MASS_PRINTED) + 1e-9 and leaves == 3 ** 12 and dt < 1.0
    return Outcome(1, "tree mass and leaf count", ok,
                   {"mass": m, "bound": TREE_MASS_BOUND, "printed_bound": TREE_MASS_PRINTED,
                    "leaves": leaves, "build_seconds": dt})


@_timed
def check_coarea(cfg):
    sched = schedule(4, cfg.get("p", 16), cfg.get("alpha", 0.3))
    T = sched.tower()
    rng = np.random.default_rng(cfg.get("seed", 0))
    fails, worst = 0, math.inf
    for _ in range(cfg.get("chains", 200)):
        tau = random_chain(rng, 4, int(rng.integers(1, 51)))
        m = tau.mass()
        for l in (1, 2):
            r = find_admissible_cut(tau, l, T, rng_seed=rng)
            if not r.count * T.eps[l - 1] <= m:
                fails += 1
            worst = min(worst, m - r.count * T.eps[l - 1])
    return Outcome(2, "admissible coarea cuts", fails == 0, {"failures": fails, "min_slack": worst})


@_timed
def check_boundary(cfg):
    rng = np.random.default_rng(cfg.get("seed", 0) + 3)
    fails = 0
    per = cfg.get("instances", 200) // 2
    for n in (4, 5):
        T = schedule(n, cfg.get("p", 16), cfg.get("alpha", 0.3)).tower()
        for _ in range(per):
            tau = random_chain(rng, n, int(rng.integers(1, 12)))
            s = list(cut_schedule(tau, T, 1, rng).s[:, 0])
            bar = cut_bar(tau, s, T)
            total = Chain0(np.zeros((0, n)))
            for piece in boundary_pieces(tau, s, T):
                total = total + piece
            if not total.equals(bar.boundary()):
                fails += 1
    return Outcome(3, "boundary decomposition", fails == 0, {"failures": fails, "instances": 2 * per})


def _sum(chains, n):
    parts = [c.segments for c in chains if not c.is_zero()]
    return Chain1(np.concatenate(parts), n=n) if parts else Chain1.zero(n)


@_timed
def check_telescoping(cfg):
    T = schedule(4, cfg.get("p", 16), cfg.get("alpha", 0.3)).tower()
    rng = np.random.default_rng(cfg.get("seed", 0) + 4)
    fails, checks = 0, 0
    for _ in range(cfg.get("instances", 30)):
        q = int(rng.integers(1, 4))
        tau = random_chain(rng, 4, int(rng.integers(2, 10)))
        sch = cut_schedule(tau, T, q, rng)
        shells = {iv: cut_delta(tau, sch, iv, T) for iv in itertools.product(range(1, q + 1), repeat=2)}
        for j in shells:
            parts = [shells[i] for i in shells if all(a <= b for a, b in zip(i, j))]
            bar = cut_bar(tau, [sch.value(1, j[0]), sch.value(2, j[1])], T)
            m = sum(p.mass() for p in parts)
            checks += 1
            if not _sum(parts, 4).equals(bar) or abs(m - bar.mass()) > 1e-9 * max(1, m):
                fails += 1
        for iv, ch in shells.items():
            if ch.is_zero() or all(i == 1 for i in iv):
                continue
            full = localize_all(ch, iv, T)
            checks += 1
            if not _sum(full.values(), 4).equals(ch) or abs(sum(c.mass() for c in full.values()) - ch.mass()) > 1e-9:
                fails += 1
            if iv[0] >= 2 and iv[1] >= 2:
                coarse = localize_all(ch, (iv[0], 1), T)
                for d1, c1 in coarse.items():
                    fine = [c for d, c in full.items() if d[0] == d1[0]]
                    checks += 1
                    if not _sum(fine, 4).equals(c1):
                        fails += 1
    return Outcome(4, "telescoping and localization", fails == 0, {"failures": fails, "checks": checks})


@_timed
def check_cones(cfg):
    T = schedule(4, cfg.get("p", 16), cfg.get("alpha", 0.3)).tower()
    rng = np.random.default_rng(cfg.get("seed", 0) + 5)
    off, over = 0, 0
    for _ in range(cfg.get("instances", 100)):
        eta = random_face_chain(rng, T, int(rng.integers(1, 6)))
        bd = A_op(eta, T).boundary()
        off += sum(1 for p in bd.points if not T.is_center(p, 1e-9))
        for l, c in cones_by_level(eta, T).items():
            if c.mass() > cone_bound(eta, l, T):
                over += 1
    return Outcome(5, "cone transfer", off == 0 and over == 0, {"off_center": off, "over_bound": over})


@_timed
def check_interpolation(cfg):
    T = schedule(4, cfg.get("p", 16), cfg.get("alpha", 0.3)).tower()
    rng = np.random.default_rng(cfg.get("seed", 0) + 6)
    b = beta(T)
    thr_fail, mass_fail, cone_fail, draws = 0, 0, 0, 0
    per = cfg.get("draws", 100)
    inst = cfg.get("instances", 5)
    for _ in range(inst):
        q = int(rng.integers(2, 4))
        tau = random_chain(rng, 4, int(rng.integers(2, 8)))
        sch = cut_schedule(tau, T, q, rng)
        dec = Decomposition(tau, sch, T)
        for i0 in itertools.product(range(1, q + 1), repeat=2):
            if not interpolate_decomposed(dec, MuCoefficients.threshold(q, i0)).total.equals(dec.direct_A(i0)):
                thr_fail += 1
        tol = 1e-6 * tau.mass()
        tables = {k: dec.mass_table(k) for k in (1, 2)}
        for d in range(per // inst):
            mu = MuCoefficients.random(q, seed=int(rng.integers(1 << 30)))
            res = interpolate_decomposed(dec, mu)
            draws += 1
            if res.C.mass() > (1 + b) * tau.mass() + tol:
                mass_fail += 1
            for k in (1, 2):
                if res.cones[k].mass() > cone_k_bound(tau, sch, mu, k, T, dec=dec, table=tables[k]) + tol:
                    cone_fail += 1
    ok = thr_fail == 0 and mass_fail == 0 and cone_fail == 0
    return Outcome(6, "interpolation certificates", ok,
                   {"threshold_failures": thr_fail, "mass_failures": mass_fail,
                    "cone_failures": cone_fail, "draws": draws})


def _extension_stats(d, sched, seed, points, rays):
    X = CubicalComplex.cube(d)
    fam = random_family(X, sched.n, sched, seed=seed).validate()
    fp = FPrime(fam, sched, seed=seed).build()
    rng = np.random.default_rng(seed)
    count_fail, thr_fail, slack, mono, mismatch = 0, 0, math.inf, -math.inf, 0.0
    for x in sample_points(X, rng, points):
        pc = fp.certify_point(x)
        count_fail += pc.count > pc.dim
        thr_fail += not pc.threshold_ok
        slack = min(slack, min(pc.slack_b))
    for cell in X.cells:
        if not cell[1]:
            continue
        for _ in range(rays):
            x = sample_points(CubicalComplex(d, 1, [cell]), rng, 1, dims=[len(cell[1])])[0]
            w, m = fp.g_monotonicity(cell, x)
            mono, mismatch = max(mono, w), max(mismatch, m)
    return {"d": d, "count_failures": int(count_fail), "threshold_failures": int(thr_fail),
            "min_slack_b": slack, "max_g_increase": mono, "closed_form_mismatch": mismatch}


@_timed
def check_extension(cfg):
    sched = schedule(4, cfg.get("p", 16), cfg.get("alpha", 0.3))
    seed = cfg.get("seed", 0)
    stats = _pmap(lambda d: _extension_stats(d, sched, seed + d, cfg.get("points", 1000), cfg.get("rays", 4)),
                  cfg.get("dims", (1, 2, 3)))
    ok = all(s["count_failures"] == 0 and s["threshold_failures"] == 0 and s["min_slack_b"] >= -1e-9
             and s["max_g_increase"] <= 1e-9 for s in stats)
    return Outcome(7, "inductive extension certificates", ok, {"complexes": stats})


@_timed
def check_final_bounds(cfg):
    reports = {}
    ok = True
    for p in cfg.get("ps", (16, 81)):
        sched = schedule(4, p, cfg.get("alpha", 0.3))
        X = CubicalComplex.cube(2)
        fam = random_family(X, 4, sched, seed=cfg.get("seed", 0)).validate()
        fp = FPrime(fam, sched, seed=cfg.get("seed", 0)).build()
        rng = np.random.default_rng(cfg.get("seed", 0))
        rep = verify_bounds(fp, sample_points(X, rng, cfg.get("points", 100)))
        pts = rep["points"]
        reports[str(p)] = {"ok": rep["ok"], "min_slack_mass": min(r["slack_mass"] for r in pts),
                           "min_slack_boundary": min(r["slack_boundary"] for r in pts),
                           "max_witness": max(r["witness"] for r in pts), "flat_budget": rep["flat_budget"],
                           "C_sigma": rep["constants"]["definition"]["C_sigma"]}
        ok &= rep["ok"]
    return Outcome(8, "final mass and boundary bounds", ok, reports)


@_timed
def check_spiral(cfg):
    res = spiral_components()
    return Outcome(9, "spiral obstruction", res["obstructed"],
                   {"min_gap": res["min_gap"], "x0_sides": res["rows"][0]["sides"],
                    "x1_sides": res["rows"][-1]["sides"]})


@_timed
def check_schedule(cfg):
    gam, inter = [], True
    for p in (16, 64, 256, 1024):
        s = schedule(4, p, 0.3)
        gam.append(s.gamma)
        try:
            s.tower()
        except ValueError:
            inter = False
    ok = all(a > b for a, b in zip(gam, gam[1:])) and inter
    return Outcome(10, "schedule sanity", ok, {"gamma": gam, "interleaved": inter})


CHECKS = {1: check_tree, 2: check_coarea, 3: check_boundary, 4: check_telescoping, 5: check_cones,
          6: check_interpolation, 7: check_extension, 8: check_final_bounds, 9: check_spiral,
          10: check_schedule}

SUITES = {"complex": [10], "chains": [3, 4], "geometry": [3], "cuts": [2, 3, 4], "cones": [5],
          "interpolation": [6], "sweep": [7, 8, 10], "harness": [1, 9], "all": list(CHECKS)}


def run_acceptance(config=None):
    """Run the selected criteria; returns (exit code, report dict)."""
    cfg = dict(config or {})
    suite = cfg.get("suite", "all")
    if suite in SUITES:
        ids = SUITES[suite]
    else:
        try:
            ids = [int(v) for v in str(suite).split(",")]
        except ValueError:
            raise ValueError(f"unknown suite {suite!r}") from None
    outcomes = _pmap(lambda i: CHECKS[i](cfg.get(str(i), cfg)), ids)
    report = {"suite": suite, "threads": threads(),
              "results": [{"criterion": o.criterion, "name": o.name, "passed": o.passed,
                           "seconds": o.seconds, "detail": o.detail} for o in outcomes]}
    return (0 if all(o.passed for o in outcomes) else 1), report, outcomes


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if v == math.inf:
        return "inf"
    return str(v)
