"""End-to-end regularization of a localized family over a cubical complex."""

import json
import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chains import Chain1
from .complex import CubicalComplex, SkeletonTower, TowerError, cell_vertices_sorted, check_interleaving
from .cuts import CutSchedule, find_admissible_cut
from .geometry import homotopy_area, tower_field, tower_stack
from .interpolation import Decomposition, MuCoefficients, _cell_id, interpolate_decomposed


class ScheduleError(ValueError):
    pass


class FamilyParseError(ValueError):
    """Malformed or inconsistent family file; ``where`` names the offending field."""

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


def threads():
    """Worker cap from COAREA_LAB_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("COAREA_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    w = threads()
    if w == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# schedule

COLLAR_CAP = 0.25


def _power_laws(n, p, alpha):
    ap = 2 * alpha / ((n - 1) * (n - 2))
    base = -(n - 1) / n
    rho = [p ** (base - ap * j) for j in range(n - 2)]
    eps = [p ** (base + ap / 3 - ap * j) for j in range(n - 2)]
    eps_bar = [p ** (base + 2 * ap / 3 - ap * j) for j in range(n - 2)]
    return ap, rho, eps, eps_bar


def _interleaved(rho, eps, eps_bar):
    try:
        check_interleaving(rho, eps, eps_bar)
    except TowerError:
        return False
    return True


def p0(n, alpha):
    """Least integer p >= 2 with interleaved coefficients and eps_bar_1 below the collar cap."""
    p = 2
    while True:
        _, rho, eps, eps_bar = _power_laws(n, p, alpha)
        if eps_bar[0] < COLLAR_CAP and _interleaved(rho, eps, eps_bar):
            return p
        p += 1


class Schedule:
    """Cut widths rho_l < eps_l < eps_bar_l for levels 1..n-2 at scale p."""

    def __init__(self, n, p, alpha):
        if n < 3:
            raise ScheduleError("need n >= 3")
        if not 0 < alpha < 1:
            raise ScheduleError("alpha must lie in (0, 1)")
        self.n, self.p, self.alpha = int(n), float(p), float(alpha)
        self.alpha_prime, self.rho, self.eps, self.eps_bar = _power_laws(self.n, self.p, self.alpha)
        self.p0 = p0(self.n, self.alpha)
        if self.p < self.p0:
            raise ScheduleError(f"p={p} below p0={self.p0} for n={n}, alpha={alpha}")
        check_interleaving(self.rho, self.eps, self.eps_bar)
        self._tower = None

    @property
    def beta(self):
        return float(np.prod([1 / (1 - e / eb) for e, eb in zip(self.eps, self.eps_bar)]) - 1)

    @property
    def ratios(self):
        """Measured rho_k / eps_k per level."""
        return [r / e for r, e in zip(self.rho, self.eps)]

    @property
    def cone_factor(self):
        """sum_k k rho_k / eps_k."""
        return float(sum(k * r for k, r in enumerate(self.ratios, start=1)))

    @property
    def gamma(self):
        """beta + sum_k k rho_k / eps_k with the implemented ratios."""
        return self.beta + self.cone_factor

    @property
    def gamma_stated(self):
        """beta + ((n-1)(n-2)/2) p^(-alpha'/2), the closed form with ratio p^(-alpha'/2)."""
        n = self.n
        return self.beta + (n - 1) * (n - 2) / 2 * self.p ** (-self.alpha_prime / 2)

    def coefficients(self):
        """eps_bar_1, eps_1, rho_1, eps_bar_2, ... in decreasing order."""
        out = []
        for l in range(self.n - 2):
            out += [self.eps_bar[l], self.eps[l], self.rho[l]]
        return out

    def tower(self):
        if self._tower is None:
            self._tower = SkeletonTower.from_schedule(
                self.n, self.rho, self.eps, self.eps_bar, {"p": self.p, "alpha": self.alpha})
        return self._tower

    def to_dict(self):
        return {"n": self.n, "p": self.p, "alpha": self.alpha, "alpha_prime": self.alpha_prime,
                "rho": self.rho, "eps": self.eps, "eps_bar": self.eps_bar, "beta": self.beta,
                "gamma": self.gamma, "gamma_stated": self.gamma_stated, "p0": self.p0,
                "rho_over_eps": self.ratios}


def schedule(n, p, alpha):
    return Schedule(n, p, alpha)


# ---------------------------------------------------------------------------
# localized families

def _vkey(v):
    return ",".join(map(str, v[0]))


@dataclass
class LocalizedFamily:
    """Chains at the vertices of X that differ only inside a few small balls.

    ``balls`` is a list of (center, radius); the same family serves every cell.
    """

    X: CubicalComplex
    F: dict
    balls: list
    delta: float
    N: int = 0

    def __post_init__(self):
        self.balls = [(np.asarray(c, dtype=float), float(r)) for c, r in self.balls]
        if not self.N:
            self.N = len(self.balls)

    @property
    def n(self):
        return next(iter(self.F.values())).n

    def validate(self, tol=1e-9):
        """Raise FamilyParseError unless the localization invariants hold."""
        if any(not r > 0 for _, r in self.balls):
            raise FamilyParseError("balls", "radii must be positive")
        if sum(r for _, r in self.balls) >= self.delta:
            raise FamilyParseError("balls", "radius sum must be below delta")
        if len(self.balls) > self.N:
            raise FamilyParseError("balls", "more balls than N")
        for i, (c, r) in enumerate(self.balls):
            for c2, r2 in self.balls[i + 1:]:
                if np.linalg.norm(c - c2) < r + r2:
                    raise FamilyParseError("balls", "balls must be disjoint")
        for v in self.X.vertices():
            if v not in self.F:
                raise FamilyParseError("F", f"missing chain at vertex {_vkey(v)}")
            pts = self.F[v].boundary().points
            if len(pts) and not np.all(np.any((pts <= tol) | (pts >= 1 - tol), axis=1)):
                raise FamilyParseError("F", f"boundary off the cube faces at {_vkey(v)}")
        for cell in self.X.cells:
            vs = self.X.cell_vertices(cell)
            for i, a in enumerate(vs):
                for b in vs[i + 1:]:
                    d = self.F[a] + self.F[b]
                    if not d.is_zero() and not np.all(self.in_balls(d.segments.reshape(-1, self.n), tol)):
                        raise FamilyParseError("F", f"vertices {_vkey(a)} and {_vkey(b)} differ outside the balls")
        return self

    def in_balls(self, points, tol=1e-9):
        pts = np.atleast_2d(points)
        ok = np.zeros(len(pts), dtype=bool)
        for c, r in self.balls:
            ok |= np.linalg.norm(pts - c, axis=1) <= r + tol
        return ok

    def local_eps(self):
        """Largest mass(F(a) + F(b)) over vertex pairs sharing a cell."""
        best = 0.0
        for cell in self.X.cells:
            vs = self.X.cell_vertices(cell)
            for i, a in enumerate(vs):
                for b in vs[i + 1:]:
                    best = max(best, (self.F[a] + self.F[b]).mass())
        return best

    def merged_balls(self, factor=1.0):
        """Balls scaled by ``factor`` and merged until pairwise disjoint."""
        balls = [(c.copy(), r * factor) for c, r in self.balls]
        merged = True
        while merged:
            merged = False
            for i in range(len(balls)):
                for j in range(i + 1, len(balls)):
                    (c1, r1), (c2, r2) = balls[i], balls[j]
                    d = float(np.linalg.norm(c1 - c2))
                    if d < r1 + r2:
                        if d + r2 <= r1:
                            new = (c1, r1)
                        elif d + r1 <= r2:
                            new = (c2, r2)
                        else:
                            R = 0.5 * (d + r1 + r2)
                            new = (c1 + (R - r1) / d * (c2 - c1), R)
                        balls = [b for k, b in enumerate(balls) if k not in (i, j)] + [new]
                        merged = True
                        break
                if merged:
                    break
        return balls

    def to_json(self):
        X = self.X
        top = [[list(c), list(f)] for c, f in X.cells_of_dim(X.dim)]
        return json.dumps({
            "X": {"d": X.d, "q": X.q, "top_cells": top},
            "delta": self.delta, "N": self.N, "n": self.n,
            "balls": [{"center": c.tolist(), "radius": r} for c, r in self.balls],
            "F": [{"vertex": list(v[0]), "segments": self.F[v].segments.tolist()} for v in X.vertices()],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FamilyParseError("json", str(exc)) from None
        if not isinstance(data, dict):
            raise FamilyParseError("json", "top level must be an object")
        for key in ("X", "delta", "balls", "F"):
            if key not in data:
                raise FamilyParseError(key, "missing field")
        try:
            xd = data["X"]
            X = CubicalComplex(int(xd["d"]), int(xd["q"]),
                               [(tuple(c), tuple(f)) for c, f in xd["top_cells"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise FamilyParseError("X", f"bad complex: {exc}") from None
        try:
            balls = [(b["center"], b["radius"]) for b in data["balls"]]
        except (KeyError, TypeError) as exc:
            raise FamilyParseError("balls", f"bad ball: {exc}") from None
        F = {}
        for i, item in enumerate(data["F"]):
            try:
                v = (tuple(int(c) for c in item["vertex"]), ())
                seg = np.asarray(item["segments"], dtype=float)
                n = seg.shape[-1] if seg.size else None
                if seg.size and (seg.ndim != 3 or seg.shape[1] != 2):
                    raise ValueError("segments must be [[p, q], ...]")
                F[v] = Chain1(seg.reshape(-1, 2, n), n=n) if seg.size else None
            except (KeyError, TypeError, ValueError) as exc:
                raise FamilyParseError(f"F[{i}]", str(exc)) from None
        dims = {c.n for c in F.values() if c is not None}
        if not dims and isinstance(data.get("n"), int):
            dims = {data["n"]}
        if len(dims) != 1 or data.get("n", next(iter(dims), None)) not in dims:
            raise FamilyParseError("F", "chains must share one ambient dimension")
        n = dims.pop()
        F = {v: (c if c is not None else Chain1.zero(n)) for v, c in F.items()}
        return cls(X, F, balls, float(data["delta"]), int(data.get("N", 0))).validate()


def delta_bound(sched, X):
    """delta'/(3 n(X)) with delta' = p^(-alpha') rho_{n-2}."""
    dprime = sched.p ** (-sched.alpha_prime) * sched.rho[-1]
    return dprime / (3 * X.max_cells_at_vertex())


def _orth_unit(rng, u):
    w = rng.normal(size=len(u))
    w -= w.dot(u) * u
    return w / np.linalg.norm(w)


def random_family(X, n, sched=None, seed=0, n_balls=2, delta=None, constant=False):
    """Polyline across the cube with vertex-dependent bumps inside small interior balls.

    The base path runs between two facets through points of [0.3, 0.7]^n; each ball
    sits on an interior segment and every vertex replaces the chord through it by a
    two-segment detour in its own direction.
    """
    rng = np.random.default_rng(seed)
    if delta is None:
        if sched is None:
            raise ValueError("need a schedule or delta")
        delta = 0.9 * delta_bound(sched, X)
    inner = 0.3 + 0.4 * rng.random((n_balls + 1, n))
    start, end = rng.random(n), rng.random(n)
    start[rng.integers(n)] = float(rng.integers(2))
    end[rng.integers(n)] = float(rng.integers(2))
    r = delta / (n_balls + 1)
    balls, pieces = [], [[start, inner[0]]]
    for i in range(n_balls):
        a, b = inner[i], inner[i + 1]
        u = (b - a) / np.linalg.norm(b - a)
        c = 0.5 * (a + b)
        balls.append((c, r))
        pieces.append(("ball", i, c - r * u, c + r * u, u))
    pieces.append([inner[-1], end])
    F = {}
    for v in X.vertices():
        vr = np.random.default_rng([seed, 7919] + list(v[0]))
        pts = [start]
        for item in pieces[1:-1]:
            _, i, entry, exit_, u = item
            c = balls[i][0]
            pts.append(entry)
            if not constant:
                pts.append(c + 0.5 * r * _orth_unit(vr, u))
            pts.append(exit_)
        pts += [inner[-1], end]
        F[v] = Chain1.polyline(np.array(pts))
    return LocalizedFamily(X, F, balls, float(delta), n_balls)


# ---------------------------------------------------------------------------
# vertex cuts

def assign_vertex_cuts(fam, tower, seed=0):
    """Admissible (s_1(x), ..., s_{n-2}(x)) per vertex, off the merged ball family."""
    rng = np.random.default_rng(seed)
    K = tower.n - 2
    forbidden = fam.merged_balls(3 * fam.X.max_cells_at_vertex())
    cuts, certs, avoid = {}, {}, []
    for v in fam.X.vertices():
        s, c = [], []
        for l in range(1, K + 1):
            res = find_admissible_cut(fam.F[v], l, tower, forbidden=forbidden, rng_seed=rng,
                                      pick="random", avoid=avoid)
            s.append(res.s)
            c.append(res.count)
            avoid.append((tower_field(tower, l), res.s))
        cuts[v], certs[v] = tuple(s), tuple(c)
    return cuts, certs


# ---------------------------------------------------------------------------
# per-cell records

def _key_sort(a):
    k, prefix, dprefix, D = a
    return (k, prefix, tuple(_cell_id(d) for d in dprefix), _cell_id(D))


def sub_order(i0, q):
    """Transition order of the indices 2..q inside one block."""
    seq = [i0 + 1] + list(range(i0, 1, -1)) + list(range(i0 + 2, q + 1))
    out = []
    for i in seq:
        if 2 <= i <= q and i not in out:
            out.append(i)
    return out


class CellRecord:
    """Cut schedule, anchor decomposition and transition plan of one cell."""

    def __init__(self, X, cell, cuts, fam, tower, tol=1e-6):
        self.cell = cell
        self.dim = len(cell[1])
        self.vertices = X.cell_vertices(cell)
        self.vset = set(self.vertices)
        self.q = len(self.vertices)
        K = tower.n - 2
        self.K = K
        self.order = [cell_vertices_sorted(X, cell, lambda v, j=j: cuts[v][j]) for j in range(K)]
        self.schedule = CutSchedule(np.array([[cuts[v][j] for v in o] for j, o in enumerate(self.order)]))
        self.anchor = self.vertices[0]
        self.dec = Decomposition(fam.F[self.anchor], self.schedule, tower, tol)
        self.tables = {k: self.dec.mass_table(k) for k in range(1, K + 1)}
        q = self.q
        counts = defaultdict(lambda: np.zeros(q, dtype=int))
        for k, tab in self.tables.items():
            for (prefix, dprefix, i), cnt in tab.items():
                for D, c in cnt.items():
                    counts[(k, prefix, dprefix, D)][i - 1] += c
        keys = set(counts)
        for ivec, dvec in self.dec.leaves:
            for k in range(1, K + 1):
                if ivec[k - 1] >= 2:
                    keys.add((k, ivec[:k - 1], dvec[:k - 1], dvec[k - 1]))
        self.counts = dict(counts)
        self.i0 = {a: (int(np.argmin(self.counts[a])) + 1 if a in self.counts else 1) for a in keys}
        self.active = sorted(keys, key=_key_sort) if q > 1 else []
        self.position = {}
        for b, a in enumerate(self.active):
            for idx, i in enumerate(sub_order(self.i0[a], q)):
                self.position[(a, i)] = b * (q - 1) + idx + 1
        self.n_active = len(self.active) * (q - 1)
        self.N0 = self.n_active + 1

    def target(self, a, i):
        return 1.0 if i <= self.i0.get(a, 1) else 0.0

    def summary(self):
        return {"cell": [list(self.cell[0]), list(self.cell[1])], "q": self.q,
                "s": self.schedule.s.tolist(), "anchor": list(self.anchor[0]),
                "active": len(self.active), "N0": self.N0, "leaves": len(self.dec.leaves),
                "jumps": self.dec.jumps}


@dataclass
class FPrimeEval:
    x: np.ndarray
    cell: tuple
    chain: Chain1
    e: Chain1
    A: Chain1
    interp: object
    mass_e: float = 0.0


@dataclass
class PointCert:
    x: list
    dim: int
    count: int
    threshold_ok: bool
    g: list
    g_bound: list
    slack_b: list
    details: dict = field(default_factory=dict)


class FPrime:
    """Inductive construction of mu(x) and F'(x) over the skeleta of X."""

    def __init__(self, fam, sched, cuts=None, tol=1e-6, seed=0):
        self.fam, self.sched = fam, sched
        self.X = fam.X
        self.tower = sched.tower()
        self.tol = tol
        if cuts is None:
            cuts, self.certificates = assign_vertex_cuts(fam, self.tower, seed)
        else:
            self.certificates = {}
        self.cuts = cuts
        self.records = {}
        self.levels_done = -1
        self.stack = tower_stack(self.tower, self.tower.n - 2)
        self._w1 = {}

    # construction ---------------------------------------------------------
    def _build(self, cells):
        recs = _pmap(lambda c: CellRecord(self.X, c, self.cuts, self.fam, self.tower, self.tol), cells)
        for c, r in zip(cells, recs):
            self.records[c] = r

    def base_case(self):
        self._build(self.X.cells_of_dim(0))
        self.levels_done = 0
        return self

    def extend_skeleton(self, l):
        if self.levels_done != l - 1:
            raise RuntimeError("skeleta must be extended in order")
        self._build(self.X.cells_of_dim(l))
        self.levels_done = l
        return self

    def build(self):
        self.base_case()
        for l in range(1, self.X.dim + 1):
            self.extend_skeleton(l)
        return self

    # cone coordinates -----------------------------------------------------
    def cone_coords(self, cell, x):
        """(u, x') with x = c + (1 - u)(x' - c) and x' on the boundary of the cell."""
        lo, hi = self.X.cell_box(cell)
        c = 0.5 * (lo + hi)
        free = list(cell[1])
        if not free:
            return 1.0, None
        half = 0.5 * (hi - lo)[free]
        v = (x - c)[free] / half
        norm = float(np.max(np.abs(v)))
        if norm <= 1e-15:
            return 1.0, None
        xb = c + (x - c) / norm
        j = free[int(np.argmax(np.abs(v)))]
        xb[j] = hi[j] if x[j] > c[j] else lo[j]
        grid = np.round(xb * self.X.q) / self.X.q
        close = np.abs(xb - grid) <= 1e-12
        xb[close] = grid[close]
        return 1.0 - min(norm, 1.0), xb

    # coefficients ---------------------------------------------------------
    def translate(self, rec, E, key):
        """Key of a face E matching a key of the cell, or a constant 0.0 / 1.0."""
        k, ivec, dvec = key
        Ev = set(self.X.cell_vertices(E))
        qE = len(Ev)
        avec = []
        for j in range(k):
            avec.append(1 + sum(1 for v in rec.order[j][:ivec[j] - 1] if v in Ev))
        if any(a > qE for a in avec):
            return 0.0
        i = ivec[-1]
        if i == 1 or rec.order[k - 1][i - 2] not in Ev:
            return 1.0
        dE = tuple(d if a >= 2 else None for d, a in zip(dvec, avec))
        return (k, tuple(avec), dE)

    def mu(self, cell, key, x, memo=None):
        """(value, sources) of mu_cell(k, i_k, D_k) at x in the closed cell."""
        memo = {} if memo is None else memo
        k, ivec, dvec = key
        if ivec[-1] == 1:
            return 1.0, frozenset()
        mk = (cell, key, x.tobytes())
        if mk in memo:
            return memo[mk]
        rec = self.records[cell]
        E = self.X.carrier(x)
        if E != cell:
            tk = self.translate(rec, E, key)
            out = (tk, frozenset()) if isinstance(tk, float) else self.mu(E, tk, x, memo)
            memo[mk] = out
            return out
        if rec.q == 1:
            memo[mk] = (1.0, frozenset())
            return memo[mk]
        u, xb = self.cone_coords(cell, x)
        a = (k, ivec[:-1], dvec[:-1], dvec[-1])
        i = ivec[-1]
        tgt = rec.target(a, i)
        t = u * rec.N0
        m = rec.position.get((a, i))
        if m is None:
            lo, hi, src = rec.n_active, rec.N0, ("reserved", cell)
        else:
            lo, hi, src = m - 1, m, ("blend", cell, key)
        if t >= hi or xb is None:
            out = (tgt, frozenset())
        elif t <= lo:
            out = self.mu(cell, key, xb, memo)
        else:
            v0, s0 = self.mu(cell, key, xb, memo)
            lam = t - lo
            v = (1 - lam) * v0 + lam * tgt
            out = (v, (s0 | {src}) if 0.0 < v < 1.0 else frozenset())
        memo[mk] = out
        return out

    def coefficients(self, cell, x, memo=None):
        """MuCoefficients of the cell evaluated at x."""
        memo = {} if memo is None else memo
        rec = self.records[cell]
        x = np.asarray(x, dtype=float)

        def rule(k, ivec, dvec):
            return self.mu(cell, (k, ivec, dvec), x, memo)[0]

        return MuCoefficients(rec.q, rule)

    def relevant_keys(self, rec):
        return [(k, prefix + (i,), dprefix + (D,))
                for (k, prefix, dprefix, D) in rec.active for i in range(2, rec.q + 1)]

    # certificates ---------------------------------------------------------
    def sources(self, x, memo=None):
        """Distinct origins of fractional coefficients at x (carrier cell and below)."""
        memo = {} if memo is None else memo
        x = np.asarray(x, dtype=float)
        C = self.X.carrier(x)
        rec = self.records[C]
        out = set()
        for key in self.relevant_keys(rec):
            v, s = self.mu(C, key, x, memo)
            out |= s
        if rec.q > 1:
            u, xb = self.cone_coords(C, x)
            if xb is not None:
                out |= self.sources(xb, memo)
            if rec.n_active < u * rec.N0 < rec.N0:
                out.add(("reserved", C))
        return out

    def g_values(self, cell, x, memo=None):
        """g_k(x) = sum of (mu~(i) - mu~(i+1)) times the boundary counts, per level."""
        rec = self.records[cell]
        mu = self.coefficients(cell, x, memo)
        g = [0.0] * rec.K
        for (k, prefix, dprefix, D), cnt in rec.counts.items():
            dv = dprefix + (D,)
            mt = [mu.mu_tilde(k, prefix, dv, i) for i in range(1, rec.q + 2)]
            g[k - 1] += float(sum((mt[i] - mt[i + 1]) * cnt[i] for i in range(rec.q)))
        return g

    def g_bound(self, cell):
        rec = self.records[cell]
        m = self.fam.F[rec.anchor].mass()
        return [k * m / self.tower.eps[k - 1] for k in range(1, rec.K + 1)]

    def threshold_check(self, x, memo=None):
        """Clause check at x for every cell having the carrier of x as a proper face."""
        x = np.asarray(x, dtype=float)
        E = self.X.carrier(x)
        Ev = set(self.X.cell_vertices(E))
        bad = []
        for C, rec in self.records.items():
            if C == E or not Ev <= rec.vset:
                continue
            ix = [max(p + 1 for p, v in enumerate(o) if v in Ev) for o in rec.order]
            for key in self.relevant_keys(rec):
                k, ivec, dvec = key
                v, _ = self.mu(C, key, x, memo)
                if any(ivec[j] > ix[j] for j in range(k)):
                    want = 0.0
                elif rec.order[k - 1][ivec[-1] - 2] not in Ev:
                    want = 1.0
                else:
                    continue
                if v != want:
                    bad.append((C, key, v, want))
        return bad

    def certify_point(self, x):
        x = np.asarray(x, dtype=float)
        memo = {}
        C = self.X.carrier(x)
        count = len(self.sources(x, memo))
        g = self.g_values(C, x, memo)
        gb = self.g_bound(C)
        bad = self.threshold_check(x, memo)
        return PointCert(x.tolist(), len(C[1]), count, not bad, g, gb,
                         [b - v for b, v in zip(gb, g)], {"threshold_failures": len(bad)})

    def g_monotonicity(self, cell, direction_point, h=1e-3, checks=3):
        """Largest increase of each block's g over consecutive t samples along one ray.

        Evaluated in closed form from the boundary values at x'; a few samples are
        cross-checked against the recursive evaluator.
        """
        rec = self.records[cell]
        x = np.asarray(direction_point, dtype=float)
        u, xb = self.cone_coords(cell, x)
        if xb is None or rec.q == 1:
            return 0.0, 0.0
        memo = {}
        lo, hi = self.X.cell_box(cell)
        c = 0.5 * (lo + hi)
        worst, mismatch = -math.inf, 0.0
        t = np.linspace(0, rec.N0, int(round(rec.N0 / h)) + 1)
        for a in rec.active:
            if a not in rec.counts or not np.any(rec.counts[a]):
                continue
            k, prefix, dprefix, D = a
            q = rec.q
            vals = np.ones((q + 2, len(t)))
            for i in range(2, q + 1):
                key = (k, prefix + (i,), dprefix + (D,))
                v0 = self.mu(cell, key, xb, memo)[0]
                m = rec.position[(a, i)]
                lam = np.clip(t - (m - 1), 0, 1)
                vals[i] = (1 - lam) * v0 + lam * rec.target(a, i)
            mt = np.cumprod(vals[1:q + 1], axis=0)
            mt = np.vstack([mt, np.zeros((1, len(t)))])
            cnt = rec.counts[a]
            g = ((mt[:-1] - mt[1:]) * cnt[:, None]).sum(axis=0)
            worst = max(worst, float(np.max(np.diff(g))))
            for tt in np.linspace(0, rec.N0, checks + 2)[1:-1]:
                xp = c + (1 - tt / rec.N0) * (xb - c)
                mu = self.coefficients(cell, xp, memo)
                dv = dprefix + (D,)
                mtd = [mu.mu_tilde(k, prefix, dv, i) for i in range(1, q + 2)]
                gd = sum((mtd[i] - mtd[i + 1]) * cnt[i] for i in range(q))
                j = int(np.argmin(np.abs(t - tt)))
                gc = float(np.interp(tt, t, g)) if abs(t[j] - tt) > 1e-12 else float(g[j])
                mismatch = max(mismatch, abs(gd - gc))
        return (0.0 if worst == -math.inf else worst), mismatch

    # F' ---------------------------------------------------------------------
    def contract(self, chain, factor):
        """Scale each segment toward the centre of the ball holding its midpoint."""
        if chain.is_zero() or factor == 1.0:
            return chain
        seg = chain.segments.copy()
        mids = seg.mean(axis=1)
        centers = np.array([c for c, _ in self.fam.balls])
        radii = np.array([r for _, r in self.fam.balls])
        d = np.linalg.norm(mids[:, None, :] - centers[None], axis=2)
        idx = np.argmin(d, axis=1)
        if np.any(d[np.arange(len(mids)), idx] > radii[idx] * (1 + 1e-9)):
            raise RuntimeError("e-term segment outside the ball family")
        c = centers[idx][:, None, :]
        seg = c + factor * (seg - c)
        return Chain1(seg, n=chain.n) if factor > 0 else Chain1.zero(chain.n)

    def e_term(self, cell, x, anchor=None):
        """e^y(x) for x in the closed cell with anchor y (default: the cell's anchor)."""
        rec = self.records[cell]
        y = rec.anchor if anchor is None else anchor
        n = self.fam.n
        x = np.asarray(x, dtype=float)
        if rec.dim == 0:
            return self.fam.F[rec.anchor] + self.fam.F[y]
        u, xb = self.cone_coords(cell, x)
        if xb is None:
            return Chain1.zero(n)
        E = self.X.carrier(xb)
        base = self.fam.F[self.records[E].anchor] + self.fam.F[y] + self.e_term(E, xb)
        return self.contract(base, 1.0 - u)

    def evaluate(self, x, cell=None, anchor=None):
        x = np.asarray(x, dtype=float)
        C = self.X.carrier(x) if cell is None else cell
        rec = self.records[C]
        mu = self.coefficients(C, x)
        if anchor is None or anchor == rec.anchor:
            dec = rec.dec
        else:
            dec = Decomposition(self.fam.F[anchor], rec.schedule, self.tower, self.tol)
        res = interpolate_decomposed(dec, mu)
        e = self.e_term(C, x, anchor)
        return FPrimeEval(x, C, res.total + e, e, res.total, res, e.mass())

    def anchor_swap(self, x):
        """(mass of e^y(x) - e^y'(x), local eps) over the other vertices y' of the carrier."""
        x = np.asarray(x, dtype=float)
        C = self.X.carrier(x)
        rec = self.records[C]
        e0 = self.e_term(C, x)
        worst = 0.0
        for y in rec.vertices[1:]:
            worst = max(worst, (e0 + self.e_term(C, x, y)).mass())
        return worst, self.fam.local_eps()

    # flat witness -----------------------------------------------------------
    def retraction_area(self, cell):
        """Ruled-surface area from F(y) to its retraction, y the anchor of the cell."""
        y = self.records[cell].anchor
        if y not in self._w1:
            self._w1[y] = homotopy_area(self.stack, self.fam.F[y])
        return self._w1[y]

    def ball_fill_area(self, loop):
        """Area of the cone from each ball centre over the segments inside it."""
        if loop.is_zero():
            return 0.0
        seg = loop.segments
        mids = seg.mean(axis=1)
        centers = np.array([c for c, _ in self.fam.balls])
        d = np.linalg.norm(mids[:, None, :] - centers[None], axis=2)
        c = centers[np.argmin(d, axis=1)]
        u, v = seg[:, 0] - c, seg[:, 1] - c
        cross2 = (u * u).sum(1) * (v * v).sum(1) - (u * v).sum(1) ** 2
        return float(0.5 * np.sqrt(np.maximum(cross2, 0)).sum())


# ---------------------------------------------------------------------------
# final bounds

def tower_constants(tower, p, alpha):
    """Constants C(n), C'(n) and C(Sigma) realizing each counting step on this tower.

    Each entry of ``steps`` is the smallest constant making that inequality hold; C(n)
    is their maximum. ``sigma_exponent`` selects the exponent 1/(n-1) or (n-1)/n used
    for the rho_1 term.
    """
    n = tower.n
    K = n - 2
    vol = tower.boundary_volume()
    pa = p ** alpha
    steps = {}
    steps["subcells"] = max([tower.recursion_bound(k, l) for k in range(1, K + 1)
                             for l in range(k, K + 1)]) / pa
    h = tower.h(K)
    per_D = max(tower.recursion_bound(k, K) for k in range(1, K + 1)) * 4 * h
    f1 = 2 * n * tower.grid(1) ** (n - 1)
    out = {}
    for name, e in (("stated", 1 / (n - 1)), ("definition", (n - 1) / n)):
        st = dict(steps)
        st["cell_edges"] = per_D / p ** (alpha - e)
        st["skeleton_mass"] = f1 * per_D / (vol * p ** (1 + alpha - e))
        Cn = max(st.values())
        Cp = 5 * K * Cn
        out[name] = {"steps": st, "C_n": Cn, "C_prime_n": Cp, "C_sigma_mass": Cn * (vol + 1),
                     "C_sigma_boundary": Cp * (vol + 1), "C_sigma": Cp * (vol + 1),
                     "mass_exponent": 1 + alpha - e, "boundary_exponent": 1 + alpha}
    return out


def flat_budget(sched, fam):
    """Configured flat tolerance: retraction displacement times (2 + beta) times the
    largest vertex mass, plus the largest ball radius times the largest vertex-pair
    difference mass, doubled for the nested contractions."""
    n = sched.n
    disp = math.sqrt(n) * sched.eps[0] + sum(sched.eps[1:])
    M = max(c.mass() for c in fam.F.values())
    r = max((r for _, r in fam.balls), default=0.0)
    return disp * (2 + sched.beta) * M + 2 * r * fam.X.dim * fam.local_eps()


def sample_points(X, rng, count, dims=None):
    """Uniform points in the relative interiors of randomly chosen cells."""
    cells = [c for c in X.cells if dims is None or len(c[1]) in dims]
    out = []
    for _ in range(count):
        c = cells[rng.integers(len(cells))]
        lo, hi = X.cell_box(c)
        x = lo.copy()
        for a in c[1]:
            x[a] = lo[a] + (hi[a] - lo[a]) * rng.uniform(0.02, 0.98)
        out.append(x)
    return out


def verify_bounds(fp, points, tol=1e-9, constants=None):
    """Mass, boundary-mass and flat-witness checks at each point."""
    sched, fam = fp.sched, fp.fam
    consts = constants or tower_constants(fp.tower, sched.p, sched.alpha)
    c = consts["definition"]
    n = sched.n
    factor = 1 + sched.beta + sched.cone_factor
    mexp = 1 + sched.alpha - 1 / (n - 1)
    budget = flat_budget(sched, fam)
    rows = []
    for x in points:
        ev = fp.evaluate(x)
        rec = fp.records[ev.cell]
        mref = max(fam.F[v].mass() for v in rec.vertices)
        m = ev.chain.mass()
        bm = ev.chain.boundary().mass()
        rhs_m = mref * factor + c["C_sigma"] * sched.p ** mexp
        rhs_m_alt = mref * factor + consts["stated"]["C_sigma"] * sched.p ** mexp
        rhs_b = c["C_sigma"] * sched.p ** (1 + sched.alpha)
        w1 = fp.retraction_area(ev.cell)
        w2 = fp.ball_fill_area(ev.e)
        rows.append({
            "x": [float(v) for v in x], "cell_dim": len(ev.cell[1]), "mass_F": mref, "mass": m,
            "mass_e": ev.mass_e, "boundary_mass": bm, "rhs_mass": rhs_m, "rhs_mass_stated": rhs_m_alt,
            "rhs_boundary": rhs_b, "slack_mass": rhs_m + tol - m, "slack_boundary": rhs_b + tol - bm,
            "witness_retraction": w1, "witness_balls": w2, "witness": w1 + w2,
            "flat_budget": budget, "slack_flat": budget - (w1 + w2),
            "terms": {"C": ev.interp.C.mass(),
                      "cones": {str(k): v.mass() for k, v in ev.interp.cones.items()}},
        })
    ok = all(r["slack_mass"] >= 0 and r["slack_boundary"] >= 0 and r["slack_flat"] >= 0 for r in rows)
    return {"ok": ok, "schedule": sched.to_dict(), "constants": consts, "flat_budget": budget,
            "points": rows}


def report_csv(rows, fields=("p", "x", "mass_F", "mass", "rhs_mass", "boundary_mass", "rhs_boundary",
                             "witness", "flat_budget")):
    """CSV text with one line per evaluation row (x joined by spaces)."""
    lines = [",".join(fields)]
    for r in rows:
        vals = []
        for f in fields:
            v = r.get(f, "")
            vals.append(" ".join(f"{t:.6g}" for t in v) if isinstance(v, list) else
                        (f"{v:.10g}" if isinstance(v, float) else str(v)))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def run(n, p, alpha, fam=None, X=None, seed=0, points=100, tol=1e-6):
    """Build the schedule, family and F', then verify the final bounds at sampled points."""
    sched = schedule(n, p, alpha)
    if fam is None:
        fam = random_family(X or CubicalComplex.cube(1), n, sched, seed)
    fam.validate()
    fp = FPrime(fam, sched, tol=tol, seed=seed).build()
    rng = np.random.default_rng(seed)
    pts = [v for v in (fam.X.coords(c) for c in fam.X.vertices())] + sample_points(fam.X, rng, points)
    rep = verify_bounds(fp, pts)
    rep["cells"] = [r.summary() for r in fp.records.values()]
    return fp, rep
