"""Rescaling coefficients, homothety stacks and the interpolated chains A(tau; s, mu)."""

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .chains import AllOf, Chain1, Level, label_breaks
from .complex import Cell
from .cones import cone_radius, cones_by_level
from .geometry import segment_images, tower_field, tower_stack

BREAK_MERGE = 1e-10


# ---------------------------------------------------------------------------
# coefficients

def _cell_id(cell):
    if cell is None:
        return "*"
    return "%d:%s:%s" % (cell.level, ",".join(map(str, cell.free)), ",".join(map(str, cell.corner)))


def _cell_from_id(text):
    if text == "*":
        return None
    level, free, corner = text.split(":")
    free = tuple(int(v) for v in free.split(",")) if free else ()
    return Cell(int(level), free, tuple(int(v) for v in corner.split(",")))


class MuCoefficients:
    """Coefficients mu(k, i_k, D_k) in [0, 1] with i_k, D_k tuples of length k.

    Values come from ``overrides`` when present, then from ``rule(k, ivec, dvec)``, then
    ``default``. mu is forced to 1 when the last index is 1.
    """

    def __init__(self, q, rule=None, default=1.0, overrides=None):
        self.q = int(q)
        self.rule = rule
        self.default = float(default)
        self.overrides = dict(overrides or {})

    def mu(self, k, ivec, dvec):
        ivec, dvec = tuple(ivec), tuple(dvec)
        if ivec[-1] == 1:
            return 1.0
        key = (k, ivec, dvec)
        if key in self.overrides:
            return float(self.overrides[key])
        if self.rule is not None:
            return float(self.rule(k, ivec, dvec))
        return self.default

    def mu_tilde(self, k, prefix, dvec, i_k):
        """Running product over j = 1..i_k; 1 at i_k = 1 and 0 at i_k = q + 1."""
        if i_k > self.q:
            return 0.0
        prefix, dvec = tuple(prefix), tuple(dvec)
        out = 1.0
        for j in range(2, i_k + 1):
            out *= self.mu(k, prefix + (j,), dvec)
        return out

    def set(self, k, ivec, dvec, value):
        if not 0.0 <= value <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        self.overrides[(k, tuple(ivec), tuple(dvec))] = float(value)

    @classmethod
    def ones(cls, q):
        return cls(q)

    @classmethod
    def threshold(cls, q, i0):
        """mu = 1 iff i_j <= i0_j for every j <= k."""
        i0 = tuple(int(v) for v in i0)

        def rule(k, ivec, dvec):
            return 1.0 if all(i <= t for i, t in zip(ivec, i0[:k])) else 0.0

        return cls(q, rule)

    @classmethod
    def random(cls, q, seed=0):
        """Independent uniform draws, reproducible per key."""

        def rule(k, ivec, dvec):
            key = [seed, k] + list(ivec) + [hash(d) & 0xFFFFFFFF for d in dvec]
            return float(np.random.default_rng([abs(v) for v in key]).random())

        return cls(q, rule)

    def to_json(self):
        items = {}
        for (k, ivec, dvec), v in sorted(self.overrides.items(), key=lambda kv: repr(kv[0])):
            level = items.setdefault(str(k), {})
            level.setdefault(",".join(map(str, ivec)), {})["|".join(_cell_id(d) for d in dvec)] = v
        return json.dumps({"q": self.q, "default": self.default, "mu": items}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        out = cls(data["q"], default=data.get("default", 1.0))
        for k, by_i in data.get("mu", {}).items():
            for istr, by_d in by_i.items():
                ivec = tuple(int(v) for v in istr.split(","))
                for dstr, v in by_d.items():
                    out.set(int(k), ivec, tuple(_cell_from_id(t) for t in dstr.split("|")), v)
        return out


def mu_tilde(mu, k, prefix, dvec, i_k):
    return mu.mu_tilde(k, prefix, dvec, i_k)


# ---------------------------------------------------------------------------
# homotheties

@dataclass
class HomothetyStack:
    """Composite T = T~_1 o ... o T~_K of homotheties centred at cell centres."""

    centers: list
    ratios: list

    def affine(self):
        """(r, b) with T(x) = r x + b."""
        r, b = 1.0, 0.0
        for c, m in zip(reversed(self.centers), reversed(self.ratios)):
            if c is None:
                continue
            r, b = m * r, c + m * (b - c)
        return r, b

    def apply(self, points):
        r, b = self.affine()
        return r * np.atleast_2d(points) + b

    def push(self, chain):
        r, b = self.affine()
        if r == 0.0 or chain.is_zero():
            return Chain1.zero(chain.n)
        return Chain1(r * chain.segments + b, n=chain.n)


def homothety_stack(mu, ivec, dvec, tower):
    centers, ratios = [], []
    for k in range(1, len(ivec) + 1):
        d = dvec[k - 1]
        if ivec[k - 1] == 1 or d is None:
            centers.append(None)
            ratios.append(1.0)
        else:
            centers.append(tower.center(d))
            ratios.append(mu.mu_tilde(k, ivec[:k - 1], dvec[:k], ivec[k - 1]))
    return HomothetyStack(centers, ratios)


# ---------------------------------------------------------------------------
# elementary decomposition

def _merge_breaks(exact, extra):
    t = np.unique(np.clip(exact, 0, 1))
    for v in np.sort(extra):
        if not len(t) or np.min(np.abs(t - v)) > BREAK_MERGE:
            t = np.sort(np.r_[t, v])
    return t[(t > 0) & (t < 1)]


class Decomposition:
    """Splits tau into elementary pieces with one shell index and owner per level.

    All pieces are pushed by R_{n-2} through one shared polyline image per original
    segment, with every break forced as a vertex, so sums of leaves telescope exactly.
    """

    def __init__(self, tau, schedule, tower, tol=1e-6):
        self.tau, self.schedule, self.tower, self.tol = tau, schedule, tower, tol
        self.K = schedule.levels
        self.q = schedule.q
        n = tau.n
        self.fields = [tower_field(tower, j) for j in range(1, self.K + 1)]
        self.stack = tower_stack(tower, self.K)
        a, b = tau.segments[:, 0], tau.segments[:, 1]
        m = len(a)
        exact = [[] for _ in range(m)]
        for j, f in enumerate(self.fields, start=1):
            for i in range(1, self.q + 1):
                for seg, t in enumerate(f.crossings_batch(a, b, schedule.value(j, i))):
                    exact[seg].extend(t)
        extra = [[] for _ in range(m)]
        for k in range(1, self.K + 1):
            for seg, t in enumerate(label_breaks(a, b, self._owner_labels(k), self._spacing(k))):
                extra[seg].extend(t)
        self.breaks = [_merge_breaks(np.asarray(e, float), np.asarray(x, float)) for e, x in zip(exact, extra)]

        seg_idx, t0, t1 = [], [], []
        for i, t in enumerate(self.breaks):
            ts = np.r_[0.0, t, 1.0]
            seg_idx.append(np.full(len(ts) - 1, i))
            t0.append(ts[:-1])
            t1.append(ts[1:])
        self.seg = np.concatenate(seg_idx) if m else np.zeros(0, int)
        self.t0 = np.concatenate(t0) if m else np.zeros(0)
        self.t1 = np.concatenate(t1) if m else np.zeros(0)
        mids = a[self.seg] + (0.5 * (self.t0 + self.t1))[:, None] * (b - a)[self.seg]
        self.mids = mids
        npc = len(self.seg)
        self.shell = np.ones((npc, self.K), dtype=int)
        for j, f in enumerate(self.fields):
            d = f.dist(mids)
            for i in range(1, self.q + 1):
                self.shell[:, j] += d <= schedule.value(j + 1, i)
        self.owner = [[None] * self.K for _ in range(npc)]
        for k in range(1, self.K + 1):
            sel = np.flatnonzero((self.shell[:, k - 1] >= 2) & (self.shell[:, k - 1] <= self.q))
            if len(sel):
                own = tower.owners(tower_stack(tower, k).apply(mids[sel]), k)
                for p, o in zip(sel, own):
                    self.owner[p][k - 1] = o
        self.kept = np.all(self.shell <= self.q, axis=1)

        self.images = segment_images(self.stack, a, b, self.breaks, tol, lip=self.stack.lipschitz) if m else []
        segs, piece_of, jumps = [], [], 0
        ptr = 0
        for i, (t, P, ok) in enumerate(self.images):
            npieces = len(self.breaks[i]) + 1
            bounds = np.r_[0.0, self.breaks[i], 1.0]
            pos = np.searchsorted(t, bounds)
            if not np.array_equal(t[pos], bounds):
                raise RuntimeError("forced breaks missing from the image")
            owner_sub = np.repeat(np.arange(ptr, ptr + npieces), np.diff(pos))
            segs.append(np.stack([P[:-1][ok], P[1:][ok]], axis=1))
            piece_of.append(owner_sub[ok])
            jumps += int((~ok).sum())
            ptr += npieces
        self.image_segments = np.concatenate(segs) if segs else np.zeros((0, 2, n))
        self.image_piece = np.concatenate(piece_of) if piece_of else np.zeros(0, int)
        self.jumps = jumps

        self.leaves = defaultdict(list)
        for p in np.flatnonzero(self.kept):
            ivec = tuple(int(v) for v in self.shell[p])
            dvec = tuple(self.owner[p][k] if ivec[k] >= 2 else None for k in range(self.K))
            self.leaves[(ivec, dvec)].append(p)
        self._leaf_cache = {}

    def _spacing(self, k):
        return self.tower.h(k) / (8 * tower_stack(self.tower, k).lipschitz)

    def _owner_labels(self, k):
        f = self.fields[k - 1]
        s1 = self.schedule.value(k, 1)
        Rk = tower_stack(self.tower, k)
        tower = self.tower

        def labels(points):
            out = [None] * len(points)
            sel = np.flatnonzero(f.dist(points) <= s1)
            if len(sel):
                for i, o in zip(sel, tower.owners(Rk.apply(points[sel]), k)):
                    out[i] = o
            return out

        return labels

    # chains -------------------------------------------------------------

    def image_of(self, piece_mask):
        """R_{n-2} image of the pieces selected by a boolean mask."""
        sel = piece_mask[self.image_piece]
        return Chain1(self.image_segments[sel], n=self.tau.n)

    def source_of(self, piece_mask):
        """The selected pieces themselves (before retraction)."""
        a, b = self.tau.segments[:, 0], self.tau.segments[:, 1]
        s = self.seg[piece_mask]
        D = (b - a)[s]
        p0 = a[s] + self.t0[piece_mask][:, None] * D
        p1 = a[s] + self.t1[piece_mask][:, None] * D
        return Chain1(np.stack([p0, p1], axis=1), n=self.tau.n)

    def mask(self, pieces):
        m = np.zeros(len(self.seg), dtype=bool)
        m[list(pieces)] = True
        return m

    def raw_image(self, piece_mask):
        return self.image_segments[piece_mask[self.image_piece]]

    def leaf_raw(self, key):
        return self.raw_image(self.mask(self.leaves[key]))

    def leaf_chain(self, key):
        if key not in self._leaf_cache:
            C = self.image_of(self.mask(self.leaves[key]))
            self._leaf_cache[key] = (C, cones_by_level(C, self.tower))
        return self._leaf_cache[key]

    def direct_cut(self, ivec):
        """C(tau; s_1^{i_1}, ...) from level regions evaluated at piece midpoints."""
        region = AllOf([Level(f, self.schedule.value(j, int(i)), above=True)
                        for j, (f, i) in enumerate(zip(self.fields, ivec), start=1)])
        return self.image_of(region.contains(self.mids))

    def direct_A(self, ivec):
        C = self.direct_cut(ivec)
        parts = [c.segments for c in cones_by_level(C, self.tower).values()]
        return Chain1(np.concatenate([C.segments] + parts), n=self.tau.n)

    def prefix_mask(self, k, prefix, dprefix, i_k):
        """Pieces matching (prefix, dprefix) below level k, shell_k <= i_k, shell 1 above k."""
        m = self.kept.copy()
        for j in range(k - 1):
            m &= self.shell[:, j] == prefix[j]
        if k - 1:
            own = np.array([tuple(o[j] if prefix[j] >= 2 else None for j in range(k - 1)) == tuple(dprefix)
                            for o in self.owner], dtype=bool)
            m &= own
        m &= self.shell[:, k - 1] <= i_k
        for j in range(k, self.K):
            m &= self.shell[:, j] == 1
        return m

    def mass_table(self, k):
        """(prefix, dprefix, i_k) -> Counter of level-k cells holding boundary points in their interior."""
        prefixes = set()
        for ivec, dvec in self.leaves:
            if all(v == 1 for v in ivec[k:]):
                prefixes.add((ivec[:k - 1], dvec[:k - 1]))
        table = {}
        for prefix, dprefix in sorted(prefixes, key=repr):
            for i_k in range(1, self.q + 1):
                C = self.image_of(self.prefix_mask(k, prefix, dprefix, i_k))
                cnt = Counter()
                for p in C.boundary().points:
                    cls = self.tower.cell_of(p)
                    if cls is not None and cls[0] == k:
                        cnt[cls[1]] += 1
                table[(prefix, dprefix, i_k)] = cnt
        return table


# ---------------------------------------------------------------------------
# interpolation

@dataclass
class InterpResult:
    C: Chain1
    cones: dict
    total: Chain1
    jumps: int = 0
    leaves: int = 0
    ratios: dict = field(default_factory=dict)


def interpolate_decomposed(dec, mu):
    n = dec.tau.n
    c_raw, cone_raw = [], {l: [] for l in range(1, n)}
    ratios = {}
    for key in sorted(dec.leaves, key=repr):
        ivec, dvec = key
        T = homothety_stack(mu, ivec, dvec, dec.tower)
        r, b = T.affine()
        ratios[key] = r
        if r == 0.0:
            continue
        Cl, cl = dec.leaf_chain(key)
        c_raw.append(r * dec.leaf_raw(key) + b)
        for l, c in cl.items():
            cone_raw[l].append(r * c.segments + b)

    def chain(parts):
        return Chain1(np.concatenate(parts), n=n) if parts else Chain1.zero(n)

    cones = {l: chain(v) for l, v in cone_raw.items()}
    total = chain(c_raw + [x for v in cone_raw.values() for x in v])
    return InterpResult(chain(c_raw), cones, total, dec.jumps, len(dec.leaves), ratios)


def interpolate(tau, schedule, mu, tower, tol=1e-6):
    """A(tau; s, mu) as an InterpResult (use ``.total`` for the chain)."""
    return interpolate_decomposed(Decomposition(tau, schedule, tower, tol), mu)


def cone_k_interp(tau, schedule, mu, k, tower, tol=1e-6, dec=None):
    dec = dec or Decomposition(tau, schedule, tower, tol)
    return interpolate_decomposed(dec, mu).cones[k]


def cone_k_terms(dec, mu, k, table=None):
    """Per-term (weight, count) pairs of the level-k cone bound; weight is a mu~ difference."""
    table = dec.mass_table(k) if table is None else table
    out = []
    for (prefix, dprefix, i_k), cnt in table.items():
        for cell, c in cnt.items():
            dv = tuple(dprefix) + (cell,)
            w = mu.mu_tilde(k, prefix, dv, i_k) - mu.mu_tilde(k, prefix, dv, i_k + 1)
            out.append((w, c))
    return out


def cone_k_bound(tau, schedule, mu, k, tower, tol=1e-6, dec=None, table=None):
    """rho_k times the mu~-difference weighted boundary counts."""
    dec = dec or Decomposition(tau, schedule, tower, tol)
    return cone_radius(tower, k) * sum(w * c for w, c in cone_k_terms(dec, mu, k, table))


def cone_k_restricted(dec, mu, k):
    """Cone_k summed only over leaves with i_j = 1 for j > k."""
    n = dec.tau.n
    out = Chain1.zero(n)
    for key in sorted(dec.leaves, key=repr):
        ivec, dvec = key
        if any(v != 1 for v in ivec[k:]):
            continue
        T = homothety_stack(mu, ivec, dvec, dec.tower)
        if T.affine()[0] == 0.0:
            continue
        out = out + T.push(dec.leaf_chain(key)[1][k])
    return out
