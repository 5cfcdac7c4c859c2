"""Mod-2 PL chains: point sets and segment sets with canonical forms."""

import json

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

MERGE_TOL = 1e-9
ZERO_LENGTH = 1e-12


def _clusters(features, tol):
    """Connected components of the graph joining rows closer than tol."""
    m = len(features)
    if m < 2:
        return np.zeros(m, dtype=np.int64)
    pairs = cKDTree(features).query_pairs(tol, output_type="ndarray")
    if not len(pairs):
        return np.arange(m)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
    return connected_components(graph, directed=False)[1]


def _lex_greater(a, b):
    diff = a - b
    first = np.argmax(diff != 0, axis=1)
    return diff[np.arange(len(a)), first] > 0


def _lexsort_rows(x):
    return np.lexsort(x.T[::-1]) if len(x) else np.arange(0)


class Chain0:
    """Finite set of points with mod-2 multiplicity."""

    def __init__(self, points, n=None, canonical=False):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            pts = np.zeros((0, n if n is not None else (pts.shape[-1] if pts.ndim == 2 else 0)))
        elif pts.ndim != 2:
            pts = pts.reshape(len(pts), -1)
        self.points = pts if canonical else self._canonical(pts)

    @staticmethod
    def _canonical(pts):
        if len(pts) == 0:
            return pts
        # exact duplicates first; clustering then runs on distinct points weighted by multiplicity
        srt = pts[_lexsort_rows(pts)]
        first = np.r_[True, np.any(srt[1:] != srt[:-1], axis=1)]
        uniq = srt[first]
        mult = np.diff(np.r_[np.flatnonzero(first), len(srt)])
        labels = _clusters(uniq, MERGE_TOL)
        order = np.argsort(labels, kind="stable")
        labels_sorted = labels[order]
        starts = np.flatnonzero(np.r_[True, labels_sorted[1:] != labels_sorted[:-1]])
        parity = np.add.reduceat(mult[order], starts) % 2
        out = uniq[order[starts[parity == 1]]]
        return out[_lexsort_rows(out)]

    @property
    def n(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def mass(self):
        return float(len(self.points))

    def __add__(self, other):
        if not len(other):
            return self
        if not len(self):
            return other
        return Chain0(np.vstack([self.points, other.points]))

    def is_zero(self):
        return len(self.points) == 0

    def equals(self, other, tol=MERGE_TOL):
        return (self + other).is_zero()

    def select(self, mask):
        return Chain0(self.points[np.asarray(mask, dtype=bool)], n=self.n, canonical=True)

    def to_json(self):
        return json.dumps({"points": self.points.tolist()})

    @classmethod
    def from_json(cls, text, n=None):
        return cls(json.loads(text)["points"], n=n)

    def __repr__(self):
        return f"Chain0({len(self)} points)"


class Chain1:
    """Finite set of segments in R^n with mod-2 coefficients.

    The canonical form has no zero-length segments and no collinear overlaps; pieces of
    one line are merged by taking the symmetric difference of their parameter intervals.
    """

    def __init__(self, segments, n=None, canonical=False):
        seg = np.asarray(segments, dtype=float)
        if seg.size == 0:
            dim = n if n is not None else (seg.shape[-1] if seg.ndim == 3 else 0)
            seg = np.zeros((0, 2, dim))
        elif seg.ndim != 3:
            seg = seg.reshape(len(seg), 2, -1)
        self.segments = seg if canonical else self._canonical(seg)

    @staticmethod
    def _canonical(seg):
        if len(seg) == 0:
            return seg
        a, b = seg[:, 0], seg[:, 1]
        d = b - a
        length = np.sqrt((d ** 2).sum(axis=1))
        keep = length > ZERO_LENGTH
        seg, a, b, d, length = seg[keep], a[keep], b[keep], d[keep], length[keep]
        if len(seg) == 0:
            return seg
        # orientation and row order fixed first so the result does not depend on input order
        flip = _lex_greater(a, b)
        seg = np.where(flip[:, None, None], seg[:, ::-1], seg)
        seg = seg[_lexsort_rows(seg.reshape(len(seg), -1))]
        a, b = seg[:, 0], seg[:, 1]
        d = b - a
        length = np.sqrt((d ** 2).sum(axis=1))
        u = d / length[:, None]
        n = seg.shape[2]
        iu = np.triu_indices(n)
        proj = (u[:, :, None] * u[:, None, :])[:, iu[0], iu[1]]
        foot = a - (a * u).sum(axis=1)[:, None] * u
        labels = _clusters(np.hstack([proj, foot]), MERGE_TOL)
        order = np.argsort(labels, kind="stable")
        ls = labels[order]
        starts = np.flatnonzero(np.r_[True, ls[1:] != ls[:-1]])
        ends = np.r_[starts[1:], len(ls)]
        out = []
        singles = order[starts[ends - starts == 1]]
        if len(singles):
            out.append(seg[singles])
        for s0, s1 in zip(starts[ends - starts > 1], ends[ends - starts > 1]):
            out.extend(_xor_line(seg[order[s0:s1]]))
        res = np.concatenate([np.asarray(o).reshape(-1, 2, n) for o in out]) if out else np.zeros((0, 2, n))
        # orient each segment lexicographically and sort
        diff = res[:, 0] - res[:, 1]
        first = np.argmax(diff != 0, axis=1)
        flip = diff[np.arange(len(res)), first] > 0
        res[flip] = res[flip][:, ::-1]
        if len(res):
            res = res[_lexsort_rows(res.reshape(len(res), -1))]
        return res

    @property
    def n(self):
        return self.segments.shape[2]

    def __len__(self):
        return len(self.segments)

    def lengths(self):
        d = self.segments[:, 1] - self.segments[:, 0]
        return np.sqrt((d ** 2).sum(axis=1))

    def mass(self):
        return float(self.lengths().sum())

    def boundary(self):
        return Chain0(self.segments.reshape(-1, self.n), n=self.n)

    def __add__(self, other):
        if not len(other):
            return self
        if not len(self):
            return other
        return Chain1(np.concatenate([self.segments, other.segments]))

    def is_zero(self):
        return len(self.segments) == 0

    def equals(self, other, tol=1e-8):
        """Mod-2 equality up to slivers of total length tol."""
        return (self + other).mass() <= tol

    def map_points(self, f):
        """Image under an affine map given as a function on (m, n) arrays."""
        if not len(self):
            return self
        m = len(self.segments)
        pts = f(self.segments.reshape(-1, self.n)).reshape(m, 2, -1)
        return Chain1(pts)

    def points(self):
        return self.segments.reshape(-1, self.n)

    def bounding_box(self):
        p = self.points()
        return p.min(axis=0), p.max(axis=0)

    def to_json(self):
        return json.dumps({"segments": self.segments.tolist()})

    @classmethod
    def from_json(cls, text, n=None):
        return cls(json.loads(text)["segments"], n=n)

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((0, 2, n)), canonical=True)

    @classmethod
    def polyline(cls, points, closed=False):
        p = np.asarray(points, dtype=float)
        if closed:
            p = np.vstack([p, p[:1]])
        return cls(np.stack([p[:-1], p[1:]], axis=1))

    def __repr__(self):
        return f"Chain1({len(self)} segments, mass={self.mass():.6g})"


def _xor_line(seg):
    """Symmetric difference of collinear segments, reusing original endpoint coordinates."""
    a0 = seg[0, 0]
    u = seg[0, 1] - a0
    u = u / np.linalg.norm(u)
    pts = seg.reshape(-1, seg.shape[2])
    t = (pts - a0) @ u
    order = np.argsort(t, kind="stable")
    t, pts = t[order], pts[order]
    breaks = np.flatnonzero(np.r_[True, np.diff(t) > MERGE_TOL])
    counts = np.diff(np.r_[breaks, len(t)])
    toggles = breaks[counts % 2 == 1]
    reps = pts[toggles]
    out = [np.stack([reps[i], reps[i + 1]]) for i in range(0, len(reps) - 1, 2)]
    return out


def add(a, b):
    return a + b


def boundary(tau):
    return tau.boundary()


def mass(c):
    return c.mass()


def cone(center, base):
    """Segments from center to each base point."""
    base = base if isinstance(base, Chain0) else Chain0(base)
    if base.is_zero():
        return Chain1.zero(len(center))
    c = np.broadcast_to(np.asarray(center, dtype=float), base.points.shape)
    return Chain1(np.stack([c, base.points], axis=1))


# ---------------------------------------------------------------------------
# restriction

class Region:
    """Subset of M described by breakpoints along segments and pointwise membership."""

    def breaks(self, a, b):
        """List (one entry per segment) of parameters in (0, 1) where membership may change."""
        raise NotImplementedError

    def contains(self, points):
        raise NotImplementedError

    def __and__(self, other):
        return AllOf([self, other])

    def __or__(self, other):
        return AnyOf([self, other])

    def __invert__(self):
        return Complement(self)


class Whole(Region):
    def breaks(self, a, b):
        return [np.zeros(0)] * len(a)

    def contains(self, points):
        return np.ones(len(points), dtype=bool)


class Level(Region):
    """{dist(., A) > s} (``above=True``) or {dist(., A) <= s}."""

    def __init__(self, field, s, above=True):
        self.field, self.s, self.above = field, float(s), above

    def breaks(self, a, b):
        return self.field.crossings_batch(a, b, self.s)

    def contains(self, points):
        d = self.field.dist(points)
        return d > self.s if self.above else d <= self.s


class Shell(Region):
    """{lo < dist(., A) <= hi}; hi may be infinite."""

    def __init__(self, field, lo, hi=np.inf):
        self.field, self.lo, self.hi = field, float(lo), float(hi)

    def breaks(self, a, b):
        out = self.field.crossings_batch(a, b, self.lo)
        if np.isfinite(self.hi):
            out = [np.concatenate([x, y]) for x, y in zip(out, self.field.crossings_batch(a, b, self.hi))]
        return out

    def contains(self, points):
        d = self.field.dist(points)
        return (d > self.lo) & (d <= self.hi)


class AllOf(Region):
    def __init__(self, parts):
        self.parts = list(parts)

    def breaks(self, a, b):
        acc = [np.zeros(0)] * len(a)
        for p in self.parts:
            acc = [np.concatenate([x, y]) for x, y in zip(acc, p.breaks(a, b))]
        return acc

    def contains(self, points):
        ok = np.ones(len(points), dtype=bool)
        for p in self.parts:
            ok &= p.contains(points)
        return ok


class AnyOf(AllOf):
    def contains(self, points):
        ok = np.zeros(len(points), dtype=bool)
        for p in self.parts:
            ok |= p.contains(points)
        return ok


class Complement(Region):
    def __init__(self, inner):
        self.inner = inner

    def breaks(self, a, b):
        return self.inner.breaks(a, b)

    def contains(self, points):
        return ~self.inner.contains(points)


def split_pieces(tau, breaks):
    """Split segments at the given parameters; returns (piece segments, midpoints, owner index)."""
    a, b = tau.segments[:, 0], tau.segments[:, 1]
    seg_idx, t0s, t1s = [], [], []
    for i, t in enumerate(breaks):
        t = np.unique(np.clip(np.asarray(t, dtype=float), 0.0, 1.0))
        t = t[(t > 0) & (t < 1)]
        ts = np.r_[0.0, t, 1.0]
        seg_idx.append(np.full(len(ts) - 1, i))
        t0s.append(ts[:-1])
        t1s.append(ts[1:])
    if not seg_idx:
        n = tau.n
        return np.zeros((0, 2, n)), np.zeros((0, n)), np.zeros(0, dtype=int)
    idx = np.concatenate(seg_idx)
    t0, t1 = np.concatenate(t0s), np.concatenate(t1s)
    A, B = a[idx], b[idx]
    D = B - A
    p0 = np.where((t0 == 0.0)[:, None], A, A + t0[:, None] * D)
    p1 = np.where((t1 == 1.0)[:, None], B, A + t1[:, None] * D)
    mids = A + (0.5 * (t0 + t1))[:, None] * D
    return np.stack([p0, p1], axis=1), mids, idx


def restrict(tau, region, tol=None):
    """Part of tau inside the region (pieces classified at their midpoints)."""
    if tau.is_zero():
        return tau
    pieces, mids, _ = split_pieces(tau, region.breaks(tau.segments[:, 0], tau.segments[:, 1]))
    keep = region.contains(mids)
    return Chain1(pieces[keep], n=tau.n)


def partition(tau, breaks, labels):
    """Split tau into labelled parts.

    ``breaks(a, b)`` gives per-segment split parameters and ``labels(points)`` a list of
    hashable labels; returns a dict label -> Chain1.
    """
    if tau.is_zero():
        return {}
    pieces, mids, _ = split_pieces(tau, breaks(tau.segments[:, 0], tau.segments[:, 1]))
    labs = labels(mids)
    groups = {}
    for i, lab in enumerate(labs):
        groups.setdefault(lab, []).append(i)
    return {lab: Chain1(pieces[ix], n=tau.n) for lab, ix in groups.items()}


def label_breaks(a, b, labels, spacing, tol=1e-12, max_samples=4096):
    """Parameters where a piecewise-constant label changes along each segment.

    Samples every ``spacing`` units of length, then bisects each label change down to
    ``tol`` in length. Several changes inside one sample interval are found one after
    another; a label that leaves and returns between two samples is not seen.
    """
    out = [np.zeros(0) for _ in range(len(a))]
    if not len(a):
        return out
    length = np.linalg.norm(b - a, axis=1)
    counts = np.clip(np.ceil(length / spacing).astype(int) + 1, 2, max_samples)
    seg = np.repeat(np.arange(len(a)), counts)
    t = np.concatenate([np.linspace(0.0, 1.0, c) for c in counts])
    pts = a[seg] + t[:, None] * (b - a)[seg]
    lab = labels(pts)
    same_seg = seg[1:] == seg[:-1]
    differ = np.array([x != y for x, y in zip(lab[1:], lab[:-1])], dtype=bool) & same_seg
    j = np.flatnonzero(differ)
    if not len(j):
        return out
    s = seg[j]
    lo, end = t[j].copy(), t[j + 1].copy()
    lo_lab, end_lab = [lab[k] for k in j], [lab[k + 1] for k in j]
    steps = min(int(np.ceil(np.log2(max(1.0, (length[s] / counts[s]).max() / tol)))) + 1, 60)
    for _ in range(32):
        hi = end.copy()
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            ml = labels(a[s] + mid[:, None] * (b - a)[s])
            same = np.array([x == y for x, y in zip(ml, lo_lab)], dtype=bool)
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        for k, tk in zip(s, 0.5 * (lo + hi)):
            out[k] = np.append(out[k], tk)
        # continue past the break when the label right of it is not yet the sampled one
        hl = labels(a[s] + hi[:, None] * (b - a)[s])
        more = np.array([x != y for x, y in zip(hl, end_lab)], dtype=bool) & (hi < end)
        if not more.any():
            break
        idx = np.flatnonzero(more)
        s, lo, end = s[idx], hi[idx], end[idx]
        lo_lab, end_lab = [hl[i] for i in idx], [end_lab[i] for i in idx]
    return [np.sort(o) for o in out]


def transversal(tau, field, s, tol=1e-9):
    """True iff tau meets {dist = s} only in clean crossings away from segment endpoints."""
    if tau.is_zero():
        return True
    report = field.crossing_report(tau.segments[:, 0], tau.segments[:, 1], s, tol)
    return not report["degenerate"]
