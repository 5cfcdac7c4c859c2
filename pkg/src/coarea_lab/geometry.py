"""Distance fields, retractions onto the tower, and pushforward of chains."""

import itertools

import numpy as np
from scipy.optimize import least_squares

from .chains import Chain1

ROOT_TOL = 1e-12
CHUNK = 4096


class TangencyError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# one-dimensional sets and slot-product sets

class Set1D:
    """Finite union of closed intervals of the real line (points are degenerate intervals)."""

    def __init__(self, intervals):
        iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
        iv = iv[np.argsort(iv[:, 0], kind="stable")]
        merged = []
        for lo, hi in iv:
            if merged and lo <= merged[-1][1] + 1e-15:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        self.iv = np.array(merged, dtype=float).reshape(-1, 2)
        self.lo, self.hi = self.iv[:, 0], self.iv[:, 1]

    def __len__(self):
        return len(self.iv)

    def fatten(self, w):
        if w <= 0:
            return self
        return Set1D(np.column_stack([self.lo - w, self.hi + w]))

    def _neighbours(self, x):
        j = np.searchsorted(self.lo, x, side="right") - 1
        left = np.clip(j, 0, len(self.iv) - 1)
        right = np.clip(j + 1, 0, len(self.iv) - 1)
        return left, right

    def dist(self, x):
        x = np.asarray(x, dtype=float)
        left, right = self._neighbours(x)
        dl = np.maximum(np.maximum(self.lo[left] - x, x - self.hi[left]), 0.0)
        dr = np.maximum(np.maximum(self.lo[right] - x, x - self.hi[right]), 0.0)
        return np.minimum(dl, dr)

    def nearest(self, x):
        x = np.asarray(x, dtype=float)
        left, right = self._neighbours(x)
        pl = np.clip(x, self.lo[left], self.hi[left])
        pr = np.clip(x, self.lo[right], self.hi[right])
        return np.where(np.abs(x - pl) <= np.abs(x - pr), pl, pr)

    def breakpoints(self):
        gaps = 0.5 * (self.hi[:-1] + self.lo[1:])
        return np.unique(np.concatenate([self.lo, self.hi, gaps]))

    def linear_form(self, x):
        """(alpha, beta) with dist(y) = alpha + beta * y on the piece containing x."""
        x = np.asarray(x, dtype=float)
        p = self.nearest(x)
        inside = np.abs(x - p) == 0
        below = x < p
        alpha = np.where(inside, 0.0, np.where(below, p, -p))
        beta = np.where(inside, 0.0, np.where(below, -1.0, 1.0))
        return alpha, beta


class SlotProductSet:
    """Points having distinct coordinates c_1, ..., c_l with x_{c_i} in T_i.

    The distance is the optimal assignment of slots to coordinates, which for n <= 6
    is found by enumerating injective maps.
    """

    def __init__(self, n, sets):
        self.n = n
        self.sets = list(sets)
        self.l = len(self.sets)
        self.perms = np.array(list(itertools.permutations(range(n), self.l)), dtype=np.int64)

    def _slot_dists(self, x):
        # (m, l, n): distance of coordinate c to slot set i
        return np.stack([T.dist(x) for T in self.sets], axis=1)

    def _costs(self, x):
        d = self._slot_dists(x) ** 2
        slots = np.arange(self.l)
        return d[:, slots[None, :], self.perms].sum(axis=2)

    def dist(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(x))
        for s in range(0, len(x), CHUNK):
            out[s:s + CHUNK] = np.sqrt(self._costs(x[s:s + CHUNK]).min(axis=1))
        return out

    def nearest(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        out = x.copy()
        for s in range(0, len(x), CHUNK):
            xs = x[s:s + CHUNK]
            best = self.perms[self._costs(xs).argmin(axis=1)]
            rows = np.arange(len(xs))
            for i, T in enumerate(self.sets):
                c = best[:, i]
                out[s + rows, c] = T.nearest(xs[rows, c])
        return out

    def _pieces(self, a, b):
        d = b - a
        ts = [0.0, 1.0]
        for c in range(self.n):
            if d[c] == 0:
                continue
            for T in self.sets:
                bp = T.breakpoints()
                t = (bp - a[c]) / d[c]
                ts.append(t[(t > 0) & (t < 1)])
        return np.unique(np.concatenate([np.atleast_1d(np.asarray(t, dtype=float)) for t in ts]))

    def critical_params(self, a, b):
        """Piece breakpoints and vertices of the per-piece quadratics along a segment."""
        ts = self._pieces(a, b)
        d = b - a
        tm = 0.5 * (ts[:-1] + ts[1:])
        xm = a[None, :] + tm[:, None] * d[None, :]
        extra = []
        for T in self.sets:
            al, be = T.linear_form(xm)
            with np.errstate(divide="ignore", invalid="ignore"):
                # vertex of (al + be (a + t d))^2 per coordinate
                tv = -(al + be * a[None, :]) / (be * d[None, :])
            tv = tv[np.isfinite(tv)]
            extra.append(tv[(tv > 0) & (tv < 1)])
        return np.unique(np.concatenate([ts] + extra))

    def segment_roots(self, a, b, s):
        """Exact candidate roots of dist(a + t(b - a)) = s on [0, 1], plus flat pieces."""
        ts = self._pieces(a, b)
        d = b - a
        tm = 0.5 * (ts[:-1] + ts[1:])
        xm = a[None, :] + tm[:, None] * d[None, :]
        # linear forms per piece, slot, coordinate: dist = alpha + beta * x = (alpha + beta a) + beta d t
        A0 = np.empty((len(tm), self.l, self.n))
        B0 = np.empty_like(A0)
        for i, T in enumerate(self.sets):
            al, be = T.linear_form(xm)
            A0[:, i, :] = al + be * a[None, :]
            B0[:, i, :] = be * d[None, :]
        slots = np.arange(self.l)
        P = self.perms
        al = A0[:, slots[None, :], P]
        be = B0[:, slots[None, :], P]
        qa = (be ** 2).sum(axis=2)
        qb = 2 * (al * be).sum(axis=2)
        qc = (al ** 2).sum(axis=2) - s * s
        t0 = ts[:-1, None] * np.ones_like(qa)
        t1 = ts[1:, None] * np.ones_like(qa)
        roots = []
        flat = (np.abs(qa) < 1e-14) & (np.abs(qb) < 1e-14) & (np.abs(qc) < 1e-14)
        lin = (np.abs(qa) < 1e-14) & ~flat
        with np.errstate(divide="ignore", invalid="ignore"):
            r = -qc / qb
            ok = lin & (r >= t0 - 1e-12) & (r <= t1 + 1e-12) & np.isfinite(r)
            roots.append(r[ok])
            disc = qb * qb - 4 * qa * qc
            quad = ~lin & ~flat & (disc >= -1e-14)
            sq = np.sqrt(np.maximum(disc, 0.0))
            # numerically stable pair of roots
            qq = -0.5 * (qb + np.copysign(sq, qb))
            r1 = qq / qa
            r2 = np.where(qq != 0, qc / qq, r1)
            for rr in (r1, r2):
                ok = quad & (rr >= t0 - 1e-12) & (rr <= t1 + 1e-12) & np.isfinite(rr)
                roots.append(rr[ok])
        roots = np.unique(np.clip(np.concatenate(roots), 0.0, 1.0))
        flat_t = np.column_stack([t0[flat], t1[flat]]) if flat.any() else np.zeros((0, 2))
        return roots, flat_t

    def crossing_report(self, a, b, s, tol=1e-9):
        return _crossing_report(self, a, b, s, tol, exact=True)

    def crossings_batch(self, a, b, s):
        return [_classify_roots(self, a[i], b[i], s, exact=True)[0] for i in range(len(a))]

    def crossings(self, a, b, s, tol=1e-9):
        """Sorted crossing parameters; raises on tangency."""
        return level_crossings(np.asarray(a, float), np.asarray(b, float), self, s, tol)


def _classify_roots(field, a, b, s, exact=True, tol=1e-9):
    """Crossing parameters on one segment and a degeneracy flag."""
    length = float(np.linalg.norm(b - a))
    if length == 0:
        return np.zeros(0), False
    if exact:
        cand, flat = field.segment_roots(a, b, s)
    else:
        cand, flat = _sampled_roots(field, a, b, s)
    degenerate = len(flat) > 0
    if not len(cand):
        return np.zeros(0), degenerate
    vals = field.dist(a[None, :] + cand[:, None] * (b - a)[None, :])
    cand = cand[np.abs(vals - s) <= 1e-9 * max(1.0, s) + 1e-12]
    if not len(cand):
        return np.zeros(0), degenerate
    cand = cand[np.r_[True, np.diff(cand) > ROOT_TOL]]
    eta = max(1e-9 / length, 1e-11)
    left = field.dist(a[None, :] + np.clip(cand - eta, 0, 1)[:, None] * (b - a)) - s
    right = field.dist(a[None, :] + np.clip(cand + eta, 0, 1)[:, None] * (b - a)) - s
    crossing = (np.sign(left) * np.sign(right)) < 0
    at_end = (cand * length < tol) | ((1 - cand) * length < tol)
    if np.any(~crossing) or np.any(at_end):
        degenerate = True
    return cand, degenerate


def _crossing_report(field, a, b, s, tol, exact):
    crossings, degenerate = [], False
    for i in range(len(a)):
        c, d = _classify_roots(field, a[i], b[i], s, exact=exact, tol=tol)
        crossings.append(c)
        degenerate |= d
    return {"crossings": crossings, "degenerate": degenerate,
            "count": int(sum(len(c) for c in crossings))}


def _sampled_roots(field, a, b, s, tol=None, init=64, max_rounds=60):
    """Roots of dist = s on a segment, certified by the 1-Lipschitz bound."""
    tol = ROOT_TOL if tol is None else tol
    length = float(np.linalg.norm(b - a))
    t = np.linspace(0, 1, init)
    phi = field.dist(a[None, :] + t[:, None] * (b - a)) - s
    lo, hi, flo, fhi = t[:-1], t[1:], phi[:-1], phi[1:]
    roots, flats = [], []
    for _ in range(max_rounds):
        if not len(lo):
            break
        sign_change = flo * fhi <= 0
        maybe = ~sign_change & (np.abs(flo) + np.abs(fhi) <= length * (hi - lo))
        small = (hi - lo) * length < tol
        # resolve small intervals
        done = small & (sign_change | maybe)
        roots.append(0.5 * (lo + hi)[done & sign_change])
        flats.append(np.column_stack([lo, hi])[done & maybe & (np.minimum(np.abs(flo), np.abs(fhi)) < tol)])
        keep = (sign_change | maybe) & ~small
        lo, hi, flo, fhi = lo[keep], hi[keep], flo[keep], fhi[keep]
        mid = 0.5 * (lo + hi)
        fm = field.dist(a[None, :] + mid[:, None] * (b - a)) - s
        lo, hi, flo, fhi = (np.r_[lo, mid], np.r_[mid, hi], np.r_[flo, fm], np.r_[fm, fhi])
    roots = np.sort(np.concatenate(roots)) if roots else np.zeros(0)
    flats = np.concatenate(flats) if flats else np.zeros((0, 2))
    return roots, flats


def level_crossings(a, b, field, s, tol=1e-9):
    """Sorted parameters where dist(a + t(b - a), A) = s; raises TangencyError when degenerate."""
    if s <= 0:
        raise ValueError("level must be positive")
    exact = hasattr(field, "segment_roots")
    roots, degenerate = _classify_roots(field, np.asarray(a, float), np.asarray(b, float), s,
                                        exact=exact, tol=tol)
    if degenerate:
        raise TangencyError("level set touched tangentially or at an endpoint")
    return roots


# ---------------------------------------------------------------------------
# general simplicial distance field

def _point_simplex_dist(x, verts):
    """Exact distance from points x (m, n) to the simplex with vertices verts (k+1, n)."""
    k = len(verts) - 1
    if k == 0:
        return np.linalg.norm(x - verts[0], axis=1)
    base = verts[0]
    E = (verts[1:] - base).T
    coef, *_ = np.linalg.lstsq(E, (x - base).T, rcond=None)
    lam = np.vstack([1 - coef.sum(axis=0), coef])
    inside = np.all(lam >= -1e-15, axis=0)
    proj = base[:, None] + E @ coef
    d = np.linalg.norm(x.T - proj, axis=0)
    if inside.all():
        return d
    best = np.full(len(x), np.inf)
    for drop in range(k + 1):
        face = np.delete(verts, drop, axis=0)
        best = np.minimum(best, _point_simplex_dist(x, face))
    return np.where(inside, d, best)


class DistanceField:
    """Euclidean distance to a simplicial complex (min over its simplices)."""

    def __init__(self, complex_):
        self.complex = complex_
        self.top = []
        dims = sorted(complex_.simplices)
        covered = set()
        for k in reversed(dims):
            for s in complex_.simplices[k]:
                key = tuple(sorted(s))
                if any(set(key) <= c for c in covered):
                    continue
                covered.add(frozenset(key))
                self.top.append(np.asarray(key))
        self.verts = complex_.vertices

    def dist(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        best = np.full(len(x), np.inf)
        for s in self.top:
            best = np.minimum(best, _point_simplex_dist(x, self.verts[s]))
        return best

    def crossing_report(self, a, b, s, tol=1e-9):
        return _crossing_report(self, a, b, s, tol, exact=False)

    def crossings_batch(self, a, b, s):
        return [_classify_roots(self, a[i], b[i], s, exact=False)[0] for i in range(len(a))]


def dist(x, field):
    return float(field.dist(np.asarray(x, dtype=float)[None, :])[0])


# ---------------------------------------------------------------------------
# retractions

def profile(r, eps, eps_bar):
    """Radial profile: 0 on [0, eps], affine onto [0, eps_bar] on [eps, eps_bar], identity beyond."""
    r = np.asarray(r, dtype=float)
    mid = eps_bar * (r - eps) / (eps_bar - eps)
    return np.where(r <= eps, 0.0, np.where(r < eps_bar, mid, r))


def profile_inverse(y, eps, eps_bar):
    """Largest preimage of y under the profile (the collapse region for y = 0 is [0, eps])."""
    y = np.asarray(y, dtype=float)
    return np.where(y < eps_bar, eps + y * (eps_bar - eps) / eps_bar, y)


class ProductRetraction:
    """Coordinatewise collapse of the eps-collar of the cube boundary.

    Each coordinate is moved by the profile applied to its distance from {0, 1}; the
    distance to the boundary then transforms exactly by the profile.
    """

    def __init__(self, eps, eps_bar):
        if not 0 < eps < eps_bar <= 0.5:
            raise ValueError("need 0 < eps < eps_bar <= 1/2")
        self.eps, self.eps_bar = float(eps), float(eps_bar)

    @property
    def lipschitz(self):
        return 1.0 / (1.0 - self.eps / self.eps_bar)

    def coord(self, x):
        x = np.asarray(x, dtype=float)
        r = np.minimum(x, 1 - x)
        fr = profile(r, self.eps, self.eps_bar)
        return np.where(x <= 0.5, fr, 1 - fr)

    def coord_preimage(self, y):
        """Set1D of coordinates mapped to the value y."""
        y = float(y)
        if y <= 0:
            return [(0.0, self.eps)]
        if y >= 1:
            return [(1 - self.eps, 1.0)]
        r = min(y, 1 - y)
        pr = float(profile_inverse(r, self.eps, self.eps_bar))
        v = pr if y <= 0.5 else 1 - pr
        return [(v, v)]

    def apply(self, points):
        return self.coord(points)

    __call__ = apply


class RadialRetraction:
    """Nearest-point radial retraction S(A, eps, eps_bar) onto a slot-product set."""

    def __init__(self, target, eps, eps_bar):
        if not 0 < eps < eps_bar:
            raise ValueError("need 0 < eps < eps_bar")
        self.target, self.eps, self.eps_bar = target, float(eps), float(eps_bar)

    @property
    def lipschitz(self):
        return 1.0 / (1.0 - self.eps / self.eps_bar)

    def apply(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        out = x.copy()
        d = self.target.dist(x)
        near = d < self.eps_bar
        if not near.any():
            return out
        xn = x[near]
        p = self.target.nearest(xn)
        dn = d[near]
        with np.errstate(invalid="ignore", divide="ignore"):
            lam = np.where(dn > 0, profile(dn, self.eps, self.eps_bar) / dn, 0.0)
        out[near] = p + lam[:, None] * (xn - p)
        return out

    __call__ = apply


class RetractionStack:
    """Composite R_k = S_1 o ... o S_k."""

    def __init__(self, maps):
        self.maps = list(maps)

    @property
    def lipschitz(self):
        return float(np.prod([m.lipschitz for m in self.maps])) if self.maps else 1.0

    def apply(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        for m in reversed(self.maps):
            x = m.apply(x)
        return x

    __call__ = apply


class Homothety:
    """x -> c + ratio (x - c)."""

    def __init__(self, center, ratio):
        self.center, self.ratio = np.asarray(center, dtype=float), float(ratio)

    lipschitz = property(lambda self: self.ratio)

    def apply(self, points):
        return self.center + self.ratio * (np.atleast_2d(points) - self.center)

    __call__ = apply


def apply_retraction(S, x):
    return S.apply(np.asarray(x, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# tower geometry

def boundary_field(n):
    """A_1 = the cube boundary."""
    return SlotProductSet(n, [Set1D([(0.0, 0.0), (1.0, 1.0)])])


def tower_field(tower, l):
    """Enlarged hypersurface A_l as a slot-product set (cached on the tower)."""
    key = ("field", l)
    if key in tower._cache:
        return tower._cache[key]
    n = tower.n
    if l == 1:
        field = boundary_field(n)
    else:
        g1 = ProductRetraction(tower.eps[0], tower.eps_bar[0])
        sets = []
        for i in range(1, l + 1):
            j = i - 1
            N = 1 if j == 0 else tower.grid(j)
            iv = []
            for k in range(N + 1):
                iv += g1.coord_preimage(k / N)
            w = sum(tower.eps[m - 1] for m in range(i + 1, l))
            sets.append(Set1D(iv).fatten(w))
        field = SlotProductSet(n, sets)
    tower._cache[key] = field
    return field


def tower_stack(tower, k):
    """Retraction stack R_k for the tower (S_1 coordinatewise, S_l radial for l >= 2)."""
    key = ("stack", k)
    if key in tower._cache:
        return tower._cache[key]
    maps = []
    for l in range(1, k + 1):
        if l == 1:
            maps.append(ProductRetraction(tower.eps[0], tower.eps_bar[0]))
        else:
            maps.append(RadialRetraction(tower_field(tower, l), tower.eps[l - 1], tower.eps_bar[l - 1]))
    stack = RetractionStack(maps)
    tower._cache[key] = stack
    return stack


def beta(tower):
    """1 + beta is the product of the per-level Lipschitz constants."""
    return float(np.prod([1 / (1 - e / eb) for e, eb in zip(tower.eps, tower.eps_bar)]) - 1)


# ---------------------------------------------------------------------------
# pushforward

_PROBE = 0.5 * (3 - np.sqrt(5))


def segment_images(f, a, b, breaks=None, tol=1e-6, lip=None, min_step=1e-11, init_step=0.05):
    """Adaptive polyline images of segments under a map.

    ``breaks[i]`` lists parameters that must appear as vertices of segment i. Returns a
    list of (t, P, ok) per segment: vertex parameters, image points and a mask of the
    sub-intervals that are kept (False marks a jump).

    Intervals are refined until two interior probes lie within tol of the image chord.
    When ``lip`` is given, a chord longer than lip times the source length marks a jump;
    jumps are bisected down to ``min_step`` and then dropped. Every kept chord is at most
    lip times its source length.
    """
    fn = f.apply if hasattr(f, "apply") else f
    if lip is None:
        lip = getattr(f, "lipschitz", None)
    m = len(a)
    length = np.linalg.norm(b - a, axis=1)
    seg, t0, t1 = [], [], []
    for i in range(m):
        req = np.r_[0.0, 1.0] if breaks is None else np.union1d([0.0, 1.0], breaks[i])
        req = req[(req >= 0) & (req <= 1)]
        k = max(1, int(np.ceil(length[i] / init_step)))
        ts = np.union1d(req, np.linspace(0, 1, k + 1)) if breaks is None else np.union1d(req, np.linspace(0, 1, k + 1))
        seg.append(np.full(len(ts) - 1, i))
        t0.append(ts[:-1])
        t1.append(ts[1:])
    seg, t0, t1 = np.concatenate(seg), np.concatenate(t0), np.concatenate(t1)

    def point(i, t):
        x = a[i] + t[:, None] * (b - a)[i]
        x[t == 1.0] = b[i][t == 1.0]
        return x

    P0, P1 = fn(point(seg, t0)), fn(point(seg, t1))
    done_seg, done_t0, done_t1, done_P0, done_P1, done_ok = [], [], [], [], [], []
    while len(seg):
        D = (b - a)[seg]
        L = length[seg] * (t1 - t0)
        dev = np.zeros(len(seg))
        Pm = None
        for frac in (0.5, _PROBE):
            tp = t0 + frac * (t1 - t0)
            Pp = fn(a[seg] + tp[:, None] * D)
            dev = np.maximum(dev, np.linalg.norm(Pp - (P0 + frac * (P1 - P0)), axis=1))
            if Pm is None:
                Pm = Pp
        chord = np.linalg.norm(P1 - P0, axis=1)
        jump = chord > lip * L * (1 + 1e-9) + 1e-15 if lip is not None else np.zeros(len(seg), bool)
        bad = (dev > tol) | jump
        tiny = L < min_step
        final = ~bad | tiny
        done_seg.append(seg[final])
        done_t0.append(t0[final])
        done_t1.append(t1[final])
        done_P0.append(P0[final])
        done_P1.append(P1[final])
        done_ok.append(~(jump & tiny)[final])
        split = ~final
        tm = 0.5 * (t0 + t1)
        seg = np.r_[seg[split], seg[split]]
        t0, t1 = np.r_[t0[split], tm[split]], np.r_[tm[split], t1[split]]
        P0, P1 = np.r_[P0[split], Pm[split]], np.r_[Pm[split], P1[split]]
    seg, t0 = np.concatenate(done_seg), np.concatenate(done_t0)
    t1, P0, P1 = np.concatenate(done_t1), np.concatenate(done_P0), np.concatenate(done_P1)
    ok = np.concatenate(done_ok)
    out = []
    order = np.lexsort((t0, seg))
    seg, t0, t1, P0, P1, ok = seg[order], t0[order], t1[order], P0[order], P1[order], ok[order]
    starts = np.searchsorted(seg, np.arange(m))
    ends = np.searchsorted(seg, np.arange(m), side="right")
    for i in range(m):
        s0, s1 = starts[i], ends[i]
        t = np.r_[t0[s0:s1], t1[s1 - 1]]
        P = np.vstack([P0[s0:s1], P1[s1 - 1:s1]])
        out.append((t, P, ok[s0:s1]))
    return out


def pushforward(f, tau, tol=1e-6, lip=None, min_step=1e-11, init_step=0.05, report=None):
    """Image of a chain under a map, as an adaptively refined polyline (see segment_images).

    The image mass is at most lip * mass(tau); dropped jumps are counted in ``report``.
    """
    if tau.is_zero():
        return tau
    imgs = segment_images(f, tau.segments[:, 0], tau.segments[:, 1], None, tol, lip, min_step, init_step)
    segs, jumps = [], 0
    for t, P, ok in imgs:
        segs.append(np.stack([P[:-1][ok], P[1:][ok]], axis=1))
        jumps += int((~ok).sum())
    if report is not None:
        report["jumps"] = report.get("jumps", 0) + jumps
    return Chain1(np.concatenate(segs), n=tau.n)


def homotopy_area(f, tau, samples_per_unit=200):
    """Area bound of the straight-line homotopy from tau to f(tau).

    Each sub-interval contributes (max endpoint displacement) x (max of source and image
    chord); sub-intervals where the image jumps contribute the jump chord times the
    displacement as well, which over-counts but never under-counts the ruled surface.
    """
    if tau.is_zero():
        return 0.0
    fn = f.apply if hasattr(f, "apply") else f
    total = 0.0
    for a, b in tau.segments:
        L = float(np.linalg.norm(b - a))
        k = max(2, int(np.ceil(L * samples_per_unit)) + 1)
        t = np.linspace(0, 1, k)
        x = a + t[:, None] * (b - a)
        y = fn(x)
        disp = np.linalg.norm(y - x, axis=1)
        src = L / (k - 1)
        img = np.linalg.norm(np.diff(y, axis=0), axis=1)
        total += float((np.maximum(disp[:-1], disp[1:]) * np.maximum(src, img)).sum())
    return total


# ---------------------------------------------------------------------------
# collar map

class CollarMap:
    """Inward collar of the cube boundary along a blended normal field.

    The direction at y is the normalized sum of the inward face normals weighted by
    max(0, 1 - dist(y, face) / blend); on a face interior far from other faces it is the
    face normal, on an edge it is the diagonal.
    """

    def __init__(self, n, r0=None, blend=None):
        self.n = n
        self.r0 = 1.0 / (4 * n) if r0 is None else float(r0)
        if self.r0 > 1.0 / (4 * n) + 1e-15:
            raise ValueError("collar depth must be at most 1/(4n)")
        self.blend = 4 * self.r0 if blend is None else float(blend)

    def direction(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        v = np.zeros_like(y)
        for c in range(self.n):
            v[:, c] += np.maximum(0.0, 1 - y[:, c] / self.blend)
            v[:, c] -= np.maximum(0.0, 1 - (1 - y[:, c]) / self.blend)
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def exp(self, y, t):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(y),))
        if np.any(t > self.r0 + 1e-15) or np.any(t < 0):
            raise ValueError("collar parameter out of range")
        return y + t[:, None] * self.direction(y)

    def inverse(self, x):
        """(y, t) with exp(y, t) = x, solved face by face."""
        x = np.asarray(x, dtype=float)
        best = None
        for c in range(self.n):
            for side in (0.0, 1.0):
                free = [k for k in range(self.n) if k != c]

                def embed(u, c=c, side=side, free=free):
                    y = np.empty(self.n)
                    y[c] = side
                    y[free] = u
                    return y

                def resid(z, embed=embed):
                    y = embed(np.clip(z[:-1], 0, 1))
                    return self.exp(y, np.clip(z[-1], 0, self.r0))[0] - x

                z0 = np.r_[x[free], abs(x[c] - side)]
                sol = least_squares(resid, z0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
                r = np.linalg.norm(sol.fun)
                if best is None or r < best[0]:
                    best = (r, embed(np.clip(sol.x[:-1], 0, 1)), float(np.clip(sol.x[-1], 0, self.r0)))
        return best[1], best[2]


def exp_collar(x, t, n=None, r0=None):
    x = np.asarray(x, dtype=float)
    return CollarMap(n or len(x), r0).exp(x, t)[0]
