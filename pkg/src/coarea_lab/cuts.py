"""Admissible coarea cuts and the cut, shell and localization operators."""

import json
from dataclasses import dataclass, field

import numpy as np

from .chains import AllOf, Chain0, Chain1, Level, Shell, Whole, label_breaks, partition, restrict
from .geometry import pushforward, tower_field, tower_stack


class CutSearchError(RuntimeError):
    pass


@dataclass
class CutResult:
    s: float
    level: int
    count: int
    mass: float
    eps: float
    plateau: tuple = ()

    @property
    def admissible(self):
        return self.count * self.eps <= self.mass


@dataclass
class CutSchedule:
    """Matrix s[j-1, i-1] of cuts: row j is a level, columns are nonincreasing."""

    s: np.ndarray
    certificates: np.ndarray = field(default=None)

    def __post_init__(self):
        self.s = np.atleast_2d(np.asarray(self.s, dtype=float))
        if np.any(np.diff(self.s, axis=1) > 0):
            raise ValueError("schedule rows must be nonincreasing")

    @property
    def q(self):
        return self.s.shape[1]

    @property
    def levels(self):
        return self.s.shape[0]

    def value(self, j, i):
        """s_j^i with 1-based indices."""
        return float(self.s[j - 1, i - 1])

    def to_json(self):
        cert = None if self.certificates is None else np.asarray(self.certificates).tolist()
        return json.dumps({"s": self.s.tolist(), "certificates": cert})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        cert = data.get("certificates")
        return cls(np.asarray(data["s"]), None if cert is None else np.asarray(cert))


# ---------------------------------------------------------------------------
# cut search

def _sample_profile(tau, field, spacing):
    """Consecutive (min, max) pairs of the distance sampled along every segment."""
    los, his = [], []
    for a, b in tau.segments:
        length = float(np.linalg.norm(b - a))
        t = np.linspace(0, 1, int(np.clip(np.ceil(length / spacing) + 1, 257, 20000)))
        if hasattr(field, "critical_params"):
            t = np.union1d(t, field.critical_params(a, b))
        phi = field.dist(a[None, :] + t[:, None] * (b - a)[None, :])
        los.append(np.minimum(phi[1:], phi[:-1]))
        his.append(np.maximum(phi[1:], phi[:-1]))
    return np.concatenate(los), np.concatenate(his)


def crossing_profile(tau, field, eps, resolution=2048):
    """Approximate crossing count of {dist = s} on a uniform grid of s in (0, eps)."""
    grid = (np.arange(resolution) + 0.5) * eps / resolution
    if tau.is_zero():
        return grid, np.zeros(resolution, dtype=int)
    lo, hi = _sample_profile(tau, field, eps / 64)
    i0 = np.searchsorted(grid, lo, side="right")
    i1 = np.searchsorted(grid, hi, side="right")
    diff = np.zeros(resolution + 1, dtype=int)
    np.add.at(diff, i0, 1)
    np.add.at(diff, i1, -1)
    return grid, np.cumsum(diff[:-1])


def coarea_average(tau, field, eps, resolution=2048):
    """(1/eps) * integral over (0, eps) of the crossing count, from the sampled profile."""
    grid, counts = crossing_profile(tau, field, eps, resolution)
    return float(counts.mean())


def _forbidden_intervals(field, balls, margin):
    out = []
    for c, r in balls or ():
        d = float(field.dist(np.asarray(c, dtype=float)[None, :])[0])
        out.append((d - r - margin, d + r + margin))
    return out


def _verify(tau, field, s, eps, mass, balls, avoid, margin):
    rep = field.crossing_report(tau.segments[:, 0], tau.segments[:, 1], s)
    if rep["degenerate"] or rep["count"] * eps > mass:
        return None
    for lo, hi in _forbidden_intervals(field, balls, 0.0):
        if lo <= s <= hi:
            return None
    if avoid:
        pts = [a + t[:, None] * (b - a) for (a, b), t in zip(tau.segments, rep["crossings"]) if len(t)]
        if pts:
            pts = np.concatenate(pts)
            for other_field, other_s in avoid:
                if np.any(np.abs(other_field.dist(pts) - other_s) < margin):
                    return None
    return rep["count"]


def find_admissible_cut(tau, l, tower, forbidden=None, rng_seed=0, pick="plateau", avoid=(),
                        max_jitter=10, resolution=2048):
    """Cut level s in (0, eps_l) with crossing count * eps_l <= mass(tau).

    ``forbidden`` is a list of (center, radius) balls the level set must avoid and
    ``avoid`` a list of (field, s) levels the crossings must stay off. ``pick`` is
    "plateau" (lowest point of the widest admissible run) or "random".
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    field = tower_field(tower, l)
    eps = float(tower.eps[l - 1])
    mass = tau.mass()
    grid, counts = crossing_profile(tau, field, eps, resolution)
    margin = 1e-3 * eps / resolution
    ok = counts * eps <= mass
    for lo, hi in _forbidden_intervals(field, forbidden, margin):
        ok &= ~((grid >= lo - eps / resolution) & (grid <= hi + eps / resolution))
    ok[0] = False
    edges = np.flatnonzero(np.diff(np.r_[0, ok.astype(int), 0]))
    runs = list(zip(edges[::2], edges[1::2]))
    if not runs:
        raise CutSearchError("no admissible level")
    if pick == "random":
        order = list(rng.permutation(len(runs)))
    else:
        order = sorted(range(len(runs)), key=lambda r: (-(runs[r][1] - runs[r][0]), runs[r][0]))
    step = eps / resolution
    for r in order:
        start, stop = runs[r]
        width = (stop - start) * step
        for attempt in range(max_jitter):
            if pick == "random":
                base = grid[start] + rng.random() * max(width - step, 0)
            else:
                base = grid[start] + attempt / max_jitter * max(width - step, 0)
            s = base + rng.uniform(0.05, 1.0) * min(1e-3 * eps, 0.5 * step)
            if not 0 < s < eps:
                continue
            count = _verify(tau, field, s, eps, mass, forbidden, avoid, 1e-9)
            if count is not None:
                return CutResult(float(s), l, int(count), mass, eps, (grid[start], grid[stop - 1]))
    raise CutSearchError("jitter budget exhausted")


# ---------------------------------------------------------------------------
# regions

def cut_region(tower, s_list):
    """M minus the closed s_l-neighbourhoods of A_l, l = 1..k."""
    if not len(s_list):
        return Whole()
    return AllOf([Level(tower_field(tower, l), s, above=True) for l, s in enumerate(s_list, start=1)])


def delta_region(tower, schedule, forms):
    """Mixed shell/cut region.

    ``forms[j-1]`` is ("delta", i) for the shell s_j^i < dist <= s_j^{i-1} (i = 1 means
    dist > s_j^1) or ("cut", i) for dist > s_j^i.
    """
    parts = []
    for j, (kind, i) in enumerate(forms, start=1):
        f = tower_field(tower, j)
        if kind == "cut" or i == 1:
            parts.append(Level(f, schedule.value(j, i), above=True))
        else:
            parts.append(Shell(f, schedule.value(j, i), schedule.value(j, i - 1)))
    return AllOf(parts) if parts else Whole()


def delta_forms(ivec, q=None):
    return [("delta", int(i)) for i in ivec]


def cut_bar(tau, s_list, tower):
    """Part of tau outside the s_l-neighbourhoods of A_1..A_k."""
    return restrict(tau, cut_region(tower, s_list))


def cut(tau, s_list, tower, tol=1e-9, report=None):
    """R_k applied to cut_bar."""
    k = len(s_list)
    bar = cut_bar(tau, s_list, tower)
    if k == 0:
        return bar
    stack = tower_stack(tower, k)
    return pushforward(stack, bar, tol=tol, lip=stack.lipschitz, report=report)


def cut_delta(tau, schedule, ivec, tower, forms=None):
    """Restriction of tau to the shell region indexed by ivec (or by explicit forms)."""
    return restrict(tau, delta_region(tower, schedule, forms or delta_forms(ivec)))


def _crossing_points(tau, field, s):
    pts = []
    for (a, b), t in zip(tau.segments, field.crossings_batch(tau.segments[:, 0], tau.segments[:, 1], s)):
        t = t[(t > 0) & (t < 1)]
        if len(t):
            pts.append(a + t[:, None] * (b - a))
    return np.concatenate(pts) if pts else np.zeros((0, tau.n))


def region_boundary_pieces(tau, region):
    """Boundary points of tau restricted to an AllOf region, split by component.

    Returns (list of Chain0 per component, boundary of tau inside the region).
    """
    parts = region.parts if isinstance(region, AllOf) else [region]
    pieces = []
    for idx, part in enumerate(parts):
        levels = [part.s] if isinstance(part, Level) else [part.lo] + ([part.hi] if np.isfinite(part.hi) else [])
        pts = [_crossing_points(tau, part.field, s) for s in levels]
        pts = np.concatenate(pts) if pts else np.zeros((0, tau.n))
        keep = np.ones(len(pts), dtype=bool)
        for jdx, other in enumerate(parts):
            if jdx != idx and len(pts):
                keep &= other.contains(pts)
        pieces.append(Chain0(pts[keep], n=tau.n))
    bd = tau.boundary()
    inner = bd.select(region.contains(bd.points)) if len(bd) else bd
    return pieces, inner


def boundary_pieces(tau, s_list, tower):
    """The pieces d_l of the boundary of cut_bar, one Chain0 per level."""
    pieces, _ = region_boundary_pieces(tau, cut_region(tower, s_list))
    return pieces


# ---------------------------------------------------------------------------
# localization

def owner_labels(tower, ivec):
    """Label function: owners of R_k(x) in level k for every k with i_k >= 2."""
    levels = [k for k, i in enumerate(ivec, start=1) if i >= 2]

    def labels(points):
        cols = []
        for k in range(1, len(ivec) + 1):
            if k in levels:
                cols.append(tower.owners(tower_stack(tower, k).apply(points), k))
            else:
                cols.append([None] * len(points))
        return list(zip(*cols)) if cols else [()] * len(points)

    return labels


def localize_all(chain, ivec, tower, tol=1e-12):
    """Split a shell chain by the owners of its retracted points: dict D-tuple -> Chain1."""
    if chain.is_zero():
        return {}
    if all(i == 1 for i in ivec):
        return {tuple([None] * len(ivec)): chain}
    labels = owner_labels(tower, ivec)
    k = max(k for k, i in enumerate(ivec, start=1) if i >= 2)
    spacing = tower.h(k) / (8 * tower_stack(tower, k).lipschitz)

    def breaks(a, b):
        return label_breaks(a, b, labels, spacing, tol)

    return partition(chain, breaks, labels)


def localize(chain, ivec, dvec, tower):
    """The part of a shell chain whose retraction lies in the owned cells dvec."""
    parts = localize_all(chain, ivec, tower)
    return parts.get(tuple(dvec), Chain1.zero(chain.n))
