"""Domain complexes: the triangulated cube, the cubical boundary tower and parameter complexes."""

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

SUPPORTED_DIMS = (3, 4, 5, 6)
SNAP_TOL = 1e-9


class TowerError(ValueError):
    pass


@dataclass(frozen=True)
class EuclideanComplex:
    """Simplicial complex embedded affinely in R^n.

    ``simplices[k]`` is an integer array of shape (count, k + 1) holding vertex indices.
    """

    vertices: np.ndarray
    simplices: dict

    @property
    def n(self):
        return self.vertices.shape[1]

    @property
    def dim(self):
        return max(k for k, s in self.simplices.items() if len(s))

    def width(self):
        """Largest simplex diameter, attained on an edge."""
        edges = self.simplices.get(1)
        if edges is None or not len(edges):
            return 0.0
        d = self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]]
        return float(np.sqrt((d ** 2).sum(axis=1)).max())

    def volume(self, k=None):
        """Total k-volume of the k-simplices (k defaults to the top dimension)."""
        k = self.dim if k is None else k
        s = self.simplices[k]
        if k == 0:
            return float(len(s))
        base = self.vertices[s[:, 0]]
        edges = self.vertices[s[:, 1:]] - base[:, None, :]
        gram = np.einsum("sik,sjk->sij", edges, edges)
        vol = np.sqrt(np.clip(np.linalg.det(gram), 0, None)) / math.factorial(k)
        return float(vol.sum())

    def boundary(self):
        """Subcomplex of the faces lying in the boundary of the unit cube."""
        n = self.n
        top = self.simplices[n - 1]
        pts = self.vertices[top]
        on_face = np.zeros(len(top), dtype=bool)
        for c in range(n):
            on_face |= np.all(np.abs(pts[:, :, c]) < SNAP_TOL, axis=1)
            on_face |= np.all(np.abs(pts[:, :, c] - 1) < SNAP_TOL, axis=1)
        return _closure(self.vertices, top[on_face])

    def to_json(self):
        return json.dumps({
            "n": int(self.n),
            "vertices": self.vertices.tolist(),
            "simplices": {str(k): v.tolist() for k, v in self.simplices.items()},
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        simplices = {int(k): np.asarray(v, dtype=np.int64).reshape(-1, int(k) + 1)
                     for k, v in data["simplices"].items()}
        return cls(np.asarray(data["vertices"], dtype=float).reshape(-1, data["n"]), simplices)


def _closure(vertices, top):
    """Complex generated by the given top simplices (all faces added, unused vertices dropped)."""
    k = top.shape[1] - 1
    used = np.unique(top)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    top = np.sort(remap[top], axis=1)
    simplices = {}
    for j in range(k + 1):
        faces = [top[:, list(c)] for c in itertools.combinations(range(k + 1), j + 1)]
        simplices[j] = np.unique(np.concatenate(faces), axis=0)
    return EuclideanComplex(vertices[used], simplices)


def build_cube_domain(n, m):
    """Triangulate [0,1]^n by an m-fold grid, each small cube split into n! Kuhn simplices."""
    if n not in SUPPORTED_DIMS:
        raise ValueError(f"dimension {n} not supported")
    if m < 1:
        raise ValueError("m must be positive")
    grid = np.array(list(itertools.product(range(m + 1), repeat=n)))
    index = {tuple(g): i for i, g in enumerate(grid)}
    top = []
    for corner in itertools.product(range(m), repeat=n):
        for perm in itertools.permutations(range(n)):
            v = list(corner)
            simplex = [index[tuple(v)]]
            for axis in perm:
                v[axis] += 1
                simplex.append(index[tuple(v)])
            top.append(simplex)
    return _closure(grid / m, np.array(top, dtype=np.int64))


@dataclass(frozen=True, order=True)
class Cell:
    """Axis-aligned top cell of a tower level.

    Fixed coordinates are ``corner[c] / N`` for axes not in ``free``; free axes span
    ``[corner[c] / N, (corner[c] + 1) / N]`` where N is the grid of ``level``.
    """

    level: int
    free: tuple
    corner: tuple

    @property
    def fixed(self):
        return tuple(c for c in range(len(self.corner)) if c not in self.free)


def _hall_ok(values, hall_grids, tol=SNAP_TOL):
    """True when, for each i, at least i of the values lie on the i-th Hall grid."""
    values = np.asarray(values, dtype=float)
    for i, g in enumerate(hall_grids, start=1):
        on = np.abs(values * g - np.round(values * g)) <= tol * g
        if on.sum() < i:
            return False
    return True


@dataclass(eq=False)
class SkeletonTower:
    """Nested cubical skeleta of the cube boundary.

    Level l (1 <= l <= n-2) consists of the (n-l)-dimensional faces of the grid of
    resolution ``grids[l-1]`` whose fixed coordinates satisfy the nesting condition;
    levels n-1 and n are the 1- and 0-skeleta of level n-2.
    """

    n: int
    grids: tuple
    rho: tuple = ()
    eps: tuple = ()
    eps_bar: tuple = ()
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n not in SUPPORTED_DIMS:
            raise ValueError(f"dimension {self.n} not supported")
        if len(self.grids) != self.n - 2:
            raise TowerError("need one grid per level 1..n-2")
        prev = 1
        for g in self.grids:
            if g % prev:
                raise TowerError("grids must refine each other")
            prev = g

    # grids ------------------------------------------------------------
    def grid(self, l):
        """Resolution of the top cells at level l."""
        return self.grids[min(l, self.n - 2) - 1]

    def hall_grids(self, l):
        """Grids G_0, ..., G_{l-1} used by the membership test of level l."""
        return [1] + [self.grid(i) for i in range(1, l)]

    def h(self, l):
        return 1.0 / self.grid(l)

    def width(self, l):
        """Diameter of the top cells of level l."""
        return self.h(l) * math.sqrt(self.n - l) if l < self.n else 0.0

    # membership -------------------------------------------------------
    def _on_grid(self, x, g, tol=SNAP_TOL):
        return np.abs(x * g - np.round(x * g)) <= tol * g

    def contains(self, points, l, tol=SNAP_TOL):
        """Vectorized membership in level l."""
        x = np.atleast_2d(points)
        ok = np.all((x > -tol) & (x < 1 + tol), axis=1)
        for i, g in enumerate(self.hall_grids(l), start=1):
            ok &= self._on_grid(x, g, tol).sum(axis=1) >= i
        return ok

    def depth(self, point, tol=SNAP_TOL):
        """Deepest level containing the point (0 if not on the boundary)."""
        x = np.asarray(point, dtype=float)
        deepest = 0
        for l in range(1, self.n + 1):
            if self.contains(x, l, tol)[0]:
                deepest = l
            else:
                break
        return deepest

    # cells ------------------------------------------------------------
    def cell_box(self, cell):
        N = self.grid(cell.level)
        lo = np.array(cell.corner, dtype=float) / N
        hi = lo.copy()
        for c in cell.free:
            hi[c] += 1.0 / N
        return lo, hi

    def center(self, cell):
        """Cone point of a cell: barycenter, or the lowest vertex for edges and points."""
        lo, hi = self.cell_box(cell)
        if cell.level >= self.n - 1:
            return lo
        return 0.5 * (lo + hi)

    def diameter(self, cell):
        lo, hi = self.cell_box(cell)
        return float(np.linalg.norm(hi - lo))

    def cell_of(self, point, tol=SNAP_TOL):
        """(level, cell) with the point in the relative interior of a top cell, or None."""
        x = np.asarray(point, dtype=float)
        l = self.depth(x, tol)
        if l == 0:
            return None
        N = self.grid(l)
        on = self._on_grid(x, N, tol)
        fixed = np.flatnonzero(on)
        if len(fixed) != l:
            raise TowerError("point classification inconsistent with tower")
        corner = np.floor(x * N + tol * N).astype(int)
        corner[fixed] = np.round(x[fixed] * N).astype(int)
        corner = np.minimum(corner, N)
        free = tuple(int(c) for c in range(self.n) if not on[c])
        return l, Cell(l, free, tuple(int(v) for v in corner))

    def owner(self, point, l, tol=SNAP_TOL):
        """Top cell of level l owning the point under the lowest-index rule."""
        x = np.asarray(point, dtype=float)
        if not self.contains(x, l, tol)[0]:
            return None
        N = self.grid(l)
        on = self._on_grid(x, N, tol)
        idx = np.flatnonzero(on)
        nfix = min(l, self.n)
        hall = self.hall_grids(l)
        best = None
        for fixed in itertools.combinations(idx, nfix):
            vals = x[list(fixed)]
            if not _hall_ok(vals, hall, tol):
                continue
            free = tuple(int(c) for c in range(self.n) if c not in fixed)
            corner = []
            for c in range(self.n):
                if c in fixed:
                    corner.append(int(round(x[c] * N)))
                elif on[c]:
                    v = int(round(x[c] * N))
                    corner.append(v - 1 if v > 0 else v)
                else:
                    corner.append(int(math.floor(x[c] * N)))
            key = (free, tuple(corner))
            if best is None or key < best:
                best = key
        if best is None:
            return None
        return Cell(l, best[0], best[1])

    def owners(self, points, l, tol=SNAP_TOL):
        """Vectorized ``owner``: list of cells (None for points outside level l)."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        m = len(x)
        inside = self.contains(x, l, tol)
        N = self.grid(l)
        on = self._on_grid(x, N, tol)
        hall = self.hall_grids(l)
        onh = [self._on_grid(x, g, tol) for g in hall]
        nfix = min(l, self.n)
        subsets = sorted(itertools.combinations(range(self.n), nfix),
                         key=lambda f: tuple(c for c in range(self.n) if c not in f))
        choice = np.full(m, -1)
        for si, fixed in enumerate(subsets):
            f = list(fixed)
            ok = inside & (choice < 0) & np.all(on[:, f], axis=1)
            for i, oh in enumerate(onh, start=1):
                ok &= oh[:, f].sum(axis=1) >= i
            choice[ok] = si
        r = np.round(x * N).astype(int)
        fl = np.floor(x * N + tol * N).astype(int)
        fl = np.minimum(fl, N - 1)
        free_corner = np.where(on, np.where(r > 0, r - 1, r), fl)
        out = [None] * m
        for i in np.flatnonzero(choice >= 0):
            fixed = subsets[choice[i]]
            corner = free_corner[i].copy()
            corner[list(fixed)] = r[i, list(fixed)]
            free = tuple(c for c in range(self.n) if c not in fixed)
            out[i] = Cell(l, free, tuple(int(v) for v in corner))
        return out

    def top_cells(self, l):
        """Enumerate all top cells of level l (intended for small towers)."""
        N = self.grid(l)
        nfix = min(l, self.n)
        hall = self.hall_grids(l)
        for fixed in itertools.combinations(range(self.n), nfix):
            free = tuple(c for c in range(self.n) if c not in fixed)
            for vals in itertools.product(range(N + 1), repeat=nfix):
                if not _hall_ok(np.array(vals) / N, hall):
                    continue
                for fc in itertools.product(range(N), repeat=len(free)):
                    corner = [0] * self.n
                    for c, v in zip(fixed, vals):
                        corner[c] = v
                    for c, v in zip(free, fc):
                        corner[c] = v
                    yield Cell(l, free, tuple(corner))

    def count_subcells(self, D, l):
        """Number of top cells of level l contained in the top cell D."""
        k = D.level
        if l == k:
            return 1
        if not 1 <= k < l <= self.n - 2:
            raise TowerError("need 1 <= level(D) < l <= n-2")
        N = self.grid(l)
        r = N // self.grid(k)
        hall = self.hall_grids(l)
        base = {c: D.corner[c] * r for c in range(self.n)}
        total = 0
        for extra in itertools.combinations(D.free, l - k):
            fixed = sorted(set(D.fixed) | set(extra))
            nfree = self.n - l
            ranges = [range(base[c], base[c] + r + 1) if c in extra else [base[c]] for c in fixed]
            good = 0
            for vals in itertools.product(*ranges):
                if _hall_ok(np.array(vals) / N, hall):
                    good += 1
            total += good * r ** nfree
        return total

    def recursion_bound(self, k, l):
        """Product of per-level face counts bounding count_subcells."""
        total = 1
        for lp in range(k, l):
            m = self.grid(lp + 1) // self.grid(lp)
            total *= 2 * (self.n - lp) * m ** (self.n - lp - 1)
        return total

    def num_top_cells(self, l):
        """Closed-form count of the top cells of level 1."""
        if l != 1:
            return sum(1 for _ in self.top_cells(l))
        return 2 * self.n * self.grid(1) ** (self.n - 1)

    def is_center(self, point, tol=SNAP_TOL):
        """True if the point is q_E for some top cell E of some level."""
        x = np.asarray(point, dtype=float)
        for l in range(1, self.n - 1):
            N = self.grid(l)
            on = self._on_grid(x, N, tol)
            half = self._on_grid(x - 0.5 / N, N, tol)
            if on.sum() == l and np.all(on | half) and _hall_ok(x[on], self.hall_grids(l), tol):
                if np.all((x > -tol) & (x < 1 + tol)):
                    return True
        return bool(self.contains(x, self.n, tol)[0])

    def boundary_volume(self):
        return 2.0 * self.n

    # construction -----------------------------------------------------
    @classmethod
    def from_schedule(cls, n, rho, eps=(), eps_bar=(), meta=None):
        """Choose nested grids so that level-l cells have diameter at most rho[l-1]."""
        rho = tuple(float(r) for r in rho)
        if len(rho) < n - 2:
            raise TowerError("need rho for levels 1..n-2")
        check_interleaving(rho[: n - 2], eps[: n - 2], eps_bar[: n - 2])
        grids = []
        N = 1
        for l in range(1, n - 1):
            m = max(1, math.ceil(math.sqrt(n - l) / (rho[l - 1] * N) - 1e-12))
            N *= m
            grids.append(N)
        tower = cls(n, tuple(grids), rho[: n - 2], tuple(eps[: n - 2]), tuple(eps_bar[: n - 2]),
                    dict(meta or {}))
        for l in range(1, n - 1):
            if tower.width(l) > rho[l - 1] * (1 + 1e-12):
                raise TowerError(f"width at level {l} exceeds rho")
        return tower

    def schedule_block(self):
        return {"p": self.meta.get("p"), "alpha": self.meta.get("alpha"),
                "rho": list(self.rho), "eps": list(self.eps), "eps_bar": list(self.eps_bar)}

    def to_json(self):
        return json.dumps({"n": self.n, "grids": list(self.grids), "schedule": self.schedule_block()})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        s = data["schedule"]
        meta = {"p": s.get("p"), "alpha": s.get("alpha")}
        return cls(data["n"], tuple(data["grids"]), tuple(s["rho"]), tuple(s["eps"]),
                   tuple(s["eps_bar"]), meta)


def check_interleaving(rho, eps, eps_bar):
    """Require eps_bar_1 > eps_1 > rho_1 > eps_bar_2 > ... (only the given entries)."""
    if not eps or not eps_bar:
        return
    seq = []
    for l in range(len(rho)):
        seq += [eps_bar[l], eps[l], rho[l]]
    if any(not a > b for a, b in zip(seq, seq[1:])) or seq[-1] <= 0:
        raise TowerError("rho/eps/eps_bar not strictly interleaved")


def skeleton_tower(boundary, rho, eps, eps_bar, meta=None):
    """Tower over the boundary of the cube built from a triangulated domain."""
    return SkeletonTower.from_schedule(boundary.n, rho, eps, eps_bar, meta)


class CubicalComplex:
    """Subcomplex of the cube [0,1]^d subdivided q times per axis.

    A cell is ``(corner, free)``: integer corner and the tuple of axes it spans.
    """

    def __init__(self, d, q, top_cells=None):
        self.d = d
        self.q = q
        if top_cells is None:
            top_cells = [(c, tuple(range(d))) for c in itertools.product(range(q), repeat=d)]
        cells = set()
        for corner, free in top_cells:
            corner = tuple(int(v) for v in corner)
            free = tuple(sorted(free))
            for k in range(len(free) + 1):
                for sub in itertools.combinations(free, k):
                    rest = [a for a in free if a not in sub]
                    for shift in itertools.product((0, 1), repeat=len(rest)):
                        c = list(corner)
                        for a, s in zip(rest, shift):
                            c[a] += s
                        cells.add((tuple(c), sub))
        self.cells = sorted(cells, key=lambda cf: (len(cf[1]), cf[1], cf[0]))

    @classmethod
    def cube(cls, d, q=1):
        return cls(d, q)

    @property
    def dim(self):
        return max(len(f) for _, f in self.cells)

    def skeleton(self, j):
        return [c for c in self.cells if len(c[1]) <= j]

    def cells_of_dim(self, j):
        return [c for c in self.cells if len(c[1]) == j]

    def vertices(self):
        return [c for c in self.cells if not c[1]]

    def coords(self, cell):
        return np.array(cell[0], dtype=float) / self.q

    def cell_vertices(self, cell):
        corner, free = cell
        out = []
        for shift in itertools.product((0, 1), repeat=len(free)):
            c = list(corner)
            for a, s in zip(free, shift):
                c[a] += s
            out.append((tuple(c), ()))
        return sorted(out)

    def cell_box(self, cell):
        lo = np.array(cell[0], dtype=float) / self.q
        hi = lo.copy()
        hi[list(cell[1])] += 1.0 / self.q
        return lo, hi

    def carrier(self, x, tol=1e-12):
        """Smallest cell containing x in its relative interior."""
        x = np.asarray(x, dtype=float) * self.q
        r = np.round(x)
        on = np.abs(x - r) <= tol
        corner = np.where(on, r, np.floor(x)).astype(int)
        free = tuple(int(a) for a in range(self.d) if not on[a])
        cell = (tuple(int(v) for v in corner), free)
        if cell not in set(self.cells):
            raise ValueError("point outside the complex")
        return cell

    def faces(self, cell):
        """Proper faces of a cell, all dimensions."""
        corner, free = cell
        out = []
        for k in range(len(free)):
            for sub in itertools.combinations(free, k):
                rest = [a for a in free if a not in sub]
                for shift in itertools.product((0, 1), repeat=len(rest)):
                    c = list(corner)
                    for a, s in zip(rest, shift):
                        c[a] += s
                    out.append((tuple(c), sub))
        return out

    def max_cells_at_vertex(self):
        """n(X): largest number of top cells sharing a vertex."""
        top = self.cells_of_dim(self.dim)
        best = 0
        for v in self.vertices():
            count = sum(1 for t in top if v in self.cell_vertices(t))
            best = max(best, count)
        return best


def cubical_skeleton(X, j):
    """The j-skeleton of X as a cubical complex."""
    if not 0 <= j <= X.dim:
        raise ValueError("skeleton dimension out of range")
    out = CubicalComplex.__new__(CubicalComplex)
    out.d, out.q = X.d, X.q
    out.cells = X.skeleton(j)
    return out


def cell_vertices_sorted(X, cell, key):
    """Vertices of a cell by decreasing key, ties broken by lexicographic coordinates."""
    verts = X.cell_vertices(cell)
    return sorted(verts, key=lambda v: (-key(v), v[0]))
