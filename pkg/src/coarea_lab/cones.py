"""Cones over boundary points from cell centers, the A operator and the B-correction."""

import numpy as np

from .chains import Chain1, partition


def classify_points(points, tower):
    """(level, cell) of the top cell holding each point in its relative interior (None off Σ)."""
    return [tower.cell_of(p) for p in np.atleast_2d(points)]


def cone_radius(tower, l):
    """Bound on the distance from a cell center to a point of the cell at level l."""
    if l <= tower.n - 2 and tower.rho:
        return float(tower.rho[l - 1])
    return tower.width(l)


def cones_by_level(eta, tower, classes=None):
    """Dict l -> Cone_l(eta) for l = 1..n-1, built from one classification pass."""
    n = tower.n
    out = {l: [] for l in range(1, n)}
    bd = eta.boundary()
    if bd.is_zero():
        return {l: Chain1.zero(eta.n) for l in out}
    classes = classify_points(bd.points, tower) if classes is None else classes
    for p, cls in zip(bd.points, classes):
        if cls is None:
            continue
        l, cell = cls
        if l >= n:
            continue
        out[l].append(np.stack([tower.center(cell), p]))
    return {l: Chain1(np.array(v).reshape(-1, 2, eta.n), n=eta.n) for l, v in out.items()}


def cone_l(eta, l, tower):
    """Sum over top cells E of level l of the cone from q_E over the boundary points inside E."""
    return cones_by_level(eta, tower)[l]


def cone_all(eta, tower):
    total = Chain1.zero(eta.n)
    for c in cones_by_level(eta, tower).values():
        total = total + c
    return total


def A_op(eta, tower):
    """eta plus all its cones; its boundary lies on cell centers."""
    return eta + cone_all(eta, tower)


def interior_count(eta, l, tower):
    """Number of boundary points of eta in the interior of top cells of level l."""
    bd = eta.boundary()
    return sum(1 for c in classify_points(bd.points, tower) if c is not None and c[0] == l)


def cone_bound(eta, l, tower):
    return cone_radius(tower, l) * interior_count(eta, l, tower)


def off_center_points(chain0, tower, tol=1e-9):
    """Points of a 0-chain that are not cell centers."""
    return [p for p in chain0.points if not tower.is_center(p, tol)]


def in_interior(points, cell, tower, tol=1e-9):
    """Membership in the relative interior of a top cell."""
    lo, hi = tower.cell_box(cell)
    x = np.atleast_2d(points)
    ok = np.ones(len(x), dtype=bool)
    for c in range(tower.n):
        if c in cell.free:
            ok &= (x[:, c] > lo[c] + tol) & (x[:, c] < hi[c] - tol)
        else:
            ok &= np.abs(x[:, c] - lo[c]) <= tol
    return ok


def in_closed(points, cell, tower, tol=1e-9):
    lo, hi = tower.cell_box(cell)
    x = np.atleast_2d(points)
    return np.all((x >= lo - tol) & (x <= hi + tol), axis=1)


def owned_part(eta, cell, tower):
    """eta restricted to the owned part D~ of a top cell."""
    l = cell.level

    def labels(points):
        return tower.owners(points, l)

    N = tower.grid(l)

    def breaks(a, b):
        # owners only change where a coordinate crosses a grid hyperplane k / N
        out = []
        for p, q in zip(a, b):
            d = q - p
            moving = np.abs(d) > 1e-15
            lo, hi = np.minimum(p, q)[moving] * N, np.maximum(p, q)[moving] * N
            ts = [(np.arange(np.ceil(u), np.floor(v) + 1) / N - p0) / d0
                  for u, v, p0, d0 in zip(lo, hi, p[moving], d[moving])]
            out.append(np.unique(np.concatenate(ts)) if ts else np.zeros(0))
        return out

    parts = partition(eta, breaks, labels)
    return parts.get(cell, Chain1.zero(eta.n))


def b_correction(eta, cell, tower):
    """B = boundary(eta restricted to D~) + boundary(eta) restricted to int D; lies on the boundary of D."""
    own = owned_part(eta, cell, tower).boundary()
    bd = eta.boundary()
    inner = bd.select(in_interior(bd.points, cell, tower)) if len(bd) else bd
    return own + inner
