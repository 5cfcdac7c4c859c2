import itertools
import math

import numpy as np
import pytest

from coarea_lab.complex import (Cell, CubicalComplex, EuclideanComplex, SkeletonTower, TowerError,
                                build_cube_domain, check_interleaving)


def test_cube_domain_counts_and_volume():
    K = build_cube_domain(3, 2)
    assert len(K.simplices[3]) == 8 * 6
    assert len(K.vertices) == 27
    assert K.volume() == pytest.approx(1.0)
    assert K.width() == pytest.approx(math.sqrt(3) / 2)


def test_cube_domain_boundary_is_closed_surface():
    """Boundary of the triangulated cube: area 2n for the unit 3-cube, Euler characteristic 2."""
    B = build_cube_domain(3, 2).boundary()
    assert B.volume(2) == pytest.approx(6.0)
    chi = len(B.simplices[0]) - len(B.simplices[1]) + len(B.simplices[2])
    assert chi == 2


@pytest.mark.parametrize("n,m", [(2, 1), (7, 1), (3, 0)])
def test_cube_domain_rejects_bad_input(n, m):
    with pytest.raises(ValueError):
        build_cube_domain(n, m)


def test_euclidean_complex_json_roundtrip():
    K = build_cube_domain(4, 1)
    K2 = EuclideanComplex.from_json(K.to_json())
    assert np.array_equal(K.vertices, K2.vertices)
    assert all(np.array_equal(K.simplices[k], K2.simplices[k]) for k in K.simplices)


def test_tower_from_schedule(sched4, tower4):
    assert tower4.grids == (14, 28)
    for l in (1, 2):
        assert tower4.width(l) <= sched4.rho[l - 1] * (1 + 1e-12)
    assert tower4.boundary_volume() == 8.0


def test_tower_rejects_non_nested_grids():
    with pytest.raises(TowerError):
        SkeletonTower(4, (3, 4))
    with pytest.raises(TowerError):
        SkeletonTower(4, (2,))


def test_interleaving_check():
    check_interleaving((0.1,), (0.2,), (0.3,))
    with pytest.raises(TowerError):
        check_interleaving((0.25,), (0.2,), (0.3,))


def test_level_one_count_closed_form():
    T = SkeletonTower(4, (2, 4))
    assert T.num_top_cells(1) == sum(1 for _ in T.top_cells(1)) == 2 * 4 * 2 ** 3


def test_subcell_counts_below_recursion_bound():
    T = SkeletonTower(4, (2, 4))
    for D in T.top_cells(1):
        assert 0 < T.count_subcells(D, 2) <= T.recursion_bound(1, 2)


def test_depth_and_membership():
    T = SkeletonTower(4, (2, 4))
    assert T.depth([0.3, 0.4, 0.6, 0.7]) == 0
    assert T.depth([0.0, 0.3, 0.6, 0.7]) == 1
    assert T.depth([0.0, 0.5, 0.6, 0.7]) == 2
    assert T.depth([0.0, 1.0, 0.0, 1.0]) == 4
    # a level-2 grid value on a level-1 cell is not enough without the coarse hyperplane
    assert T.depth([0.25, 0.25, 0.6, 0.7]) == 0


def test_cell_of_interior_point():
    T = SkeletonTower(4, (2, 4))
    l, cell = T.cell_of([0.0, 0.3, 0.6, 0.7])
    assert l == 1 and cell.free == (1, 2, 3) and cell.corner == (0, 0, 1, 1)
    lo, hi = T.cell_box(cell)
    assert np.allclose(T.center(cell), [0.0, 0.25, 0.75, 0.75])
    assert np.allclose(hi - lo, [0, 0.5, 0.5, 0.5])


def test_vectorized_owners_match_scalar(rng):
    T = SkeletonTower(4, (2, 4))
    pts = []
    for _ in range(200):
        x = rng.random(4)
        for a in rng.choice(4, size=int(rng.integers(1, 3)), replace=False):
            x[a] = rng.integers(0, 5) / 4
        pts.append(x)
    for l in (1, 2):
        assert T.owners(np.array(pts), l) == [T.owner(p, l) for p in pts]


def test_tower_json_roundtrip(tower4):
    T2 = SkeletonTower.from_json(tower4.to_json())
    assert T2.grids == tower4.grids and T2.eps == tower4.eps and T2.meta["p"] == 16


def test_cubical_complex_faces():
    X = CubicalComplex.cube(2)
    assert [len(X.skeleton(j)) for j in range(3)] == [4, 8, 9]
    assert len(X.cells_of_dim(1)) == 4 and len(X.vertices()) == 4
    top = X.cells_of_dim(2)[0]
    assert len(X.faces(top)) == 8  # all proper faces: 4 edges, 4 vertices
    assert len(X.cell_vertices(top)) == 4


def test_cubical_carrier():
    X = CubicalComplex.cube(3)
    c = X.carrier(np.array([0.5, 0.0, 1.0]))
    assert c == ((0, 0, 1), (0,))
    for corner, free in itertools.islice(X.cells, 5):
        assert len(corner) == 3 and all(a in range(3) for a in free)


def test_cell_is_ordered_and_hashable():
    a, b = Cell(1, (1, 2, 3), (0, 0, 0, 0)), Cell(1, (1, 2, 3), (0, 0, 0, 1))
    assert a < b and len({a, b, a}) == 2
