import itertools

import numpy as np
import pytest

from coarea_lab.chains import Chain1
from coarea_lab.geometry import (CollarMap, Homothety, ProductRetraction, RadialRetraction, Set1D,
                                 SlotProductSet, TangencyError, _classify_roots, beta, boundary_field,
                                 homotopy_area, level_crossings, profile, profile_inverse, pushforward,
                                 tower_field, tower_stack)


def test_set1d_merges_and_measures():
    S = Set1D([(0.5, 0.6), (0.0, 0.0), (0.55, 0.7)])
    assert len(S) == 2
    assert S.dist(np.array([0.3, 0.65, 0.9])) == pytest.approx([0.2, 0.0, 0.2])
    assert S.nearest(np.array([0.2])) == pytest.approx([0.0])
    assert len(S.fatten(0.3)) == 1


def test_profile_shape():
    eps, eb = 0.1, 0.2
    r = np.linspace(0, 0.5, 101)
    f = profile(r, eps, eb)
    assert np.all(f[r <= eps] == 0)
    assert np.allclose(f[r >= eb], r[r >= eb])
    assert np.all(np.diff(f) >= 0)
    y = np.linspace(0.01, 0.4, 40)
    assert np.allclose(profile(profile_inverse(y, eps, eb), eps, eb), y)


def test_product_retraction_collapses_collar_and_is_lipschitz(rng):
    S = ProductRetraction(0.1, 0.15)
    x = rng.random((500, 3))
    y = S(x)
    d = np.minimum(x, 1 - x).min(axis=1)
    assert np.all(np.minimum(y, 1 - y).min(axis=1)[d <= 0.1] == 0)
    assert np.allclose(np.minimum(y, 1 - y).min(axis=1), profile(d, 0.1, 0.15))
    i, j = rng.integers(500, size=(2, 2000))
    num = np.linalg.norm(y[i] - y[j], axis=1)
    den = np.linalg.norm(x[i] - x[j], axis=1)
    assert np.all(num <= S.lipschitz * den + 1e-12)


def test_product_retraction_rejects_bad_collar():
    with pytest.raises(ValueError):
        ProductRetraction(0.2, 0.1)


def _brute_dist(x, sets, n, grid):
    """Distance to a slot-product set by sampling the set on a fine grid."""
    best = np.full(len(x), np.inf)
    for coords in itertools.permutations(range(n), len(sets)):
        axes = [grid] * n
        for c, S in zip(coords, sets):
            axes[c] = grid[S.dist(grid) <= 1e-12]
        mesh = np.stack(np.meshgrid(*[axes[c] for c in range(n)], indexing="ij"), -1).reshape(-1, n)
        d = np.linalg.norm(x[:, None, :] - mesh[None, :, :], axis=2).min(axis=1)
        best = np.minimum(best, d)
    return best


def test_slot_product_distance_against_sampling(rng):
    sets = [Set1D([(0, 0), (1, 1)]), Set1D([(0.2, 0.3), (0.7, 0.7)])]
    F = SlotProductSet(2, sets)
    grid = np.linspace(0, 1, 1001)
    x = rng.random((40, 2))
    assert np.allclose(F.dist(x), _brute_dist(x, sets, 2, grid), atol=1e-3)
    p = F.nearest(x)
    assert np.allclose(np.linalg.norm(p - x, axis=1), F.dist(x))
    assert np.allclose(F.dist(p), 0, atol=1e-12)


def test_boundary_level_crossing_closed_form():
    f = boundary_field(4)
    a, b = np.array([0.5, 0.5, 0.5, 0.5]), np.array([0.05, 0.5, 0.5, 0.5])
    t = level_crossings(a, b, f, 0.1)
    assert t == pytest.approx([0.4 / 0.45])


def test_tangency_raises():
    f = boundary_field(2)
    with pytest.raises(TangencyError):
        level_crossings(np.array([0.1, 0.5]), np.array([0.5, 0.5]), f, 0.1)
    with pytest.raises(TangencyError):
        level_crossings(np.array([0.2, 0.2]), np.array([0.2, 0.8]), f, 0.2)
    with pytest.raises(ValueError):
        level_crossings(np.array([0.2, 0.2]), np.array([0.2, 0.8]), f, 0.0)


def test_exact_roots_match_sampled_roots(tower4, rng):
    """Exact piecewise-quadratic roots agree with the Lipschitz-certified bisection."""
    for l in (1, 2):
        f = tower_field(tower4, l)
        s = 0.6 * tower4.eps[l - 1]
        for _ in range(30):
            a, b = rng.random(4), rng.random(4)
            ex, d1 = _classify_roots(f, a, b, s, exact=True)
            sm, d2 = _classify_roots(f, a, b, s, exact=False)
            if d1 or d2:
                continue
            assert len(ex) == len(sm)
            assert np.allclose(ex, sm, atol=1e-8)


def test_beta_is_product_of_lipschitz_constants(sched4, tower4):
    prod = 1.0
    for e, eb in zip(tower4.eps, tower4.eps_bar):
        prod *= eb / (eb - e)
    assert beta(tower4) == pytest.approx(prod - 1)
    assert beta(tower4) == pytest.approx(sched4.beta)
    assert 127 < beta(tower4) < 128


def test_stack_lands_on_the_tower(tower4, rng):
    """Points near the boundary are pushed onto it by the first collapse."""
    R1 = tower_stack(tower4, 1)
    x = rng.random((200, 4))
    x[:, 0] = rng.uniform(0, tower4.eps[0], 200)
    assert np.allclose(R1(x)[:, 0], 0)
    R2 = tower_stack(tower4, 2)
    assert R2.lipschitz == pytest.approx(1 + beta(tower4))


def test_radial_retraction_fixes_far_points(tower4, rng):
    f = tower_field(tower4, 2)
    S = RadialRetraction(f, tower4.eps[1], tower4.eps_bar[1])
    x = rng.random((300, 4))
    far = f.dist(x) >= tower4.eps_bar[1]
    assert np.allclose(S(x)[far], x[far])
    near = f.dist(x) <= tower4.eps[1]
    assert np.allclose(f.dist(S(x)[near]), 0, atol=1e-12)


def test_pushforward_mass_bound(rng):
    S = ProductRetraction(0.1, 0.2)
    for _ in range(10):
        tau = Chain1.polyline(rng.random((6, 3)))
        img = pushforward(S, tau, tol=1e-9, lip=S.lipschitz)
        assert img.mass() <= S.lipschitz * tau.mass() + 1e-9
        assert img.boundary().equals(tau.boundary().__class__(S(tau.boundary().points)))


def test_homotopy_area_of_translation():
    tau = Chain1([[[0.0, 0.0], [1.0, 0.0]]])
    area = homotopy_area(lambda x: x + np.array([0.0, 0.5]), tau)
    assert area == pytest.approx(0.5, rel=1e-9)
    assert homotopy_area(Homothety([0.0, 0.0], 1.0), tau) == 0.0


def test_collar_map_inverse(rng):
    C = CollarMap(3)
    y = rng.random((5, 3))
    y[:, 0] = 0.0
    t = rng.uniform(0, C.r0, 5)
    x = C.exp(y, t)
    for xi, yi, ti in zip(x, y, t):
        y2, t2 = C.inverse(xi)
        assert np.allclose(C.exp(y2, t2)[0], xi, atol=1e-9)
    with pytest.raises(ValueError):
        C.exp(y, C.r0 * 2)
