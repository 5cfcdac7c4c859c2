import math

import numpy as np
import pytest

from coarea_lab.harness import (CHECKS, SUITES, TREE_MASS_BOUND, TREE_MASS_PRINTED, gen_spiral, gen_tree,
                                random_chain, run_acceptance, spiral_components, tree_cut, tree_leaves)


def test_tree_bound_constants():
    assert TREE_MASS_BOUND == pytest.approx(2 / 3 + 3 * math.sqrt(2))
    # the printed value is close to, but not equal to, the formula minus one
    assert abs(TREE_MASS_PRINTED - (TREE_MASS_BOUND - 1)) < 1e-4
    assert TREE_MASS_PRINTED < TREE_MASS_BOUND


@pytest.mark.parametrize("depth", range(0, 9))
def test_tree_mass_and_leaves(depth):
    tau = gen_tree(depth)
    assert tau.mass() <= min(TREE_MASS_BOUND, TREE_MASS_PRINTED) + 1e-9
    assert len(tree_leaves(tau)) == 3 ** depth


def test_tree_inside_square():
    pts = gen_tree(6).points()
    assert np.all((pts >= 0) & (pts <= 1))
    assert np.count_nonzero(pts[:, 1] == 1.0) == 1


def test_tree_is_deterministic():
    assert gen_tree(5).to_json() == gen_tree(5).to_json()


@pytest.mark.parametrize("depth", [3, 6, 9])
def test_tree_collar_cut(depth):
    """Crossings of the chosen level are bounded by mass / eps."""
    tau = gen_tree(depth)
    s, count = tree_cut(tau, 0.25)
    assert 0 < s < 0.25
    assert count * 0.25 <= tau.mass()


def test_spiral_family_shape():
    xs, fam = gen_spiral(turns=3, samples=5)
    assert np.allclose(xs, np.linspace(0, 1, 5))
    for c in fam:
        assert np.all((c.points() >= 0) & (c.points() <= 1))
        bd = c.boundary().points
        assert np.all(np.any((bd <= 1e-12) | (bd >= 1 - 1e-12), axis=1))


def test_spiral_obstruction():
    res = spiral_components()
    assert res["obstructed"]
    assert res["rows"][0]["sides"] == ["left"]
    assert res["rows"][-1]["sides"] == ["right"]
    assert res["min_gap"] > 0


def test_random_chain_is_seeded():
    a = random_chain(np.random.default_rng(5), 4, 10)
    b = random_chain(np.random.default_rng(5), 4, 10)
    assert a.to_json() == b.to_json()
    bd = a.boundary().points
    assert np.all(np.any((bd == 0) | (bd == 1), axis=1))


def test_suites_cover_every_criterion():
    assert sorted({i for v in SUITES.values() for i in v}) == sorted(CHECKS) == list(range(1, 11))


def test_run_acceptance_filters_suite():
    code, report, outcomes = run_acceptance({"suite": "complex"})
    assert code == 0 and [o.criterion for o in outcomes] == [10]
    assert report["results"][0]["passed"]
    code, _, outcomes = run_acceptance({"suite": "9,10"})
    assert code == 0 and [o.criterion for o in outcomes] == [9, 10]
    assert outcomes[0].line().startswith("PASS criterion 9")


def test_run_acceptance_rejects_unknown_suite():
    with pytest.raises(ValueError):
        run_acceptance({"suite": "nonsense"})
