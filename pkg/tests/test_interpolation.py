import itertools

import numpy as np
import pytest

from coarea_lab.geometry import beta
from coarea_lab.harness import check_interpolation, cut_schedule, random_chain
from coarea_lab.interpolation import (Decomposition, MuCoefficients, cone_k_bound, homothety_stack,
                                      interpolate, interpolate_decomposed)


@pytest.fixture(scope="module")
def dec(tower4):
    rng = np.random.default_rng(7)
    tau = random_chain(rng, 4, 6)
    return Decomposition(tau, cut_schedule(tau, tower4, 3, rng), tower4)


def test_threshold_recovers_direct_cut(dec):
    for i0 in itertools.product(range(1, 4), repeat=2):
        res = interpolate_decomposed(dec, MuCoefficients.threshold(3, i0))
        assert res.total.equals(dec.direct_A(i0))


def test_all_ones_is_deepest_cut(dec):
    assert interpolate_decomposed(dec, MuCoefficients.ones(3)).total.equals(dec.direct_A((3, 3)))


def test_random_mu_bounds(dec, tower4):
    tau = dec.tau
    tol = 1e-6 * tau.mass()
    for seed in range(10):
        mu = MuCoefficients.random(3, seed)
        res = interpolate_decomposed(dec, mu)
        assert res.C.mass() <= (1 + beta(tower4)) * tau.mass() + tol
        for k in (1, 2):
            assert res.cones[k].mass() <= cone_k_bound(tau, dec.schedule, mu, k, tower4, dec=dec) + tol


def test_mu_tilde_nonincreasing():
    mu = MuCoefficients.random(3, 5)
    for k in (1, 2):
        for prefix in itertools.product(range(1, 4), repeat=k - 1):
            dvec = tuple([None] * k)
            vals = [mu.mu_tilde(k, prefix, dvec, i) for i in range(1, 4)]
            assert all(0 <= v <= 1 for v in vals)
            assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_mu_json_roundtrip():
    mu = MuCoefficients(2, default=0.5)
    mu.set(1, (2,), (None,), 0.25)
    mu2 = MuCoefficients.from_json(mu.to_json())
    assert mu2.mu(1, (2,), (None,)) == 0.25
    assert mu2.mu(2, (1, 2), (None, None)) == 0.5
    assert mu2.mu(2, (2, 1), (None, None)) == 1.0


def test_homothety_ratio_in_unit_interval(dec, tower4):
    mu = MuCoefficients.random(3, 11)
    for ivec, dvec in dec.leaves:
        r, _ = homothety_stack(mu, ivec, dvec, tower4).affine()
        assert 0.0 <= r <= 1.0


def test_interpolate_wrapper_matches(dec, tower4):
    mu = MuCoefficients.random(3, 2)
    a = interpolate(dec.tau, dec.schedule, mu, tower4).total
    b = interpolate_decomposed(dec, mu).total
    assert a.equals(b)


def test_interpolation_check_small():
    out = check_interpolation({"instances": 2, "draws": 10})
    assert out.passed and out.detail["draws"] == 10
