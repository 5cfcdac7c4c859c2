import numpy as np
import pytest

from coarea_lab.chains import Chain1
from coarea_lab.cuts import (CutSchedule, CutSearchError, boundary_pieces, coarea_average,
                             crossing_profile, cut, cut_bar, cut_delta, find_admissible_cut,
                             localize, localize_all)
from coarea_lab.geometry import tower_field
from coarea_lab.harness import check_boundary, check_coarea, check_telescoping, cut_schedule, random_chain


def _sampled_count(tau, s, samples=20001):
    """Level-1 crossings counted from sign changes of the boundary distance."""
    total = 0
    t = np.linspace(0, 1, samples)
    for a, b in tau.segments:
        x = a + t[:, None] * (b - a)
        d = np.minimum(x, 1 - x).min(axis=1) - s
        total += int(np.count_nonzero(np.sign(d[1:]) != np.sign(d[:-1])))
    return total


def test_cut_certificate_matches_sampled_count(tower4, rng):
    for _ in range(15):
        tau = random_chain(rng, 4, int(rng.integers(1, 20)))
        r = find_admissible_cut(tau, 1, tower4, rng_seed=rng)
        assert 0 < r.s < tower4.eps[0]
        assert r.count == _sampled_count(tau, r.s)
        assert r.admissible and r.count * tower4.eps[0] <= tau.mass()


def test_cut_at_level_two(tower4, rng):
    tau = random_chain(rng, 4, 30)
    r = find_admissible_cut(tau, 2, tower4, rng_seed=3)
    rep = tower_field(tower4, 2).crossing_report(tau.segments[:, 0], tau.segments[:, 1], r.s)
    assert rep["count"] == r.count and not rep["degenerate"]


def test_coarea_average_bounded_by_mass(tower4, rng):
    """The mean crossing count over (0, eps) is at most mass / eps."""
    for l in (1, 2):
        eps = tower4.eps[l - 1]
        for _ in range(5):
            tau = random_chain(rng, 4, 25)
            assert coarea_average(tau, tower_field(tower4, l), eps) <= tau.mass() / eps
    grid, counts = crossing_profile(Chain1.zero(4), tower_field(tower4, 1), 0.1, 16)
    assert len(grid) == 16 and not counts.any()


def test_forbidden_ball_is_avoided(tower4, rng):
    tau = random_chain(rng, 4, 20)
    ball = (np.array([0.05, 0.5, 0.5, 0.5]), 0.02)
    r = find_admissible_cut(tau, 1, tower4, forbidden=[ball], rng_seed=1)
    assert not 0.03 <= r.s <= 0.07


def test_zero_chain_cut_is_trivial(tower4):
    r = find_admissible_cut(Chain1.zero(4), 1, tower4)
    assert r.count == 0 and 0 < r.s < tower4.eps[0]


def test_no_admissible_level(tower4):
    """A chain hugging the boundary with tiny mass leaves no admissible level."""
    tau = Chain1([[[0.0, 0.5, 0.5, 0.5], [0.3, 0.5, 0.5, 0.5]]])
    ball = (np.array([0.05, 0.5, 0.5, 0.5]), 0.2)
    with pytest.raises(CutSearchError):
        find_admissible_cut(tau, 1, tower4, forbidden=[ball])


def test_schedule_shape_and_json():
    S = CutSchedule([[0.3, 0.2, 0.1], [0.05, 0.04, 0.01]], np.array([[1, 2, 3], [0, 0, 0]]))
    assert S.q == 3 and S.levels == 2 and S.value(2, 1) == 0.05
    S2 = CutSchedule.from_json(S.to_json())
    assert np.array_equal(S2.s, S.s) and np.array_equal(S2.certificates, S.certificates)
    with pytest.raises(ValueError):
        CutSchedule([[0.1, 0.2]])


def test_generated_schedule_is_admissible(tower4, rng):
    tau = random_chain(rng, 4, 12)
    S = cut_schedule(tau, tower4, 3, rng)
    assert S.s.shape == (2, 3)
    for l in (1, 2):
        assert np.all(S.certificates[l - 1] * tower4.eps[l - 1] <= tau.mass())


def test_cut_bar_lies_outside_the_neighbourhoods(tower4, rng):
    tau = random_chain(rng, 4, 10)
    s = list(cut_schedule(tau, tower4, 1, rng).s[:, 0])
    bar = cut_bar(tau, s, tower4)
    if len(bar):
        for l, sl in enumerate(s, start=1):
            assert np.all(tower_field(tower4, l).dist(bar.points()) >= sl - 1e-9)
    assert bar.mass() <= tau.mass() + 1e-12


def test_boundary_pieces_sum_to_boundary(tower4, rng):
    for _ in range(10):
        tau = random_chain(rng, 4, 8)
        s = list(cut_schedule(tau, tower4, 1, rng).s[:, 0])
        bd = cut_bar(tau, s, tower4).boundary()
        total = bd.__class__(np.zeros((0, 4)))
        for p in boundary_pieces(tau, s, tower4):
            total = total + p
        assert total.equals(bd)


def test_cut_image_mass_bound(tower4, rng):
    """Pushing the cut chain through R_1 scales mass by at most its Lipschitz constant."""
    tau = random_chain(rng, 4, 8)
    s = [find_admissible_cut(tau, 1, tower4, rng_seed=rng).s]
    img = cut(tau, s, tower4)
    bar = cut_bar(tau, s, tower4)
    assert img.mass() <= tower4.eps_bar[0] / (tower4.eps_bar[0] - tower4.eps[0]) * bar.mass() + 1e-9


def test_shells_and_localization_reassemble(tower4, rng):
    tau = random_chain(rng, 4, 8)
    S = cut_schedule(tau, tower4, 2, rng)
    shells = [cut_delta(tau, S, (i, j), tower4) for i in (1, 2) for j in (1, 2)]
    total = shells[0]
    for c in shells[1:]:
        total = total + c
    assert total.equals(cut_bar(tau, [S.value(1, 2), S.value(2, 2)], tower4))
    ch = cut_delta(tau, S, (2, 2), tower4)
    parts = localize_all(ch, (2, 2), tower4)
    assert sum(c.mass() for c in parts.values()) == pytest.approx(ch.mass())
    for d in parts:
        assert localize(ch, (2, 2), d, tower4).equals(parts[d])


def test_coarea_check_small():
    assert check_coarea({"chains": 10}).passed


def test_boundary_check_small():
    assert check_boundary({"instances": 10}).passed


def test_telescoping_check_small():
    out = check_telescoping({"instances": 3})
    assert out.passed and out.detail["checks"] > 0
