import json

import numpy as np
import pytest

from coarea_lab.complex import CubicalComplex
from coarea_lab.sweep import (FamilyParseError, FPrime, LocalizedFamily, ScheduleError, delta_bound, p0,
                              random_family, report_csv, sample_points, schedule, sub_order, threads,
                              tower_constants, verify_bounds)


def test_power_laws(sched4):
    ap = 2 * 0.3 / 6
    assert sched4.rho[0] == pytest.approx(16 ** -0.75)
    assert sched4.rho[1] == pytest.approx(16 ** (-0.75 - ap))
    assert np.allclose(sched4.ratios, 16 ** (-ap / 3))


def test_gamma_both_readings(sched4):
    r = 16 ** (-0.1 / 3)
    assert sched4.gamma == pytest.approx(sched4.beta + r + 2 * r)
    assert sched4.gamma_stated == pytest.approx(sched4.beta + 3 * 16 ** -0.05)


def test_gamma_decreasing_and_interleaved():
    gam = [schedule(4, p, 0.3).gamma for p in (16, 64, 256, 1024)]
    assert all(a > b for a, b in zip(gam, gam[1:]))
    for p in (16, 64, 256, 1024):
        c = schedule(4, p, 0.3).coefficients()
        assert all(a > b for a, b in zip(c, c[1:])) and c[0] < 0.25


def test_threshold_p():
    assert p0(4, 0.3) == 8
    schedule(4, 8, 0.3)
    with pytest.raises(ScheduleError):
        schedule(4, 7, 0.3)


def test_sub_order():
    assert sub_order(2, 4) == [3, 2, 4]
    assert sub_order(1, 3) == [2, 3]
    assert sub_order(3, 3) == [3, 2]
    assert sorted(sub_order(2, 5)) == [2, 3, 4, 5]


def test_threads_env(monkeypatch):
    monkeypatch.setenv("COAREA_LAB_THREADS", "3")
    assert threads() == 3
    monkeypatch.setenv("COAREA_LAB_THREADS", "zero")
    assert threads() == 1
    monkeypatch.delenv("COAREA_LAB_THREADS")
    assert threads() == 1


@pytest.fixture(scope="module")
def fam1(sched4):
    return random_family(CubicalComplex.cube(1), 4, sched4, seed=3).validate()


@pytest.fixture(scope="module")
def fp1(fam1, sched4):
    return FPrime(fam1, sched4, seed=3).build()


def test_family_respects_delta(fam1, sched4):
    assert fam1.delta <= delta_bound(sched4, fam1.X)
    assert sum(r for _, r in fam1.balls) < fam1.delta
    merged = fam1.merged_balls(3)
    for i, (c, r) in enumerate(merged):
        for c2, r2 in merged[i + 1:]:
            assert np.linalg.norm(c - c2) >= r + r2


def test_family_json_roundtrip(fam1):
    fam2 = LocalizedFamily.from_json(fam1.to_json())
    assert fam2.delta == fam1.delta and fam2.N == fam1.N
    for v in fam1.X.vertices():
        assert fam2.F[v].equals(fam1.F[v], tol=0)
    assert fam2.to_json() == fam1.to_json()


def test_family_generation_is_deterministic(sched4):
    a = random_family(CubicalComplex.cube(2), 4, sched4, seed=9).to_json()
    b = random_family(CubicalComplex.cube(2), 4, sched4, seed=9).to_json()
    assert a == b


@pytest.mark.parametrize("edit,where", [
    (lambda d: d.pop("delta"), "delta"),
    (lambda d: d["balls"][0].update(radius=-1.0), "balls"),
    (lambda d: d["F"].pop(), "F"),
    (lambda d: d["F"][0]["segments"][0][0].__setitem__(0, [0.5, 0.5, 0.5, 0.5]), "F"),
])
def test_malformed_family(fam1, edit, where):
    data = json.loads(fam1.to_json())
    edit(data)
    with pytest.raises(FamilyParseError) as exc:
        LocalizedFamily.from_json(json.dumps(data)).validate()
    assert exc.value.where.split("[")[0] == where


def test_not_json_is_parse_error():
    with pytest.raises(FamilyParseError):
        LocalizedFamily.from_json("{not json")


def test_vertex_values(fp1, fam1):
    """At a vertex the extra term is F(anchor) + F(y), supported in the balls."""
    for v in fam1.X.vertices():
        ev = fp1.evaluate(fam1.X.coords(v))
        anchor = fp1.records[ev.cell].anchor
        assert ev.e.equals(fam1.F[anchor] + fam1.F[v])
        if len(ev.e):
            assert np.all(fam1.in_balls(ev.e.points(), 1e-9))


def test_point_certificates(fp1, fam1):
    rng = np.random.default_rng(0)
    for x in sample_points(fam1.X, rng, 40):
        pc = fp1.certify_point(x)
        assert pc.count <= pc.dim
        assert pc.threshold_ok
        assert min(pc.slack_b) >= -1e-9


def test_coefficients_monotone_along_edge(fp1, fam1):
    edge = fam1.X.cells_of_dim(1)[0]
    worst, mismatch = fp1.g_monotonicity(edge, np.array([0.5]))
    assert worst <= 1e-9 and mismatch <= 1e-9


def test_anchor_swap_is_local(fp1, fam1):
    rng = np.random.default_rng(1)
    for x in sample_points(fam1.X, rng, 5, dims=[1]):
        d, eps = fp1.anchor_swap(x)
        assert d <= eps + 1e-9


def test_final_bounds_on_interval(fp1, fam1):
    rng = np.random.default_rng(2)
    rep = verify_bounds(fp1, sample_points(fam1.X, rng, 10))
    assert rep["ok"]
    row = rep["points"][0]
    assert row["mass"] <= row["rhs_mass"] and row["boundary_mass"] <= row["rhs_boundary"]
    assert row["witness"] <= rep["flat_budget"]
    csv = report_csv([dict(r, p=16) for r in rep["points"]]).splitlines()
    assert csv[0].startswith("p,x,mass_F") and len(csv) == 11


def test_tower_constants(tower4):
    c = tower_constants(tower4, 16, 0.3)
    for name in ("stated", "definition"):
        block = c[name]
        assert block["C_n"] == max(block["steps"].values()) > 0
        assert block["C_prime_n"] == pytest.approx(5 * 2 * block["C_n"])
        assert block["C_sigma"] == pytest.approx(block["C_prime_n"] * 9)


def test_empty_family(sched4):
    """With F = 0 everywhere every bound holds and F' vanishes."""
    from coarea_lab.chains import Chain1

    X = CubicalComplex.cube(1)
    fam = LocalizedFamily(X, {v: Chain1.zero(4) for v in X.vertices()}, [], 0.01).validate()
    fam = LocalizedFamily.from_json(fam.to_json())
    fp = FPrime(fam, sched4).build()
    rep = verify_bounds(fp, sample_points(X, np.random.default_rng(0), 5))
    assert rep["ok"] and all(r["mass"] == 0 for r in rep["points"])
