import json

import pytest

from coarea_lab import geometry
from coarea_lab.cli import main


def test_gen_random_cut_interp(tmp_path):
    chain, sched = tmp_path / "c.json", tmp_path / "s.json"
    assert main(["gen", "random", "--n", "4", "--m", "6", "--seed", "2", "--out", str(chain)]) == 0
    assert main(["cut", "--chain", str(chain), "--q", "2", "--out", str(sched)]) == 0
    s = json.loads(sched.read_text())
    assert len(s["s"]) == 2 and len(s["s"][0]) == 2
    out = tmp_path / "i.json"
    assert main(["interp", "--chain", str(chain), "--schedule", str(sched), "--threshold", "2,1",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["mass"] >= rep["mass_C"] and set(rep["cone_bounds"]) == {"1", "2"}


def test_generators_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert main(["gen", "family", "--m", "2", "--seed", "4", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep_and_verify(tmp_path):
    fam = tmp_path / "fam.json"
    main(["gen", "family", "--m", "1", "--out", str(fam)])
    rep, csv = tmp_path / "r.json", tmp_path / "r.csv"
    assert main(["sweep", "run", "--family", str(fam), "--points", "5", "--csv", str(csv),
                 "--out", str(rep)]) == 0
    data = json.loads(rep.read_text())
    assert data["ok"] and len(data["points"]) == 2 + 5
    assert csv.read_text().splitlines()[0].startswith("p,x,")
    assert main(["verify", "--family", str(fam), "--points", "5", "--out", str(tmp_path / "v.json")]) == 0


def test_malformed_family_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"X": {"d": 1, "q": 1, "top_cells": []}}')
    assert main(["verify", "--family", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "family" and err["where"] == "delta"


def test_schedule_error_exit_code(capsys):
    assert main(["gen", "tower", "--p", "3"]) == 2
    assert "ScheduleError" in capsys.readouterr().err


def test_tol_root_flag(tmp_path):
    old = geometry.ROOT_TOL
    try:
        main(["gen", "tower", "--tol-root", "1e-10", "--out", str(tmp_path / "t.json")])
        assert geometry.ROOT_TOL == 1e-10
    finally:
        geometry.ROOT_TOL = old


def test_accept_subcommand(tmp_path, capsys):
    out = tmp_path / "acc.json"
    assert main(["accept", "--suite", "10", "--out", str(out)]) == 0
    assert "PASS criterion 10" in capsys.readouterr().err
    assert json.loads(out.read_text())["results"][0]["criterion"] == 10


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
