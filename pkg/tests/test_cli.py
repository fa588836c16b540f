import json

import pytest

from exitbarrier.cli import OUT_ENV, main
from exitbarrier.report import parse_bte_report


def _compute(fixture_dir, out, *extra):
    return main([
        "compute",
        "--ratings", str(fixture_dir / "ratings_small.dat"),
        "--relevance", str(fixture_dir / "relevance_small.csv"),
        "--out", str(out),
        *extra,
    ])


def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_compute_writes_one_report_per_user(fixture_dir, tmp_path):
    assert _compute(fixture_dir, tmp_path) == 0
    reports = sorted(tmp_path.glob("user*_bte.json"))
    assert [p.name for p in reports] == ["user1_bte.json", "user2_bte.json", "user3_bte.json"]
    for p in reports:
        rep = parse_bte_report(p.read_bytes())
        assert [c.label for c in rep.categories] == ["violence", "animation"]
        assert rep.config["nu"] == 4
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["counts"]["reports"] == 3
    assert manifest["counts"]["accepted"] == 71
    assert set(manifest["outputs"]) == {p.name for p in reports}


def test_unknown_user_named_in_error(fixture_dir, tmp_path, capsys):
    assert _compute(fixture_dir, tmp_path, "--users", "1,999") != 0
    assert "999" in capsys.readouterr().err
    assert not list(tmp_path.glob("user*"))


def test_missing_input_file(tmp_path, capsys):
    code = main(["compute", "--ratings", str(tmp_path / "nope.dat"), "--relevance", str(tmp_path / "r.csv"),
                 "--out", str(tmp_path)])
    assert code != 0
    assert "nope.dat" in capsys.readouterr().err


def test_rerun_is_byte_identical(fixture_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ("--series", "--plots", "--nu", "3", "--k", "1.5")
    assert _compute(fixture_dir, a, *args) == 0
    assert _compute(fixture_dir, b, *args) == 0
    assert _tree(a) == _tree(b)
    assert any(name.endswith(".svg") for name in _tree(a))


def test_user_subset_and_category_subset(fixture_dir, tmp_path):
    assert _compute(fixture_dir, tmp_path, "--users", "2", "--categories", "animation") == 0
    (only,) = tmp_path.glob("user*_bte.json")
    rep = parse_bte_report(only.read_bytes())
    assert rep.user_id == 2 and [c.label for c in rep.categories] == ["animation"]


def test_nu_too_large_for_everyone(fixture_dir, tmp_path, capsys):
    assert _compute(fixture_dir, tmp_path, "--nu", "50") != 0
    assert "too large" in capsys.readouterr().err


def test_out_dir_from_environment(fixture_dir, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    code = main(["compute", "--ratings", str(fixture_dir / "ratings_small.dat"),
                 "--relevance", str(fixture_dir / "relevance_small.csv")])
    assert code == 0
    assert (tmp_path / "env" / "user1_bte.json").is_file()


def test_no_out_dir_anywhere(fixture_dir, monkeypatch, capsys):
    monkeypatch.delenv(OUT_ENV, raising=False)
    code = main(["compute", "--ratings", str(fixture_dir / "ratings_small.dat"),
                 "--relevance", str(fixture_dir / "relevance_small.csv")])
    assert code != 0
    assert OUT_ENV in capsys.readouterr().err


def test_simulate_single_step(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--horizon", "1", "--seed", "2"]) == 0
    trace = (tmp_path / "user1_trace.csv").read_text().splitlines()
    assert len(trace) == 2
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["counts"]["steps"] == 1


def test_simulate_pipeline_and_report(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--out", str(sim), "--horizon", "60", "--pipeline", "--nu", "10", "--plots"]) == 0
    assert (sim / "user1_bte.json").is_file()
    assert (sim / "user1_series-with-thresholds.svg").is_file()
    rep_dir = tmp_path / "rep"
    assert main(["report", str(sim / "user1_bte.json"), "--out", str(rep_dir), "--top", "3"]) == 0
    assert (rep_dir / "user1_bte.csv").read_text().startswith("user_id,category,status")
    assert (rep_dir / "user1_bte-by-category.svg").is_file()


def test_simulate_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("drift = 4\nexploration = -1\n")
    assert main(["simulate", "--sim-config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err
    assert "drift" in err and "exploration" in err


def test_invalid_nu_rejected(fixture_dir, tmp_path):
    with pytest.raises(SystemExit):
        _compute(fixture_dir, tmp_path, "--nu", "0")
