import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest

from acdesign.cli import main
from acdesign.data import RngSpec, read_csv
from acdesign.score import split_pilot
from acdesign.simulate import scenario_presets

GOLDENS = Path(__file__).with_name("goldens.json")
PIPELINE_FILES = ("data.csv", "scores.json", "acplot.svg", "overlap.svg")


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def tree_digests(d: Path) -> dict:
    return {p.name: digest(p) for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.csv"
    assert main(["simulate", "--preset", "fig1c", "--n", "800", "--seed", "3", "--out", str(data)]) == 0
    scored = root / "scored.csv"
    rc = main(["score", "--data", str(data), "--seed", "3", "--out", str(scored),
               "--models-out", str(root / "scores.json")])
    assert rc == 0
    return root


def test_pipeline_is_byte_identical_on_rerun(tmp_path):
    args = ["pipeline", "--preset", "fig1b", "--n", "1000", "--seed", "7"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    for name in PIPELINE_FILES:
        assert (tmp_path / "a" / name).exists()
    assert tree_digests(tmp_path / "a") == tree_digests(tmp_path / "b")


def test_infeasible_design_exit_code(workspace, capsys):
    rc = main(["match", "--scored", str(workspace / "scored.csv"), "--design", "require-all-treated",
               "--propensity-caliper", "0", "--out", str(workspace / "m.csv")])
    assert rc == 3
    assert "infeasible" in capsys.readouterr().err


def test_score_echoes_split_counts(workspace, capsys):
    data = workspace / "data.csv"
    rc = main(["score", "--data", str(data), "--pilot-fraction", "0.05", "--seed", "11",
               "--out", str(workspace / "s05.csv"), "--models-out", str(workspace / "m05.json")])
    assert rc == 0
    split = split_pilot(read_csv(data), 0.05, rng=RngSpec(11).derive("pilot"))
    err = capsys.readouterr().err
    assert f"pilot: {split.pilot_indices.size} controls; analysis: {split.analysis_indices.size} units" in err


def test_match_diagnose_plot_chain(workspace):
    w = workspace
    before = digest(w / "scored.csv")
    assert main(["match", "--scored", str(w / "scored.csv"), "--design", "caliper-both",
                 "--mode", "max-cardinality", "--out", str(w / "match.csv")]) == 0
    assert main(["diagnose", "--scored", str(w / "scored.csv"), "--matching", str(w / "match.csv"),
                 "--out", str(w / "diag.json"), "--csv-dir", str(w / "diag")]) == 0
    payload = json.loads((w / "diag.json").read_text())
    assert payload["effects"]["n_pairs"] == len((w / "match.csv").read_text().splitlines()) - 1
    for kind in ("ac", "overlap", "love"):
        out = w / f"{kind}.svg"
        assert main(["plot", "--kind", kind, "--scored", str(w / "scored.csv"),
                     "--matching", str(w / "match.csv"), "--out", str(out)]) == 0
        assert out.read_text().startswith("<?xml")
    assert digest(w / "scored.csv") == before  # inputs are never modified


def test_nearfar_and_rac(tmp_path):
    assert main(["pipeline", "--preset", "fig6-iv", "--n", "120", "--design", "nearfar",
                 "--out-dir", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "matching.json").read_text())
    assert meta["bipartite"] is False and "heuristic" in meta["design"]["solver"]
    assert (tmp_path / "rac.svg").exists()


def test_nearfar_without_instrument_is_a_data_error(tmp_path):
    rc = main(["pipeline", "--preset", "fig1a", "--n", "100", "--design", "nearfar", "--out-dir", str(tmp_path)])
    assert rc == 2


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["simulate", "--n", "ten", "--out", "x.csv"],
        ["pipeline", "--preset", "fig1a"],
        ["match", "--scored", "x.csv", "--design", "bogus"],
    ],
)
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    if argv[:1] == ["match"]:
        main(["simulate", "--n", "50", "--out", "d.csv"])
        main(["score", "--data", "d.csv", "--out", "x.csv", "--models-out", "m.json"])
    assert main(argv) == 1


def test_data_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,t:assign\n1,2\n")
    assert main(["score", "--data", str(bad)]) == 2
    assert main(["score", "--data", str(tmp_path / "missing.csv")]) == 2
    assert main(["simulate", "--rho", "2", "--out", str(tmp_path / "d.csv")]) == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# simulation settings\npreset = fig1c\nn = 300\nseed = 4\ninclude_latent = false\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--config", str(cfg), "simulate", "--out", str(a)]) == 0
    assert main(["--config", str(cfg), "simulate", "--n", "120", "--out", str(b)]) == 0
    assert read_csv(a).n == 300 and read_csv(b).n == 120
    direct = tmp_path / "c.csv"
    main(["simulate", "--preset", "fig1c", "--n", "300", "--seed", "4", "--out", str(direct)])
    assert a.read_bytes() == direct.read_bytes()
    cfg.write_text("nonsense = 1\n")
    assert main(["--config", str(cfg), "simulate", "--out", str(a)]) == 1


def test_simulate_options(tmp_path, capsys):
    assert main(["simulate", "--list-presets"]) == 0
    listed = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[0] for line in listed] == [c.name for c in scenario_presets()]
    out, truth = tmp_path / "d.csv", tmp_path / "t.csv"
    assert main(["simulate", "--preset", "fig5-confounded", "--n", "40", "--out", str(out),
                 "--truth-out", str(truth), "--include-latent"]) == 0
    assert "u:latent" in out.read_text().splitlines()[0]
    assert truth.read_text().splitlines()[0] == "phi,psi,e_true,y0,y1"


def test_threads_default_from_environment(monkeypatch):
    from acdesign.cli import build_parser

    monkeypatch.setenv("ACDESIGN_THREADS", "3")
    assert build_parser().parse_args(["simulate"]).threads == 3


def _preset_digests(preset, out):
    assert main(["pipeline", "--preset", preset, "--seed", "0", "--out-dir", str(out)]) == 0
    return tree_digests(out)


@pytest.mark.parametrize("preset", [c.name for c in scenario_presets()])
def test_preset_goldens(preset, tmp_path):
    got = _preset_digests(preset, tmp_path)
    if os.environ.get("ACDESIGN_UPDATE_GOLDENS"):
        table = json.loads(GOLDENS.read_text()) if GOLDENS.exists() else {}
        table[preset] = got
        GOLDENS.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
        pytest.skip("goldens updated")
    expected = json.loads(GOLDENS.read_text())[preset]
    assert got == expected
