import csv

import pytest
import yaml

from biasrel.cli import build_parser, main


def _cfg(tmp_path):
    cfg = {"basepairs": "synthetic", "targets": ["synthetic"], "queries": "synthetic",
           "nbm": {"k": 8},
           "ensembles": [{"name": "e", "synth": {"vocab_size": 100, "d": 6, "k": 3, "seed": 2}}]}
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_subcommands_present():
    parser = build_parser()
    for cmd in ("score", "retest", "interrater", "internal", "stability", "features", "regress",
                "run"):
        assert parser.parse_args([cmd, "--config", "x"]).command == cmd
    assert parser.parse_args(["synth", "d"]).command == "synth"


def test_retest_with_overrides(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["retest", "--config", str(_cfg(tmp_path)), "--output-dir", str(out),
               "--rules", "dbwa,nbm", "--k", "5"])
    assert rc == 0
    rows = list(csv.DictReader(open(out / "retest.csv")))
    assert {r["rule"] for r in rows} == {"dbwa", "nbm"}
    assert not (out / "interrater.csv").exists()
    assert "retest.csv" in capsys.readouterr().out


def test_error_exit_code(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert "error" in capsys.readouterr().err


def test_synth_command(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "s"), "--vocab-size", "60", "--dim", "4",
                 "--seeds", "2"]) == 0
    assert (tmp_path / "s" / "seed1.txt").exists()
