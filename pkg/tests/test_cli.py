import fcntl
import json
import os
from pathlib import Path

import pytest

from nugget_forge.cli import build_parser, main, write_atomic
from nugget_forge.graph import dumps
from nugget_forge.knowledge_base import load_model, model_equal, save_model
from nugget_forge.metamodel import typed_to_json
from nugget_forge.running_example import build_running_model

from pipeline import cli, run_pipeline
from test_knowledge_base import two_flag_agent

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def example(tmp_path):
    assert cli("example", tmp_path) == 0
    return tmp_path


def test_parser_lists_commands():
    text = build_parser().format_help()
    for cmd in ("validate", "init", "add", "aggregate", "widen", "instantiate", "example"):
        assert cmd in text


class TestValidate:
    def test_nugget_file(self, example, capsys):
        assert cli("validate", example / "egfr_grb2.json") == 0
        assert "ok" in capsys.readouterr().out

    def test_model_file(self, example):
        assert cli("validate", example / "model.json") == 0
        assert cli("validate", example / "model.json", "--as", "model") == 0

    def test_malformed_nugget(self, example, capsys):
        doc = json.loads((example / "egfr_grb2.json").read_text())
        doc["typing"]["Grb2.r90.aa"] = "flag"
        bad = example / "bad.json"
        bad.write_text(json.dumps(doc))
        assert cli("validate", bad) == 1
        assert "[VALUE_INCLUSION]" in capsys.readouterr().out

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{")
        assert cli("validate", p) == 1

    def test_missing_file(self, tmp_path):
        assert cli("validate", tmp_path / "nope.json") == 3


class TestEvolve:
    def test_pipeline_matches_library(self, tmp_path):
        model, out = run_pipeline(tmp_path)
        assert model_equal(load_model(json.loads(model.read_text())), build_running_model())
        assert out.read_text() == (GOLDEN / "running.ka").read_text()

    def test_ambiguous_aggregate_exits_2(self, tmp_path, capsys):
        one, two = tmp_path / "one.json", tmp_path / "two.json"
        one.write_text(dumps(typed_to_json(two_flag_agent(1))))
        two.write_text(dumps(typed_to_json(two_flag_agent(2))))
        model = tmp_path / "m.json"
        assert cli("init", "--model", model) == 0
        assert cli("add", "--model", model, "--nugget", two) == 0
        before = model.read_bytes()
        seeds = tmp_path / "seeds.json"
        seeds.write_text(json.dumps({"nugget": [["A", "A"], ["B", "B"], ["bnd", "bnd"]]}))
        code = cli("aggregate", "--model", model, "--target", 1, "--nugget", one, "--seeds", seeds)
        err = capsys.readouterr().err
        assert code == 2
        assert "1: " in err and "2: " in err
        assert model.read_bytes() == before

    def test_init_refuses_overwrite(self, tmp_path):
        model = tmp_path / "m.json"
        assert cli("init", "--model", model) == 0
        assert cli("init", "--model", model) == 3
        assert cli("init", "--model", model, "--force") == 0

    def test_stale_target(self, example):
        code = cli("aggregate", "--model", example / "model.json", "--target", 9,
                   "--nugget", example / "egfr_y1092.json")
        assert code == 1

    def test_bad_seed_file(self, example, tmp_path):
        seeds = tmp_path / "s.json"
        seeds.write_text(json.dumps({"nugget": "EGFR"}))
        code = cli("add", "--model", example / "model.json", "--nugget", example / "egfr_shc.json", "--seeds", seeds)
        assert code == 1

    def test_deprecate_file(self, example, capsys):
        dep = example / "dep.json"
        dep.write_text(json.dumps({"remove_nodes": ["Grb2.r90", "Grb2.r90.aa", "Grb2.r90.loc"]}))
        model = example / "model.json"
        seeds = example / "seeds_y1092.json"
        code = cli("aggregate", "--model", model, "--target", 2, "--nugget", example / "egfr_y1092.json",
                   "--seeds", seeds, "--deprecate", dep)
        assert code == 0
        assert "-" in capsys.readouterr().out
        m = load_model(json.loads(model.read_text()))
        assert not [n for n in m.nuggets[2].graph.graph.nodes if n.startswith("Grb2.r90")]


class TestInstantiate:
    def test_golden(self, example, capsys):
        out = example / "out.ka"
        code = cli("instantiate", "--model", example / "model.json", "--agents", "EGFR,Grb2,Shc",
                   "--wildtype", example / "wildtype.json", "--out", out)
        assert code == 0
        assert out.read_text() == (GOLDEN / "running.ka").read_text()
        printed = capsys.readouterr().out
        assert "rgSH2" in printed and "intrinsic" in printed

    def test_stdout(self, example, capsys):
        assert cli("instantiate", "--model", example / "model.json", "--agents", "EGFR,Grb2,Shc",
                   "--wildtype", example / "wildtype.json") == 0
        assert capsys.readouterr().out.startswith((GOLDEN / "running.ka").read_text())

    def test_unknown_agent(self, example):
        assert cli("instantiate", "--model", example / "model.json", "--agents", "EGFR,Sos") == 1

    def test_unwritable_output(self, example):
        out = example / "missing-dir" / "out.ka"
        assert cli("instantiate", "--model", example / "model.json", "--agents", "EGFR", "--out", out) == 3


class TestAtomicity:
    def test_failed_rename_keeps_old_model(self, example, monkeypatch):
        model = example / "model.json"
        before = model.read_bytes()

        def boom(src, dst):
            raise OSError(28, "No space left on device")

        monkeypatch.setattr(os, "replace", boom)
        code = cli("widen", "--model", model, "--node", "Grb2.r90.aa", "--aa", "T")
        assert code == 3
        assert model.read_bytes() == before
        assert not [p for p in example.iterdir() if p.name.endswith(".tmp")]

    def test_interrupted_write_keeps_old_file(self, tmp_path, monkeypatch):
        p = tmp_path / "f.txt"
        p.write_text("old")

        def interrupt(fd):
            raise KeyboardInterrupt

        monkeypatch.setattr(os, "fsync", interrupt)
        with pytest.raises(KeyboardInterrupt):
            write_atomic(p, "new")
        assert p.read_text() == "old"
        assert [q.name for q in tmp_path.iterdir()] == ["f.txt"]

    def test_lock_blocks_second_writer(self, example, capsys):
        model = example / "model.json"
        with open(f"{model}.lock", "a") as fh:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
            code = cli("widen", "--model", model, "--node", "Grb2.r90.aa", "--aa", "T")
        assert code == 3
        assert "locked" in capsys.readouterr().err
        assert cli("widen", "--model", model, "--node", "Grb2.r90.aa", "--aa", "T") == 0


def test_saved_model_is_canonical(example):
    text = (example / "model.json").read_text()
    assert text == dumps(save_model(build_running_model()))
    assert main(["validate", str(example / "model.json")]) == 0
