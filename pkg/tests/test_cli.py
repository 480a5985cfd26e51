import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hyperdest import cli
from hyperdest.corpus import load_corpus, read_header
from hyperdest.encode import ReferenceSet
from hyperdest.evaluation import EvalReport
from hyperdest.geo import haversine_np

SAMPLE = Path(cli.__file__).parent / "data" / "porto_sample.csv"

# frozen from a run over the bundled 100-row sample (tools/make_porto_sample.py)
SAMPLE_REPORT = {
    "n_input": 93, "n_output": 59, "removed_duration": 14, "removed_speed": 5,
    "removed_area": 5, "removed_roundtrip": 10, "n_smoothed": 10, "n_rejected_rows": 3,
}


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_preprocess_sample_golden(tmp_path, capsys):
    out, rej = tmp_path / "c.jsonl", tmp_path / "rejects.tsv"
    assert run("preprocess", SAMPLE, "--output", out, "--reject-log", rej) == 0
    report = json.loads(capsys.readouterr().out)
    assert {k: report[k] for k in SAMPLE_REPORT} == SAMPLE_REPORT
    removed = sum(report[k] for k in SAMPLE_REPORT if k.startswith("removed_"))
    assert report["n_output"] + removed == report["n_input"]
    assert len(load_corpus(out)) == 59
    assert [line.split("\t")[0] for line in rej.read_text().splitlines()] == ["41", "61", "81"]
    assert read_header(out)["producer"] == "preprocess"


def test_preprocess_report_file_and_empty_input(tmp_path, capsys):
    src = tmp_path / "empty.csv"
    src.write_text(SAMPLE.read_text().splitlines()[0] + "\n")
    rep = tmp_path / "r.json"
    assert run("preprocess", src, "--output", tmp_path / "c.jsonl", "--report", rep) == 0
    assert capsys.readouterr().out == ""
    report = json.loads(rep.read_text())
    assert report["n_input"] == report["n_output"] == 0


def test_preprocess_missing_file(tmp_path, capsys):
    assert run("preprocess", tmp_path / "nope.csv", "--output", tmp_path / "c.jsonl") == 2
    assert "nope.csv" in capsys.readouterr().err


@pytest.fixture
def synth_corpus(tmp_path):
    path = tmp_path / "s.jsonl"
    assert run("synth", "--n", 60, "--seed", 3, "--output", path) == 0
    return path


def test_synth_header_echoes_config(synth_corpus):
    header = read_header(synth_corpus)
    assert header["producer"] == "synth"
    cfg = header["config"]
    assert cfg["n_trajectories"] == 60 and cfg["seed"] == 3 and len(cfg["hotspots"]) == 8
    assert len(load_corpus(synth_corpus)) == 60


def test_sample_refs_deterministic(tmp_path, synth_corpus):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("sample-refs", synth_corpus, "--n", 50, "--output", a) == 0
    assert run("sample-refs", synth_corpus, "--n", 50, "--output", b) == 0
    assert a.read_bytes() == b.read_bytes()
    refs = ReferenceSet.load_csv(a)
    d = haversine_np(refs.points[:, None, 0], refs.points[:, None, 1],
                     refs.points[:, 0], refs.points[:, 1])
    np.fill_diagonal(d, np.inf)
    assert len(refs) == 50 and d.min() >= 0.1
    assert run("sample-refs", synth_corpus, "--n", 1, "--output", a) == 0
    assert len(ReferenceSet.load_csv(a)) == 1


def test_sample_refs_infeasible(tmp_path, synth_corpus, capsys):
    assert run("sample-refs", synth_corpus, "--n", 500, "--min-sep-km", 2.0,
               "--output", tmp_path / "r.csv") == 2
    assert "only" in capsys.readouterr().err
    assert not (tmp_path / "r.csv").exists()


@pytest.mark.parametrize("argv", [
    ["--epochs", "0"], ["--variant", "bogus"], ["--timescales", "month"], ["--lr", "-1"],
])
def test_train_rejects_bad_options(tmp_path, synth_corpus, argv):
    with pytest.raises(SystemExit) as exc:
        run("train", synth_corpus, *argv)
    assert exc.value.code == 1


def test_oracle_checkpoint_scores_zero(tmp_path, capsys):
    corpus = tmp_path / "one.jsonl"
    assert run("synth", "--n", 8, "--n-hotspots", 1, "--sigma-km", 0, "--output", corpus) == 0
    hotspot = read_header(corpus)["config"]["hotspots"][0]
    refs = tmp_path / "refs.csv"
    ReferenceSet(np.array([hotspot])).save_csv(refs)
    ckpt = tmp_path / "m.ckpt"
    assert run("train", corpus, "--refs", refs, "--output", ckpt, "--epochs", 1,
               "--holdout", 0) == 0
    capsys.readouterr()
    assert run("eval", ckpt, corpus, "--refs", refs, "--label", "oracle") == 0
    report = EvalReport.from_csv(capsys.readouterr().out)
    assert report.label == "oracle" and report.count == 8
    assert report.mhd_km == 0.0 and set(report.mhd_at.values()) == {0.0}


def test_full_pipeline_and_digest_check(tmp_path, synth_corpus, capsys):
    refs, ckpt, log = tmp_path / "refs.csv", tmp_path / "m.ckpt", tmp_path / "loss.csv"
    val = tmp_path / "val.jsonl"
    assert run("sample-refs", synth_corpus, "--n", 32, "--output", refs) == 0
    assert run("train", synth_corpus, "--refs", refs, "--output", ckpt, "--epochs", 1,
               "--batch-size", 16, "--holdout", 10, "--val-output", val,
               "--loss-log", log) == 0
    assert len(load_corpus(val)) == 10
    assert log.read_text().splitlines()[0] == "epoch,step,loss_km"
    assert len(log.read_text().splitlines()) == 1 + 4  # 50 trajectories / 16 per step
    capsys.readouterr()
    assert run("eval", ckpt, val, "--refs", refs, "--table") == 0
    out = capsys.readouterr().out
    assert "published, not reproduced" in out
    colors = tmp_path / "colors.csv"
    assert run("export-embeddings", ckpt, "--refs", refs, "--output", colors) == 0
    assert len(colors.read_text().splitlines()) == 33

    other = tmp_path / "other.csv"
    ReferenceSet(ReferenceSet.load_csv(refs).points[::-1]).save_csv(other)
    assert run("eval", ckpt, val, "--refs", other) == 2
    assert "digest" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    conf = tmp_path / "opts.conf"
    conf.write_text("# comment\nn = 10\nseed = 4\nmin-sep-km = 0.5\n")
    opts = cli.SAMPLE_OPTIONS
    cfg = cli.resolve(opts, {}, str(conf), environ={})
    assert (cfg["n"], cfg["seed"], cfg["min_sep_km"]) == (10, 4, 0.5)
    cfg = cli.resolve(opts, {}, str(conf), environ={"HYPERDEST_SEED": "7"})
    assert cfg["seed"] == 7 and cfg["n"] == 10
    cfg = cli.resolve(opts, {"seed": 9}, str(conf), environ={"HYPERDEST_SEED": "7"})
    assert cfg["seed"] == 9
    assert cli.resolve(opts, {}, None, environ={})["n"] == 4096
    conf.write_text("colour = red\n")
    with pytest.raises(cli.UsageError, match="colour"):
        cli.resolve(opts, {}, str(conf), environ={})
    with pytest.raises(cli.UsageError):
        cli.resolve(opts, {}, None, environ={"HYPERDEST_N": "many"})


def test_config_file_through_main(tmp_path, synth_corpus):
    conf = tmp_path / "opts.conf"
    out = tmp_path / "r.csv"
    conf.write_text(f"n = 5\noutput = {out}\n")
    assert run("sample-refs", synth_corpus, "--config", conf) == 0
    assert len(ReferenceSet.load_csv(out)) == 5
    conf.write_text("bogus = 1\n")
    assert run("sample-refs", synth_corpus, "--config", conf) == 1


@pytest.mark.parametrize("command", sorted(cli.OPTIONS))
def test_help(command, capsys):
    with pytest.raises(SystemExit) as exc:
        run(command, "--help")
    assert exc.value.code == 0
    assert "--config" in capsys.readouterr().out


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "hyperdest.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for command in cli.OPTIONS:
        assert command in res.stdout
