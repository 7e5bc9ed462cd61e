import json

import pytest

from sparsedyn.cli import main
from sparsedyn.config import load_config, parse_grid
from sparsedyn.errors import ConfigError
from sparsedyn.graph import ContinuousFormat, SynthConfig, load_continuous, synthesize_stream

SMALL_INI = """\
[model]
d = 8
heads = 2
rounds = 1
n_patches = 3
[train]
max_epochs = 3
"""


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def small_stream(tmp_path):
    assert _run("generate", "--out", tmp_path / "gen", "--num-nodes", 16, "--num-events", 300, "--quiet") == 0
    return tmp_path / "gen" / "stream.csv"


@pytest.fixture
def small_ini(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL_INI)
    return p


# ---------------------------------------------------------------- configuration

def test_unknown_keys_are_rejected(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[model]\nwidth = 3\n")
    with pytest.raises(ConfigError, match="model.width"):
        load_config(p, environ={})
    p.write_text("[optimizer]\nlr = 3\n")
    with pytest.raises(ConfigError, match="optimizer"):
        load_config(p, environ={})


def test_layering_order(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[model]\nheads = 4\nd = 16\n[run]\nseed = 3\n")
    cfg = load_config(p, environ={"SPARSEDYN_MODEL_HEADS": "2", "OTHER": "x"})
    assert cfg.model.heads == 2 and cfg.model.d == 16 and cfg.model.seed == 3
    cfg = load_config(p, environ={"SPARSEDYN_MODEL_HEADS": "2"}, overrides={"model.heads": 8})
    assert cfg.model.heads == 8


def test_echoed_config_reloads(tmp_path):
    cfg = load_config(None, environ={"SPARSEDYN_MODEL_ADE_GRID": "2:10:2", "SPARSEDYN_DATA_NUM_NODES": "none"})
    assert cfg.model.ade_grid == (2, 4, 6, 8, 10)
    p = tmp_path / "echo.ini"
    p.write_text(cfg.to_ini())
    assert load_config(p, environ={}) == cfg


def test_grid_parsing():
    assert len(parse_grid("2:64:2")) == 32
    assert parse_grid("3, 5,9") == (3, 5, 9)
    with pytest.raises(ConfigError):
        parse_grid("10:2")


# ---------------------------------------------------------------- exit codes

def test_invalid_dropout_exits_2(tmp_path, capsys):
    assert _run("train", "--synthetic", "--dropout", 1.5, "--out", tmp_path, "--quiet") == 2
    assert "dropout" in capsys.readouterr().err


def test_missing_input_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert _run("stats", "--input", missing, "--out", tmp_path, "--quiet") == 2
    assert str(missing) in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert _run("--config", tmp_path / "none.ini", "stats", "--synthetic", "--out", tmp_path) == 2
    assert "none.ini" in capsys.readouterr().err


# ---------------------------------------------------------------- subcommands

def test_generate_is_reproducible_and_round_trips(tmp_path):
    for d in ("a", "b"):
        assert _run("generate", "--seed", 5, "--num-events", 200, "--out", tmp_path / d, "--quiet") == 0
    a, b = tmp_path / "a" / "stream.csv", tmp_path / "b" / "stream.csv"
    assert a.read_bytes() == b.read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["events"] == 200
    expect = synthesize_stream(SynthConfig(num_events=200), 5)
    assert load_continuous(a, ContinuousFormat(num_nodes=expect.num_nodes)) == expect


def test_encode_fixed_n(tmp_path):
    assert _run("generate", "--num-events", 100, "--out", tmp_path, "--quiet") == 0
    assert _run("encode", "--input", tmp_path / "stream.csv", "--n", 4, "--out", tmp_path / "enc", "--quiet") == 0
    rows = (tmp_path / "enc" / "patches.csv").read_text().splitlines()
    assert len(rows) == 5
    assert [int(r.split(",")[3]) for r in rows[1:]] == [25, 25, 25, 25]
    assert (tmp_path / "enc" / "patches.txt").read_text().count("#snapshot") == 4


def test_encode_search_writes_cost_curve(tmp_path, small_stream):
    assert _run("encode", "--input", small_stream, "--grid", "2:64:2", "--out", tmp_path / "enc", "--quiet") == 0
    assert len((tmp_path / "enc" / "cost_curve.csv").read_text().splitlines()) == 33
    assert (tmp_path / "enc" / "effective_config.ini").exists()


def test_stats_tables(tmp_path, small_stream, capsys):
    assert _run("stats", "--input", small_stream, "--ude-interval", 100, "--ade-n", 5, "--out", tmp_path) == 0
    text = (tmp_path / "stats_summary.csv").read_text()
    assert "interval=100" in text and "N=5" in text
    assert "interval=100" in capsys.readouterr().out


def test_train_then_eval_is_stable(tmp_path, small_stream, small_ini):
    out = tmp_path / "run"
    assert _run("--config", small_ini, "train", "--input", small_stream, "--out", out, "--quiet") == 0
    for name in ("checkpoint.ckpt", "report.json", "history.csv", "train_metrics.csv", "effective_config.ini"):
        assert (out / name).exists()
    results = []
    for d in ("e1", "e2"):
        assert _run("--config", small_ini, "eval", "--input", small_stream, "--checkpoint", out / "checkpoint.ckpt",
                    "--out", tmp_path / d, "--quiet") == 0
        rep = json.loads((tmp_path / d / "eval.json").read_text())
        rep.pop("inference_seconds")
        results.append(rep)
    assert results[0] == results[1]
    trained = json.loads((out / "report.json").read_text())
    assert trained["auc"] == results[0]["auc"]


def test_eval_custom_pairs(tmp_path, small_stream, small_ini):
    out = tmp_path / "run"
    assert _run("--config", small_ini, "train", "--input", small_stream, "--out", out, "--quiet") == 0
    pairs = tmp_path / "pairs.csv"
    pairs.write_text("0,1,1\n2,9,0\n")
    assert _run("--config", small_ini, "eval", "--input", small_stream, "--checkpoint", out / "checkpoint.ckpt",
                "--pairs", pairs, "--out", tmp_path / "e", "--quiet") == 0
    assert json.loads((tmp_path / "e" / "eval.json").read_text())["num_pairs"] == 2


def test_corrupted_checkpoint_exits_2(tmp_path, small_stream, small_ini, capsys):
    out = tmp_path / "run"
    assert _run("--config", small_ini, "train", "--input", small_stream, "--out", out, "--quiet") == 0
    ck = out / "checkpoint.ckpt"
    buf = bytearray(ck.read_bytes())
    buf[len(buf) // 2] ^= 0x55
    ck.write_bytes(bytes(buf))
    assert _run("--config", small_ini, "eval", "--input", small_stream, "--checkpoint", ck,
                "--out", tmp_path / "e", "--quiet") == 2
    assert "checksum mismatch" in capsys.readouterr().err


def test_timing_ratio(tmp_path, small_stream):
    assert _run("timing", "--input", small_stream, "--n", 16, "--heads", 2, "--repeats", 1,
                "--out", tmp_path, "--quiet") == 0
    rep = json.loads((tmp_path / "timing.json").read_text())
    assert abs(rep["score_ratio"] - 272 / 97) < 1e-12
    assert round(rep["score_ratio"], 2) == 2.80
    assert len((tmp_path / "timing.csv").read_text().splitlines()) == 3


def test_timing_from_checkpoint(tmp_path, small_stream, small_ini):
    out = tmp_path / "run"
    assert _run("--config", small_ini, "train", "--input", small_stream, "--out", out, "--quiet") == 0
    assert _run("--config", small_ini, "timing", "--input", small_stream, "--checkpoint", out / "checkpoint.ckpt",
                "--repeats", 1, "--out", tmp_path / "t", "--quiet") == 0
    assert json.loads((tmp_path / "t" / "timing.json").read_text())["N"] == 3
