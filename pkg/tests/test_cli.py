import csv
import glob
import os

import numpy as np
import pytest

from gnefit.cli import main, parse_args
from gnefit.errors import ConfigError

SMALL = ["--m_train", "60", "--m_val", "40", "--m_test", "30", "--restarts", "1",
         "--epochs", "30", "--qn_iters", "30", "--value_hidden", "6,4", "--gne_hidden", "4,3"]

TIMING = {"predict_time", "solve_time", "train_time", "wall_seconds"}


def gnefit(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def masked(path):
    return [{k: v for k, v in r.items() if k not in TIMING} for r in rows(path)]


def only(pattern):
    found = sorted(glob.glob(pattern))
    assert len(found) == 1, found
    return found[0]


def test_parse_args_forms():
    cmd, cfg, pos = parse_args(["bench", "lq17", "--beta=5", "--m-train", "7", "losses=sum"])
    assert cmd == "bench" and pos == ["lq17", "losses=sum"]
    assert cfg["beta"] == "5" and cfg["m_train"] == "7"
    with pytest.raises(ConfigError):
        parse_args(["train-gne", "--bogus", "1"])
    with pytest.raises(ConfigError):
        parse_args(["frobnicate"])


def test_help_and_keys(capsys):
    assert gnefit() == 0
    assert "train-gne" in capsys.readouterr().out
    assert gnefit("keys") == 0
    assert "per_sample_penalty" in capsys.readouterr().out


def test_bench_nonmono18_small(tmp_path, capsys):
    assert gnefit("bench", "nonmono18", "--out_dir", tmp_path, *SMALL) == 0
    out = capsys.readouterr().out
    assert "MSE_BR" in out
    rep = rows(only(str(tmp_path / "reports" / "bench-nonmono18-*.csv")))
    assert len(rep) == 1
    assert float(rep[0]["mse_br"]) >= 0 and float(rep[0]["max_violation"]) >= 0
    assert rep[0]["n_test"] == "30"
    assert glob.glob(str(tmp_path / "reports" / "*.png"))
    assert os.path.isfile(only(str(tmp_path / "reports" / "bench-nonmono18-*.csv.manifest")))


def test_predict_keeps_row_order(tmp_path):
    base = ["--out_dir", tmp_path, *SMALL]
    assert gnefit("train-gne", *base) == 0
    src = tmp_path / "p.csv"
    src.write_text("p_0\n0.5\n-0.25\n0.9\n")
    dst = tmp_path / "x.csv"
    assert gnefit("predict", *base, "--predict_input", src, "--predict_output", dst) == 0
    out = rows(dst)
    assert len(out) == 3 and list(out[0]) == ["x_0", "x_1"]
    # reordered input gives the same rows reordered
    src.write_text("0.9\n0.5\n-0.25\n")
    dst2 = tmp_path / "x2.csv"
    assert gnefit("predict", *base, "--predict_input", src, "--predict_output", dst2) == 0
    again = rows(dst2)
    assert [again[1], again[2], again[0]] == out


def test_identical_training_runs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert gnefit("train-gne", "--out_dir", tmp_path / d, *SMALL) == 0
    ma = only(str(tmp_path / "a" / "models" / "gne-*.model"))
    mb = only(str(tmp_path / "b" / "models" / "gne-*.model"))
    assert os.path.basename(ma) == os.path.basename(mb)
    assert open(ma, "rb").read() == open(mb, "rb").read()


def test_manifest_rerun_reproduces_eval(tmp_path):
    assert gnefit("eval", "--out_dir", tmp_path / "a", *SMALL) == 0
    report = only(str(tmp_path / "a" / "reports" / "eval-*.csv"))
    manifest = report + ".manifest"
    header = [l for l in open(manifest) if l.startswith("#")]
    assert any("rerun: gnefit eval" in l for l in header)
    assert gnefit("eval", "--config", manifest, "--out_dir", tmp_path / "b") == 0
    again = tmp_path / "b" / "reports" / os.path.basename(report)
    assert masked(report) == masked(again)
    for sub in ("models", "data"):
        for f in glob.glob(str(tmp_path / "a" / sub / "*")):
            if f.endswith((".manifest", ".log.csv")):
                continue
            g = tmp_path / "b" / sub / os.path.basename(f)
            assert open(f, "rb").read() == open(g, "rb").read(), f
    assert glob.glob(str(tmp_path / "b" / "reports" / "eval-*-clip-*.png"))


def test_exit_codes(tmp_path, capsys):
    assert gnefit("train-gne", "--restarts", "x", "--out_dir", tmp_path) == 2
    assert "config error" in capsys.readouterr().err
    assert gnefit("eval", "--config", tmp_path / "missing.cfg") == 3
    assert gnefit("gen-data", "--game", tmp_path / "nope.game", "--out_dir", tmp_path) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("p_0\nabc\n")
    assert gnefit("predict", "--predict_input", bad, "--out_dir", tmp_path) == 3
    wide = tmp_path / "wide.csv"
    wide.write_text("1,2\n")
    assert gnefit("predict", "--predict_input", wide, "--out_dir", tmp_path, *SMALL) == 4
    assert "dimension error" in capsys.readouterr().err


def test_gen_data_writes_split_files(tmp_path):
    assert gnefit("gen-data", "--game", "lq17", "--out_dir", tmp_path, *SMALL) == 0
    files = sorted(glob.glob(str(tmp_path / "data" / "*.csv")))
    sizes = sorted(len(rows(f)) for f in files)
    assert sizes == [30, 40, 60]
    assert np.isfinite([float(v) for r in rows(files[0]) for v in r.values()]).all()
