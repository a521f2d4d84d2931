"""Acceptance criteria 1-8, one test each; every test logs a PASS/FAIL line before asserting."""

import csv
import glob
import os
import shlex

import pytest

import checks
from checks import record
from gnefit.cli import main


def test_criterion_1_exact_map():
    r = checks.exact_map(201)
    ok = r["max_ni"] <= 1e-8 and r["max_violation"] <= 1e-10
    assert record(1, ok, f"max NI {r['max_ni']:.2e} (<=1e-8), max violation {r['max_violation']:.2e} (<=1e-10)")


def test_criterion_2_nonmonotone_learning():
    r = checks.nonmono_learning()
    ok = r["mse_br"] <= 1e-2 and r["v_max"] <= 1e-3
    assert record(2, ok, f"MSE_BR {r['mse_br']:.2e} (<=1e-2), v_max {r['v_max']:.2e} (<=1e-3), "
                         f"{r['seconds']:.0f}s")


def test_criterion_3_lq_table():
    r = checks.lq_table()
    main_row = r[("smooth_pos", 100.0)]
    low = [r[("sum", b)]["mse_br"] for b in (1.0, 10.0)]
    ok = main_row["mse_br"] <= 5e-2 and main_row["v_max"] <= 5e-2 and min(low) > 0.3
    assert record(3, ok, f"smooth_pos/beta=100 MSE_BR {main_row['mse_br']:.2e} v_max {main_row['v_max']:.2e} "
                         f"(<=5e-2); sum/beta=1,10 MSE_BR {low[0]:.3g}, {low[1]:.3g} (>0.3)")


def test_criterion_4_switching():
    agree = checks.switching_agreement(10_000)
    r = checks.switching_learning()
    ok = r["mse_br"] <= 1e-3 and r["v_max"] <= 1e-3 and agree["max_diff"] <= 1e-10
    assert record(4, ok, f"MSE_BR {r['mse_br']:.2e} v_max {r['v_max']:.2e} (<=1e-3); "
                         f"analytic vs numeric {agree['max_diff']:.1e} (<=1e-10)")


def test_criterion_5_mpqp():
    r = checks.mpqp_learning(0)
    ok = r["rel_error"] <= 1e-2 and r["v_mean"] <= 1e-2 and r["speedup"] >= 100
    assert record(5, ok, f"e_rel {r['rel_error']:.2e} (<=1e-2), mean violation {r['v_mean']:.2e} (<=1e-2), "
                         f"speedup {r['speedup']:.0f}x (>=100), beta {r['beta']:g}")


def test_criterion_6_loss_identities():
    r = checks.loss_identities()
    ok = max(r.values()) <= 1e-12
    assert record(6, ok, ", ".join(f"{k} {v:.1e}" for k, v in r.items()) + " (<=1e-12)")


def test_criterion_7_numerics():
    a = checks.autodiff_vs_fd(100)
    q = checks.qp_vs_enumeration(200)
    h = checks.lhs_pairs(100)
    ok = a["max_rel_error"] <= 1e-5 and q["max_diff"] <= 1e-7 and h["failures"] == 0
    assert record(7, ok, f"autodiff vs FD {a['max_rel_error']:.1e} (<=1e-5), QP vs enumeration "
                         f"{q['max_diff']:.1e} (<=1e-7), LHS failures {h['failures']}/100")


# -- determinism -----------------------------------------------------------------------

TIMING = {"predict_time", "solve_time", "train_time", "wall_seconds"}
SMALL = ["--m_train", "50", "--m_val", "40", "--m_test", "30", "--restarts", "2", "--epochs", "20",
         "--qn_iters", "20", "--value_hidden", "5,3", "--gne_hidden", "4,3"]


def _content(path):
    """Bytes of an artifact; CSVs with timing columns are compared with those columns dropped."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not path.endswith(".csv"):
        return data
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    drop = {i for i, name in enumerate(rows[0]) if name in TIMING} if rows else set()
    if not drop:
        return data
    return [[v for i, v in enumerate(r) if i not in drop] for r in rows]


def _rerun_line(manifest):
    with open(manifest) as fh:
        for line in fh:
            if line.startswith("# rerun: "):
                return line[len("# rerun: "):].strip()
    raise AssertionError(f"{manifest} has no rerun line")


def _artifacts(root):
    return {os.path.relpath(m, root)[: -len(".manifest")]
            for m in glob.glob(os.path.join(root, "*", "*.manifest"))}


def test_criterion_8_determinism(tmp_path):
    src = tmp_path / "p.csv"
    src.write_text("p_0\n0.3\n-0.7\n0.1\n")
    runs = [
        ["gen-game", "--game", "lq17"],
        ["gen-data", "--game", "lq17"],
        ["train-value", "--game", "lq17"],
        ["train-gne", "--game", "nonmono18", "--per_sample_penalty", "true"],
        ["train-gne", "--game", "lq17", "--loss", "sum", "--beta", "10"],
        ["eval", "--game", "switching20", "--game_opts", "N=2", "--eval_modes", "raw,clip,project"],
        ["train-mp", "--game", "mpqp", "--game_opts", "seed=1"],
        ["eval", "--game", "mpqp", "--game_opts", "seed=1"],
        ["predict", "--game", "nonmono18", "--predict_input", str(src)],
        ["bench", "nonmono18"],
    ]
    checked, mismatched = 0, []
    for k, argv in enumerate(runs):
        first = tmp_path / f"run{k}"
        assert main(argv + SMALL + ["--out_dir", str(first)]) == 0, argv
        artifacts = _artifacts(first)
        assert artifacts, argv
        for rel in sorted(artifacts):
            line = _rerun_line(os.path.join(first, rel + ".manifest"))
            again = tmp_path / f"rerun{k}-{checked}"
            words = shlex.split(line.replace("--out_dir DIR", f"--out_dir {again}"))
            assert words[0] == "gnefit"
            cwd = os.getcwd()
            os.chdir(os.path.join(first, os.path.dirname(rel)))
            try:
                assert main(words[1:]) == 0, line
            finally:
                os.chdir(cwd)
            twin = os.path.join(again, rel)
            if not os.path.isfile(twin) or _content(os.path.join(first, rel)) != _content(twin):
                mismatched.append(f"{argv[0]}:{rel}")
            checked += 1
    ok = not mismatched
    assert record(8, ok, f"{checked} artifacts rerun from manifests, "
                         f"{len(mismatched)} differ{': ' + ', '.join(mismatched) if mismatched else ''}")
