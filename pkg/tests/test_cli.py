import argparse
import subprocess
import sys
import time

import pytest

from mmsizing import cli


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def cascode_csv(tmp_path, capsys):
    path = tmp_path / "c.csv"
    assert run(capsys, "gen-data", "--block", "cascode", "--out", path)[0] == 0
    return path


def test_gen_data_mixer(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code, text, _ = run(capsys, "gen-data", "--block", "mixer", "--out", out)
    assert code == 0 and "36 rows" in text
    first = out.read_bytes()
    run(capsys, "gen-data", "--block", "mixer", "--out", out)
    assert out.read_bytes() == first


def test_gen_data_unknown_block(tmp_path, capsys):
    code, _, err = run(capsys, "gen-data", "--block", "balun", "--out", tmp_path / "x.csv")
    assert code == 2 and "unknown block" in err


def test_gen_data_unwritable(tmp_path, capsys):
    code, _, _ = run(capsys, "gen-data", "--block", "mixer", "--out", tmp_path / "no" / "x.csv")
    assert code == 2


def test_train_eval_predict(cascode_csv, tmp_path, capsys):
    model = tmp_path / "rf.mdl"
    code, text, _ = run(capsys, "train", "--data", cascode_csv, "--model", "rf", "--seed", 3, "--out", model)
    assert code == 0 and "final train loss:" in text
    assert (tmp_path / "rf.mdl.split.json").exists()
    report = tmp_path / "r.csv"
    code, text, _ = run(capsys, "eval", "--data", cascode_csv, "--model-file", model, "--report", report)
    assert code == 0 and "median aggregated error:" in text
    first = report.read_bytes()
    run(capsys, "eval", "--data", cascode_csv, "--model-file", model, "--report", report)
    assert report.read_bytes() == first
    assert "err.median=" in (tmp_path / "r.csv.summary").read_text()

    code, text, _ = run(capsys, "predict", "--model-file", model, "--spec", "gain=21.3")
    assert code == 0 and "R_D" in text and "achieved:" in text and "aggregated" in text
    code, text, _ = run(capsys, "predict", "--model-file", model, "--spec", "gain=21.3", "--no-simulate")
    assert code == 0 and "R_D" in text and "achieved" not in text


def test_train_same_seed_same_checksum(cascode_csv, tmp_path, capsys):
    a, b = tmp_path / "a.mdl", tmp_path / "b.mdl"
    run(capsys, "train", "--data", cascode_csv, "--model", "rf", "--seed", 4, "--out", a)
    run(capsys, "train", "--data", cascode_csv, "--model", "rf", "--seed", 4, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_train_bad_kind(cascode_csv, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", cascode_csv, "--model", "gbm", "--out", tmp_path / "m")
    assert code == 2 and "unknown model kind" in err


def test_train_hyperparameters(cascode_csv, tmp_path, capsys):
    m = tmp_path / "m"
    code, _, _ = run(capsys, "train", "--data", cascode_csv, "--model", "mlp", "--out", m, "--max-iter", 5,
                     "--hyper", "dim_layers=[4,4]", "--hyper", "num_layers=3")
    assert code == 0
    code, _, err = run(capsys, "train", "--data", cascode_csv, "--model", "rf", "--out", m, "--hyper", "depth=3")
    assert code == 2 and "hyperparameter" in err


def test_predict_missing_spec(cascode_csv, tmp_path, capsys):
    model = tmp_path / "m"
    run(capsys, "train", "--data", cascode_csv, "--model", "rf", "--out", model)
    code, _, err = run(capsys, "predict", "--model-file", model, "--spec", "swing=1")
    assert code == 2 and "gain" in err


def test_eval_corrupted_model(cascode_csv, tmp_path, capsys):
    model = tmp_path / "m"
    run(capsys, "train", "--data", cascode_csv, "--model", "rf", "--out", model)
    blob = model.read_bytes()
    model.write_bytes(blob[:100] + bytes([blob[100] ^ 0xFF]) + blob[101:])
    code, _, err = run(capsys, "eval", "--data", cascode_csv, "--model-file", model, "--report", tmp_path / "r")
    assert code == 1 and "corrupt" in err


def test_emit_ocean(tmp_path, capsys):
    out = tmp_path / "tx.ocn"
    code, _, _ = run(capsys, "emit-ocean", "--system", "tx", "--metrics", "all", "--out", out)
    assert code == 0 and out.read_text().count("printf(") == 9
    code, _, err = run(capsys, "emit-ocean", "--system", "rx", "--metrics", "", "--out", out)
    assert code == 2 and "noise_figure" in err
    code, _, err = run(capsys, "emit-ocean", "--system", "rx", "--metrics", "gain", "--out", out)
    assert code == 2 and "valid" in err


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 1\ntest_fraction = 0.3\nk_gm = 800\n")
    args = argparse.Namespace(config=str(cfg), seed=None, test_fraction=None)
    run_cfg, dc, _ = cli.resolve(args, environ={})
    assert run_cfg["seed"] == 1 and run_cfg["test_fraction"] == 0.3 and dc.k_gm == 800
    run_cfg, dc, _ = cli.resolve(args, environ={"MMSIZING_SEED": "2", "MMSIZING_K_GM": "900"})
    assert run_cfg["seed"] == 2 and dc.k_gm == 900
    args.seed = 5
    run_cfg, _, _ = cli.resolve(args, environ={"MMSIZING_SEED": "2"})
    assert run_cfg["seed"] == 5
    with pytest.raises(cli.UsageError, match="unknown configuration key"):
        cli.resolve(args, environ={"MMSIZING_FOO": "1"})
    with pytest.raises(cli.UsageError, match="expects int"):
        cli.resolve(argparse.Namespace(config=None, seed=None), environ={"MMSIZING_SEED": "x"})


def test_config_file_changes_dataset(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("k_gm = 900\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "gen-data", "--block", "cascode", "--out", a)
    run(capsys, "gen-data", "--block", "cascode", "--out", b, "--config", cfg)
    assert a.read_bytes() != b.read_bytes()


@pytest.mark.parametrize("command", ["gen-data", "train", "eval", "predict", "emit-ocean"])
def test_help_lists_flags(command):
    proc = subprocess.run([sys.executable, "-m", "mmsizing", command, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    parser = cli.build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in proc.stdout


def test_train_rf_cascode_is_quick(cascode_csv, tmp_path, capsys):
    t0 = time.perf_counter()
    code, _, _ = run(capsys, "train", "--data", cascode_csv, "--model", "rf", "--out", tmp_path / "m")
    assert code == 0 and time.perf_counter() - t0 < 10.0
