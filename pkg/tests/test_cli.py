import csv
import json

import pytest

from deltabptt.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_encode_demo(capsys):
    assert main(["encode-demo", "--current", "0.6,0.05,-0.3", "--retained", "0.4,0,-0.35", "--theta", "0.1"]) == 0
    out = capsys.readouterr().out
    assert "mask      [1, 0, 0]" in out
    assert "NZIL      [0]" in out
    assert "retained' [0.6, 0.0, -0.35]" in out


def test_encode_demo_errors(capsys):
    assert main(["encode-demo", "--current", "1,2", "--retained", "1", "--theta", "0.1"]) == 1
    assert main(["encode-demo", "--current", "1", "--retained", "1", "--theta", "-1"]) == 1
    assert main(["encode-demo", "--current", "a", "--retained", "1", "--theta", "0.1"]) == 1


def test_simulate_accel(tmp_path, capsys):
    rc = main(["simulate-accel", "--size", "64,128", "--sparsity", "0.5,0.9", "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = read_csv(tmp_path / "accel_sweep.csv")
    assert len(rows) == 12
    assert set(rows[0]) == {"kernel", "size", "sparsity", "cycles", "speedup"}
    assert (tmp_path / "accel_sweep.png").stat().st_size > 0


def test_simulate_accel_rejects_bad_config(tmp_path):
    assert main(["simulate-accel", "--pes", "0", "--out-dir", str(tmp_path)]) == 1
    assert main(["simulate-accel", "--sparsity", "1.2", "--out-dir", str(tmp_path)]) == 1


def test_count_ops_instrumented(tmp_path, capsys):
    rc = main(["count-ops", "--cell", "gru", "--n-x", "8", "--n-h", "12", "-T", "10", "--out-dir", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "count_ops.json").read_text())
    assert report["reconcile"]["ok"]
    assert report["ledger"]["macs_bp"] == 2 * report["ledger"]["macs_fp"]
    assert (tmp_path / "occupancy_trace.png").exists()


def test_train_resume_and_count_ops_from_metrics(tmp_path, capsys):
    run = tmp_path / "run"
    args = ["train", "--epochs", "2", "--batch-size", "8", "--n-train", "16", "--n-eval", "8",
            "--layer-sizes", "5", "--seq-len", "6", "--quiet", "--out-dir", str(run)]
    assert main(args) == 0
    for name in ("metrics.csv", "ops_curve.csv", "ops_curve.png", "summary.json", "checkpoint.json"):
        assert (run / name).exists()
    assert len(read_csv(run / "metrics.csv")) == 2
    more = tmp_path / "more"
    assert main(["train", "--resume", str(run / "checkpoint.json"), "--epochs", "3", "--quiet",
                 "--out-dir", str(more)]) == 0
    assert json.loads((more / "summary.json").read_text())["epochs_run"] == 3
    curves = tmp_path / "curves"
    assert main(["count-ops", "--metrics", str(more / "metrics.csv"), "--out-dir", str(curves)]) == 0
    assert [r["epoch"] for r in read_csv(curves / "ops_curve.csv")] == ["1.0", "2.0", "3.0"]


def test_train_config_file_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cell": "rnn", "epochs": 1, "layer_sizes": [4],
                               "dataset": {"n_train": 8, "n_eval": 4, "seq_len": 5}}))
    assert main(["train", "--config", str(cfg), "--quiet", "--out-dir", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["config"]["cell"] == "rnn"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["train", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 1
    assert main(["train", "--cell", "tcn", "--out-dir", str(tmp_path / "o")]) == 1
    assert main(["train", "--resume", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_numeric_failure_exit_code(tmp_path, capsys):
    rc = main(["train", "--lr", "1e308", "--optimizer", "sgd", "--epochs", "3", "--n-train", "8",
               "--n-eval", "4", "--layer-sizes", "3", "--quiet", "--out-dir", str(tmp_path)])
    assert rc == 2


def test_verify_gradients_small(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify-gradients", "--configs", "12", "--fd-configs", "2", "--fd-coords", "10",
                 "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["equivalence"]["n_cases"] == 12
    assert "skipped" in report["finite_difference"]
    assert "max_rel_discrepancy" in report["equivalence"]["cases"][0]


def test_sweep_theta(tmp_path, capsys):
    rc = main(["sweep-theta", "--thetas", "0,0.1,0.3", "--epochs", "1", "--n-train", "8", "--n-eval", "4",
               "--layer-sizes", "4", "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = read_csv(tmp_path / "theta_sweep.csv")
    macs = [int(r["total_macs"]) for r in rows]
    assert macs == sorted(macs, reverse=True)
    assert "strictly decreasing in theta: yes" in capsys.readouterr().out
    assert (tmp_path / "theta_sweep.png").exists()


def test_usage_and_help_exit_codes(capsys):
    assert main(["no-such-command"]) == 1
    assert main(["train", "--epochs", "many"]) == 1
    assert main(["--help"]) == 0
