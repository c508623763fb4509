"""Command-line entry point: ``deltabptt <command> [options]``.

Exit codes: 0 success, 1 bad configuration or arguments, 2 numerical failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .accel import SWEEP_FIELDS, AccelConfig, sweep
from .bptt import delta_backward
from .cells import CellParams, delta_forward
from .codec import delta_encode
from .costs import (
    OPS_CURVE_FIELDS,
    OpLedger,
    predict_bp_cost,
    predict_fp_cost,
    reconcile,
    training_ops_curve,
    write_csv,
)
from .data import smooth_noise
from .tensor import ConfigError, NumericError
from .train import TrainConfig, Trainer
from .verify import run_verification

METRIC_FIELDS = (
    "epoch",
    "train_loss",
    "train_acc",
    "eval_metric",
    "mean_occupancy_x",
    "mean_occupancy_h",
    "epoch_fp_macs",
    "epoch_bp_macs",
    "cum_fp_macs",
    "cum_bp_macs",
    "cum_weight_words",
    "lr",
)
THETA_SWEEP_FIELDS = (
    "theta",
    "final_eval_acc",
    "best_eval_acc",
    "cum_fp_macs",
    "cum_bp_macs",
    "total_macs",
    "mean_occupancy_x",
    "mean_occupancy_h",
)

# flag name -> TrainConfig / SyntheticTaskSpec field
_TRAIN_FLAGS = {
    "cell": str,
    "theta_x": float,
    "theta_h": float,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "optimizer": str,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "weight_decay": float,
    "seed": int,
    "precision": str,
    "scheduler": str,
    "loss_mode": str,
    "grad_mode": str,
    "max_grad_norm": float,
}
_DATA_FLAGS = {"task": str, "num_classes": int, "seq_len": int, "input_dim": int, "noise": float,
               "smoothness": float, "n_train": int, "n_eval": int, "cue_len": int}


def _csv_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _add_train_flags(p):
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    p.add_argument("--layer-sizes", type=_csv_ints, help="hidden sizes, e.g. 32 or 64,64")
    for name, typ in _TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    g = p.add_argument_group("dataset")
    for name, typ in _DATA_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest="ds_" + name, type=typ)


def _config_from_args(args):
    base = {}
    if args.config is not None:
        base = json.loads(args.config.read_text())
    cfg = TrainConfig.from_dict(base)
    if args.layer_sizes:
        cfg.layer_sizes = args.layer_sizes
    for name in _TRAIN_FLAGS:
        v = getattr(args, name)
        if v is not None:
            setattr(cfg, name, v)
    for name in _DATA_FLAGS:
        v = getattr(args, "ds_" + name)
        if v is not None:
            setattr(cfg.dataset, name, v)
    return cfg.validate()


def _out_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_epoch(row):
    print(
        f"epoch {row['epoch']:3d}  loss {row['train_loss']:.4f}  train {row['train_acc']:.3f}  "
        f"eval {row['eval_metric']:.3f}  occ x/h {row['mean_occupancy_x']:.3f}/"
        f"{row['mean_occupancy_h']:.3f}  macs {row['cum_fp_macs'] + row['cum_bp_macs']:.3e}",
        flush=True,
    )


# commands ---------------------------------------------------------------


def cmd_train(args):
    if args.resume is not None:
        trainer = Trainer.load_checkpoint(args.resume)
        if args.epochs is not None:
            trainer.config.epochs = args.epochs
    else:
        trainer = Trainer(_config_from_args(args))
    out = _out_dir(args.out_dir)
    trainer.fit(None if args.quiet else _print_epoch)
    summary = trainer.summary()
    write_csv(trainer.metrics, out / "metrics.csv", METRIC_FIELDS)
    curve = training_ops_curve(trainer.metrics)
    write_csv(curve, out / "ops_curve.csv", OPS_CURVE_FIELDS)
    if curve:
        plotting.plot_ops_curves({f"{trainer.config.cell} theta={trainer.config.theta_x:g}": curve},
                                 out / "ops_curve.png")
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    trainer.save_checkpoint(out / "checkpoint.json")
    print(json.dumps({k: summary[k] for k in summary if k != "config"}, indent=2))
    return 0


def cmd_verify_gradients(args):
    report = run_verification(args.configs, args.fd_configs, args.fd_coords, args.seed, args.eps)
    eq, z, fd = report["equivalence"], report["theta0"], report["finite_difference"]
    print(f"equivalence: {eq['n_cases']} configs, max rel discrepancy {eq['max_rel_discrepancy']:.3e}, "
          f"{'PASS' if eq['all_passed'] else 'FAIL'} ({eq['seconds']:.1f}s)")
    print(f"sparsity identity: {'PASS' if eq['sparsity_identity'] else 'FAIL'}")
    print(f"theta=0: forward {z['max_forward_err']:.3e}, grads {z['max_grad_rel']:.3e}, "
          f"{'PASS' if z['all_passed'] else 'FAIL'}")
    print(f"finite differences: {fd['passed']}/{fd['checked']} passed "
          f"({fd['pass_fraction']:.1%}), {fd['skipped']} skipped for mask flips")
    if args.out is not None:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2))
    ok = eq["all_passed"] and eq["sparsity_identity"] and z["all_passed"] and fd["pass_fraction"] >= 0.95
    return 0 if ok else 2


def _instrumented_run(args):
    rng = np.random.default_rng(args.seed)
    params = CellParams.init(args.cell, args.n_x, args.n_h, rng)
    xs = smooth_noise(rng, 1, args.T, args.n_x, 1.0, args.smoothness)[0]
    ledger = OpLedger()
    _, tape = delta_forward(params, xs, args.theta, ledger=ledger, tag="L0.")
    loss_grads = rng.normal(size=(args.T, args.n_h))
    delta_backward(params, tape, loss_grads, ledger)
    return params, ledger


def cmd_count_ops(args):
    out = _out_dir(args.out_dir)
    if args.metrics is not None:
        with open(args.metrics, newline="") as fh:
            rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
        curve = training_ops_curve(rows)
        write_csv(curve, out / "ops_curve.csv", OPS_CURVE_FIELDS)
        plotting.plot_ops_curves({Path(args.metrics).parent.name or "run": curve}, out / "ops_curve.png")
        print(f"wrote {out / 'ops_curve.csv'} ({len(curve)} epochs)")
        return 0
    params, ledger = _instrumented_run(args)
    o_x = ledger.mean_occupancy(".x")
    o_h = ledger.mean_occupancy(".h")
    fp = predict_fp_cost(params.n_x, params.n_h, params.gates, (o_x, o_h))
    bp = predict_bp_cost(params.n_x, params.n_h, params.gates, (o_x, o_h))
    rep = reconcile(ledger, params.kernel_shapes("L0."))
    result = {
        "ledger": ledger.summary(),
        "mean_occupancy": {"x": o_x, "h": o_h},
        "prediction_per_step": {"fp": fp.__dict__, "bp": bp.__dict__},
        "reconcile": rep.as_dict(),
    }
    print(json.dumps(result, indent=2))
    (out / "count_ops.json").write_text(json.dumps(result, indent=2))
    trace_rows = []
    traces = {}
    for kernel in ("fp_matvec", "bp_input_grad"):
        for stream in ("L0.x", "L0.h"):
            pts = [(t, float(o)) for _, t, o in ledger.occupancy_trace(kernel, stream)]
            traces[f"{plotting.KERNEL_LABELS[kernel]} {stream}"] = pts
            trace_rows += [{"kernel": kernel, "stream": stream, "t": t, "occupancy": o} for t, o in pts]
    write_csv(trace_rows, out / "occupancy_trace.csv", ("kernel", "stream", "t", "occupancy"))
    plotting.plot_occupancy_trace(traces, out / "occupancy_trace.png")
    return 0 if rep.ok else 2


def cmd_simulate_accel(args):
    config = AccelConfig(args.pes, args.overhead_cycles, args.dram_latency, args.burst_rate)
    for s in args.sparsity:
        if not 0.0 <= s < 1.0:
            raise ConfigError(f"sparsity must lie in [0, 1), got {s}")
    if any(n < 1 for n in args.size):
        raise ConfigError("sizes must be positive")
    rows = sweep(args.size, args.sparsity, config, args.seed)
    out = _out_dir(args.out_dir)
    write_csv(rows, out / "accel_sweep.csv", SWEEP_FIELDS)
    plotting.plot_speedup_grid(rows, out / "accel_sweep.png")
    for r in rows:
        print(f"{r['kernel']:15s} size {r['size']:4d} sparsity {r['sparsity']:.2f}  "
              f"cycles {r['cycles']:9d}  speedup {r['speedup']:6.2f}x")
    return 0


def cmd_encode_demo(args):
    cur = np.asarray(args.current, dtype=float)
    ret = np.asarray(args.retained, dtype=float)
    delta, mask, new_ret = delta_encode(cur, ret, args.theta)
    print("mask     ", [int(b) for b in mask.to_bool()])
    print("NZIL     ", [int(i) for i in delta.nzil])
    print("NZVL     ", [float(v) for v in delta.nzvl])
    print("retained'", [float(v) for v in new_ret])
    return 0


def cmd_sweep_theta(args):
    base = _config_from_args(args)
    out = _out_dir(args.out_dir)
    rows, curves = [], {}
    for theta in args.thetas:
        cfg = TrainConfig.from_dict(base.to_dict())
        cfg.theta_x = theta
        trainer = Trainer(cfg.validate())
        trainer.fit()
        s = trainer.summary()
        m = trainer.metrics
        rows.append({
            "theta": theta,
            "final_eval_acc": s["final_eval_acc"],
            "best_eval_acc": s["best_eval_acc"],
            "cum_fp_macs": s["cum_fp_macs"],
            "cum_bp_macs": s["cum_bp_macs"],
            "total_macs": s["cum_fp_macs"] + s["cum_bp_macs"],
            "mean_occupancy_x": float(np.mean([r["mean_occupancy_x"] for r in m])) if m else 0.0,
            "mean_occupancy_h": float(np.mean([r["mean_occupancy_h"] for r in m])) if m else 0.0,
        })
        curves[f"theta={theta:g}"] = training_ops_curve(m)
        r = rows[-1]
        print(f"theta {theta:<6g} eval {r['final_eval_acc']:.3f}  total MACs {r['total_macs']:.4e}  "
              f"occ x/h {r['mean_occupancy_x']:.3f}/{r['mean_occupancy_h']:.3f}", flush=True)
    write_csv(rows, out / "theta_sweep.csv", THETA_SWEEP_FIELDS)
    if all(curves.values()):
        plotting.plot_ops_curves(curves, out / "theta_sweep.png")
    order = sorted(rows, key=lambda r: r["theta"])
    monotone = all(a["total_macs"] > b["total_macs"] for a, b in zip(order, order[1:]))
    print(f"MACs strictly decreasing in theta: {'yes' if monotone else 'no'}")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with bad configs; 2 is reserved for numerics
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="deltabptt", description="Sparse delta-RNN training toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a delta-RNN classifier on a synthetic task")
    _add_train_flags(t)
    t.add_argument("--out-dir", default="runs/train")
    t.add_argument("--resume", type=Path, help="checkpoint.json to continue from")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify-gradients", help="sparse BPTT vs dense masked autodiff and finite differences")
    v.add_argument("--configs", type=int, default=200)
    v.add_argument("--fd-configs", type=int, default=24)
    v.add_argument("--fd-coords", type=int, default=40)
    v.add_argument("--eps", type=float, default=1e-6)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", type=Path)
    v.set_defaults(func=cmd_verify_gradients)

    c = sub.add_parser("count-ops", help="exact MAC ledger and cost reconciliation")
    c.add_argument("--metrics", type=Path, help="metrics.csv from a train run")
    c.add_argument("--cell", default="lstm", choices=("rnn", "lstm", "gru"))
    c.add_argument("--n-x", type=int, default=64)
    c.add_argument("--n-h", type=int, default=64)
    c.add_argument("-T", "--seq-len", dest="T", type=int, default=50)
    c.add_argument("--theta", type=float, default=0.1)
    c.add_argument("--smoothness", type=float, default=0.9)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out-dir", default="runs/count_ops")
    c.set_defaults(func=cmd_count_ops)

    a = sub.add_parser("simulate-accel", help="cycle model of the sparse training accelerator")
    a.add_argument("--size", type=_csv_ints, default=[64, 128, 256])
    a.add_argument("--sparsity", type=_csv_floats, default=[0.5, 0.8, 0.9])
    a.add_argument("--pes", type=int, default=16)
    a.add_argument("--overhead-cycles", type=int, default=8)
    a.add_argument("--dram-latency", type=int, default=10)
    a.add_argument("--burst-rate", type=float, default=1.0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out-dir", default="runs/accel")
    a.set_defaults(func=cmd_simulate_accel)

    e = sub.add_parser("encode-demo", help="delta-encode one vector pair")
    e.add_argument("--current", type=_csv_floats, required=True)
    e.add_argument("--retained", type=_csv_floats, required=True)
    e.add_argument("--theta", type=float, required=True)
    e.set_defaults(func=cmd_encode_demo)

    s = sub.add_parser("sweep-theta", help="train once per threshold and compare op counts")
    _add_train_flags(s)
    s.add_argument("--thetas", type=_csv_floats, default=[0.0, 0.05, 0.1, 0.2])
    s.add_argument("--out-dir", default="runs/sweep_theta")
    s.set_defaults(func=cmd_sweep_theta)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help exits 0, usage errors 1
        return e.code
    try:
        return args.func(args)
    except NumericError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
