"""Figures written next to the CSV reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}

KERNEL_LABELS = {
    "fp_matvec": "FP MxV",
    "bp_input_grad": "BP input grad",
    "bp_weight_grad": "BP weight grad",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_speedup_grid(rows, path):
    """Grouped bars of speedup per kernel, one panel per network size."""
    sizes = sorted({r["size"] for r in rows})
    sparsities = sorted({r["sparsity"] for r in rows})
    kernels = [k for k in KERNEL_LABELS if any(r["kernel"] == k for r in rows)]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(sizes), figsize=(3.2 * len(sizes), 2.8), sharey=True, squeeze=False)
        width = 0.8 / max(len(kernels), 1)
        for ax, size in zip(axes[0], sizes):
            for k, kernel in enumerate(kernels):
                ys = [
                    next(r["speedup"] for r in rows if r["size"] == size and r["sparsity"] == s and r["kernel"] == kernel)
                    for s in sparsities
                ]
                xs = [i + (k - (len(kernels) - 1) / 2) * width for i in range(len(sparsities))]
                ax.bar(xs, ys, width, label=KERNEL_LABELS[kernel])
            for i, s in enumerate(sparsities):
                ax.hlines(1.0 / (1.0 - s), i - 0.45, i + 0.45, colors="k", linestyles="dashed", linewidth=0.8)
            ax.set_xticks(range(len(sparsities)))
            ax.set_xticklabels([f"{s:.0%}" for s in sparsities])
            ax.set_title(f"{size}I-{size}H")
            ax.set_xlabel("sparsity")
        axes[0][0].set_ylabel("speedup")
        axes[0][-1].legend(frameon=False)
        return _save(fig, path)


def plot_ops_curves(curves, path):
    """Eval metric against cumulative training MACs, one line per run label."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for label, rows in curves.items():
            ops = [r["cum_fp_macs"] + r["cum_bp_macs"] for r in rows]
            ax.plot(ops, [r["eval_metric"] for r in rows], marker="o", markersize=2.5, label=label)
        ax.set_xscale("log")
        ax.set_xlabel("cumulative training MACs (FP + BP)")
        ax.set_ylabel("eval accuracy")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_occupancy_trace(trace, path):
    """Per-timestep occupancy of forward and backward kernels for each stream."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for label, pts in trace.items():
            ax.plot([t for t, _ in pts], [o for _, o in pts], marker=".", label=label)
        ax.set_xlabel("timestep")
        ax.set_ylabel("occupancy")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)
