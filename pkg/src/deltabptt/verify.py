"""Randomised gradient-verification suite.

Compares the sparse backward pass against dense masked autodiff over a grid
of random configurations, checks the theta=0 degeneracy against textbook
cells, and runs the mask-guarded finite-difference check.
"""

import time
from dataclasses import asdict, dataclass

import numpy as np

from .bptt import delta_backward
from .cells import CellParams, delta_forward, dense_reference_forward
from .costs import OpLedger
from .data import smooth_noise
from .oracle import (
    FD_REL_TOL,
    dense_masked_autodiff,
    dense_reference_grads,
    masked_finite_difference,
)

KINDS = ("rnn", "lstm", "gru")
THETAS = (0.0, 0.05, 0.1, 0.3)
EQUIV_REL_TOL = 1e-9
EQUIV_ABS_TOL = 1e-12
FORWARD_TOL = 1e-12


@dataclass
class VerifyCase:
    kind: str
    n_x: int
    n_h: int
    T: int
    theta: float
    seed: int


def random_cases(n, seed=0, max_size=32, max_T=16):
    """``n`` cases cycling through every (cell kind, theta) pair with random sizes."""
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n):
        kind = KINDS[i % len(KINDS)]
        theta = THETAS[(i // len(KINDS)) % len(THETAS)]
        cases.append(
            VerifyCase(
                kind,
                int(rng.integers(1, max_size + 1)),
                int(rng.integers(1, max_size + 1)),
                int(rng.integers(1, max_T + 1)),
                theta,
                int(rng.integers(2**31)),
            )
        )
    return cases


def make_problem(case):
    """Params, input stream and per-step loss gradients for one case.

    Inputs are AR(1) noise with a random smoothness so that small thresholds
    actually leave some coordinates inactive.
    """
    rng = np.random.default_rng(case.seed)
    params = CellParams.init(case.kind, case.n_x, case.n_h, rng)
    smooth = float(rng.choice([0.0, 0.8, 0.95]))
    xs = smooth_noise(rng, 1, case.T, case.n_x, 1.0, smooth)[0]
    loss_grads = rng.normal(size=(case.T, case.n_h))
    return params, xs, loss_grads


def rel_discrepancy(a, b):
    """Tensor-wise relative difference: ``max|a-b| / max|b|``."""
    a = np.asarray(a)
    b = np.asarray(b)
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    if scale == 0.0:
        return diff
    return diff / scale


def grads_discrepancy(g, ref, with_dx=True):
    pairs = [(g.dWx, ref.dWx), (g.dWh, ref.dWh), (g.db, ref.db)]
    if with_dx and g.dx is not None and ref.dx is not None:
        pairs.append((g.dx, ref.dx))
    rel = max(rel_discrepancy(a, b) for a, b in pairs)
    absd = max(float(np.max(np.abs(a - b))) if a.size else 0.0 for a, b in pairs)
    return rel, absd


def equivalence_case(case):
    params, xs, lg = make_problem(case)
    ledger = OpLedger()
    hs, tape = delta_forward(params, xs, case.theta, ledger=ledger)
    sparse = delta_backward(params, tape, lg, ledger, input_grads=True)
    dense = dense_masked_autodiff(case.kind, params, xs, case.theta, lg, input_grads=True)
    rel, absd = grads_discrepancy(sparse, dense)
    fp = {(s, t): o for s, t, o in ledger.occupancy_trace("fp_matvec")}
    bp = {(s, t): o for s, t, o in ledger.occupancy_trace("bp_input_grad")}
    bpw = {(s, t): o for s, t, o in ledger.occupancy_trace("bp_weight_grad")}
    occ = [float(o) for (s, _), o in fp.items()]
    out = {
        **asdict(case),
        "max_rel_discrepancy": rel,
        "max_abs_discrepancy": absd,
        "passed": rel <= EQUIV_REL_TOL or absd <= EQUIV_ABS_TOL,
        "sparsity_identity": fp == bp == bpw,
        "mean_occupancy": float(np.mean(occ)) if occ else 0.0,
    }
    if case.theta == 0.0:
        ref_h = dense_reference_forward(case.kind, params, xs)
        ref_g = dense_reference_grads(case.kind, params, xs, lg, input_grads=True)
        out["theta0_forward_err"] = float(np.max(np.abs(hs - ref_h)))
        out["theta0_grad_rel"] = grads_discrepancy(sparse, ref_g)[0]
        out["theta0_passed"] = (
            out["theta0_forward_err"] <= FORWARD_TOL and out["theta0_grad_rel"] <= EQUIV_REL_TOL
        )
    return out


def fd_case(case, eps=1e-6, n_coords=40):
    params, xs, lg = make_problem(case)
    _, tape = delta_forward(params, xs, case.theta)
    g = delta_backward(params, tape, lg)
    rep = masked_finite_difference(
        params, xs, case.theta, lg, g, eps=eps, n_coords=n_coords,
        rng=np.random.default_rng(case.seed + 1),
    )
    return {
        **asdict(case),
        "checked": rep.n_checked,
        "passed": rep.n_passed,
        "skipped": len(rep.skipped),
        "skipped_coords": [[name, list(map(int, idx))] for name, idx in rep.skipped],
        "max_rel_error": rep.max_rel_error,
    }


def run_verification(n_cases=200, n_fd_cases=24, fd_coords=40, seed=0, eps=1e-6):
    """Full report: equivalence grid, theta=0 degeneracy, finite differences."""
    t0 = time.perf_counter()
    cases = random_cases(n_cases, seed)
    equiv = [equivalence_case(c) for c in cases]
    t_equiv = time.perf_counter() - t0
    fd_cases = random_cases(n_fd_cases, seed + 1, max_size=12, max_T=10)
    fd = [fd_case(c, eps, fd_coords) for c in fd_cases]
    checked = sum(r["checked"] for r in fd)
    passed = sum(r["passed"] for r in fd)
    theta0 = [r for r in equiv if "theta0_passed" in r]
    return {
        "equivalence": {
            "n_cases": len(equiv),
            "max_rel_discrepancy": max(r["max_rel_discrepancy"] for r in equiv),
            "all_passed": all(r["passed"] for r in equiv),
            "sparsity_identity": all(r["sparsity_identity"] for r in equiv),
            "seconds": t_equiv,
            "cases": equiv,
        },
        "theta0": {
            "n_cases": len(theta0),
            "max_forward_err": max((r["theta0_forward_err"] for r in theta0), default=0.0),
            "max_grad_rel": max((r["theta0_grad_rel"] for r in theta0), default=0.0),
            "all_passed": all(r["theta0_passed"] for r in theta0),
        },
        "finite_difference": {
            "eps": eps,
            "rel_tol": FD_REL_TOL,
            "checked": checked,
            "passed": passed,
            "skipped": sum(r["skipped"] for r in fd),
            "pass_fraction": passed / checked if checked else 0.0,
            "cases": fd,
        },
        "seconds": time.perf_counter() - t0,
    }
