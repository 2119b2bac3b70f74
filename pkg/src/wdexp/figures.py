"""Matplotlib renderings of command outputs, written next to the CSVs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 130


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def translate_figure(path, translated):
    """Translated LR growth (log scale) and per-step growth factor."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    t = np.arange(translated.num_iters)
    ax1.plot(t, translated.log_eta_tilde, lw=1.2)
    ax1.set_ylabel("log translated LR")
    marks = [c.t for c in translated.corrections]
    for m in marks:
        ax1.axvline(m, color="tab:red", alpha=0.35, lw=0.8)
    if marks:
        ax1.set_title(f"{translated.kind} (corrections at {len(marks)} "
                      "phase changes)")
    else:
        ax1.set_title(translated.kind)
    ax2.plot(np.arange(len(translated.alpha_seq)), translated.alpha_seq,
             lw=1.2)
    ax2.set_ylabel("alpha_t")
    ax2.set_xlabel("iteration")
    return _finish(fig, path)


def run_figure(path, traj):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(traj.log_norm, lw=1.2)
    ax1.set_ylabel("log |theta|")
    ax1.set_title(f"{traj.kind} run")
    ax2.plot(traj.loss, lw=0.9)
    ax2.set_ylabel("batch loss")
    ax2.set_xlabel("iteration")
    return _finish(fig, path)


def verify_figure(path, report):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    t = np.arange(len(report["dir_gap"]))
    ax1.semilogy(t, np.maximum(report["dir_gap"], 1e-18), lw=1.0,
                 label="direction gap")
    ax1.semilogy(t, report["dir_envelope"], ls="--", lw=0.9,
                 label="tolerance")
    ax1.set_ylabel("1 - cos")
    ax1.legend(loc="best", fontsize=8)
    ax1.set_title("equivalence deviation")
    ax2.semilogy(t, np.maximum(report["norm_err"], 1e-18), lw=1.0,
                 label="log-norm offset error")
    ax2.semilogy(t, report["norm_envelope"], ls="--", lw=0.9,
                 label="tolerance")
    ax2.set_ylabel("|log ratio - logP|")
    ax2.set_xlabel("iteration")
    ax2.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def dynamics_figure(path, series, recursion_report, equilibrium_report):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    if recursion_report is not None:
        resid = np.abs(recursion_report["residual"])
        ax1.semilogy(np.maximum(resid, 1e-20), lw=0.8)
        ax1.axhline(recursion_report["bound"], color="tab:red", ls="--",
                    lw=0.9, label="bound")
        ax1.legend(loc="best", fontsize=8)
    ax1.set_ylabel("|recursion residual|")
    ratio = series.d[1:] / series.r[1:-1]
    ax2.plot(ratio, lw=0.8, label="D/R")
    if equilibrium_report is not None and equilibrium_report["theory"]:
        ax2.axhline(equilibrium_report["theory"], color="tab:green",
                    ls="--", lw=0.9, label="equilibrium theory")
        ax2.set_yscale("log")
    ax2.set_ylabel("update/norm ratio")
    ax2.set_xlabel("iteration")
    ax2.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def toy_figure(path, sample_traj, eps, exit_iterations=None):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6))
    ax1.plot(sample_traj.angle, lw=1.0)
    ax1.axhline(eps, color="tab:red", ls="--", lw=0.9, label="eps")
    ax1.set_ylabel("angle to optimum (rad)")
    ax1.set_xlabel("iteration")
    ax1.set_title(f"{sample_traj.regime} sample trial")
    ax1.legend(loc="best", fontsize=8)
    exits = [e for e in (exit_iterations or []) if e >= 0]
    if exits:
        ax2.hist(exits, bins=min(30, max(5, len(exits) // 3)))
        ax2.set_xlabel("first exit iteration")
        ax2.set_ylabel("trials")
    else:
        ax2.plot(sample_traj.norm, lw=1.0)
        ax2.set_ylabel("|w|")
        ax2.set_xlabel("iteration")
    return _finish(fig, path)
