"""Result files: delimited tables, JSON records, and figures.

Tables carry a header row and 12 significant digits.  Records are JSON with
sorted keys and no timestamps, so identical runs produce identical bytes.
Figures are rendered headless next to the tables they illustrate.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_table(path, header, rows) -> Path:
    """Comma-delimited table with a header row, %.12g cells."""
    path = Path(path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(header):
        raise ValueError("header width must match the rows")
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.12g}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_record(path, record: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def fig_convergence(path, trace) -> Path:
    """Best objective value against iteration for one solver run."""
    trace = np.atleast_2d(np.asarray(trace, dtype=float))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(trace[:, 0], trace[:, 1], lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("best objective")
    ax.set_title("follower solve")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def fig_stripe_trace(path, trace) -> Path:
    """Leader objective and constraint violation across penalty rounds."""
    trace = np.atleast_2d(np.asarray(trace, dtype=float))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(np.arange(trace.shape[0]), trace[:, 2], ".-", lw=1.0)
    ax1.set_xlabel("outer round (all starts)")
    ax1.set_ylabel("leader objective")
    ax1.grid(True, alpha=0.3)
    ax2.plot(np.arange(trace.shape[0]), trace[:, 3], ".-", lw=1.0, color="tab:red")
    ax2.axhline(0.0, color="k", lw=0.8)
    ax2.set_xlabel("outer round (all starts)")
    ax2.set_ylabel("value-constraint violation")
    ax2.grid(True, alpha=0.3)
    fig.suptitle("design search")
    return _save(fig, path)


def fig_bound_reports(path, reports) -> Path:
    """Measured left sides against their bounds; points must sit under the line."""
    lhs = np.array([r.lhs for r in reports])
    rhs = np.array([r.rhs for r in reports])
    names = sorted({r.name for r in reports})
    fig, ax = plt.subplots(figsize=(5.5, 5))
    for name in names:
        sel = np.array([r.name == name for r in reports])
        ax.scatter(rhs[sel], lhs[sel], s=22, label=name, alpha=0.8)
    top = max(1e-12, float(rhs.max()) * 1.05)
    ax.plot([0, top], [0, top], "k--", lw=0.8, label="equality")
    ax.set_xlabel("bound")
    ax.set_ylabel("measured")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def fig_contract_sweep(path, epsilons, gaps, exponent) -> Path:
    """Relaxation gain against tolerance on log-log axes."""
    eps = np.asarray(epsilons, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    pos = (eps > 0) & (gaps > 0)
    fig, ax = plt.subplots(figsize=(6, 4))
    if pos.any():
        ax.loglog(eps[pos], gaps[pos], "o-", lw=1.2)
        ref = gaps[pos][0] * np.sqrt(eps[pos] / eps[pos][0])
        ax.loglog(eps[pos], ref, "k--", lw=0.8, label="square-root reference")
        ax.legend(fontsize=8)
    ax.set_xlabel("incentive tolerance")
    ax.set_ylabel("principal gain")
    label = "n/a" if not np.isfinite(exponent) else f"{exponent:.3f}"
    ax.set_title(f"fitted exponent {label}")
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def fig_meta_adaptation(path, estimates, exacts) -> Path:
    """Per-task linear estimates next to dedicated re-solves."""
    estimates = np.asarray(estimates, dtype=float)
    exacts = np.asarray(exacts, dtype=float)
    idx = np.arange(estimates.size)
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38
    ax.bar(idx - width / 2, estimates, width, label="estimate")
    ax.bar(idx + width / 2, exacts, width, label="re-solve")
    ax.set_xticks(idx)
    ax.set_xticklabels([f"task {m}" for m in idx])
    ax.set_ylabel("adapted risk")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, path)
