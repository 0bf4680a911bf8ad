"""Figure rendering for the CLI report paths.

Each helper takes already-computed data and writes one PNG next to the
delimited output.  Rendering is best-effort presentation, never part of
the numerical contract; everything uses the Agg backend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_pmf(ns, pmf_by_label: dict, path, title="photon statistics"):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for label, p in pmf_by_label.items():
        ax.plot(ns, p, marker="o", ms=3, lw=1, label=label)
    ax.set_xlabel("photon number n")
    ax.set_ylabel("p(n)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_efficiency_curves(rows, spd_rows, path, title="threshold information efficiency"):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.4))
    N = [r["N"] for r in rows]
    axes[0].semilogx(N, [r["efficiency"] for r in rows], "-o", ms=3, label="optimal threshold")
    axes[0].semilogx(N, [r["efficiency"] for r in spd_rows], "--", label="threshold 1")
    axes[0].set_xlabel("mean photon number N")
    axes[0].set_ylabel("J / J0")
    axes[0].set_ylim(0, 1.05)
    axes[0].legend(fontsize=8)
    axes[1].loglog(N, [max(r["t_opt"], 1) for r in rows], "-o", ms=3)
    axes[1].set_xlabel("mean photon number N")
    axes[1].set_ylabel("optimal threshold")
    fig.suptitle(title, fontsize=10)
    return _save(fig, path)


def plot_tradespace(S_values, gamma_e, limit, path):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.loglog(S_values, gamma_e, "-o", ms=3, label="threshold-equivalent noise")
    ax.axhline(limit, color="k", ls=":", lw=1, label="sharp-threshold limit")
    ax.set_xlabel("sigmoid sharpness S")
    ax.set_ylabel("equivalent noise  J0/J - 1")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_classification(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    w = [r[0] for r in rows if r[0] > 0]
    ax.semilogx(w, [r[1] for r in rows if r[0] > 0], "-o", ms=3, label="threshold 1")
    ax.semilogx(w, [r[2] for r in rows if r[0] > 0], "-s", ms=3, label="threshold 2")
    ax.set_xlabel("counting windows")
    ax.set_ylabel("classification accuracy")
    ax.set_ylim(0.45, 1.02)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_pnrd_comparison(curves: dict, path):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for param, curve in curves.items():
        ax.plot(curve.M_values, curve.ratios, "-o", ms=3, label=f"parameter {param}")
    ax.axhline(1.0, color="k", ls=":", lw=1)
    ax.set_xlabel("PNRD resolution M")
    ax.set_ylabel("J_PNRD / J_PD")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_maps(maps: dict, path, cmap="viridis"):
    n = len(maps)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2))
    if n == 1:
        axes = [axes]
    for ax, (label, arr) in zip(axes, maps.items()):
        im = ax.imshow(arr, cmap=cmap, origin="upper")
        ax.set_title(label, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def plot_nanowire(bias_grid, P_rows, staircase, path):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.4))
    for n, Ps in P_rows.items():
        axes[0].plot(bias_grid, Ps, "-", lw=1.2, label=f"n = {n}")
    axes[0].set_xlabel("normalized bias current")
    axes[0].set_ylabel("click probability")
    axes[0].legend(fontsize=7)
    ts = [row[0] for row in staircase]
    ib = [row[1] for row in staircase]
    axes[1].step(ts, ib, where="mid", marker="o", ms=4)
    axes[1].set_xlabel("photon threshold t")
    axes[1].set_ylabel("bias current / I_SW")
    return _save(fig, path)


def plot_adaptive_trace(trace, path):
    its = trace.iterations
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.4))
    k = [it.index for it in its]
    names = list(its[0].estimates)
    for name in names:
        axes[0].plot(k, [it.estimates[name] for it in its], "-o", ms=3, label=name)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("estimate")
    axes[0].legend(fontsize=8)
    axes[1].plot(k, [it.pair[0] for it in its], "-o", ms=3, label="threshold A")
    axes[1].plot(k, [it.pair[1] for it in its], "-s", ms=3, label="threshold B")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("threshold")
    axes[1].legend(fontsize=8)
    return _save(fig, path)


def plot_error_series(series_by_label: dict, path, baseline=None):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for label, (w, e) in series_by_label.items():
        ax.plot(w, e, "-o", ms=3, label=label)
    if baseline is not None:
        ax.axhline(baseline, color="k", ls=":", lw=1, label="non-adaptive final error")
    ax.set_xlabel("total counting windows")
    ax.set_ylabel("mean absolute DoLP error")
    ax.legend(fontsize=8)
    return _save(fig, path)
