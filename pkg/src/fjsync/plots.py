"""Figure rendering for the CLI report paths (matplotlib, file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_waiting_density(mixture, path, samples=None) -> None:
    """Analytic waiting density, optionally overlaid on a sample histogram."""
    t_hi = 8.0 / mixture.min_rate
    t = np.linspace(0.0, t_hi, 1000)
    fig, ax = plt.subplots(figsize=(6, 4))
    if samples is not None:
        ax.hist(
            samples, bins=80, range=(0.0, t_hi), density=True,
            color="0.8", label="simulated",
        )
    ax.plot(t, mixture.pdf(t), "k-", label="analytic")
    ax.set_xlabel("synchronizer wait t")
    ax.set_ylabel("density f(t)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_correlation_curves(rows, path) -> None:
    """R vs psi_a, one curve per psi_b value."""
    fig, ax = plt.subplots(figsize=(6, 4))
    by_psib = {}
    for row in rows:
        by_psib.setdefault(row["psi_b"], []).append((row["psi_a"], row["R"]))
    for psi_b in sorted(by_psib):
        pts = sorted(by_psib[psi_b])
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker="o", ms=3, label=f"psi_b = {psi_b:g}")
    ax.set_xlabel("psi_a")
    ax.set_ylabel("correlation R of (t_a, t_b)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_region_scan(rows, path) -> None:
    """Accept/reject markers on the (psi_a, psi_b) plane, one panel per (n_a, n_b)."""
    panels = sorted({(r["n_a"], r["n_b"]) for r in rows})
    ncols = min(len(panels), 3)
    nrows = (len(panels) + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.2 * ncols, 3.0 * nrows), squeeze=False
    )
    for ax in axes.flat[len(panels):]:
        ax.set_visible(False)
    for ax, key in zip(axes.flat, panels):
        pts = [r for r in rows if (r["n_a"], r["n_b"]) == key]
        for marker, flag, color in (("o", True, "tab:green"), ("x", False, "tab:red")):
            sel = [r for r in pts if r["accepted"] is flag]
            ax.scatter(
                [r["psi_a"] for r in sel], [r["psi_b"] for r in sel],
                marker=marker, color=color, s=30,
            )
        ax.set_title(f"N_a={key[0]}, N_b={key[1]}", fontsize=9)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("psi_a")
        ax.set_ylabel("psi_b")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
