"""Figures written next to the CSV output (Agg backend, PNG files)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    tmp = path + ".tmp.png"
    fig.savefig(tmp, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def plot_spectra(reports, path):
    """Lowest eigenvalues divided by ``t^2`` per degree, kernel threshold marked."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for rep in reports:
        if len(rep.eigenvalues) == 0:
            continue
        y = np.maximum(rep.eigenvalues / rep.t**2, 1e-18)
        ax.semilogy(np.full(len(y), rep.degree) + 0.05 * np.arange(len(y)), y, "o", ms=4,
                    label=f"k={rep.degree}, t={rep.t:g}")
    ts = sorted({rep.t for rep in reports})
    for t in ts:
        ax.axhline(max(1e-6, 1e-8 / t**2), color="grey", lw=0.8, ls="--")
    ax.set_xlabel("degree")
    ax.set_ylabel(r"$\lambda / t^2$")
    ax.legend(fontsize=7, frameon=False)
    return _save(fig, path)


def plot_kernel_profiles(r, computed, reference, labels, path):
    """Computed kernel radial profiles against reference profiles."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for u in computed:
        ax.plot(r, u, lw=2, alpha=0.6)
    for v, lab in zip(reference, labels):
        ax.plot(r, v, "k--", lw=0.8, label=lab)
    ax.set_xlabel("r")
    ax.set_ylabel("radial profile")
    if labels:
        ax.legend(fontsize=7, frameon=False)
    return _save(fig, path)


def plot_gap_fit(ts, gaps, c, p, path, label="first nonzero eigenvalue"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(ts, gaps, "o", label=label)
    tt = np.geomspace(min(ts), max(ts), 50)
    ax.loglog(tt, c * tt**p, "k-", lw=0.8, label=f"fit slope {p:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\lambda$")
    ax.legend(fontsize=7, frameon=False)
    return _save(fig, path)


def plot_counts(counts, expected, path):
    fig, ax = plt.subplots(figsize=(4, 3))
    x = np.arange(len(counts))
    ax.bar(x - 0.2, counts, width=0.4, label="eigenvalues in [0, 1]")
    ax.bar(x + 0.2, expected, width=0.4, label="c(f)")
    ax.set_xticks(x)
    ax.set_xlabel("degree")
    ax.legend(fontsize=7, frameon=False)
    return _save(fig, path)
