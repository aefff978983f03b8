"""Matplotlib figures written next to the CLI's delimited outputs.

Every function takes plain arrays, draws on a fresh figure with the Agg
backend and returns the path it wrote.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGSIZE = (6.0, 4.0)
DPI = 120
# fixed metadata keeps repeated runs byte-identical
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_META)
    plt.close(fig)
    return path


def plot_profile(r, values, path, label="Q", title=None, logy=False) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    y = abs(values) if logy else values
    ax.plot(r, y, lw=1.5, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel(label)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_profiles(r, curves: dict, path, ylabel="value", logy=False) -> Path:
    """Several curves on shared nodes; ``curves`` maps label to values."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, y in curves.items():
        ax.plot(r, abs(y) if logy else y, lw=1.2, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_spectrum(spectra: dict, path, threshold=None) -> Path:
    """Lowest eigenvalues per sector against ``l``; ``spectra`` maps ``l`` to eigenvalues."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for ell, vals in sorted(spectra.items()):
        ax.plot([ell] * len(vals), vals, "_", ms=18, mew=2, color="C0")
    ax.axhline(0.0, color="k", lw=0.8)
    if threshold is not None:
        ax.axhline(threshold, color="C3", lw=0.8, ls="--", label="continuum threshold")
        ax.legend(fontsize=8)
    ax.set_xlabel("l")
    ax.set_ylabel("eigenvalue")
    ax.set_xticks(sorted(spectra))
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_sweep(cs, gap_err, h1_dist, path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.loglog(cs, gap_err, "o-", label="|gap + lambda|")
    ax.loglog(cs, h1_dist, "s-", label="H1 distance")
    ax.set_xlabel("c")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)


def plot_bracket(trace, path) -> Path:
    """Bisection probes: converged masses at 1, collapsed at 0."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for k, (N, outcome) in enumerate(trace):
        ax.plot(N, k, "o" if outcome == "converged" else "x", color="C0" if outcome == "converged" else "C3")
    ax.set_xlabel("N")
    ax.set_ylabel("probe")
    ax.grid(alpha=0.3)
    return _save(fig, path)
