"""SVG figure helpers for run reports.

All output is bit-reproducible: Agg backend, fixed hash salt, no embedded
timestamps.  Every function takes data plus a target path and returns the
path; figures are closed before returning so batch runs do not accumulate
state.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "thomlab"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "save_decay_plot",
    "save_secant_plot",
    "save_gstar_plot",
    "save_group_plot",
    "save_flattening_plot",
    "save_sweep_plot",
]

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_decay_plot(t, norms, path, ell_star: float | None = None,
                    alpha0: float | None = None,
                    title: str = "norm decay") -> Path:
    """Log-log norm decay, optionally against the fitted power law."""
    t = np.asarray(t, dtype=float)
    norms = np.asarray(norms, dtype=float)
    keep = (t > 0) & (norms > 0)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(t[keep], norms[keep], lw=1.2, label="|y(t)|")
    if ell_star is not None and alpha0 is not None and ell_star > 2:
        ref = (alpha0 * ell_star * (ell_star - 2.0) * t[keep]) \
            ** (-1.0 / (ell_star - 2.0))
        ax.loglog(t[keep], ref, "--", lw=1.0,
                  label=f"power law, order {ell_star:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.set_title(title)
    ax.legend(frameon=False)
    return _finish(fig, path)


def save_secant_plot(t, y, path, title: str = "secant components") -> Path:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(y, axis=1)
    keep = (t > 0) & (r > 0)
    s = y[keep] / r[keep, None]
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in range(s.shape[1]):
        ax.semilogx(t[keep], s[:, j], lw=1.0, label=f"component {j + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("y/|y|")
    ax.set_title(title)
    if s.shape[1] <= 8:
        ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)


def save_gstar_plot(t, gstar, h, path,
                    alpha0: float | None = None,
                    title: str = "normalized value") -> Path:
    t = np.asarray(t, dtype=float)
    keep = t > 0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(t[keep], np.asarray(gstar)[keep], lw=1.2, label="g(y)/|y|^l")
    ax.semilogx(t[keep], np.asarray(h)[keep], lw=1.0, label="control h")
    if alpha0 is not None:
        ax.axhline(alpha0, color="k", lw=0.8, ls=":", label="limit")
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend(frameon=False)
    return _finish(fig, path)


def save_group_plot(t, xplus, xzero, xminus, path,
                    title: str = "mode-group amplitudes") -> Path:
    t = np.asarray(t, dtype=float)
    keep = t > 0
    fig, ax = plt.subplots(figsize=(6, 4))
    floor = np.finfo(float).tiny
    for series, label in ((xplus, "unstable group"),
                          (xzero, "neutral group"),
                          (xminus, "stable group")):
        ax.loglog(t[keep], np.maximum(np.asarray(series)[keep], floor),
                  lw=1.1, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("group norm")
    ax.set_title(title)
    ax.legend(frameon=False)
    return _finish(fig, path)


def save_flattening_plot(t, norms, path, target: float | None = None,
                         title: str = "sqrt(t) * norm") -> Path:
    """The slow-decay flattening diagnostic ``sqrt(t) |u|`` vs log t."""
    t = np.asarray(t, dtype=float)
    norms = np.asarray(norms, dtype=float)
    keep = t > 0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(t[keep], np.sqrt(t[keep]) * norms[keep], lw=1.2)
    if target is not None:
        ax.axhline(target, color="k", lw=0.8, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("sqrt(t) * norm")
    ax.set_title(title)
    return _finish(fig, path)


def save_sweep_plot(xvals, yvals, path, xlabel: str, ylabel: str,
                    title: str = "sweep") -> Path:
    x = np.asarray(xvals, dtype=float)
    y = np.asarray(yvals, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, "o-", lw=1.0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _finish(fig, path)
