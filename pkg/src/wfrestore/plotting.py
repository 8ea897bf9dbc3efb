"""Figures for restoration runs, solver diagnostics and convergence studies.

Everything renders with the Agg backend to PNG files. PNG metadata carries
no software stamp, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
}


def _save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def image_panels(images: dict, path, vmin=0.0, vmax=255.0, ncols=None):
    """Grey-scale images side by side, titled by their dict keys."""
    n = len(images)
    if n == 0:
        raise ValueError("nothing to plot")
    ncols = ncols or n
    nrows = -(-n // ncols)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(2.4 * ncols, 2.5 * nrows), squeeze=False)
        for ax in axes.flat:
            ax.set_axis_off()
        for ax, (title, img) in zip(axes.flat, images.items()):
            ax.imshow(np.asarray(img, dtype=float), cmap="gray", vmin=vmin, vmax=vmax, interpolation="nearest")
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def coefficient_bands(data, path, labels=None, ncols=None):
    """One panel per band with a symmetric colour scale."""
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    ncols = ncols or int(np.ceil(np.sqrt(n)))
    nrows = -(-n // ncols)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(1.9 * ncols, 1.9 * nrows), squeeze=False)
        for ax in axes.flat:
            ax.set_axis_off()
        for b, ax in enumerate(axes.flat[:n]):
            lim = float(np.max(np.abs(data[b]))) or 1.0
            ax.imshow(data[b], cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
            ax.set_title(str(labels[b]) if labels is not None else f"band {b}")
        fig.tight_layout()
        _save(fig, path)


def diagnostics(rows, path):
    """Objective and primal residuals against iteration."""
    rows = np.asarray([r[:4] for r in rows], dtype=float)
    if rows.size == 0:
        raise ValueError("empty diagnostics table")
    it = rows[:, 0]
    with plt.rc_context(_STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        a1.plot(it, rows[:, 1], color="k", lw=1)
        a1.set_xlabel("iteration")
        a1.set_ylabel("objective")
        for col, name in ((2, "res_d"), (3, "res_e")):
            y = rows[:, col]
            if np.any(y > 0):
                a2.semilogy(it[y > 0], y[y > 0], lw=1, label=name)
        a2.set_xlabel("iteration")
        a2.set_ylabel("primal residual")
        if a2.lines:
            a2.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def convergence(ns, series: dict, path, ylabel="error"):
    """``log2`` error curves against the resolution exponent ``n``."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        for label, errs in series.items():
            errs = np.asarray(errs, dtype=float)
            ok = errs > 0
            if np.any(ok):
                ax.plot(np.asarray(ns)[ok], np.log2(errs[ok]), marker="o", ms=3, lw=1, label=str(label))
        ax.set_xlabel("n")
        ax.set_ylabel(f"log2 {ylabel}")
        if ax.lines:
            ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)
