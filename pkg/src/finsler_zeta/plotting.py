"""Figures for the CLI report command (Agg backend, PNG output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "font.size": 10,
    "legend.fontsize": 8,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def scan_figure(grid, spectrum_values, peaks, path):
    """|P(eps + i tau)| along the scan line with the predicted branch points."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        tau = np.array([row[1] for row in grid])
        mag = np.array([row[2] for row in grid])
        ax.semilogy(tau, mag, lw=1.0, color="k", label="|P|")
        for i, v in enumerate(spectrum_values):
            ax.axvline(v, color="tab:red", lw=0.8, ls="--", label="spectrum" if i == 0 else None)
        ax.plot([p.tau for p in peaks], [p.height for p in peaks], "o", ms=4, color="tab:blue", label="peaks")
        ax.set_xlabel("Im s")
        ax.set_ylabel("|P(s)|")
        ax.legend()
        return _save(fig, path)


def count_figure(rows, path):
    """N(T) divided by its leading asymptotic term."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([r[0] for r in rows], [r[2] for r in rows], lw=1.0, color="k")
        ax.axhline(1.0, color="tab:red", lw=0.8, ls="--")
        ax.set_xlabel("T")
        ax.set_ylabel("N(T) / leading term")
        return _save(fig, path)


def density_figure(taus, values, path, label="J"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(taus, values, lw=1.0, color="k")
        ax.set_xlabel("tau")
        ax.set_ylabel(label)
        return _save(fig, path)


def exponent_figure(radii, values, slope, path):
    """Log-log plot of |P| near a branch point with the fitted slope."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        r = np.asarray(radii)
        v = np.abs(np.asarray(values))
        ax.loglog(r, v, "o", ms=3, color="k", label="|P|")
        ax.loglog(r, v[0] * (r / r[0]) ** slope, lw=0.8, color="tab:red", label=f"slope {slope:.3f}")
        ax.set_xlabel("distance to branch point")
        ax.set_ylabel("|P|")
        ax.legend()
        return _save(fig, path)
