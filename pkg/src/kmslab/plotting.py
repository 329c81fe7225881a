"""Report figures.  Headless (Agg) and deterministic: no timestamps in the PNG metadata."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": None}
_STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def lhs_rhs_scatter(lhs: Sequence[float], rhs: Sequence[float], path: Path, title: str) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.loglog(rhs, lhs, ".", ms=2)
        lo = min(min(lhs), min(rhs))
        hi = max(max(lhs), max(rhs))
        ax.loglog([lo, hi], [lo, hi], "k-", lw=0.6)
        ax.set_xlabel("right-hand side")
        ax.set_ylabel("m(tau C)")
        ax.set_title(title)
        return _save(fig, path)


def pass_counts(labels: Sequence[str], passed: Sequence[int], failed: Sequence[int], path: Path,
                title: str) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        xs = range(len(labels))
        ax.bar(xs, passed, color="tab:green", label="pass")
        ax.bar(xs, failed, bottom=passed, color="tab:red", label="fail")
        ax.set_xticks(list(xs), labels)
        ax.set_ylabel("rows")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def tower_levels(levels: Sequence[int], path: Path, title: str) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.step(range(len(levels)), levels, where="post", lw=0.8)
        ax.set_xlabel("step along the cycle")
        ax.set_ylabel("level")
        ax.set_title(title)
        return _save(fig, path)


def mass_by_K(Ks: Sequence[int], masses: Sequence[float], path: Path, title: str) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(Ks, masses, "o-")
        ax.set_xlabel("K")
        ax.set_ylabel("tower mass")
        ax.set_title(title)
        return _save(fig, path)


def spectra(lags: Sequence[int], koopman: Sequence[float], riesz: Sequence[float], path: Path,
            title: str, support: int | None = None) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.stem(lags, koopman, linefmt="C0-", markerfmt="C0o", basefmt=" ", label="autocorrelation")
        ax.plot(lags, riesz, "C1x", label="Riesz coefficient")
        if support is not None:
            ax.axvline(support + 0.5, color="k", lw=0.6, ls="--")
        ax.set_xlabel("lag")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def residual_grid(rows: Sequence[str], cols: Sequence[str], values, path: Path, title: str) -> Path:
    """Heatmap of log10 max residual; exact zeros are shown as the floor, missing cells blank."""
    import numpy as np

    floor = -18.0
    grid = np.full((len(rows), len(cols)), np.nan)
    for (i, j), v in values.items():
        grid[i, j] = floor if v == 0 else max(floor, float(np.log10(v)))
    with plt.rc_context({**_STYLE, "axes.grid": False,
                         "figure.figsize": (1.0 + 0.9 * len(cols), 1.4 + 0.45 * len(rows))}):
        fig, ax = plt.subplots()
        im = ax.imshow(grid, cmap="viridis", vmin=floor, vmax=0, aspect="auto")
        ax.set_xticks(range(len(cols)), cols, rotation=35, ha="right")
        ax.set_yticks(range(len(rows)), rows)
        for (i, j), v in values.items():
            ax.text(j, i, "0" if v == 0 else f"{v:.0e}", ha="center", va="center", fontsize=7,
                    color="w" if grid[i, j] < -9 else "k")
        fig.colorbar(im, ax=ax, label=f"log10 max residual (0 drawn at {floor:g})")
        ax.set_title(title)
        return _save(fig, path)
