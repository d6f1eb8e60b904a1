"""Matplotlib figures for ``film report``: the bias heatmap, pooled |r| boxplots
and the Gaussian weighting curves. Everything renders off-screen to files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .uic import BiasProfile, GaussianParams, UicComparison, gaussian_weight  # noqa: E402

# metadata that would otherwise make PNG bytes differ between matplotlib versions
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def bias_heatmap(profile: BiasProfile, path, title: str = "") -> Path:
    """Techniques x metrics grid of Pearson r with p_min; undefined cells are hatched grey."""
    r = np.array([[np.nan if v is None else v for v in row] for row in profile.r], dtype=float)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * len(profile.metrics), 1.0 + 0.45 * len(profile.techniques)))
    ax.set_facecolor("#dddddd")
    im = ax.imshow(r, cmap="RdBu_r", vmin=-1.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(profile.metrics)), profile.metrics, rotation=45, ha="right")
    ax.set_yticks(range(len(profile.techniques)), profile.techniques)
    for i in range(r.shape[0]):
        for j in range(r.shape[1]):
            if not np.isnan(r[i, j]):
                ax.text(j, i, f"{r[i, j]:.2f}", ha="center", va="center", fontsize=7,
                        color="white" if abs(r[i, j]) > 0.6 else "black")
    fig.colorbar(im, ax=ax, label="r with p_min")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def pooled_boxplot(pooled: Mapping[str, Sequence[float]], comparisons: Sequence[UicComparison], path,
                   title: str = "") -> Path:
    """|r| distributions per metric next to UIC's, annotated with adjusted p-values."""
    names = [c.metric for c in comparisons] + ["uic"]
    data = [np.asarray(pooled[n], dtype=float) for n in names]
    fig, ax = plt.subplots(figsize=(1.2 + 0.8 * len(names), 4.0))
    ax.boxplot(data, showfliers=True)
    ax.set_xticks(range(1, len(names) + 1), names, rotation=45, ha="right")
    ax.set_ylabel("|r| with p_min")
    ax.set_ylim(-0.05, 1.15)
    for k, c in enumerate(comparisons, start=1):
        label = "n/a" if c.p_adjusted is None else f"p={c.p_adjusted:.1e}"
        ax.text(k, 1.08, label, ha="center", fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def gaussian_curves(path, widths: Sequence[float] = (0.15, 0.25, 0.5), a: float = 1.0, b: float = 0.0) -> Path:
    """Weight as a function of r for several widths (narrower means a stronger penalty)."""
    r = np.linspace(-1.0, 1.0, 401)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for c in widths:
        params = GaussianParams(a, b, c)
        ax.plot(r, [gaussian_weight(v, params) for v in r], label=f"c={c:g}")
    ax.set_xlabel("r")
    ax.set_ylabel("weight")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)
