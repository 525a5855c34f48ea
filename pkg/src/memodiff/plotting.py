"""Space-time heatmaps of simulated fields, written as SVG.

Output is byte-stable for identical inputs: the SVG id salt is fixed and
no creation date is embedded.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

WIDTH_PX = 512
HEIGHT_PX = 256
DPI = 100
SVG_SALT = "memodiff"


def heatmap_svg(
    path: str | Path,
    x: np.ndarray,
    t: np.ndarray,
    fields: np.ndarray,
    title: str = "",
    cmap: str = "viridis",
) -> Path:
    """Render ``fields[i, j] = u(x_j, t_i)`` as a ``WIDTH_PX x HEIGHT_PX`` raster.

    Time runs along the horizontal axis and space along the vertical one.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    fields = np.asarray(fields, dtype=float)
    if fields.shape != (len(t), len(x)):
        raise ValueError(f"fields shape {fields.shape} does not match ({len(t)}, {len(x)})")
    path = Path(path)
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(WIDTH_PX / DPI, HEIGHT_PX / DPI), dpi=DPI)
        t_hi = t[-1] if len(t) > 1 and t[-1] > t[0] else t[0] + 1.0
        im = ax.imshow(
            fields.T,
            origin="lower",
            aspect="auto",
            extent=(t[0], t_hi, x[0], x[-1]),
            cmap=cmap,
            interpolation="nearest",
        )
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        if title:
            ax.set_title(title, fontsize=8)
        fig.colorbar(im, ax=ax, label="u")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
