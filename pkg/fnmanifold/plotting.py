"""
Scatter plots of embeddings as standalone SVG.
"""

import logging
from typing import Optional

import fsspec
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .embed import Embedding  # noqa: E402

logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "fnmanifold", "svg.fonttype": "none", "path.simplify": False}


def render_scatter_svg(emb: Embedding, color: Optional[np.ndarray], path: str, title: Optional[str] = None) -> str:
    """
    Plot coordinates (1, 2) of an embedding, plus (1, 3) for embeddings with three or
    more columns, colored by a per-point scalar on the viridis ramp. Axes carry no labels
    because embedding units are arbitrary. The output bytes depend only on the inputs.
    """
    if emb.dim < 2:
        raise ValueError(f"render_scatter_svg() needs at least 2 embedding columns, got {emb.dim}")
    values = np.zeros(emb.n) if color is None else np.asarray(color, dtype=float)
    if values.shape != (emb.n,):
        raise ValueError(f"color has shape {values.shape}, expected ({emb.n},)")
    projections = [(0, 1), (0, 2)] if emb.dim >= 3 else [(0, 1)]
    with matplotlib.rc_context(SVG_RC):
        fig, axes = plt.subplots(1, len(projections), figsize=(4.0 * len(projections), 4.0), squeeze=False)
        for ax, (i, j) in zip(axes[0], projections):
            ax.scatter(emb.coords[:, i], emb.coords[:, j], c=values, cmap="viridis", s=8, linewidths=0)
            ax.set_title(f"({i + 1}, {j + 1})", fontsize=9)
            ax.tick_params(labelsize=7)
        if title:
            fig.suptitle(title, fontsize=10)
        fig.tight_layout()
        with fsspec.open(path, "wb") as f:
            fig.savefig(f, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.debug(f"Saved scatter plot {path}")
    return path
