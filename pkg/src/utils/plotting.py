"""
SVG rendering of 2D loci
"""

import logging
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

CLASS_COLOURS = {
    'CLEAVE': '#1f77b4',
    'EDGE': '#ff7f0e',
    'DEGENERATE_CLEAVE': '#9467bd',
    'CROSSING': '#d62728',
    'REMAINDER': '#7f7f7f',
    'POINT': '#2ca02c',
}


def render_locus_svg(path: Path, points, classes: Optional[Sequence[str]] = None,
                     polylines: Sequence = (), boundary: Sequence = (), title: str = '') -> Path:
    """
    Draw class-coloured points, polylines and boundary curves into an SVG

    Args:
        path: Output file
        points: (m, 2) array; only the first two coordinates are drawn
        classes: Class name per point (colour key); 'POINT' when omitted
        polylines: Sequence of (k, 2) arrays
        boundary: Sequence of (k, 2) arrays drawn in black
        title: Plot title

    Returns:
        Path: The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.rcParams['svg.hashsalt'] = 'cutlocus'
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        P = np.zeros((0, 2))
    classes = list(classes) if classes is not None else ['POINT'] * len(P)

    fig, ax = plt.subplots(figsize=(6, 6))
    try:
        for curve in boundary:
            c = np.asarray(curve, dtype=float)
            ax.plot(c[:, 0], c[:, 1], color='black', linewidth=1.0)
        for line in polylines:
            c = np.asarray(line, dtype=float)
            if len(c) > 1:
                ax.plot(c[:, 0], c[:, 1], color='#444444', linewidth=0.8)
        for cls in sorted(set(classes)):
            idx = [i for i, c in enumerate(classes) if c == cls]
            ax.scatter(P[idx, 0], P[idx, 1], s=4, color=CLASS_COLOURS.get(cls, '#000000'), label=cls)
        if len(P):
            ax.legend(loc='upper right', fontsize=7, markerscale=3)
        ax.set_aspect('equal', adjustable='datalim')
        if title:
            ax.set_title(title)
        fig.savefig(path, format='svg', metadata={'Date': None})
    finally:
        plt.close(fig)
    logger.debug("Wrote %s", path)
    return path
