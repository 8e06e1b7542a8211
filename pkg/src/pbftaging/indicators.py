"""Quality indicators for two-objective minimisation fronts."""

from __future__ import annotations

import numpy as np


def hypervolume_2d(points, reference) -> float:
    """Area dominated by ``points`` and bounded by ``reference``.

    Points that do not strictly dominate the reference point are ignored.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(reference, dtype=float)
    pts = pts[np.all(pts < ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area = 0.0
    ceiling = ref[1]
    for x, y in pts:
        if y < ceiling:
            area += (ref[0] - x) * (ceiling - y)
            ceiling = y
    return float(area)


def spacing(points) -> float:
    """Schott's spacing: spread of nearest-neighbour Manhattan distances.

    Uses the population standard deviation; fronts with fewer than two points
    give 0.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    d = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    np.fill_diagonal(d, np.inf)
    return float(np.std(d.min(axis=1)))


def normalize(points, low, high) -> np.ndarray:
    """Min-max scale each objective; a zero range maps to 0."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    low = np.asarray(low, dtype=float)
    span = np.asarray(high, dtype=float) - low
    span = np.where(span > 0, span, 1.0)
    return (pts - low) / span
