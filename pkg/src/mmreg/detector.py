"""Shi-Tomasi keypoints on the combined PC moment map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class DetectorParams:
    window_sigma: float = 1.5
    nms_radius: int = 4
    threshold_quantile: float = 0.90
    max_points: int = 2000
    border: float | None = None  # None -> largest filter wavelength


@dataclass
class CornernessField:
    response: np.ndarray
    window_sigma: float
    grad_x: np.ndarray
    grad_y: np.ndarray


@dataclass
class Keypoint:
    x: float
    y: float
    strength: float
    level: int = 0
    reference_orientation: float = 0.0


def min_eigenvalue(p, q, r):
    """Smaller eigenvalue of ``[[p, q], [q, r]]`` in closed form."""
    return 0.5 * (p + r - np.sqrt((p - r) ** 2 + 4.0 * q**2))


def cornerness_map(m_w: np.ndarray, window_sigma: float = 1.5) -> CornernessField:
    m_w = np.asarray(m_w, dtype=np.float64)
    gy, gx = np.gradient(m_w)
    sxx = ndimage.gaussian_filter(gx * gx, window_sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(gx * gy, window_sigma, mode="nearest")
    syy = ndimage.gaussian_filter(gy * gy, window_sigma, mode="nearest")
    # PSD matrix: negative values are rounding noise
    resp = np.maximum(min_eigenvalue(sxx, sxy, syy), 0.0)
    return CornernessField(response=resp, window_sigma=window_sigma, grad_x=gx, grad_y=gy)


def detect_keypoints(field: CornernessField | np.ndarray, threshold_quantile: float = 0.90,
                     nms_radius: int = 4, max_points: int = 2000, border: float = 0.0,
                     level: int = 0) -> list[Keypoint]:
    """Local maxima above a quantile of the positive responses.

    Candidates are visited strongest first, ties in ``(y, x)`` order; one is kept
    only if no kept point lies within ``nms_radius`` (Chebyshev distance).
    Points closer than ``border`` to an edge are dropped.
    """
    if not 0.0 < threshold_quantile < 1.0:
        raise ValueError("threshold_quantile must lie in (0, 1)")
    if nms_radius < 1:
        raise ValueError("nms_radius must be >= 1")
    resp = field.response if isinstance(field, CornernessField) else np.asarray(field, float)
    positive = resp[resp > 0]
    if positive.size == 0:
        return []
    thr = np.quantile(positive, threshold_quantile)

    size = 2 * nms_radius + 1
    local_max = ndimage.maximum_filter(resp, size=size, mode="constant", cval=-np.inf)
    h, w = resp.shape
    ys, xs = np.nonzero((resp >= local_max) & (resp >= thr) & (resp > 0))
    inside = (xs >= border) & (xs < w - border) & (ys >= border) & (ys < h - border)
    ys, xs = ys[inside], xs[inside]
    vals = resp[ys, xs]
    order = np.lexsort((xs, ys, -vals))

    taken = np.zeros(resp.shape, dtype=bool)
    out = []
    for i in order:
        y, x = ys[i], xs[i]
        y0, y1 = max(y - nms_radius, 0), y + nms_radius + 1
        x0, x1 = max(x - nms_radius, 0), x + nms_radius + 1
        if taken[y0:y1, x0:x1].any():
            continue
        taken[y, x] = True
        out.append(Keypoint(x=float(x), y=float(y), strength=float(vals[i]), level=level))
        if len(out) >= max_points:
            break
    return out
