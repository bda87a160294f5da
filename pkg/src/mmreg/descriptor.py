"""GGLOH-style log-polar histograms of WPMOM orientations."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .detector import Keypoint
from .wpmom import OrientationMap


@dataclass(frozen=True)
class DescriptorParams:
    n_rings: int = 2
    n_sectors: int = 8
    n_bins: int = 12
    patch_radius: float = 36.0
    clip: float = 0.2

    def __post_init__(self):
        if self.n_rings < 1 or self.n_sectors < 4 or self.n_bins < 4 or self.patch_radius < 8:
            raise ValueError(f"invalid descriptor layout {self}")

    @property
    def n_cells(self) -> int:
        return 1 + self.n_rings * self.n_sectors

    @property
    def length(self) -> int:
        return self.n_cells * self.n_bins


@dataclass
class Descriptor:
    vector: np.ndarray
    keypoint: Keypoint


def assign_reference_orientation(kp: Keypoint, omap: OrientationMap) -> Keypoint:
    h, w = omap.shape
    xi, yi = int(round(kp.x)), int(round(kp.y))
    if not (0 <= xi < w and 0 <= yi < h):
        raise IndexError(f"keypoint ({kp.x}, {kp.y}) outside {w}x{h} orientation map")
    return replace(kp, reference_orientation=float(omap.theta[yi, xi]))


def _wrap_half(a):
    """Wrap angles into [-pi/2, pi/2)."""
    return np.mod(a + np.pi / 2, np.pi) - np.pi / 2


class _Layout:
    """Pixel offsets of the disc and their (radius, angle) in the unrotated frame."""

    def __init__(self, params: DescriptorParams):
        r = int(np.floor(params.patch_radius))
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        keep = dx**2 + dy**2 <= params.patch_radius**2
        self.dx = dx[keep]
        self.dy = dy[keep]
        rho = np.hypot(self.dx, self.dy)
        edges = params.patch_radius * np.arange(1, params.n_rings + 1) / (params.n_rings + 1)
        self.ring = np.searchsorted(edges, rho, side="left")  # 0 = central disc
        self.phi = np.arctan2(self.dy, self.dx)
        self.radius = r
        self.params = params

    def cells(self, ref: np.ndarray) -> np.ndarray:
        """Cell index per (keypoint, offset) for reference orientations ``ref``."""
        p = self.params
        rel = np.mod(self.phi[None, :] - ref[:, None], 2 * np.pi)
        sector = np.minimum((rel / (2 * np.pi / p.n_sectors)).astype(np.int64), p.n_sectors - 1)
        ring = np.broadcast_to(self.ring, sector.shape)
        return np.where(ring == 0, 0, 1 + (ring - 1) * p.n_sectors + sector)


def _inside(kp: Keypoint, shape, radius: int) -> bool:
    h, w = shape
    xi, yi = int(round(kp.x)), int(round(kp.y))
    return radius <= xi < w - radius and radius <= yi < h - radius


def _histograms(xs, ys, refs, omap: OrientationMap, layout: _Layout) -> np.ndarray:
    p = layout.params
    n = len(xs)
    theta = omap.theta[ys[:, None] + layout.dy[None, :], xs[:, None] + layout.dx[None, :]]
    rel = _wrap_half(theta - refs[:, None])
    width = np.pi / p.n_bins
    pos = (rel + np.pi / 2) / width - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    b0 = np.mod(lo.astype(np.int64), p.n_bins)
    b1 = np.mod(b0 + 1, p.n_bins)
    cell = layout.cells(refs)
    base = (np.arange(n)[:, None] * p.n_cells + cell) * p.n_bins
    hist = np.bincount((base + b0).ravel(), weights=(1.0 - frac).ravel(), minlength=n * p.length)
    hist += np.bincount((base + b1).ravel(), weights=frac.ravel(), minlength=n * p.length)
    return hist.reshape(n, p.length)


def _unit_rows(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec, axis=1, keepdims=True)
    return np.divide(vec, norm, out=np.zeros_like(vec), where=norm > 0)


def normalize(vec: np.ndarray, clip: float = 0.2) -> np.ndarray:
    """Unit-normalize rows, clip at ``clip`` and renormalize; zero rows stay zero."""
    vec = np.atleast_2d(vec).astype(np.float64)
    return _unit_rows(np.minimum(_unit_rows(vec), clip))


def extract_descriptor(kp: Keypoint, omap: OrientationMap,
                       params: DescriptorParams | None = None) -> Descriptor | None:
    """Descriptor for one keypoint (``None`` if its patch leaves the image)."""
    descs, _ = describe_all([kp], omap, params, assign=False)
    return descs[0] if descs else None


def describe_all(kps, omap: OrientationMap, params: DescriptorParams | None = None,
                 assign: bool = True, chunk: int = 256):
    """Describe every keypoint whose patch fits in the map.

    Returns ``(descriptors, discarded)`` where ``discarded`` lists the input
    indices that were dropped (patch outside the image or flat histogram).
    Order of the surviving keypoints is preserved.  With ``assign=True`` the
    reference orientation is read from ``omap`` first.
    """
    p = params or DescriptorParams()
    layout = _Layout(p)
    kps = list(kps)
    if assign:
        kps = [assign_reference_orientation(k, omap) if _inside_map(k, omap.shape) else k
               for k in kps]
    valid = [i for i, k in enumerate(kps) if _inside(k, omap.shape, layout.radius)]
    discarded = sorted(set(range(len(kps))) - set(valid))
    out = {}
    for start in range(0, len(valid), chunk):
        idx = valid[start:start + chunk]
        xs = np.array([int(round(kps[i].x)) for i in idx])
        ys = np.array([int(round(kps[i].y)) for i in idx])
        refs = np.array([kps[i].reference_orientation for i in idx], dtype=np.float64)
        vecs = normalize(_histograms(xs, ys, refs, omap, layout), p.clip)
        for i, v in zip(idx, vecs):
            if np.any(v):
                out[i] = Descriptor(vector=v, keypoint=kps[i])
            else:
                discarded.append(i)
    return [out[i] for i in sorted(out)], sorted(discarded)


def _inside_map(kp: Keypoint, shape) -> bool:
    return 0 <= round(kp.x) < shape[1] and 0 <= round(kp.y) < shape[0]
