"""Image loading, normalization and Gaussian pyramids.

Images are plain 2-D ``float64`` numpy arrays indexed ``[row, col]`` (``y``
down, ``x`` right).  Pyramid level ``k`` samples level ``k - 1`` at integer
multiples of ``scale_factor`` so that pixel ``(x, y)`` of level ``k`` sits at
``(x, y) * scale_factor**k`` in the level-0 frame.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

MIN_SIZE = 32
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_SIGNATURES = {
    b"\x89PNG\r\n\x1a\n": "PNG",
    b"II*\x00": "TIFF",
    b"MM\x00*": "TIFF",
    b"\xff\xd8\xff": "JPEG",
    b"GIF8": "GIF",
    b"BM": "BMP",
    b"RIFF": "WEBP",
}


class ImageFormatError(ValueError):
    """Raised for files that are readable but not PNG/TIFF 8/16-bit images."""


def _sniff_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(16)
    for sig, name in _SIGNATURES.items():
        if head.startswith(sig):
            return name
    return "unknown"


def to_gray(data: np.ndarray) -> np.ndarray:
    """Reduce an ``(H, W, 3)`` RGB array to luma; 2-D input is returned as float."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        return data
    if data.ndim == 3 and data.shape[2] == 3:
        r, g, b = LUMA_WEIGHTS
        return r * data[..., 0] + g * data[..., 1] + b * data[..., 2]
    raise ImageFormatError(f"unsupported channel layout {data.shape}")


def load_image(path) -> np.ndarray:
    """Read a PNG or TIFF file as a gray image with values in [0, 1].

    Integer samples are divided by their type maximum (255 or 65535); RGB is
    converted to luma with fixed 0.299/0.587/0.114 weights.

    Raises
    ------
    OSError
        If the file is missing or cannot be decoded.
    ImageFormatError
        For anything other than 8/16-bit, 1- or 3-channel PNG/TIFF.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    fmt = _sniff_format(path)
    if fmt not in ("PNG", "TIFF"):
        raise ImageFormatError(f"unsupported image format {fmt} ({path})")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise OSError(f"could not decode {fmt} file {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageFormatError(f"unsupported {fmt} sample type {raw.dtype} ({path})")
    if raw.ndim == 3:
        if raw.shape[2] != 3:
            raise ImageFormatError(f"unsupported {fmt} channel count {raw.shape[2]} ({path})")
        raw = raw[..., ::-1]  # BGR -> RGB
    return to_gray(raw) / scale


def save_image16(path, img: np.ndarray, rescale: bool = False) -> None:
    """Write ``img`` as a 16-bit gray PNG.

    With ``rescale=False`` values are clipped to [0, 1] and quantized; otherwise
    the image is first stretched to the full range (debug dumps).
    """
    data = np.asarray(img, dtype=np.float64)
    if rescale:
        data = preprocess(data)
    q = np.round(np.clip(data, 0.0, 1.0) * 65535.0).astype(np.uint16)
    _atomic_imwrite(path, q)


def save_rgb8(path, rgb: np.ndarray) -> None:
    """Write an ``(H, W, 3)`` float RGB array in [0, 1] as an 8-bit PNG."""
    q = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    _atomic_imwrite(path, q[..., ::-1])


def _atomic_imwrite(path, data: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.stem}.tmp{path.suffix}")
    if not cv2.imwrite(str(tmp), data):
        raise OSError(f"could not write {path}")
    os.replace(tmp, path)


def preprocess(img: np.ndarray) -> np.ndarray:
    """Min-max stretch to [0, 1]; a constant image maps to zeros."""
    img = np.asarray(img, dtype=np.float64)
    if img.size == 0:
        raise ValueError("empty image")
    lo, hi = float(img.min()), float(img.max())
    if hi - lo <= 0.0:
        return np.zeros_like(img)
    out = (img - lo) / (hi - lo)
    # guard against 1 + ulp after the division
    return np.clip(out, 0.0, 1.0)


@dataclass
class Pyramid:
    levels: list
    scale_factor: float
    blur_sigma: float
    requested_levels: int = field(default=0)

    @property
    def truncated(self) -> bool:
        return len(self.levels) < self.requested_levels

    def level_scale(self, k: int) -> float:
        """Multiplier taking level-``k`` coordinates to level 0."""
        return self.scale_factor**k


def _downsample(img: np.ndarray, factor: float, blur_sigma: float, shape) -> np.ndarray:
    blurred = ndimage.gaussian_filter(img, blur_sigma, mode="reflect") if blur_sigma > 0 else img
    rows = np.arange(shape[0], dtype=np.float64) * factor
    cols = np.arange(shape[1], dtype=np.float64) * factor
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(blurred, [rr, cc], order=1, mode="nearest")


def build_pyramid(img: np.ndarray, n_levels: int = 3, scale_factor: float = 2.0,
                  blur_sigma: float = 1.0) -> Pyramid:
    """Gaussian pyramid; levels that would fall below 32x32 are dropped silently.

    Level ``k`` has shape ``floor(shape0 / scale_factor**k)`` and is produced by
    blurring level ``k - 1`` and resampling it bilinearly.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if scale_factor <= 1:
        raise ValueError("scale_factor must be > 1")
    img = np.asarray(img, dtype=np.float64)
    h0, w0 = img.shape
    levels = [img]
    for k in range(1, n_levels):
        shape = (int(np.floor(h0 / scale_factor**k)), int(np.floor(w0 / scale_factor**k)))
        if min(shape) < MIN_SIZE:
            break
        levels.append(_downsample(levels[-1], scale_factor, blur_sigma, shape))
    return Pyramid(levels=levels, scale_factor=scale_factor, blur_sigma=blur_sigma,
                   requested_levels=n_levels)
