"""Synthetic warped and intensity-distorted test pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .matching import Transform

DISTORTIONS = ("none", "affine", "inversion", "gamma")


@dataclass(frozen=True)
class SynthSpec:
    rotation_deg: float = 0.0
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0
    distortion: str = "none"
    alpha: float = 1.0  # affine intensity: alpha * I + beta
    beta: float = 0.0
    gamma: float = 0.5
    blur_sigma: float = 1.5
    downsample: float = 1.0

    def validate(self):
        if self.distortion not in DISTORTIONS:
            raise ValueError(f"unknown distortion {self.distortion!r}; expected one of {DISTORTIONS}")
        if self.scale <= 0 or self.downsample < 1 or self.gamma <= 0 or self.blur_sigma < 0:
            raise ValueError("scale, gamma must be > 0, downsample >= 1, blur_sigma >= 0")


def similarity_about_center(shape, rotation_deg: float, scale: float, tx: float,
                            ty: float) -> Transform:
    """Rotate and scale about the image centre, then translate by ``(tx, ty)``."""
    h, w = shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t = np.deg2rad(rotation_deg)
    c, s = scale * np.cos(t), scale * np.sin(t)
    m = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    m[:2, 2] = np.array([cx + tx, cy + ty]) - m[:2, :2] @ np.array([cx, cy])
    return Transform("similarity", m)


def warp_image(img: np.ndarray, transform: Transform, out_shape=None) -> np.ndarray:
    """Resample ``img`` so that ``out(transform(p)) = img(p)``; outside is 0."""
    out_shape = img.shape if out_shape is None else out_shape
    if np.allclose(transform.matrix, np.eye(3), atol=0, rtol=0) and out_shape == img.shape:
        return img.copy()
    inv = np.linalg.inv(transform.matrix)
    ys, xs = np.mgrid[0:out_shape[0], 0:out_shape[1]].astype(np.float64)
    hom = inv @ np.stack([xs.ravel(), ys.ravel(), np.ones(xs.size)])
    sx, sy = hom[0] / hom[2], hom[1] / hom[2]
    out = ndimage.map_coordinates(img, [sy, sx], order=1, mode="constant", cval=0.0)
    return out.reshape(out_shape)


def distort(img: np.ndarray, spec: SynthSpec) -> np.ndarray:
    if spec.distortion == "none":
        return img.copy()
    if spec.distortion == "affine":
        return np.clip(spec.alpha * img + spec.beta, 0.0, 1.0)
    if spec.distortion == "inversion":
        return 1.0 - img
    out = np.clip(img, 0.0, 1.0) ** spec.gamma
    if spec.blur_sigma > 0:
        out = ndimage.gaussian_filter(out, spec.blur_sigma, mode="reflect")
    return out


def synthesize(img: np.ndarray, spec: SynthSpec):
    """Warp then distort ``img``; returns ``(image, ground_truth)``.

    The ground truth maps input pixel coordinates to output coordinates.
    Downsampling (gamma case) is folded into the ground truth as a scale.
    """
    spec.validate()
    gt = similarity_about_center(img.shape, spec.rotation_deg, spec.scale, spec.tx, spec.ty)
    out = distort(warp_image(img, gt), spec)
    if spec.distortion == "gamma" and spec.downsample > 1:
        shape = tuple(int(np.floor(n / spec.downsample)) for n in out.shape)
        down = Transform("similarity", np.diag([1 / spec.downsample, 1 / spec.downsample, 1.0]))
        out = warp_image(out, down, shape)
        gt = Transform("similarity", down.matrix @ gt.matrix)
    return out, gt
