"""LogGabor gradients and the weighted partial main orientation map (WPMOM).

The orientation at each pixel is half the angle of the doubled-angle vector
``(gx^2 - gy^2, 2 gx gy)`` pooled over Gaussian windows of several sizes, each
weighted by ``1 / sigma``.  Because the pooled vector is quadratic in the
gradient, flipping gradient signs (intensity inversion) or scaling them leaves
the orientation unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .loggabor import FilterBank, filter_image

ZERO_TOL = 1e-12


@dataclass
class GradientField:
    gx: np.ndarray
    gy: np.ndarray


@dataclass
class AsgField:
    sigma: float
    asg_x: np.ndarray
    asg_y: np.ndarray


@dataclass
class OrientationMap:
    theta: np.ndarray
    sigmas: tuple
    weights: tuple

    @property
    def shape(self):
        return self.theta.shape


def loggabor_gradients(img: np.ndarray, bank: FilterBank) -> GradientField:
    resp = filter_image(img, bank)
    th = bank.orientations
    gx = np.einsum("soij,o->ij", resp.odd, np.cos(th))
    gy = np.einsum("soij,o->ij", resp.odd, np.sin(th))
    return GradientField(gx=gx, gy=gy)


def gradients_from_odd(odd: np.ndarray, orientations) -> GradientField:
    """Same as :func:`loggabor_gradients` for an already computed odd response."""
    th = np.asarray(orientations, dtype=np.float64)
    return GradientField(gx=np.einsum("soij,o->ij", odd, np.cos(th)),
                         gy=np.einsum("soij,o->ij", odd, np.sin(th)))


def gaussian_window_sum(field: np.ndarray, sigma: float) -> np.ndarray:
    """Unit-mass Gaussian window (truncated at 4 sigma), periodic boundary."""
    return ndimage.gaussian_filter(field, sigma, mode="wrap", truncate=4.0)


def average_squared_gradient(grad: GradientField, sigma: float) -> AsgField:
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    gx, gy = grad.gx, grad.gy
    return AsgField(sigma=sigma,
                    asg_x=gaussian_window_sum(gx * gx - gy * gy, sigma),
                    asg_y=gaussian_window_sum(2.0 * gx * gy, sigma))


def angle(x_comp, y_comp):
    """Four-quadrant angle of ``(X, Y)`` in (-pi, pi].

    ``X >= 0`` gives ``arctan(Y / X)`` (``+-pi/2`` on the ``Y`` axis, 0 at the
    origin); ``X < 0`` adds ``pi`` when ``Y >= 0`` and subtracts it otherwise.
    """
    x = np.asarray(x_comp, dtype=np.float64) + 0.0  # -0.0 -> +0.0
    y = np.asarray(y_comp, dtype=np.float64) + 0.0
    out = np.arctan2(y, x)
    if out.ndim == 0:
        return float(out)
    return out


def wpmom_from_gradients(grad: GradientField, sigmas=(2.0, 4.0, 6.0)) -> OrientationMap:
    sigmas = tuple(float(s) for s in sigmas)
    if not sigmas or min(sigmas) <= 0:
        raise ValueError("sigmas must be a nonempty list of positive scales")
    acc_x = np.zeros_like(grad.gx)
    acc_y = np.zeros_like(grad.gx)
    for sigma in sigmas:
        asg = average_squared_gradient(grad, sigma)
        acc_x += asg.asg_x / sigma
        acc_y += asg.asg_y / sigma
    flat = (np.abs(acc_x) < ZERO_TOL) & (np.abs(acc_y) < ZERO_TOL)
    acc_x[flat] = 0.0
    acc_y[flat] = 0.0
    theta = 0.5 * angle(acc_x, acc_y)
    return OrientationMap(theta=theta, sigmas=sigmas, weights=tuple(1.0 / s for s in sigmas))


def wpmom_map(img: np.ndarray, bank: FilterBank, sigmas=(2.0, 4.0, 6.0)) -> OrientationMap:
    """Orientation map in (-pi/2, pi/2] from odd-LogGabor gradients."""
    return wpmom_from_gradients(loggabor_gradients(img, bank), sigmas)
