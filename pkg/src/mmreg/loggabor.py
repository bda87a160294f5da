"""Frequency-domain LogGabor filter bank.

Each filter is one-sided in orientation, so the inverse transform of the
filtered spectrum is a quadrature pair: the real part is the even-symmetric
response and the imaginary part the odd-symmetric one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BankParams:
    n_scales: int = 4
    n_orients: int = 6
    min_wavelength: float = 3.0
    scale_mult: float = 2.1
    sigma_on_f: float = 0.55
    angular_sigma_ratio: float = 1.2

    def wavelengths(self) -> np.ndarray:
        return self.min_wavelength * self.scale_mult ** np.arange(self.n_scales)

    @property
    def max_wavelength(self) -> float:
        return float(self.wavelengths()[-1])


@dataclass(frozen=True)
class FilterBank:
    width: int
    height: int
    params: BankParams
    transfer: np.ndarray  # (n_scales, n_orients, height, width)

    @property
    def n_scales(self) -> int:
        return self.params.n_scales

    @property
    def n_orients(self) -> int:
        return self.params.n_orients

    @property
    def orientations(self) -> np.ndarray:
        return np.arange(self.n_orients) * np.pi / self.n_orients

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)


@dataclass
class BankResponse:
    even: np.ndarray  # (n_scales, n_orients, H, W)
    odd: np.ndarray
    amplitude: np.ndarray


def frequency_grid(height: int, width: int):
    """Radius and angle (image coordinates, ``y`` down) of every FFT bin."""
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    radius = np.sqrt(fx**2 + fy**2)
    theta = np.arctan2(np.broadcast_to(fy, radius.shape), np.broadcast_to(fx, radius.shape))
    return radius, theta


def radial_component(radius: np.ndarray, wavelength: float, sigma_on_f: float) -> np.ndarray:
    fo = 1.0 / wavelength
    r = radius.copy()
    r[r == 0] = 1.0  # placeholder, zeroed below
    g = np.exp(-(np.log(r / fo) ** 2) / (2.0 * np.log(sigma_on_f) ** 2))
    g[radius == 0] = 0.0
    return g


def angular_component(theta: np.ndarray, orient: float, sigma_theta: float) -> np.ndarray:
    d = np.angle(np.exp(1j * (theta - orient)))
    return np.exp(-(d**2) / (2.0 * sigma_theta**2))


def build_filter_bank(width: int, height: int, params: BankParams | None = None) -> FilterBank:
    """Spectral gains for every (scale, orientation) pair.

    Scale ``s`` is centred on ``1 / (min_wavelength * scale_mult**s)`` cycles
    per pixel; orientation ``o`` on ``o * pi / n_orients``.
    """
    p = params or BankParams()
    if p.n_scales < 2:
        raise ValueError("n_scales must be >= 2")
    if p.n_orients < 3:
        raise ValueError("n_orients must be >= 3")
    if p.min_wavelength < 2:
        raise ValueError("min_wavelength must be >= 2")
    if p.max_wavelength > min(width, height):
        raise ValueError(
            f"{width}x{height} grid cannot resolve wavelength {p.max_wavelength:.1f}px")

    radius, theta = frequency_grid(height, width)
    sigma_theta = p.angular_sigma_ratio * (np.pi / p.n_orients) / 2.0
    transfer = np.empty((p.n_scales, p.n_orients, height, width))
    radial = [radial_component(radius, lam, p.sigma_on_f) for lam in p.wavelengths()]
    for o in range(p.n_orients):
        spread = angular_component(theta, o * np.pi / p.n_orients, sigma_theta)
        for s in range(p.n_scales):
            transfer[s, o] = radial[s] * spread
    transfer[:, :, 0, 0] = 0.0
    transfer.setflags(write=False)
    return FilterBank(width=width, height=height, params=p, transfer=transfer)


def spatial_kernel(bank: FilterBank, s: int, o: int) -> np.ndarray:
    """Complex spatial kernel whose circular convolution equals filtering."""
    return np.fft.ifft2(bank.transfer[s, o])


def filter_image(img: np.ndarray, bank: FilterBank) -> BankResponse:
    img = np.asarray(img, dtype=np.float64)
    if img.shape != bank.shape:
        raise ValueError(f"image shape {img.shape} does not match bank grid {bank.shape}")
    spectrum = np.fft.fft2(img)
    resp = np.fft.ifft2(spectrum[None, None] * bank.transfer, axes=(-2, -1))
    even = resp.real.copy()
    odd = resp.imag.copy()
    return BankResponse(even=even, odd=odd, amplitude=np.abs(resp))
