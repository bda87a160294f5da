"""Phase congruency per orientation and the PC moment maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loggabor import BankResponse


@dataclass(frozen=True)
class PCParams:
    noise_k: float = 2.0  # T = mean + k * std of the Rayleigh noise amplitude
    cutoff: float = 0.4
    gain: float = 10.0
    epsilon: float = 1e-4


@dataclass
class PhaseCongruencyField:
    pc_per_orient: np.ndarray  # (n_orients, H, W)
    weight_per_orient: np.ndarray  # (n_orients, H, W)
    noise_threshold: np.ndarray  # (n_orients,)
    epsilon: float
    phase_deviation: np.ndarray | None = None  # (n_scales, n_orients, H, W)


@dataclass
class MomentMaps:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    psi: np.ndarray
    m_max: np.ndarray
    m_min: np.ndarray
    m_combined: np.ndarray


def rayleigh_threshold(smallest_scale_amp: np.ndarray, k: float) -> float:
    """Noise threshold from the median of a Rayleigh-distributed amplitude."""
    tau = np.median(smallest_scale_amp) / np.sqrt(np.log(4.0))
    mean = tau * np.sqrt(np.pi / 2.0)
    std = tau * np.sqrt((4.0 - np.pi) / 2.0)
    return float(mean + k * std)


def phase_congruency(resp: BankResponse, params: PCParams | None = None,
                     keep_phase_deviation: bool = False) -> PhaseCongruencyField:
    """Per-orientation phase congruency with per-scale noise truncation.

    ``PC_o = sum_s w_o * max(A_so * dphi_so - T_o, 0) / (sum_s A_so + eps)``
    where ``A * dphi = A * (cos(dphi) - |sin(dphi)|)`` is evaluated from the
    even/odd responses and the unit vector of the summed energy.
    """
    p = params or PCParams()
    even, odd, amp = resp.even, resp.odd, resp.amplitude
    n_scales, n_orients = even.shape[:2]
    if n_scales < 2:
        raise ValueError("phase congruency needs at least two scales")

    pcs = np.empty((n_orients,) + even.shape[2:])
    weights = np.empty_like(pcs)
    thresholds = np.empty(n_orients)
    dev_all = np.empty_like(even) if keep_phase_deviation else None
    tiny = np.finfo(np.float64).tiny

    for o in range(n_orients):
        e, d, a = even[:, o], odd[:, o], amp[:, o]
        sum_e, sum_o, sum_a = e.sum(0), d.sum(0), a.sum(0)
        energy_norm = np.sqrt(sum_e**2 + sum_o**2) + p.epsilon
        mean_e, mean_o = sum_e / energy_norm, sum_o / energy_norm
        # A * (cos - |sin|) of the phase offset from the mean phase
        weighted_dev = e * mean_e + d * mean_o - np.abs(e * mean_o - d * mean_e)

        t = rayleigh_threshold(a[0], p.noise_k)
        width = (sum_a / (a.max(0) + p.epsilon) - 1.0) / (n_scales - 1)
        w = 1.0 / (1.0 + np.exp(p.gain * (p.cutoff - width)))

        num = (w[None] * np.maximum(weighted_dev - t, 0.0)).sum(0)
        pcs[o] = np.clip(num / (sum_a + p.epsilon), 0.0, 1.0)
        weights[o] = w
        thresholds[o] = t
        if dev_all is not None:
            dev_all[:, o] = weighted_dev / np.maximum(a, tiny)

    return PhaseCongruencyField(pc_per_orient=pcs, weight_per_orient=weights,
                                noise_threshold=thresholds, epsilon=p.epsilon,
                                phase_deviation=dev_all)


def moment_maps(pc_per_orient: np.ndarray, orientations) -> MomentMaps:
    """Second moments of the orientation-wise PC and the edge/corner maps."""
    pc = np.asarray(pc_per_orient, dtype=np.float64)
    th = np.asarray(orientations, dtype=np.float64).reshape(-1, *([1] * (pc.ndim - 1)))
    pc_cos = pc * np.cos(th)
    pc_sin = pc * np.sin(th)
    a = (pc_cos**2).sum(0)
    b = 2.0 * (pc_cos * pc_sin).sum(0)
    c = (pc_sin**2).sum(0)

    diff = a - c
    degenerate = (np.abs(diff) < 1e-12) & (np.abs(b) < 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = 0.5 * np.arctan(b / diff)
    psi = np.where(degenerate, 0.0, psi)

    root = np.sqrt(b**2 + diff**2)
    m_max = 0.5 * (c + a + root)
    m_min = np.maximum(0.5 * (c + a - root), 0.0)
    return MomentMaps(a=a, b=b, c=c, psi=psi, m_max=m_max, m_min=m_min,
                      m_combined=m_max + m_min)
