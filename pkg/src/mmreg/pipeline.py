"""Per-level feature extraction and multi-scale matching."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .descriptor import describe_all
from .detector import Keypoint, cornerness_map, detect_keypoints
from .image import Pyramid, build_pyramid, preprocess
from .loggabor import BankParams, FilterBank, build_filter_bank, filter_image
from .matching import (MIN_SAMPLES, Match, MatchResult, NoConsensusError, fsc_filter,
                       nn_match, residuals)
from .phasecong import MomentMaps, moment_maps, phase_congruency
from .wpmom import OrientationMap, gradients_from_odd, wpmom_from_gradients

log = logging.getLogger(__name__)


@dataclass
class LevelFeatures:
    level: int
    keypoints: list  # described keypoints, level-local coordinates
    vectors: np.ndarray  # (n, descriptor length)
    moments: MomentMaps | None = None
    omap: OrientationMap | None = None


@functools.lru_cache(maxsize=16)
def cached_bank(width: int, height: int, params: BankParams) -> FilterBank:
    return build_filter_bank(width, height, params)


def extract_level_features(img: np.ndarray, config: PipelineConfig, level: int = 0,
                           keep_maps: bool = False) -> LevelFeatures:
    """Detect, orient and describe keypoints on one pyramid level."""
    h, w = img.shape
    bank = cached_bank(w, h, config.bank)
    resp = filter_image(img, bank)
    pcf = phase_congruency(resp, config.pc)
    mm = moment_maps(pcf.pc_per_orient, bank.orientations)
    det = config.detector
    field = cornerness_map(mm.m_combined, det.window_sigma)
    border = bank.params.max_wavelength if det.border is None else det.border
    kps = detect_keypoints(field, det.threshold_quantile, det.nms_radius, det.max_points,
                           border, level=level)
    omap = wpmom_from_gradients(gradients_from_odd(resp.odd, bank.orientations),
                                config.wpmom.sigmas)
    descs, _ = describe_all(kps, omap, config.descriptor)
    vectors = (np.stack([d.vector for d in descs]) if descs
               else np.zeros((0, config.descriptor.length)))
    return LevelFeatures(level=level, keypoints=[d.keypoint for d in descs], vectors=vectors,
                         moments=mm if keep_maps else None, omap=omap if keep_maps else None)


def pyramid_features(pyr: Pyramid, config: PipelineConfig) -> list[LevelFeatures]:
    return [extract_level_features(img, config, k) for k, img in enumerate(pyr.levels)]


def to_level0(kp: Keypoint, scale_factor: float) -> tuple:
    s = scale_factor**kp.level
    return (kp.x * s, kp.y * s)


def _dedup(cands: list, px: float) -> list:
    """Drop candidates within ``px`` of a closer-distance one on both sides."""
    cands = sorted(cands, key=lambda m: (m.distance, m.index_a, m.index_b))
    kept: list = []
    ka = np.empty((0, 2))
    kb = np.empty((0, 2))
    for m in cands:
        a = np.asarray(m.coords_a)
        b = np.asarray(m.coords_b)
        if len(kept):
            close = ((np.linalg.norm(ka - a, axis=1) < px)
                     & (np.linalg.norm(kb - b, axis=1) < px))
            if close.any():
                continue
        kept.append(m)
        ka = np.vstack([ka, a])
        kb = np.vstack([kb, b])
    return kept


def candidate_matches(feats_a, feats_b, config: PipelineConfig, scale_a: float,
                      scale_b: float):
    """Pooled, deduplicated NN matches over level pairs ``|i - j| <= level_gap``.

    Returns ``(matches, keypoints_a, keypoints_b)`` with keypoint lists in
    global index order (levels concatenated).
    """
    mp = config.matching
    kps_a, off_a = _concat(feats_a)
    kps_b, off_b = _concat(feats_b)
    cands = []
    for fa in feats_a:
        for fb in feats_b:
            if abs(fa.level - fb.level) > mp.level_gap:
                continue
            for i, j, dist in nn_match(fa.vectors, fb.vectors, mp.ratio):
                ia = off_a[fa.level] + i
                ib = off_b[fb.level] + j
                cands.append(Match(index_a=ia, index_b=ib,
                                   coords_a=to_level0(kps_a[ia], scale_a),
                                   coords_b=to_level0(kps_b[ib], scale_b),
                                   distance=dist))
    pooled = _dedup(cands, mp.dedup_px)
    # stable order for the consensus stage
    pooled.sort(key=lambda m: (m.index_a, m.index_b))
    return pooled, kps_a, kps_b


def _concat(feats):
    kps, offsets, total = [], {}, 0
    for f in feats:
        offsets[f.level] = total
        kps.extend(f.keypoints)
        total += len(f.keypoints)
    return kps, offsets


def multiscale_match(pyr_a: Pyramid, pyr_b: Pyramid,
                     config: PipelineConfig | None = None) -> MatchResult:
    """Match two pyramids and estimate the transform taking A onto B.

    Raises :class:`NoConsensusError` if no candidate matches survive or no
    transform gathers ``matching.min_inliers`` inliers.
    """
    config = config or PipelineConfig()
    mp = config.matching
    if mp.model not in MIN_SAMPLES:
        raise ValueError(f"unknown transform model {mp.model!r}")
    if not pyr_a.levels or not pyr_b.levels:
        raise ValueError("empty pyramid")
    feats_a = pyramid_features(pyr_a, config)
    feats_b = pyramid_features(pyr_b, config)
    pooled, kps_a, kps_b = candidate_matches(feats_a, feats_b, config,
                                             pyr_a.scale_factor, pyr_b.scale_factor)
    log.info("keypoints %d/%d, candidate matches %d", len(kps_a), len(kps_b), len(pooled))
    if len(pooled) < MIN_SAMPLES[mp.model]:
        raise NoConsensusError(f"only {len(pooled)} candidate matches")
    inliers, transform = fsc_filter(pooled, mp.model, mp.inlier_tol, mp.iterations,
                                    config.seed, mp.min_inliers)
    src = np.array([m.coords_a for m in inliers])
    dst = np.array([m.coords_b for m in inliers])
    rmse = float(np.sqrt(np.mean(residuals(transform, src, dst) ** 2)))
    return MatchResult(matches=pooled, transform=transform, rmse=rmse,
                       keypoints_a=kps_a, keypoints_b=kps_b)


def register(img_a: np.ndarray, img_b: np.ndarray,
             config: PipelineConfig | None = None) -> MatchResult:
    """Preprocess both images, build pyramids and run :func:`multiscale_match`."""
    config = config or PipelineConfig()
    pp = config.pyramid
    pyr_a = build_pyramid(preprocess(img_a), pp.n_levels, pp.scale_factor, pp.blur_sigma)
    pyr_b = build_pyramid(preprocess(img_b), pp.n_levels, pp.scale_factor, pp.blur_sigma)
    return multiscale_match(pyr_a, pyr_b, config)
