"""Command-line frontend.

Exit codes: 0 success, 1 input/parse error, 2 no consensus.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import cv2
import numpy as np

from .config import PipelineConfig, load_config
from .image import build_pyramid, load_image, preprocess, save_image16, save_rgb8
from .loggabor import filter_image
from .matching import MIN_SAMPLES, Match, NoConsensusError, Transform, compute_ncm, residuals
from .phasecong import phase_congruency
from .pipeline import cached_bank, extract_level_features, multiscale_match, to_level0
from .synth import DISTORTIONS, SynthSpec, synthesize, warp_image

EXIT_OK, EXIT_INPUT, EXIT_NO_CONSENSUS = 0, 1, 2
TILE = 64


class InputError(Exception):
    pass


# ------------------------------------------------------------- JSON schemas

def write_json_atomic(path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, ensure_ascii=False)
        fh.write("\n")
    os.replace(tmp, path)


def transform_to_json(t: Transform, rmse: float | None = None) -> dict:
    out = {"kind": t.kind, "matrix": [float(v) for v in t.matrix.ravel()]}
    if rmse is not None:
        out["rmse"] = float(rmse)
    return out


def transform_from_json(obj: dict) -> Transform:
    try:
        kind = obj["kind"]
        matrix = np.asarray(obj["matrix"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed transform: {exc}") from exc
    if matrix.size != 9 or not np.all(np.isfinite(matrix)):
        raise InputError("transform matrix must hold 9 finite numbers")
    try:
        return Transform(kind, matrix.reshape(3, 3))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def matches_to_json(result, scale_a: float, scale_b: float, config_hash: str) -> dict:
    """Keypoint ``x``/``y`` are written in the level-0 frame of their image."""
    def kp_json(kp, scale):
        x, y = to_level0(kp, scale)
        return {"x": x, "y": y, "level": kp.level, "strength": kp.strength}

    return {
        "keypoints_a": [kp_json(k, scale_a) for k in result.keypoints_a],
        "keypoints_b": [kp_json(k, scale_b) for k in result.keypoints_b],
        "matches": [{"ia": m.index_a, "ib": m.index_b, "distance": m.distance,
                     "inlier": m.inlier} for m in result.matches],
        "config_hash": config_hash,
    }


def matches_from_json(obj: dict) -> list[Match]:
    try:
        kps_a, kps_b = obj.get("keypoints_a", []), obj.get("keypoints_b", [])
        out = []
        for m in obj.get("matches", []):
            a, b = kps_a[m["ia"]], kps_b[m["ib"]]
            out.append(Match(index_a=m["ia"], index_b=m["ib"], coords_a=(a["x"], a["y"]),
                             coords_b=(b["x"], b["y"]), distance=m.get("distance", 0.0),
                             inlier=m.get("inlier", True)))
        return out
    except (KeyError, IndexError, TypeError, AttributeError) as exc:
        raise InputError(f"malformed matches file: {exc!r}") from exc


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not text.strip():
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc


# ------------------------------------------------------------- renderings

def render_overlay(img_a, img_b, inliers) -> np.ndarray:
    h = max(img_a.shape[0], img_b.shape[0])
    canvas = np.zeros((h, img_a.shape[1] + img_b.shape[1]), dtype=np.float64)
    canvas[:img_a.shape[0], :img_a.shape[1]] = img_a
    canvas[:img_b.shape[0], img_a.shape[1]:] = img_b
    rgb = np.ascontiguousarray(
        np.repeat((np.clip(canvas, 0, 1) * 255).astype(np.uint8)[..., None], 3, axis=2))
    off = img_a.shape[1]
    for m in inliers:
        pa = (int(round(m.coords_a[0])), int(round(m.coords_a[1])))
        pb = (int(round(m.coords_b[0])) + off, int(round(m.coords_b[1])))
        cv2.line(rgb, pa, pb, (255, 255, 0), 1, cv2.LINE_AA)
        cv2.circle(rgb, pa, 2, (255, 0, 0), 1)
        cv2.circle(rgb, pb, 2, (255, 0, 0), 1)
    return rgb.astype(np.float64) / 255.0


def render_checkerboard(img_a, img_b, transform: Transform, tile: int = TILE) -> np.ndarray:
    """Alternating tiles of A and B resampled into A's frame."""
    inv = Transform(transform.kind, np.linalg.inv(transform.matrix))
    b_in_a = warp_image(img_b, inv, img_a.shape)
    ys, xs = np.mgrid[0:img_a.shape[0], 0:img_a.shape[1]]
    use_a = ((ys // tile) + (xs // tile)) % 2 == 0
    return np.where(use_a, img_a, b_in_a)


def dump_debug(out_dir: Path, tag: str, img, config: PipelineConfig) -> None:
    feats = extract_level_features(img, config, 0, keep_maps=True)
    mm = feats.moments
    bank = cached_bank(img.shape[1], img.shape[0], config.bank)
    pc = phase_congruency(filter_image(img, bank), config.pc)
    save_image16(out_dir / f"{tag}_pc_o0.png", pc.pc_per_orient[0])
    save_image16(out_dir / f"{tag}_m_max.png", mm.m_max, rescale=True)
    save_image16(out_dir / f"{tag}_m_min.png", mm.m_min, rescale=True)
    save_image16(out_dir / f"{tag}_m_w.png", mm.m_combined, rescale=True)
    # (-pi/2, pi/2] -> [0, 1]
    save_image16(out_dir / f"{tag}_wpmom.png", (feats.omap.theta + np.pi / 2) / np.pi)


def dump_bank(out_dir: Path, bank) -> None:
    """Spectral gains with DC at the centre, one PNG per (scale, orientation)."""
    for s, o in np.ndindex(bank.n_scales, bank.n_orients):
        save_image16(out_dir / f"bank_s{s}_o{o}.png", np.fft.fftshift(bank.transfer[s, o]),
                     rescale=True)


# ------------------------------------------------------------------ commands

@click.group()
@click.option("-v", "--verbose", count=True)
def cli(verbose):
    """Multi-modal image registration."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve_config(config, model, seed) -> PipelineConfig:
    try:
        cfg = load_config(config)
    except OSError as exc:
        raise InputError(f"cannot read config {config}: {exc.strerror or exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad config {config}: {exc}") from exc
    updates = {}
    if model is not None:
        updates["matching.model"] = model
    if seed is not None:
        updates["seed"] = seed
    return cfg.with_updates(updates) if updates else cfg


def _load(path):
    try:
        return load_image(path)
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def run_match(image_a, image_b, out_dir, config: PipelineConfig, debug: bool = False) -> int:
    out_dir = Path(out_dir)
    img_a = preprocess(_load(image_a))
    img_b = preprocess(_load(image_b))
    for name, img in (("image_a", img_a), ("image_b", img_b)):
        if min(img.shape) < 32:
            raise InputError(f"{name} is smaller than 32x32")
    out_dir.mkdir(parents=True, exist_ok=True)
    pp = config.pyramid
    pyr_a = build_pyramid(img_a, pp.n_levels, pp.scale_factor, pp.blur_sigma)
    pyr_b = build_pyramid(img_b, pp.n_levels, pp.scale_factor, pp.blur_sigma)
    if debug:
        debug_dir = out_dir / "debug"
        debug_dir.mkdir(exist_ok=True)
        dump_debug(debug_dir, "a", img_a, config)
        dump_debug(debug_dir, "b", img_b, config)
        dump_bank(debug_dir, cached_bank(img_a.shape[1], img_a.shape[0], config.bank))
    try:
        result = multiscale_match(pyr_a, pyr_b, config)
    except NoConsensusError as exc:
        click.echo(f"no consensus: {exc}", err=True)
        return EXIT_NO_CONSENSUS
    write_json_atomic(out_dir / "matches.json",
                      matches_to_json(result, pyr_a.scale_factor, pyr_b.scale_factor,
                                      config.digest()))
    write_json_atomic(out_dir / "transform.json", transform_to_json(result.transform, result.rmse))
    save_rgb8(out_dir / "overlay.png", render_overlay(img_a, img_b, result.inliers))
    save_image16(out_dir / "checkerboard.png",
                 render_checkerboard(img_a, img_b, result.transform))
    click.echo(json.dumps({"inliers": len(result.inliers), "candidates": len(result.matches),
                           "rmse": result.rmse}))
    return EXIT_OK


@cli.command("match")
@click.argument("image_a")
@click.argument("image_b")
@click.option("--config", "config_path", default=None, help="Flat key = value config file.")
@click.option("--out", "out_dir", default="out", show_default=True)
@click.option("--model", type=click.Choice(sorted(MIN_SAMPLES)), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--debug-dumps", is_flag=True,
              help="Write PC, moment, WPMOM and filter-gain maps as PNGs.")
def match_cmd(image_a, image_b, config_path, out_dir, model, seed, debug_dumps):
    """Register IMAGE_B onto IMAGE_A and write matches, transform and renderings."""
    cfg = _resolve_config(config_path, model, seed)
    sys.exit(run_match(image_a, image_b, out_dir, cfg, debug_dumps))


def evaluate(matches: list[Match], ground_truth: Transform, tol: float) -> dict:
    if not ground_truth.is_invertible():
        raise InputError("ground-truth transform is singular")
    final = [m for m in matches if m.inlier]
    report = {"ncm": compute_ncm(final, ground_truth, tol), "n_matches": len(final),
              "tol": tol, "inlier_rmse": None, "residual_quantiles": {}}
    if final:
        res = residuals(ground_truth, [m.coords_a for m in final], [m.coords_b for m in final])
        report["inlier_rmse"] = float(np.sqrt(np.mean(res**2)))
        report["residual_quantiles"] = {
            str(q): float(np.quantile(res, q)) for q in (0.25, 0.5, 0.75, 0.9, 1.0)}
    return report


@cli.command("eval")
@click.argument("matches_path")
@click.argument("ground_truth_path")
@click.option("--tol", type=float, default=3.0, show_default=True)
def eval_cmd(matches_path, ground_truth_path, tol):
    """Score a matches.json against a ground-truth transform (NCM and residuals)."""
    matches = matches_from_json(_read_json(matches_path))
    gt = transform_from_json(_read_json(ground_truth_path))
    click.echo(json.dumps(evaluate(matches, gt, tol)))


@cli.command("synth")
@click.argument("image")
@click.option("--out", "out_dir", default="synth", show_default=True)
@click.option("--rotation", type=float, default=0.0, help="Degrees, about the image centre.")
@click.option("--scale", type=float, default=1.0)
@click.option("--tx", type=float, default=0.0)
@click.option("--ty", type=float, default=0.0)
@click.option("--distortion", default="none", help=f"One of {', '.join(DISTORTIONS)}.")
@click.option("--alpha", type=float, default=1.0)
@click.option("--beta", type=float, default=0.0)
@click.option("--gamma", type=float, default=0.5)
@click.option("--blur", type=float, default=1.5)
@click.option("--downsample", type=float, default=1.0)
def synth_cmd(image, out_dir, rotation, scale, tx, ty, distortion, alpha, beta, gamma, blur,
              downsample):
    """Write a warped, intensity-distorted copy of IMAGE and its ground truth."""
    spec = SynthSpec(rotation_deg=rotation, scale=scale, tx=tx, ty=ty, distortion=distortion,
                     alpha=alpha, beta=beta, gamma=gamma, blur_sigma=blur,
                     downsample=downsample)
    try:
        spec.validate()
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    img = _load(image)
    out, gt = synthesize(img, spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image16(out_dir / "synth.png", out)
    write_json_atomic(out_dir / "ground_truth.json", transform_to_json(gt))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except InputError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except click.exceptions.Abort:
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
