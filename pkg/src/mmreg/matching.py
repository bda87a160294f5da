"""Descriptor matching, robust transform estimation and the NCM metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_SAMPLES = {"similarity": 2, "affine": 3, "projective": 4}


class DegenerateInputError(ValueError):
    """Too few correspondences, or a rank-deficient point configuration."""


class NoConsensusError(RuntimeError):
    """No transform is supported by enough correspondences."""


@dataclass
class Match:
    index_a: int
    index_b: int
    coords_a: tuple
    coords_b: tuple
    distance: float
    inlier: bool = False


@dataclass
class Transform:
    kind: str
    matrix: np.ndarray

    def __post_init__(self):
        if self.kind not in MIN_SAMPLES:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        self.matrix = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)

    def apply(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        hom = pts @ self.matrix[:, :2].T + self.matrix[:, 2]
        return hom[:, :2] / hom[:, 2:3]

    def is_invertible(self, tol: float = 1e-12) -> bool:
        if self.kind == "projective":
            return abs(np.linalg.det(self.matrix)) > tol
        return abs(np.linalg.det(self.matrix[:2, :2])) > tol

    @classmethod
    def identity(cls, kind: str = "similarity") -> "Transform":
        return cls(kind, np.eye(3))


@dataclass
class MatchResult:
    matches: list
    transform: Transform
    rmse: float
    ncm: int | None = None
    keypoints_a: list = field(default_factory=list)
    keypoints_b: list = field(default_factory=list)

    @property
    def inliers(self) -> list:
        return [m for m in self.matches if m.inlier]


# ---------------------------------------------------------------- NN matching

def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


def _ratio_ok(dist: np.ndarray, ratio: float) -> np.ndarray:
    """Per row: nearest column index and whether it passes the ratio test."""
    nearest = np.argmin(dist, axis=1)
    if dist.shape[1] == 1:
        return nearest, np.ones(dist.shape[0], dtype=bool)
    part = np.partition(dist, 1, axis=1)
    d1, d2 = part[:, 0], part[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = np.where(d2 > 0, d1 / d2 < ratio, False)
    return nearest, ok


def nn_match(desc_a, desc_b, ratio: float = 0.9) -> list[tuple[int, int, float]]:
    """Mutual nearest neighbours passing the distance-ratio test on both sides.

    Returns ``(index_a, index_b, distance)`` triples sorted by ``index_a``.
    Distance ties resolve to the lower index.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    a = np.asarray(desc_a, dtype=np.float64)
    b = np.asarray(desc_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        return []
    dist = _pairwise_distances(a, b)
    nn_ab, ok_ab = _ratio_ok(dist, ratio)
    nn_ba, ok_ba = _ratio_ok(dist.T, ratio)
    out = []
    for i, j in enumerate(nn_ab):
        if ok_ab[i] and nn_ba[j] == i and ok_ba[j]:
            out.append((i, int(j), float(dist[i, j])))
    return out


# ------------------------------------------------------- transform estimation

def _normalizing(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(0)
    d = np.sqrt(((pts - c) ** 2).sum(1)).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _check_rank(design: np.ndarray, needed: int, kind: str):
    sv = np.linalg.svd(design, compute_uv=False)
    if len(sv) < needed or sv[needed - 1] <= 1e-10 * max(sv[0], 1e-300):
        raise DegenerateInputError(f"rank-deficient point configuration for {kind} model")


def estimate_transform(src, dst, kind: str = "similarity") -> Transform:
    """Least-squares transform mapping ``src`` points onto ``dst``.

    Similarity and affine models are linear least-squares fits (the similarity
    one is the closed-form Procrustes solution with scale); projective uses the
    normalized direct linear transform.
    """
    if kind not in MIN_SAMPLES:
        raise ValueError(f"unknown transform kind {kind!r}")
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst differ in length")
    if len(src) < MIN_SAMPLES[kind]:
        raise DegenerateInputError(
            f"{kind} model needs {MIN_SAMPLES[kind]} correspondences, got {len(src)}")

    if kind == "projective":
        return _fit_projective(src, dst)

    # centre for conditioning; translation restored afterwards
    cs, cd = src.mean(0), dst.mean(0)
    x, y = (src - cs).T
    u, v = (dst - cd).T
    n = len(src)
    if kind == "similarity":
        # u = p x - q y ; v = q x + p y
        design = np.zeros((2 * n, 2))
        design[0::2] = np.stack([x, -y], 1)
        design[1::2] = np.stack([y, x], 1)
        _check_rank(design, 2, kind)
        rhs = np.empty(2 * n)
        rhs[0::2], rhs[1::2] = u, v
        (p, q), *_ = np.linalg.lstsq(design, rhs, rcond=None)
        lin = np.array([[p, -q], [q, p]])
    else:
        design = np.stack([x, y], 1)
        _check_rank(design, 2, kind)
        sol, *_ = np.linalg.lstsq(design, np.stack([u, v], 1), rcond=None)
        lin = sol.T
    m = np.eye(3)
    m[:2, :2] = lin
    m[:2, 2] = cd - lin @ cs
    return Transform(kind, m)


def _fit_projective(src: np.ndarray, dst: np.ndarray) -> Transform:
    ts, td = _normalizing(src), _normalizing(dst)
    s = (np.c_[src, np.ones(len(src))] @ ts.T)[:, :2]
    d = (np.c_[dst, np.ones(len(dst))] @ td.T)[:, :2]
    rows = []
    for (x, y), (u, v) in zip(s, d):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    a = np.asarray(rows)
    _, sv, vt = np.linalg.svd(a)
    if len(sv) < 8 or sv[7] <= 1e-10 * sv[0]:
        raise DegenerateInputError("rank-deficient point configuration for projective model")
    h = vt[-1].reshape(3, 3)
    m = np.linalg.solve(td, h @ ts)
    if abs(m[2, 2]) < 1e-15:
        raise DegenerateInputError("projective fit maps the origin to infinity")
    return Transform("projective", m / m[2, 2])


def residuals(transform: Transform, src, dst) -> np.ndarray:
    return np.linalg.norm(transform.apply(src) - np.asarray(dst, dtype=np.float64), axis=1)


# ------------------------------------------------------------------------ FSC

def _consensus(src, dst, kind, tol, rng, iterations, pool):
    """Best model over ``iterations`` minimal samples drawn from ``pool``."""
    k = MIN_SAMPLES[kind]
    best_mask, best_cost = None, np.inf
    for _ in range(iterations):
        pick = rng.choice(pool, size=k, replace=False)
        try:
            model = estimate_transform(src[pick], dst[pick], kind)
        except (DegenerateInputError, np.linalg.LinAlgError):
            continue
        if not model.is_invertible():
            continue
        err = residuals(model, src, dst)
        mask = err <= tol
        # more inliers first, then smaller truncated squared error
        cost = -mask.sum() + np.minimum(err, tol).sum() / (tol * (len(src) + 1))
        if cost < best_cost:
            best_mask, best_cost = mask, cost
    return best_mask


def fsc_filter(matches, model_kind: str = "similarity", inlier_tol: float = 2.0,
               iterations: int = 2000, seed: int = 0, min_inliers: int | None = None):
    """Two-stage sample consensus.

    Stage one is plain random sampling over all matches; stage two samples only
    from the best stage-one consensus set, scoring against all matches.  The
    winning inlier set is refined by alternating least-squares refits and
    inlier re-selection until it stops changing.

    Returns ``(inliers, transform)``; the ``inlier`` flag of every input match
    is updated in place.
    """
    k = MIN_SAMPLES[model_kind]
    matches = list(matches)
    if len(matches) < k:
        raise DegenerateInputError(
            f"{model_kind} model needs {k} matches, got {len(matches)}")
    min_inliers = k if min_inliers is None else max(min_inliers, k)
    src = np.array([m.coords_a for m in matches], dtype=np.float64)
    dst = np.array([m.coords_b for m in matches], dtype=np.float64)
    rng = np.random.default_rng(seed)

    mask = _consensus(src, dst, model_kind, inlier_tol, rng, iterations, np.arange(len(src)))
    if mask is None or mask.sum() < min_inliers:
        raise NoConsensusError("no model reaches the minimum consensus")
    pool = np.flatnonzero(mask)
    if len(pool) > k:
        refined = _consensus(src, dst, model_kind, inlier_tol, rng, max(iterations // 4, 1), pool)
        if refined is not None and refined.sum() >= mask.sum():
            mask = refined

    model = None
    for _ in range(20):
        try:
            model = estimate_transform(src[mask], dst[mask], model_kind)
        except DegenerateInputError as exc:
            raise NoConsensusError(str(exc)) from exc
        new_mask = residuals(model, src, dst) <= inlier_tol
        if new_mask.sum() < min_inliers:
            break
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    mask = residuals(model, src, dst) <= inlier_tol
    if mask.sum() < min_inliers:
        raise NoConsensusError("consensus collapsed during refinement")
    for m, flag in zip(matches, mask):
        m.inlier = bool(flag)
    return [m for m in matches if m.inlier], model


# ------------------------------------------------------------------------ NCM

def compute_ncm(matches, ground_truth: Transform, tol: float = 3.0) -> int:
    """Number of matches whose residual under ``ground_truth`` is at most ``tol``."""
    if not ground_truth.is_invertible():
        raise ValueError("ground-truth transform is singular")
    matches = list(matches)
    if not matches:
        return 0
    src = np.array([m.coords_a for m in matches], dtype=np.float64)
    dst = np.array([m.coords_b for m in matches], dtype=np.float64)
    return int((residuals(ground_truth, src, dst) <= tol).sum())


def mean_grid_error(estimated: Transform, truth: Transform, shape, step: int = 16) -> float:
    """Mean distance between the two transforms over a regular grid of ``shape``."""
    h, w = shape
    ys, xs = np.mgrid[0:h:step, 0:w:step]
    pts = np.stack([xs.ravel(), ys.ravel()], 1).astype(np.float64)
    return float(np.linalg.norm(estimated.apply(pts) - truth.apply(pts), axis=1).mean())
