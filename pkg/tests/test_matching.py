import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmreg.matching import (DegenerateInputError, Match, NoConsensusError, Transform,
                            compute_ncm, estimate_transform, mean_grid_error, fsc_filter, nn_match, residuals)
from oracles import nn_match_bruteforce


def similarity(scale, deg, tx, ty):
    t = np.deg2rad(deg)
    return Transform("similarity", [[scale * np.cos(t), -scale * np.sin(t), tx],
                                    [scale * np.sin(t), scale * np.cos(t), ty], [0, 0, 1]])


def planted(rng, n_true=20, n_out=20, truth=None):
    truth = truth or similarity(1.2, 25, 30, -12)
    src = rng.uniform(0, 500, (n_true, 2))
    dst = truth.apply(src)
    matches = [Match(i, i, tuple(a), tuple(b), 0.0) for i, (a, b) in enumerate(zip(src, dst))]
    for k in range(n_out):
        a, b = rng.uniform(0, 500, 2), rng.uniform(0, 500, 2)
        matches.append(Match(n_true + k, n_true + k, tuple(a), tuple(b), 0.0))
    return matches, truth


# --------------------------------------------------------------------- NN

def test_self_match_is_identity(rng):
    d = rng.random((30, 16))
    got = nn_match(d, d, ratio=1.0)
    assert [(i, j) for i, j, _ in got] == [(i, i) for i in range(30)]
    np.testing.assert_allclose([x for *_, x in got], 0.0, atol=1e-6)


def test_ratio_test_arithmetic():
    a = np.array([[0.0, 0.0]])
    b = np.array([[0.3, 0.0], [0.0, 0.9]])
    assert nn_match(a, b, 0.8) == [(0, 0, pytest.approx(0.3))]
    assert nn_match(a, b, 0.3) == []


def test_single_candidate_accepted_unconditionally():
    assert nn_match(np.array([[1.0, 2.0]]), np.array([[5.0, 5.0]]), 0.1) == [
        (0, 0, pytest.approx(5.0))]


def test_empty_side():
    assert nn_match(np.zeros((0, 4)), np.ones((3, 4))) == []
    assert nn_match(np.ones((3, 4)), np.zeros((0, 4))) == []


def test_rejects_bad_ratio():
    with pytest.raises(ValueError):
        nn_match(np.ones((2, 2)), np.ones((2, 2)), 0.0)


@pytest.mark.parametrize("ratio", [0.6, 0.8, 0.9, 1.0])
def test_nn_equals_bruteforce(ratio):
    rng = np.random.default_rng(int(ratio * 10))
    a, b = rng.random((50, 12)), rng.random((50, 12))
    got = nn_match(a, b, ratio)
    ref = nn_match_bruteforce(a.tolist(), b.tolist(), ratio)
    assert [(i, j) for i, j, _ in got] == [(i, j) for i, j, _ in ref]
    np.testing.assert_allclose([d for *_, d in got], [d for *_, d in ref], atol=1e-9)


def test_nn_tie_goes_to_lower_index():
    a = np.array([[0.0, 0.0]])
    b = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert nn_match(a, b, 1.0) == []  # d1 == d2 fails a strict ratio test
    got = nn_match(a, b[:1], 1.0)
    assert got[0][1] == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), na=st.integers(1, 25), nb=st.integers(1, 25),
       ratio=st.floats(0.5, 1.0))
def test_nn_symmetric_under_swap(seed, na, nb, ratio):
    rng = np.random.default_rng(seed)
    a, b = rng.random((na, 6)), rng.random((nb, 6))
    ab = {(i, j) for i, j, _ in nn_match(a, b, ratio)}
    ba = {(j, i) for i, j, _ in nn_match(b, a, ratio)}
    assert ab == ba


# ------------------------------------------------------------- transforms

@pytest.mark.parametrize("kind", ["similarity", "affine", "projective"])
def test_identity_pairs(kind, rng):
    pts = rng.uniform(0, 100, (10, 2))
    t = estimate_transform(pts, pts, kind)
    np.testing.assert_allclose(t.matrix, np.eye(3), atol=1e-9)


def test_recovers_generated_similarity(rng):
    truth = similarity(2.0, 30, 5, -3)
    src = rng.uniform(-50, 50, (12, 2))
    t = estimate_transform(src, truth.apply(src), "similarity")
    np.testing.assert_allclose(t.matrix, truth.matrix, atol=1e-6)


def test_recovers_affine_and_projective(rng):
    aff = Transform("affine", [[1.1, 0.2, 4], [-0.1, 0.9, 7], [0, 0, 1]])
    src = rng.uniform(0, 100, (15, 2))
    np.testing.assert_allclose(estimate_transform(src, aff.apply(src), "affine").matrix,
                               aff.matrix, atol=1e-9)
    proj = Transform("projective", [[1.0, 0.1, 3], [0.05, 0.95, -2], [1e-4, -2e-4, 1]])
    np.testing.assert_allclose(estimate_transform(src, proj.apply(src), "projective").matrix,
                               proj.matrix, atol=1e-8)


def test_collinear_affine_is_rank_deficient():
    pts = np.array([[0, 0], [1, 1], [2, 2.0]])
    with pytest.raises(DegenerateInputError):
        estimate_transform(pts, pts, "affine")


def test_coincident_similarity_is_rank_deficient():
    pts = np.array([[3, 3], [3, 3.0]])
    with pytest.raises(DegenerateInputError):
        estimate_transform(pts, pts + 1, "similarity")


def test_too_few_points():
    with pytest.raises(DegenerateInputError):
        estimate_transform([[0, 0]], [[1, 1]], "similarity")


def _params(t: Transform, kind):
    m = t.matrix
    if kind == "similarity":
        return np.array([m[0, 0], m[1, 0], m[0, 2], m[1, 2]])
    return m[:2].ravel()


def _from_params(p, kind):
    if kind == "similarity":
        return Transform(kind, [[p[0], -p[1], p[2]], [p[1], p[0], p[3]], [0, 0, 1]])
    return Transform(kind, np.vstack([p.reshape(2, 3), [0, 0, 1]]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), kind=st.sampled_from(["similarity", "affine"]))
def test_least_squares_is_global_minimum(seed, kind):
    rng = np.random.default_rng(seed)
    src = rng.uniform(0, 100, (15, 2))
    dst = similarity(0.9, 10, 3, 4).apply(src) + rng.normal(0, 1.5, (15, 2))
    best = estimate_transform(src, dst, kind)
    sse = np.sum(residuals(best, src, dst) ** 2)
    p = _params(best, kind)
    for i in range(len(p)):
        for step in (1e-3, -1e-3):
            q = p.copy()
            q[i] += step
            assert np.sum(residuals(_from_params(q, kind), src, dst) ** 2) >= sse


# -------------------------------------------------------------------- FSC

def test_fsc_noiseless():
    matches, truth = planted(np.random.default_rng(0), 20, 0)
    inliers, t = fsc_filter(matches, "similarity", 2.0, 500, seed=1)
    assert len(inliers) == 20
    np.testing.assert_allclose(t.matrix, truth.matrix, atol=1e-6)


def test_fsc_recovers_planted_inliers():
    matches, truth = planted(np.random.default_rng(1), 20, 20)
    src = np.array([m.coords_a for m in matches])
    dst = np.array([m.coords_b for m in matches])
    planted_mask = residuals(truth, src, dst) <= 2.0
    assert planted_mask.sum() == 20  # no outlier landed on the truth by chance
    inliers, t = fsc_filter(matches, "similarity", 2.0, 2000, seed=3)
    assert [m.inlier for m in matches] == planted_mask.tolist()
    assert {m.index_a for m in inliers} == set(range(20))


@pytest.mark.parametrize("kind", ["affine", "projective"])
def test_fsc_other_models(kind):
    matches, truth = planted(np.random.default_rng(2), 30, 15)
    inliers, t = fsc_filter(matches, kind, 2.0, 2000, seed=0)
    assert {m.index_a for m in inliers} == set(range(30))


def test_fsc_deterministic():
    runs = []
    for _ in range(2):
        matches, _ = planted(np.random.default_rng(5), 25, 40)
        inliers, t = fsc_filter(matches, "similarity", 2.0, 300, seed=42)
        runs.append(([m.index_a for m in inliers], t.matrix.tobytes()))
    assert runs[0] == runs[1]


def test_fsc_single_match_degenerate():
    with pytest.raises(DegenerateInputError):
        fsc_filter([Match(0, 0, (0, 0), (1, 1), 0.0)], "similarity")


def test_fsc_no_consensus_on_noise():
    rng = np.random.default_rng(9)
    matches = [Match(i, i, tuple(rng.uniform(0, 500, 2)), tuple(rng.uniform(0, 500, 2)), 0.0)
               for i in range(30)]
    with pytest.raises(NoConsensusError):
        fsc_filter(matches, "similarity", 2.0, 1000, seed=0, min_inliers=6)


# -------------------------------------------------------------------- NCM

def test_ncm_empty():
    assert compute_ncm([], Transform.identity()) == 0


def test_ncm_exact_pairs():
    truth = similarity(1.0, 10, 2, 2)
    src = np.arange(10.0).reshape(5, 2)
    matches = [Match(i, i, tuple(a), tuple(b), 0) for i, (a, b) in
               enumerate(zip(src, truth.apply(src)))]
    assert compute_ncm(matches, truth, 3) == 5


def test_ncm_equals_direct_residual_count(rng):
    truth = similarity(0.8, -15, 10, 20)
    src = rng.uniform(0, 300, (60, 2))
    dst = truth.apply(src) + rng.normal(0, 3, (60, 2))
    matches = [Match(i, i, tuple(a), tuple(b), 0) for i, (a, b) in enumerate(zip(src, dst))]
    expected = sum(
        1 for a, b in zip(src, dst)
        if np.hypot(*(truth.apply(a)[0] - b)) <= 3.0)
    assert compute_ncm(matches, truth, 3.0) == expected


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), t1=st.floats(0, 10), t2=st.floats(0, 10))
def test_ncm_monotone_in_tol(seed, t1, t2):
    rng = np.random.default_rng(seed)
    src, dst = rng.uniform(0, 50, (20, 2)), rng.uniform(0, 50, (20, 2))
    matches = [Match(i, i, tuple(a), tuple(b), 0) for i, (a, b) in enumerate(zip(src, dst))]
    lo, hi = sorted((t1, t2))
    assert compute_ncm(matches, Transform.identity(), lo) <= compute_ncm(
        matches, Transform.identity(), hi)


def test_ncm_rejects_singular_truth():
    with pytest.raises(ValueError):
        compute_ncm([], Transform("affine", np.zeros((3, 3))))


# ---------------------------------------------------------- multi-scale

from mmreg.image import build_pyramid  # noqa: E402
from mmreg.pipeline import register  # noqa: E402
from mmreg.synth import warp_image  # noqa: E402


@pytest.mark.slow
def test_self_registration_is_identity(camera):
    res = register(camera, camera)
    assert mean_grid_error(res.transform, Transform.identity(), camera.shape) < 0.1
    assert res.rmse < 0.5
    assert len(res.inliers) >= 20


@pytest.mark.slow
def test_half_scale_copy(astronaut):
    half = Transform("similarity", np.diag([0.5, 0.5, 1.0]))
    small = warp_image(astronaut, half, (256, 256))
    res = register(astronaut, small)
    m = res.transform.matrix
    scale = np.sqrt(abs(np.linalg.det(m[:2, :2])))
    assert 0.48 <= scale <= 0.52


def test_noise_pair_has_no_consensus():
    rng = np.random.default_rng(11)
    with pytest.raises(NoConsensusError):
        register(rng.random((128, 128)), rng.random((128, 128)))


def test_keypoint_coordinates_in_level0_frame(camera):
    from mmreg.config import PipelineConfig
    from mmreg.pipeline import pyramid_features, to_level0
    cfg = PipelineConfig()
    pyr = build_pyramid(camera[:256, :256], 3, cfg.pyramid.scale_factor)
    feats = pyramid_features(pyr, cfg)
    for f in feats[1:]:
        for kp in f.keypoints[:20]:
            x, y = to_level0(kp, pyr.scale_factor)
            assert 0 <= x <= 255 and 0 <= y <= 255
            assert x == pytest.approx(kp.x * pyr.scale_factor**f.level)


def test_single_level_self_registration(camera):
    from mmreg.pipeline import multiscale_match
    pyr = build_pyramid(camera, 1)
    res = multiscale_match(pyr, pyr)
    assert res.rmse < 0.5
    assert mean_grid_error(res.transform, Transform.identity(), camera.shape) < 0.5


@pytest.mark.slow
def test_half_scale_with_octave_pyramid(astronaut):
    from mmreg.config import PipelineConfig
    from mmreg.pipeline import multiscale_match
    cfg = PipelineConfig().with_updates({"pyramid.scale_factor": 2.0, "pyramid.n_levels": 3,
                                         "matching.level_gap": 1})
    small = warp_image(astronaut, Transform("similarity", np.diag([0.5, 0.5, 1.0])), (256, 256))
    res = multiscale_match(build_pyramid(astronaut, 3, 2.0), build_pyramid(small, 3, 2.0), cfg)
    scale = np.sqrt(abs(np.linalg.det(res.transform.matrix[:2, :2])))
    assert 0.48 <= scale <= 0.52


@pytest.mark.parametrize("seed", range(4))
def test_noise_pair_consensus_stays_small(seed):
    from mmreg.config import PipelineConfig
    from mmreg.pipeline import candidate_matches, pyramid_features
    cfg = PipelineConfig()
    rng = np.random.default_rng(100 + seed)
    pa = build_pyramid(rng.random((160, 160)), 3, cfg.pyramid.scale_factor)
    pb = build_pyramid(rng.random((160, 160)), 3, cfg.pyramid.scale_factor)
    pooled, _, _ = candidate_matches(pyramid_features(pa, cfg), pyramid_features(pb, cfg), cfg,
                                     pa.scale_factor, pb.scale_factor)
    if len(pooled) < 2:
        return
    try:
        inliers, _ = fsc_filter(pooled, "similarity", 2.0, 2000, seed=0)
    except NoConsensusError:
        return
    assert len(inliers) <= 2 + 2
