import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import disk_mask
from dermabcd.evaluate import PhantomSpec, border_error, render_phantom
from dermabcd.imgcore import ImageError
from dermabcd.segment import (
    BACKGROUND, OBJECT, ConvergenceWarning, LevelSetParams, LevelSetState, MeanShiftParams,
    SegmentationConfig, SegmentationError, SeedMap, auto_seeds, dirac, edge_indicator,
    evolve_level_set, growcut, growcut_labels, heaviside, init_phi, length_area,
    mean_shift_filter, mean_shift_mode, mean_shift_segment, mean_shift_vector,
    minimax_threshold, segment, segment_unsupervised, threshold_init,
)


def _gray_disk(size=128, radius=40, lesion=0.25, skin=0.75, noise=0.0, seed=0):
    d = disk_mask(radius, size)
    img = np.where(d, lesion, skin)
    if noise:
        img = img + np.random.default_rng(seed).normal(0, noise, img.shape)
    return np.clip(img, 0, 1), d


# thresholding

def test_bimodal_threshold_separates_modes():
    img = np.full((20, 20), 0.2)
    img[:, 10:] = 0.8
    t = minimax_threshold(img)
    assert 0.2 < t < 0.8


def test_threshold_on_noisy_disk():
    img, d = _gray_disk(noise=0.05, seed=3)
    assert border_error(threshold_init(img), d) < 3


def test_unimodal_histogram_gives_finite_threshold():
    img = np.clip(np.random.default_rng(1).normal(0.5, 0.05, (64, 64)), 0, 1)
    assert np.isfinite(minimax_threshold(img))


def test_threshold_init_area_on_disk():
    img, d = _gray_disk()
    m = threshold_init(img)
    assert abs(m.sum() - d.sum()) / d.sum() < 0.05


def test_threshold_init_keeps_largest_blob():
    img = np.full((100, 100), 0.8)
    big = disk_mask(20, 100, center=(30, 50))
    small = disk_mask(8, 100, center=(80, 50))
    img[big | small] = 0.2
    m = threshold_init(img)
    assert m[big].all() and not m[small].any()


def test_bright_lesion_is_not_found():
    # documented limitation: the lesion is assumed darker than the skin
    img, d = _gray_disk(lesion=0.8, skin=0.2)
    try:
        m = threshold_init(img)
    except (SegmentationError, ImageError):
        return
    assert border_error(m, d) > 50


# level-set primitives

def test_edge_indicator_constant_is_one():
    assert np.allclose(edge_indicator(np.full((16, 16), 0.4), 1.0), 1.0)


def test_edge_indicator_step():
    img = np.zeros((32, 32))
    img[:, 16:] = 1.0
    g = edge_indicator(img, 1.0)
    assert g[:, 15:17].min() < 0.9
    assert g[:, :8].min() > 0.99 and g[:, 25:].min() > 0.99


@given(st.integers(0, 2**31 - 1))
def test_edge_indicator_monotone_in_contrast(seed):
    img = np.random.default_rng(seed).random((16, 16))
    assert np.all(edge_indicator(2 * img, 1.0) <= edge_indicator(img, 1.0) + 1e-15)


def test_init_phi_single_pixel():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    phi = init_phi(m, LevelSetParams(c=None, epsilon=1.0)).phi
    assert phi[2, 2] == 0.5
    assert np.all(phi[~m] == -0.5)


def test_dirac_and_heaviside():
    assert dirac(0.0, 1.5) == pytest.approx(1 / 1.5)
    assert dirac(2.0, 1.5) == 0
    assert heaviside(0.0) == 1 and heaviside(-1e-9) == 0


def test_length_area_of_negative_field():
    _, area = length_area(LevelSetState(np.full((8, 8), -3.0)), 1.5)
    assert area == 0


@given(st.integers(0, 2**31 - 1))
def test_fused_step_matches_reference(seed):
    from dermabcd.segment import _fused_step, level_set_step
    rng = np.random.default_rng(seed)
    p = LevelSetParams()
    phi = rng.normal(0, 2, (17, 23))
    g = edge_indicator(rng.random((17, 23)), 1.0)
    gy, gx = np.gradient(g)
    ref = level_set_step(phi, g, gx, gy, p)
    out = _fused_step(phi, g, gx, gy, p.mu, p.lam, p.nu, p.tau, p.epsilon)
    assert np.allclose(out, ref, rtol=0, atol=1e-12)


def test_zero_iterations_returns_init():
    img, d = _gray_disk()
    init = disk_mask(30, 128)
    out = evolve_level_set(img, init, LevelSetParams(max_iters=0))
    assert np.array_equal(out, init)


def test_level_set_from_threshold():
    img, d = _gray_disk(size=256, radius=80, noise=0.05, seed=2)
    out = evolve_level_set(img, threshold_init(img))
    assert border_error(out, d) < 2


def test_level_set_shrinks_dilated_init():
    img, d = _gray_disk(size=256, radius=80, noise=0.05, seed=4)
    init = disk_mask(85, 256)
    out = evolve_level_set(img, init, LevelSetParams(max_iters=600))
    assert border_error(out, d) < 3


def test_level_set_history_records_area():
    img, _ = _gray_disk()
    hist = []
    evolve_level_set(img, threshold_init(img), LevelSetParams(max_iters=10), history=hist)
    assert 0 < len(hist) <= 10


def test_unstable_step_rejected():
    with pytest.raises(ValueError):
        LevelSetParams(mu=0.1, tau=5.0).validate()


@pytest.mark.parametrize("size", [256, 512, 1024])
def test_unsupervised_any_scale(size):
    ph = render_phantom(PhantomSpec(size=size, radius=size * 0.3, noise_sigma=0.05, rng_seed=7))
    assert border_error(segment_unsupervised(ph.image), ph.truth) < 3


def test_unsupervised_stages():
    ph = render_phantom(PhantomSpec(size=300, radius=90, rng_seed=1))
    stages = {}
    segment_unsupervised(ph.image, stages=stages)
    assert set(stages) == {"rescaled", "gray", "threshold", "levelset"}
    assert stages["gray"].shape == (512, 512)


# GrowCut

def test_auto_seeds_inside_and_outside():
    d = disk_mask(40, 128)
    s = auto_seeds(d)
    assert np.all(d[s.labels == OBJECT])
    assert not np.any(d[s.labels == BACKGROUND])
    assert (s.labels == OBJECT).sum() > 1


def test_auto_seeds_centroid_fallback():
    m = np.zeros((20, 20), bool)
    m[10, 9:12] = True
    s = auto_seeds(m)
    assert (s.labels == OBJECT).sum() == 1
    assert s.labels[10, 10] == OBJECT


def test_growcut_all_object_seeds():
    img = np.random.default_rng(0).random((10, 10, 3))
    state, sweeps, converged = growcut_labels(img, SeedMap.from_masks(np.ones((10, 10), bool),
                                                                      np.zeros((10, 10), bool)))
    assert converged and sweeps == 1
    assert np.all(state.labels == OBJECT)


def test_growcut_two_tone_strip():
    img = np.array([[0.2, 0.2, 0.8, 0.8]])
    seeds = SeedMap.from_masks(np.array([[True, False, False, False]]),
                               np.array([[False, False, False, True]]))
    state, _, converged = growcut_labels(img, seeds)
    assert converged
    assert list(state.labels[0]) == [OBJECT, OBJECT, BACKGROUND, BACKGROUND]


def test_growcut_two_tone_image():
    img = np.full((40, 40), 0.8)
    img[:, :20] = 0.2
    obj = np.zeros((40, 40), bool)
    bg = np.zeros((40, 40), bool)
    obj[20, 5] = True
    bg[20, 35] = True
    state, _, _ = growcut_labels(img, SeedMap.from_masks(obj, bg))
    assert np.all(state.labels[:, :20] == OBJECT)
    assert np.all(state.labels[:, 20:] == BACKGROUND)


def test_growcut_sweep_cap_warns():
    img = np.full((1, 60), 0.5)
    obj = np.zeros((1, 60), bool)
    bg = np.zeros((1, 60), bool)
    obj[0, 0] = bg[0, -1] = True
    with pytest.warns(ConvergenceWarning):
        growcut(img, SeedMap.from_masks(obj, bg), max_sweeps=3)


def test_growcut_needs_a_seed():
    with pytest.raises(ImageError):
        growcut_labels(np.zeros((4, 4)), SeedMap.from_masks(np.zeros((4, 4), bool), np.zeros((4, 4), bool)))


def test_seed_image_convention():
    img = np.array([[255, 0, 128]], np.uint8)
    s = SeedMap.from_image(img)
    assert list(s.labels[0]) == [OBJECT, BACKGROUND, 0]


def test_growcut_on_phantom():
    ph = render_phantom(PhantomSpec(size=200, radius=60, noise_sigma=0.03, rng_seed=9))
    out = segment(ph.image, SegmentationConfig(method="growcut"))
    assert border_error(out, ph.truth) < 5


# mean shift

def test_mean_shift_symmetric_pair():
    data = np.array([[0.0, 0.0], [2.0, 2.0]])
    assert np.allclose(mean_shift_vector(np.array([1.0, 1.0]), data, 1.0), 0)


def test_mean_shift_single_point():
    x = np.array([0.3, -1.0])
    d = np.array([[2.0, 5.0]])
    assert np.allclose(x + mean_shift_vector(x, d, 3.0), d[0])


def test_mean_shift_clusters_stay_apart():
    rng = np.random.default_rng(0)
    a = rng.normal(0.0, 0.3, 50)
    b = rng.normal(10.0, 0.3, 50)
    data = np.concatenate([a, b])[:, None]
    grid = np.linspace(-1, 1, 2001)
    dens = np.exp(-0.5 * ((grid[:, None] - a[None, :]) / 0.5) ** 2).sum(1) \
        + np.exp(-0.5 * ((grid[:, None] - b[None, :]) / 0.5) ** 2).sum(1)
    brute = grid[np.argmax(dens)]
    for start in a:
        m = mean_shift_mode(np.array([start]), data, 0.5)
        assert m[0] < 5
        assert m[0] == pytest.approx(brute, abs=2e-3)


def test_mean_shift_filter_constant():
    img = np.full((12, 12, 3), 0.4)
    assert np.allclose(mean_shift_filter(img), img)


def test_mean_shift_two_tone():
    ph = render_phantom(PhantomSpec(size=96, radius=30, rng_seed=0))
    stages = {}
    out = mean_shift_segment(ph.image, stages=stages)
    assert stages["clusters"].max() == 1
    assert border_error(out, ph.truth) < 5


def test_mean_shift_noisy_disk():
    ph = render_phantom(PhantomSpec(size=128, radius=40, noise_sigma=0.05, rng_seed=3))
    out = mean_shift_segment(ph.image)
    assert border_error(out, ph.truth) < 10


def test_mean_shift_ignores_small_dark_speck():
    ph = render_phantom(PhantomSpec(size=96, radius=30, rng_seed=0))
    img = ph.image.copy()
    img[4:12, 4:12] = 10  # far darker than the lesion, 64 px
    out = mean_shift_segment(img)
    assert not out[4:12, 4:12].any()
    assert border_error(out, ph.truth) < 5


def test_mean_shift_single_cluster_fails():
    with pytest.raises(SegmentationError):
        mean_shift_segment(np.full((20, 20, 3), 100, np.uint8))


def test_mean_shift_params_validated():
    with pytest.raises(ValueError):
        MeanShiftParams(hs=0).validate()


def test_unknown_method():
    with pytest.raises(ValueError):
        segment(np.zeros((8, 8, 3), np.uint8), SegmentationConfig(method="watershed"))
