import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from conftest import disk_mask
from dermabcd.evaluate import PhantomSpec, render_phantom
from dermabcd.features import (
    FeatureConfig, FeatureVector, Glcm, IrregularityParams, asymmetry, asymmetry_index,
    box_counts, compactness, contour_compactness, diameter, extract_features, fractal_dimension,
    glcm, haralick, irregularity, irregularity_index, ncd_contour, normalized_color_distance,
    principal_axes, radial_circle_ratio, radial_profile, radial_variance, reflection_overlap,
    smooth_contour,
)
from dermabcd.imgcore import Contour, ImageError, centroid, polygon_area, to_grayscale, trace_contour


# ---------------------------------------------------------------------------
# oracles

def _half_up(v):
    return math.floor(v + 0.5)


def oracle_rotation_overlap(mask):
    """180-degree map p -> round(2c - p), counted with Python sets."""
    ys, xs = np.nonzero(mask)
    cx, cy = xs.mean(), ys.mean()
    a = set(zip(xs.tolist(), ys.tolist()))
    b = {(_half_up(2 * cx - x), _half_up(2 * cy - y)) for x, y in a}
    return len(a & b) / len(a | b)


def oracle_reflection_overlap(mask, theta):
    """Pull-back reflection: q belongs to B when its mirror source rounds into A."""
    ys, xs = np.nonzero(mask)
    cx, cy = xs.mean(), ys.mean()
    a = set(zip(xs.tolist(), ys.tolist()))
    c2, s2 = math.cos(2 * theta), math.sin(2 * theta)
    reach = int(math.ceil(max(math.hypot(x - cx, y - cy) for x, y in a))) + 2
    b = set()
    for qy in range(int(cy) - reach, int(cy) + reach + 1):
        for qx in range(int(cx) - reach, int(cx) + reach + 1):
            dx, dy = qx - cx, qy - cy
            src = (_half_up(cx + c2 * dx + s2 * dy), _half_up(cy + s2 * dx - c2 * dy))
            if src in a:
                b.add((qx, qy))
    return len(a & b) / len(a | b)


def oracle_axis_angle(mask):
    ys, xs = np.nonzero(mask)
    x, y = xs - xs.mean(), ys - ys.mean()
    return 0.5 * math.atan2(2 * (x * y).mean(), (x * x).mean() - (y * y).mean())


def oracle_radial_variance(mask):
    ys, xs = np.nonzero(mask)
    cx, cy = xs.mean(), ys.mean()
    pts = trace_contour(mask).points
    d = [math.hypot(px - cx, py - cy) for px, py in pts]
    m = sum(d) / len(d)
    return sum((v - m) ** 2 for v in d) / len(d) / m ** 2


def oracle_traced_mean_radius(a, b):
    """Mean centre distance over Moore-traced points of a rasterised ellipse.

    Traced points are boundary pixel centres, about half a pixel inside the
    ellipse, and one point falls per unit of the dominant coordinate, so the
    point density along the curve is max(|x'|, |y'|).
    """
    a, b = a - 0.5, b - 0.5
    dens = lambda t: max(abs(a * math.sin(t)), abs(b * math.cos(t)))
    dist = lambda t: math.hypot(a * math.cos(t), b * math.sin(t))
    num = integrate.quad(lambda t: dist(t) * dens(t), 0, 2 * math.pi, limit=200)[0]
    den = integrate.quad(dens, 0, 2 * math.pi, limit=200)[0]
    return num / den


def ellipse_mask(a, b, size, angle=0.0):
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2
    ca, sa = math.cos(angle), math.sin(angle)
    u = (xx - c) * ca + (yy - c) * sa
    v = -(xx - c) * sa + (yy - c) * ca
    return (u / a) ** 2 + (v / b) ** 2 <= 1


def rect_mask(w, h, size, angle=0.0):
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2
    ca, sa = math.cos(angle), math.sin(angle)
    u = (xx - c) * ca + (yy - c) * sa
    v = -(xx - c) * sa + (yy - c) * ca
    return (np.abs(u) <= w / 2) & (np.abs(v) <= h / 2)


def quadratic_koch(iterations, side=243.0):
    """Closed quadratic Koch island: each edge becomes eight edges of a quarter length."""
    pts = [np.array(p, float) for p in [(0, 0), (side, 0), (side, side), (0, side)]]
    for _ in range(iterations):
        out = []
        for p, q in zip(pts, pts[1:] + pts[:1]):
            d = (q - p) / 4
            n = np.array([-d[1], d[0]])
            steps = [d, n, d, -n, -n, d, n, d]
            cur = p
            for s in steps:
                out.append(cur)
                cur = cur + s
        pts = out
    return Contour(np.array(pts))


def curvature(points):
    p = np.asarray(points, float)
    a, b = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0)
    u, v = p - a, b - p
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    return np.abs(np.arctan2(cross, (u * v).sum(1))) / (0.5 * (np.hypot(*u.T) + np.hypot(*v.T)))


# ---------------------------------------------------------------------------
# asymmetry

def test_disk_asymmetry_index():
    assert asymmetry_index(disk_mask(50)) == pytest.approx(1.0, abs=0.02)


def test_disjoint_rotation_gives_zero():
    # centroid x = 7/3, so p -> 5 - p sends {0, 3, 4} onto {5, 2, 1}
    m = np.zeros((1, 8), bool)
    m[0, [0, 3, 4]] = True
    assert oracle_rotation_overlap(m) == 0.0
    assert asymmetry_index(m) == 0.0


def test_triangle_matches_oracle():
    yy, xx = np.mgrid[0:80, 0:80]
    tri = (xx >= 10) & (yy >= 10) & (xx - 10 + yy - 10 < 60)
    assert asymmetry_index(tri) == pytest.approx(oracle_rotation_overlap(tri), abs=1e-6)
    assert asymmetry_index(tri) < 0.9


def test_principal_axes_rectangle():
    ax = principal_axes(rect_mask(40, 10, 80))
    assert math.degrees(ax.angle) == pytest.approx(0, abs=1) or math.degrees(ax.angle) == pytest.approx(180, abs=1)
    assert not ax.degenerate


def test_principal_axes_rotated_rectangle():
    ax = principal_axes(rect_mask(40, 10, 80, math.radians(30)))
    assert math.degrees(ax.angle) == pytest.approx(30, abs=1)
    assert abs(np.dot(ax.major, ax.minor)) < 1e-12


def test_principal_axes_disk_degenerate():
    assert principal_axes(disk_mask(30)).degenerate


def test_disk_reflections():
    d = disk_mask(40)
    c = centroid(d)
    for k in range(4):
        assert reflection_overlap(d, c, k * math.pi / 4) == pytest.approx(1.0, abs=0.02)
    assert asymmetry(d) == pytest.approx(1.0, abs=0.02)


def test_rectangle_asymmetry():
    assert asymmetry(rect_mask(40, 10, 80)) == pytest.approx(1.0, abs=0.03)


def test_blob_asymmetry_matches_oracle():
    truth = render_phantom(PhantomSpec(size=200, lesion_shape="blob", radius=50,
                                       harmonics={3: 0.3}, rng_seed=8)).truth
    base = oracle_axis_angle(truth)
    expected = max(oracle_reflection_overlap(truth, base + k * math.pi / 4) for k in range(4))
    assert asymmetry(truth) == pytest.approx(expected, abs=1e-6)
    assert asymmetry(truth) < 0.97


def test_asymmetry_rejects_empty():
    with pytest.raises(ImageError):
        asymmetry(np.zeros((5, 5), bool))
    with pytest.raises(ImageError):
        asymmetry_index(np.zeros((5, 5), bool))


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 3))
def test_asymmetry_translation_and_quarter_turns(dx, dy, k):
    truth = render_phantom(PhantomSpec(size=90, lesion_shape="blob", radius=25,
                                       harmonics={2: 0.15, 3: 0.1}, rng_seed=1)).truth
    moved = np.roll(np.pad(truth, (0, 20)), (dy, dx), axis=(0, 1))
    assert asymmetry_index(moved) == pytest.approx(asymmetry_index(truth), abs=1e-12)
    assert asymmetry(moved) == pytest.approx(asymmetry(truth), abs=1e-12)
    turned = np.rot90(truth, k)
    assert asymmetry_index(turned) == pytest.approx(asymmetry_index(truth), abs=0.02)
    assert asymmetry(turned) == pytest.approx(asymmetry(truth), abs=0.02)


# ---------------------------------------------------------------------------
# border

def test_compactness_disk():
    assert compactness(disk_mask(100)) == pytest.approx(1.0, abs=0.15)


def test_compactness_square_contour():
    sq = Contour(np.array([[0, 0], [10, 0], [10, 10], [0, 10]], float))
    assert contour_compactness(sq) == pytest.approx(4 / math.pi, rel=1e-12)


def test_blob_less_compact_than_disk():
    truth = render_phantom(PhantomSpec(size=300, lesion_shape="blob", radius=90,
                                       harmonics={4: 0.15}, rng_seed=2)).truth
    r = math.sqrt(truth.sum() / math.pi)
    assert compactness(truth) > compactness(disk_mask(r))


def test_compactness_rejects_two_components():
    m = disk_mask(5, 40, center=(10, 10)) | disk_mask(5, 40, center=(30, 30))
    with pytest.raises(ImageError):
        compactness(m)


def test_fractal_dimension_circle():
    assert 0.95 <= fractal_dimension(trace_contour(disk_mask(100))) <= 1.05


def test_fractal_dimension_line():
    line = Contour(np.column_stack([np.arange(200.0), np.zeros(200)]), closed=False)
    assert 0.95 <= fractal_dimension(line) <= 1.05


def test_fractal_dimension_koch():
    d = fractal_dimension(quadratic_koch(3))
    assert d > 1.15


def test_box_counts_single_cell():
    pts = Contour(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    assert box_counts(pts, [4]).tolist() == [1]


def test_fractal_dimension_too_short():
    with pytest.raises(ImageError):
        fractal_dimension(Contour(np.zeros((5, 2))))


def test_radial_variance_disk():
    assert radial_variance(disk_mask(60)) < 0.001


def test_radial_variance_ellipse_oracle():
    e = ellipse_mask(60, 30, 150)
    assert radial_variance(e) == pytest.approx(oracle_radial_variance(e), abs=1e-9)


def test_radial_variance_scale():
    small = ellipse_mask(40, 20, 110)
    big = ellipse_mask(80, 40, 200)
    assert radial_variance(big) == pytest.approx(radial_variance(small), rel=0.02)


def test_radial_circle_ratio_disk():
    assert radial_circle_ratio(disk_mask(60)) == pytest.approx(1.0, abs=0.03)


def test_radial_circle_ratio_ellipse():
    a, b = 160, 40
    e = ellipse_mask(a, b, 340)
    m = oracle_traced_mean_radius(a, b)
    expected = m * m / (a * b)
    got = radial_circle_ratio(e)
    assert got != pytest.approx(1.0, abs=0.1)
    assert got == pytest.approx(expected, rel=0.01)


def test_radial_profile_count_is_contour_length():
    d = disk_mask(30)
    assert radial_profile(d).count == len(trace_contour(d))


def test_smooth_circle_shrinks_about_fixed_centre():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    circ = Contour(np.column_stack([50 + 30 * np.cos(t), 40 + 30 * np.sin(t)]))
    out = smooth_contour(circ, 5.0)
    assert len(out) == 200
    c = out.points.mean(axis=0)
    assert np.allclose(c, [50, 40], atol=0.1)
    r = np.hypot(*(out.points - c).T)
    assert r.max() < 30 and r.min() > 29


def test_repeated_smoothing_area_non_increasing():
    c = trace_contour(render_phantom(PhantomSpec(size=200, lesion_shape="blob", radius=60,
                                                  harmonics={5: 0.2}, rng_seed=4)).truth)
    areas = [polygon_area(c)]
    for _ in range(40):
        c = smooth_contour(c, 8.0)
        areas.append(polygon_area(c))
    assert all(b <= a + 1e-9 for a, b in zip(areas, areas[1:]))
    assert areas[-1] < areas[0]


def test_large_sigma_collapses_to_centroid():
    c = trace_contour(disk_mask(20))
    out = smooth_contour(c, 1e4)
    assert np.ptp(out.points, axis=0).max() < 1e-3
    assert np.allclose(out.points.mean(axis=0), c.points.mean(axis=0))


def test_smoothing_reduces_corner_curvature():
    side = np.arange(40.0)
    sq = np.vstack([np.column_stack([side, np.zeros(40)]),
                    np.column_stack([np.full(40, 40.0), side]),
                    np.column_stack([40 - side, np.full(40, 40.0)]),
                    np.column_stack([np.zeros(40), 40 - side])])
    c = Contour(sq)
    assert curvature(smooth_contour(c, 3.0).points).max() < curvature(sq).max()


def test_smoothing_rejects_open_contour():
    with pytest.raises(ValueError):
        smooth_contour(Contour(np.zeros((10, 2)), closed=False), 1.0)


# ---------------------------------------------------------------------------
# colour distance and irregularity

def test_ncd_uniform_disk():
    d = disk_mask(40)
    gray = np.where(d, 0.3, 0.8)
    res = normalized_color_distance(gray, d)
    assert np.allclose(res.ncd, 100.0, atol=1e-9)
    cx, cy = centroid(d)
    r = np.hypot(res.contour.points[:, 0] - cx, res.contour.points[:, 1] - cy)
    assert np.ptp(r) < 1.5


def test_ncd_bulges_toward_dark_half():
    spec = PhantomSpec(size=200, radius=60, lesion_color=(170, 130, 110),
                       lesion_color2=(60, 40, 30), split_angle=0.0)
    ph = render_phantom(spec)
    gray = to_grayscale(ph.image)
    res = normalized_color_distance(gray, ph.truth)
    cx, cy = centroid(ph.truth)
    pts = trace_contour(ph.truth).points
    # the second colour is painted on the far side of the split line
    side = np.cos(0.0) * (pts[:, 1] - cy) - np.sin(0.0) * (pts[:, 0] - cx)
    dark_side = gray[ph.truth & (np.mgrid[0:200, 0:200][0] > cy)].mean() < \
        gray[ph.truth & (np.mgrid[0:200, 0:200][0] < cy)].mean()
    dark = side > 5 if dark_side else side < -5
    light = side < -5 if dark_side else side > 5
    assert res.ncd[dark].mean() > res.ncd[light].mean()
    r = np.hypot(res.contour.points[:, 0] - cx, res.contour.points[:, 1] - cy)
    assert r[dark].mean() > r[light].mean()


def test_ncd_mean_is_hundred():
    ph = render_phantom(PhantomSpec(size=160, lesion_shape="blob", radius=50,
                                    harmonics={3: 0.2}, noise_sigma=0.05, rng_seed=3))
    res = normalized_color_distance(to_grayscale(ph.image), ph.truth)
    assert res.ncd.mean() == pytest.approx(100.0, abs=1e-9)


def test_ncd_white_lesion_rejected():
    d = disk_mask(10)
    with pytest.raises(ImageError):
        normalized_color_distance(np.ones(d.shape), d)


def test_irregularity_disk():
    d = disk_mask(60)
    gray = np.where(d, 0.3, 0.8)
    res = irregularity(gray, d)
    assert res.converged and res.index >= 0.98


def test_irregularity_blob_below_disk():
    disk = render_phantom(PhantomSpec(size=300, radius=90))
    blob = render_phantom(PhantomSpec(size=300, lesion_shape="blob", radius=90,
                                      harmonics={5: 0.25}, rng_seed=6))
    i_disk = irregularity_index(to_grayscale(disk.image), disk.truth)
    i_blob = irregularity_index(to_grayscale(blob.image), blob.truth)
    assert i_blob < i_disk - 0.05
    assert 0 < i_blob <= 1


def test_irregularity_cap_reported():
    blob = render_phantom(PhantomSpec(size=200, lesion_shape="blob", radius=60,
                                      harmonics={5: 0.25}, rng_seed=6))
    res = irregularity(to_grayscale(blob.image), blob.truth, IrregularityParams(max_passes=2))
    assert not res.converged and res.passes == 2


# ---------------------------------------------------------------------------
# texture

def test_glcm_two_by_two():
    g = glcm(np.array([[0.0, 0.0], [1.0, 1.0]]), np.ones((2, 2), bool), ng=2, offset=(1, 0))
    assert np.array_equal(g.matrix, [[0.5, 0.0], [0.0, 0.5]])
    h = haralick(g)
    assert h.energy == 0.5 and h.contrast == 0 and h.homogeneity == 1
    assert h.correlation == pytest.approx(1.0, abs=1e-12) and not h.flat


def test_constant_lesion_texture():
    d = disk_mask(10)
    g = glcm(np.full(d.shape, 0.4), d, ng=32)
    assert g.matrix[0, 0] == 1.0 and g.matrix.sum() == 1.0
    h = haralick(g)
    assert (h.energy, h.contrast, h.homogeneity, h.correlation, h.flat) == (1.0, 0.0, 1.0, 0.0, True)


def test_checkerboard_texture():
    cb = (np.indices((16, 16)).sum(0) % 2).astype(float)
    h = haralick(glcm(cb, np.ones_like(cb, bool), ng=2, offset=(1, 0)))
    assert h.contrast == pytest.approx(1.0, abs=1e-9)
    assert h.correlation == pytest.approx(-1.0, abs=1e-9)


@given(st.integers(0, 2**31 - 1), st.sampled_from([(1, 0), (0, 1), (1, 1), (1, -1), (2, -1)]),
       st.integers(2, 16))
def test_glcm_properties(seed, offset, ng):
    rng = np.random.default_rng(seed)
    gray = rng.random((12, 12))
    mask = rng.random((12, 12)) < 0.8
    mask[4:8, 4:8] = True
    g = glcm(gray, mask, ng=ng, offset=offset)
    assert np.allclose(g.matrix, g.matrix.T) and g.matrix.min() >= 0
    assert g.matrix.sum() == pytest.approx(1.0, abs=1e-12)
    h = haralick(g)
    assert 0 < h.energy <= 1 and 0 < h.homogeneity <= 1
    assert 0 <= h.contrast <= (ng - 1) ** 2 and -1 <= h.correlation <= 1


def test_glcm_errors():
    with pytest.raises(ValueError):
        glcm(np.zeros((4, 4)), np.ones((4, 4), bool), ng=1)
    with pytest.raises(ValueError):
        glcm(np.zeros((4, 4)), np.ones((4, 4), bool), offset=(0, 0))
    single = np.zeros((4, 4), bool)
    single[1, 1] = True
    with pytest.raises(ImageError):
        glcm(np.zeros((4, 4)), single)


# ---------------------------------------------------------------------------
# diameter

def test_diameter_pair():
    assert diameter(Contour(np.array([[0.0, 0.0], [3.0, 4.0]]))).px == 5.0


def test_diameter_single_pixel_rejected():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    with pytest.raises(ImageError):
        diameter(trace_contour(m))


def test_diameter_disk():
    assert diameter(trace_contour(disk_mask(100))).px == pytest.approx(200, abs=2)


def test_diameter_mm():
    d = diameter(Contour(np.array([[0.0, 0.0], [3.0, 4.0]])), mm_per_px=0.1)
    assert d.mm == pytest.approx(0.5)


@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=2, max_size=40))
def test_diameter_equals_brute_force(points):
    pts = np.array(points, float)
    brute = max(math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2) for p in pts for q in pts)
    assert diameter(Contour(pts)).px == brute


def test_diameter_at_least_bounding_box():
    truth = render_phantom(PhantomSpec(size=200, lesion_shape="blob", radius=60,
                                       harmonics={3: 0.2}, rng_seed=1)).truth
    ys, xs = np.nonzero(truth)
    # bounding-box side is ptp + 1
    assert diameter(trace_contour(truth)).px >= max(np.ptp(xs), np.ptp(ys))


# ---------------------------------------------------------------------------
# the vector

def test_disk_phantom_vector():
    ph = render_phantom(PhantomSpec(size=300, radius=100))
    v = extract_features(ph.image, ph.truth)
    assert v.asymmetry_index == pytest.approx(1, abs=0.02)
    assert v.compactness == pytest.approx(1, abs=0.15)
    assert v.radial_variance < 0.001
    assert v.contrast == pytest.approx(0, abs=1e-12)
    assert len(v.as_array()) == 10 and v.columns() == FeatureVector.COLUMNS


def test_vector_translation_invariant():
    spec = PhantomSpec(size=200, lesion_shape="blob", radius=50, harmonics={3: 0.2},
                       lesion_color2=(60, 40, 30), noise_sigma=0.03, rng_seed=2)
    ph = render_phantom(spec)
    img = np.pad(ph.image, ((30, 0), (0, 17), (0, 0)), mode="edge")
    mask = np.pad(ph.truth, ((30, 0), (0, 17)))
    a = extract_features(ph.image, ph.truth).as_array()
    b = extract_features(img, mask).as_array()
    assert np.array_equal(a, b)


def test_two_tone_blob_matches_components():
    spec = PhantomSpec(size=220, lesion_shape="blob", radius=60, harmonics={3: 0.15, 5: 0.05},
                       lesion_color2=(60, 40, 30), split_angle=0.7, noise_sigma=0.02, rng_seed=9)
    ph = render_phantom(spec)
    gray = to_grayscale(ph.image)
    v = extract_features(ph.image, ph.truth, FeatureConfig(mm_per_px=0.05))
    assert np.all(np.isfinite(v.as_array()))
    tex = np.mean([haralick(glcm(gray, ph.truth, 32, off))[:4]
                   for off in ((1, 0), (0, 1), (1, 1), (1, -1))], axis=0)
    expected = [asymmetry_index(ph.truth), asymmetry(ph.truth), compactness(ph.truth),
                radial_variance(ph.truth), irregularity_index(gray, ph.truth), *tex,
                diameter(trace_contour(ph.truth)).px]
    assert np.allclose(v.as_array(), expected, rtol=1e-9, atol=1e-12)
    assert v.diameter_mm == pytest.approx(0.05 * v.diameter)
    assert v.columns()[-1] == "diam_mm"


def test_vector_rejects_bad_masks():
    img = np.zeros((30, 30, 3), np.uint8)
    with pytest.raises(ImageError):
        extract_features(img, np.zeros((30, 30), bool))
    with pytest.raises(ImageError):
        extract_features(img, np.ones((20, 20), bool))
