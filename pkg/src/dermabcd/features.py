"""The ten ABCD descriptors of a segmented lesion.

Asymmetry (two measures), border (compactness, radial variance, irregularity),
colour texture (four Haralick statistics) and the diameter. Every function
takes the lesion as a boolean mask or a traced :class:`Contour`; the centroid
is always the pixel centroid of the mask.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .imgcore import (
    Contour,
    ImageError,
    area,
    centroid,
    connected_components,
    perimeter,
    polygon_area,
    to_grayscale,
    trace_contour,
)

log = logging.getLogger(__name__)

HARALICK_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))


def _round(v):
    # round half up, so the 180-degree map is exact on symmetric grids
    return np.floor(np.asarray(v) + 0.5).astype(np.int64)


def _single_component(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ImageError("mask is empty")
    if len(connected_components(mask)) != 1:
        raise ImageError("mask must hold exactly one connected component")
    return mask


def _overlap(mask: np.ndarray, src_x: np.ndarray, src_y: np.ndarray, pad: int) -> float:
    """|A & B| / |A | B| where B(q) = A(src(q)) on a canvas padded by ``pad``."""
    h, w = mask.shape
    canvas = np.pad(mask, pad)
    sx = _round(src_x) + pad
    sy = _round(src_y) + pad
    inside = (sx >= 0) & (sy >= 0) & (sx < w + 2 * pad) & (sy < h + 2 * pad)
    b = np.zeros_like(canvas)
    b[inside] = canvas[sy[inside], sx[inside]]
    union = np.count_nonzero(canvas | b)
    return np.count_nonzero(canvas & b) / union


def _canvas_coords(mask: np.ndarray, pad: int):
    h, w = mask.shape
    yy, xx = np.mgrid[-pad:h + pad, -pad:w + pad]
    return xx.astype(np.float64), yy.astype(np.float64)


def asymmetry_index(mask: np.ndarray) -> float:
    """Overlap of the lesion with its own 180-degree rotation about the centroid."""
    mask = np.asarray(mask, dtype=bool)
    cx, cy = centroid(mask)
    pad = max(mask.shape)
    xx, yy = _canvas_coords(mask, pad)
    return _overlap(mask, 2 * cx - xx, 2 * cy - yy, pad)


class PrincipalAxes(NamedTuple):
    center: tuple[float, float]
    major: np.ndarray
    minor: np.ndarray
    eigenvalues: tuple[float, float]
    degenerate: bool

    @property
    def angle(self) -> float:
        """Major-axis angle in radians, in [0, pi), measured from +x toward +y."""
        return float(math.atan2(self.major[1], self.major[0]) % math.pi)


def principal_axes(mask: np.ndarray, rel_tol: float = 1e-2) -> PrincipalAxes:
    """Eigenvectors of the central second-moment matrix, major axis first.

    ``degenerate`` is set when the two eigenvalues agree within ``rel_tol``, in
    which case the axes are valid but their orientation carries no meaning.
    """
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if xs.size < 2:
        raise ImageError("principal axes need at least two pixels")
    cx, cy = xs.mean(), ys.mean()
    cov = np.cov(np.vstack([xs - cx, ys - cy]), bias=True)
    vals, vecs = np.linalg.eigh(cov)
    major, minor = vecs[:, 1], vecs[:, 0]
    if major[0] < 0 or (major[0] == 0 and major[1] < 0):
        major = -major
    minor = np.array([-major[1], major[0]])
    lo, hi = float(vals[0]), float(vals[1])
    degenerate = hi <= 0 or (hi - lo) <= rel_tol * hi
    return PrincipalAxes((float(cx), float(cy)), major, minor, (hi, lo), degenerate)


def reflection_overlap(mask: np.ndarray, center: tuple[float, float], theta: float) -> float:
    """Overlap of the mask with its mirror image across the line through ``center`` at ``theta``."""
    mask = np.asarray(mask, dtype=bool)
    cx, cy = center
    pad = max(mask.shape)
    xx, yy = _canvas_coords(mask, pad)
    c2, s2 = math.cos(2 * theta), math.sin(2 * theta)
    dx, dy = xx - cx, yy - cy
    return _overlap(mask, cx + c2 * dx + s2 * dy, cy + s2 * dx - c2 * dy, pad)


def asymmetry(mask: np.ndarray) -> float:
    """Best reflection overlap over the principal axes and their two diagonals.

    The best axis is the one with the smallest left/right difference; a lesion
    that is mirror-symmetric about any of the four lines scores 1.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ImageError("mask is empty")
    if np.count_nonzero(mask) == 1:
        return 1.0
    axes = principal_axes(mask)
    base = axes.angle
    return max(reflection_overlap(mask, axes.center, base + k * math.pi / 4) for k in range(4))


def compactness(mask: np.ndarray) -> float:
    """p^2 / (4 pi a) of the traced boundary polygon; 1 for a circle."""
    contour = trace_contour(_single_component(mask))
    a = polygon_area(contour)
    if a <= 0:
        raise ImageError("lesion has no interior")
    return perimeter(contour) ** 2 / (4 * math.pi * a)


# ---------------------------------------------------------------------------
# fractal dimension


def _densify(points: np.ndarray, step: float = 0.25, closed: bool = True) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    ends = np.vstack([pts[1:], pts[:1]]) if closed else pts[1:]
    starts = pts if closed else pts[:-1]
    out = [starts]
    seg = ends - starts
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    n_sub = np.maximum(1, np.ceil(lengths / step)).astype(int)
    for k in range(1, int(n_sub.max())):
        sel = n_sub > k
        out.append(starts[sel] + seg[sel] * (k / n_sub[sel])[:, None])
    return np.vstack(out)


def box_counts(contour: Contour, sizes) -> np.ndarray:
    pts = _densify(contour.points, closed=contour.closed)
    origin = pts.min(axis=0)
    counts = []
    for r in sizes:
        cells = np.floor((pts - origin) / r).astype(np.int64)
        counts.append(len(np.unique(cells, axis=0)))
    return np.asarray(counts)


def fractal_dimension(contour: Contour) -> float:
    """Box-counting dimension: minus the slope of log N(r) against log r.

    Box sides run over 2, 4, 8, ... up to a quarter of the longer side of the
    contour's bounding box, so straight segments still get enough scales.
    """
    pts = np.asarray(contour.points, dtype=np.float64)
    if len(pts) < 16:
        raise ImageError("fractal dimension needs at least 16 contour points")
    extent = float((pts.max(axis=0) - pts.min(axis=0)).max())
    sizes = []
    r = 2
    while r <= extent / 4:
        sizes.append(r)
        r *= 2
    if len(sizes) < 3:
        raise ImageError("contour too small for three box sizes")
    counts = box_counts(contour, sizes)
    slope = np.polyfit(np.log(sizes), np.log(counts), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# radial measures


class RadialProfile(NamedTuple):
    center: tuple[float, float]
    distances: np.ndarray
    mean: float

    @property
    def count(self) -> int:
        return len(self.distances)


def radial_profile(mask: np.ndarray) -> RadialProfile:
    mask = _single_component(mask)
    contour = trace_contour(mask)
    cx, cy = centroid(mask)
    x, y = contour.xy
    d = np.hypot(x - cx, y - cy)
    m = float(d.mean())
    if m <= 0:
        raise ImageError("degenerate lesion: zero mean radial distance")
    return RadialProfile((cx, cy), d, m)


def radial_variance(mask: np.ndarray) -> float:
    """Variance of boundary-to-centroid distances over the squared mean distance."""
    prof = radial_profile(mask)
    return float(np.mean((prof.distances - prof.mean) ** 2) / prof.mean ** 2)


def radial_circle_ratio(mask: np.ndarray) -> float:
    """Area of the circle of mean radial distance over the lesion area."""
    prof = radial_profile(mask)
    return math.pi * prof.mean ** 2 / area(mask)


# ---------------------------------------------------------------------------
# contour smoothing and irregularity


def smooth_contour(contour: Contour, sigma: float) -> Contour:
    """Periodic Gaussian smoothing of the x(t) and y(t) coordinate sequences."""
    if not contour.closed:
        raise ValueError("smoothing needs a closed contour")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pts = np.asarray(contour.points, dtype=np.float64)
    n = len(pts)
    # wrap the kernel onto the circle explicitly so sigma may exceed n
    radius = int(math.ceil(4 * sigma))
    t = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    kernel = np.zeros(n)
    np.add.at(kernel, t % n, k)
    kernel /= kernel.sum()
    spec = np.fft.rfft(kernel)
    out = np.empty_like(pts)
    for c in range(2):
        out[:, c] = np.fft.irfft(np.fft.rfft(pts[:, c]) * spec, n)
    return Contour(out)


def _bresenham(x0: int, y0: int, x1: int, y1: int) -> tuple[np.ndarray, np.ndarray]:
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    xs, ys = [x0], [y0]
    while (x0, y0) != (x1, y1):
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
        xs.append(x0)
        ys.append(y0)
    return np.array(xs), np.array(ys)


class NcdResult(NamedTuple):
    contour: Contour
    ncd: np.ndarray


def normalized_color_distance(gray: np.ndarray, mask: np.ndarray) -> NcdResult:
    """Per-boundary-point pigment score and the contour it induces.

    For boundary point i, Av_i is the mean inverted gray level along the
    digital segment from the centroid to i; NCD_i = 100 * Av_i / mean(Av).
    The new contour keeps each point's direction from the centroid and puts it
    at d_i * NCD_i / 100, rescaled to the original mean radius, so darker
    radial paths bulge outward.
    """
    gray = np.asarray(gray, dtype=np.float64)
    mask = _single_component(mask)
    if gray.shape != mask.shape:
        raise ImageError("gray image and mask differ in shape")
    inv = 1.0 - gray
    contour = trace_contour(mask)
    cx, cy = centroid(mask)
    c0 = (int(_round(cx)), int(_round(cy)))
    av = np.empty(len(contour))
    for i, (px, py) in enumerate(contour.points):
        xs, ys = _bresenham(c0[0], c0[1], int(px), int(py))
        av[i] = inv[ys, xs].mean()
    a_l = av.mean()
    if a_l <= 0:
        raise ImageError("lesion is white after inversion; NCD undefined")
    ncd = av * (100.0 / a_l)

    x, y = contour.xy
    dx, dy = x - cx, y - cy
    d = np.hypot(dx, dy)
    radius = d * ncd / 100.0
    if radius.mean() > 0:
        radius *= d.mean() / radius.mean()
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(d > 0, dx / d, 0.0)
        uy = np.where(d > 0, dy / d, 0.0)
    pts = np.column_stack([cx + radius * ux, cy + radius * uy])
    return NcdResult(Contour(pts), ncd)


def ncd_contour(gray: np.ndarray, mask: np.ndarray) -> Contour:
    return normalized_color_distance(gray, mask).contour


def contour_compactness(contour: Contour) -> float:
    a = polygon_area(contour)
    if a <= 0:
        raise ImageError("contour encloses no area")
    return perimeter(contour) ** 2 / (4 * math.pi * a)


def _rescale_about_centroid(contour: Contour, mean_radius: float) -> Contour:
    pts = contour.points
    c = pts.mean(axis=0)
    r = np.hypot(*(pts - c).T).mean()
    if r <= 0:
        return contour
    return Contour(c + (pts - c) * (mean_radius / r))


@dataclass
class IrregularityParams:
    """Smoothing schedule for the irregularity index.

    ``presmooth`` (in contour points) removes the pixel staircase before the
    reference perimeter is taken; each pass then smooths with a sigma of
    ``sigma_fraction`` times the point count and restores the mean radius, so
    the perimeter only loses what the border irregularity contributed.
    """

    presmooth: float = 2.0
    sigma_fraction: float = 0.01
    tol: float = 0.01
    max_passes: int = 200


class IrregularityResult(NamedTuple):
    index: float
    passes: int
    converged: bool


def irregularity(gray: np.ndarray, mask: np.ndarray,
                 params: IrregularityParams | None = None) -> IrregularityResult:
    params = params or IrregularityParams()
    start = ncd_contour(gray, mask)
    n = len(start)
    if n < 3:
        raise ImageError("contour too short for the irregularity index")
    start = smooth_contour(start, params.presmooth)
    mean_r = np.hypot(*(start.points - start.points.mean(axis=0)).T).mean()
    p0 = perimeter(start)
    sigma = max(params.sigma_fraction * n, 0.5)
    current = start
    passes = 0
    while abs(contour_compactness(current) - 1.0) >= params.tol:
        if passes == params.max_passes:
            log.warning("irregularity smoothing stopped at the %d-pass cap", passes)
            return IrregularityResult(perimeter(current) / p0, passes, False)
        current = _rescale_about_centroid(smooth_contour(current, sigma), mean_r)
        passes += 1
    return IrregularityResult(perimeter(current) / p0, passes, True)


def irregularity_index(gray: np.ndarray, mask: np.ndarray,
                       params: IrregularityParams | None = None) -> float:
    """Perimeter of the smoothed-to-round NCD contour over its starting perimeter."""
    return irregularity(gray, mask, params).index


# ---------------------------------------------------------------------------
# texture


@dataclass(frozen=True)
class Glcm:
    matrix: np.ndarray
    ng: int
    offset: tuple[int, int]


def quantize(gray: np.ndarray, mask: np.ndarray, ng: int) -> np.ndarray:
    """Levels 0..ng-1 over the min-max range of the masked pixels (0 outside)."""
    vals = np.asarray(gray, dtype=np.float64)
    lo, hi = vals[mask].min(), vals[mask].max()
    if hi <= lo:
        return np.zeros(vals.shape, dtype=np.int64)
    q = np.floor((vals - lo) / (hi - lo) * ng).astype(np.int64)
    return np.clip(q, 0, ng - 1)


def glcm(gray: np.ndarray, mask: np.ndarray, ng: int = 32, offset: tuple[int, int] = (1, 0)) -> Glcm:
    """Symmetric normalised co-occurrence matrix of lesion pixel pairs at ``offset`` = (dx, dy)."""
    if ng < 2:
        raise ValueError("ng must be at least 2")
    dx, dy = offset
    if dx == 0 and dy == 0:
        raise ValueError("offset must be nonzero")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != np.shape(gray):
        raise ImageError("gray image and mask differ in shape")
    if not mask.any():
        raise ImageError("mask is empty")
    q = quantize(gray, mask, ng)
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    x2, y2 = xs + dx, ys + dy
    ok = (x2 >= 0) & (x2 < w) & (y2 >= 0) & (y2 < h)
    xs, ys, x2, y2 = xs[ok], ys[ok], x2[ok], y2[ok]
    ok = mask[y2, x2]
    a, b = q[ys[ok], xs[ok]], q[y2[ok], x2[ok]]
    if a.size < 2:
        raise ImageError("fewer than two pixel pairs at this offset")
    counts = np.bincount(a * ng + b, minlength=ng * ng).reshape(ng, ng).astype(np.float64)
    counts = counts + counts.T
    return Glcm(counts / counts.sum(), ng, (dx, dy))


class HaralickFeatures(NamedTuple):
    correlation: float
    homogeneity: float
    energy: float
    contrast: float
    flat: bool = False


def haralick(g: Glcm) -> HaralickFeatures:
    """Correlation, homogeneity, energy and contrast of a co-occurrence matrix.

    A matrix with zero marginal variance has no defined correlation; it is
    reported as 0 with ``flat`` set.
    """
    p = g.matrix
    i, j = np.indices(p.shape, dtype=np.float64)
    mu_i, mu_j = (i * p).sum(), (j * p).sum()
    var_i = ((i - mu_i) ** 2 * p).sum()
    var_j = ((j - mu_j) ** 2 * p).sum()
    flat = var_i <= 1e-15 or var_j <= 1e-15
    corr = 0.0 if flat else float(((i - mu_i) * (j - mu_j) * p).sum() / math.sqrt(var_i * var_j))
    return HaralickFeatures(
        correlation=float(np.clip(corr, -1.0, 1.0)),
        homogeneity=float((p / (1.0 + np.abs(i - j))).sum()),
        energy=float((p * p).sum()),
        contrast=float(((i - j) ** 2 * p).sum()),
        flat=bool(flat),
    )


# ---------------------------------------------------------------------------
# diameter


class Diameter(NamedTuple):
    px: float
    mm: float | None = None


def _max_pair_distance(pts: np.ndarray) -> float:
    # compare squared distances, one square root at the end
    best = 0.0
    for k in range(len(pts) - 1):
        dx = pts[k + 1:, 0] - pts[k, 0]
        dy = pts[k + 1:, 1] - pts[k, 1]
        best = max(best, float((dx * dx + dy * dy).max()))
    return math.sqrt(best)


def diameter(contour: Contour, mm_per_px: float | None = None) -> Diameter:
    """Largest distance between two contour points; hull vertices suffice."""
    pts = np.unique(np.asarray(contour.points, dtype=np.float64), axis=0)
    if len(contour.points) < 2:
        raise ImageError("diameter needs at least two points")
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:  # collinear points
            pass
    px = _max_pair_distance(pts) if len(pts) > 1 else 0.0
    return Diameter(px, None if mm_per_px is None else px * mm_per_px)


# ---------------------------------------------------------------------------
# the feature vector


@dataclass
class FeatureConfig:
    ng: int = 32
    offsets: tuple[tuple[int, int], ...] = HARALICK_OFFSETS
    mm_per_px: float | None = None
    irregularity: IrregularityParams = field(default_factory=IrregularityParams)


@dataclass(frozen=True)
class FeatureVector:
    asymmetry_index: float
    asymmetry: float
    compactness: float
    radial_variance: float
    irregularity_index: float
    correlation: float
    homogeneity: float
    energy: float
    contrast: float
    diameter: float
    diameter_mm: float | None = None

    COLUMNS = ("asym_idx", "asym", "compact", "radial_var", "irreg",
               "corr", "homog", "energy", "contrast", "diam_px")

    def as_array(self) -> np.ndarray:
        """The ten classifier inputs in column order (pixel diameter)."""
        return np.array([getattr(self, f.name) for f in fields(self)[:10]], dtype=np.float64)

    def columns(self) -> tuple[str, ...]:
        return self.COLUMNS + (("diam_mm",) if self.diameter_mm is not None else ())

    def values(self) -> list[float]:
        vals = list(self.as_array())
        if self.diameter_mm is not None:
            vals.append(self.diameter_mm)
        return vals


def extract_features(img: np.ndarray, mask: np.ndarray,
                     config: FeatureConfig | None = None) -> FeatureVector:
    """All ten descriptors of one lesion.

    The image is cropped to the lesion's bounding box (plus a one-pixel frame)
    first, so the result depends only on the lesion and not on where it sits.
    """
    config = config or FeatureConfig()
    img = np.asarray(img)
    mask = _single_component(mask)
    if img.shape[:2] != mask.shape:
        raise ImageError("image and mask differ in shape")
    box = ndimage.find_objects(mask.astype(np.int8))[0]
    ys = slice(max(box[0].start - 1, 0), box[0].stop + 1)
    xs = slice(max(box[1].start - 1, 0), box[1].stop + 1)
    crop = mask[ys, xs]
    gray = to_grayscale(img[ys, xs]) if img.ndim == 3 else np.asarray(img[ys, xs], dtype=np.float64)

    texture = [haralick(glcm(gray, crop, config.ng, off)) for off in config.offsets]
    tex = np.mean([t[:4] for t in texture], axis=0)
    diam = diameter(trace_contour(crop), config.mm_per_px)
    vec = FeatureVector(
        asymmetry_index=asymmetry_index(crop),
        asymmetry=asymmetry(crop),
        compactness=compactness(crop),
        radial_variance=radial_variance(crop),
        irregularity_index=irregularity_index(gray, crop, config.irregularity),
        correlation=float(tex[0]),
        homogeneity=float(tex[1]),
        energy=float(tex[2]),
        contrast=float(tex[3]),
        diameter=diam.px,
        diameter_mm=diam.mm,
    )
    if not np.all(np.isfinite(vec.as_array())):
        raise ImageError("non-finite feature value")
    return vec
