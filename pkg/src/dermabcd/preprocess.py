"""Hair detection, mask refinement and fast-marching inpainting."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .imgcore import ImageError, closing, connected_components, dilate, disk, square, to_grayscale

log = logging.getLogger(__name__)


@dataclass
class HairDetectorParams:
    """Matched-filter bank settings for curvilinear hair detection.

    ``min_response`` is an absolute floor on the normalised ridge response so a
    hairless image does not promote its noise to hair; ``min_area`` drops
    specks before the elongation test. ``edge_suppression`` weights the
    first-derivative penalty. Raising it past 1 clears lesion borders but also
    breaks hairs that cross them, so the dark side of a step edge is instead
    rejected by ``bar_offset``: a ridge centre must be darker than the smoothed
    image ``bar_offset * sigma`` away on both sides. On a blob rim the winning
    orientation is tangential and curvature alone makes the cross-section look
    like a ridge; ``drift_suppression`` penalises the intensity slope along the
    ridge direction, which is large there and near zero along a hair.
    """

    sigmas: list[float] = field(default_factory=lambda: [1.0, 2.0, 3.0])
    orientations: int = 8
    response_threshold: float = 0.15
    min_response: float = 0.03
    min_elongation: float = 4.0
    min_area: int = 30
    edge_suppression: float = 1.0
    bar_offset: float = 2.0
    drift_suppression: float = 0.25

    def validate(self) -> None:
        if not self.sigmas or min(self.sigmas) <= 0:
            raise ValueError("sigmas must be non-empty and positive")
        if self.orientations < 4:
            raise ValueError("need at least 4 orientations")
        if not 0 < self.response_threshold < 1:
            raise ValueError("response_threshold must lie in (0, 1)")


@dataclass
class InpaintParams:
    radius: int = 5

    def validate(self) -> None:
        if self.radius < 1:
            raise ValueError("inpaint radius must be >= 1")


def _shifted(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    # out[y, x] = img[y + dy, x + dx] with edge replication
    h, w = img.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    return img[np.ix_(ys, xs)]


def _darker_than_sides(smooth: np.ndarray, c: float, sn: float, dist: float) -> np.ndarray:
    dx, dy = int(round(c * dist)), int(round(sn * dist))
    sides = np.minimum(_shifted(smooth, dx, dy), _shifted(smooth, -dx, -dy))
    return sides > smooth


def ridge_response(gray: np.ndarray, params: HairDetectorParams) -> np.ndarray:
    """Scale-normalised dark-ridge strength, max over scales and orientations.

    For orientation n the response is the second derivative across n minus the
    magnitude of the second derivative along the ridge (suppresses blobs) and
    minus multiples of the first derivative across n (suppresses step edges) and
    along the ridge (suppresses curved blob rims).
    A thin dark line scores highest at its centre, where the first derivative
    vanishes.
    """
    gray = np.asarray(gray, dtype=np.float64)
    best = np.full(gray.shape, -np.inf)
    angles = np.arange(params.orientations) * np.pi / params.orientations
    for s in params.sigmas:
        d = lambda order: ndimage.gaussian_filter(gray, s, order=order, mode="nearest", truncate=3.0)
        smooth = d((0, 0))
        ix, iy = d((0, 1)), d((1, 0))
        ixx, iyy, ixy = d((0, 2)), d((2, 0)), d((1, 1))
        for a in angles:
            c, sn = np.cos(a), np.sin(a)
            across = c * c * ixx + 2 * c * sn * ixy + sn * sn * iyy
            along = sn * sn * ixx - 2 * c * sn * ixy + c * c * iyy
            slope = np.abs(c * ix + sn * iy)
            drift = np.abs(-sn * ix + c * iy)
            r = (s * s * (across - np.abs(along)) - params.edge_suppression * s * slope
                 - params.drift_suppression * s * drift)
            if params.bar_offset > 0:
                r[~_darker_than_sides(smooth, c, sn, params.bar_offset * s)] = -np.inf
            np.maximum(best, r, out=best)
    return best


def detect_hairs(gray: np.ndarray, params: HairDetectorParams | None = None) -> np.ndarray:
    params = params or HairDetectorParams()
    params.validate()
    resp = ridge_response(gray, params)
    peak = float(resp.max())
    if peak <= params.min_response:
        return np.zeros(resp.shape, dtype=bool)
    return resp >= max(params.response_threshold * peak, params.min_response)


def elongation(component: np.ndarray) -> float:
    """Major-axis length squared over area, scaled so an a:b ellipse scores a/b.

    Unlike a plain eigenvalue ratio this stays large for crossing or branching
    hairs, whose second moments can be nearly isotropic.
    """
    ys, xs = np.nonzero(component)
    if xs.size < 2:
        return 0.0
    cov = np.cov(np.vstack([xs, ys]).astype(np.float64), bias=True)
    lam_max = float(np.linalg.eigvalsh(cov)[-1])
    major = 4.0 * np.sqrt(max(lam_max, 0.0))
    return float(np.pi * major * major / (4.0 * xs.size))


def refine_hair_mask(mask: np.ndarray, params: HairDetectorParams | None = None) -> np.ndarray:
    params = params or HairDetectorParams()
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return mask.copy()
    # a radius-1 digital disk is a plus sign, which cannot bridge a one-pixel
    # gap across a line; the 3x3 square can
    bridged = closing(mask, square(1))
    keep = np.zeros_like(bridged)
    for comp in connected_components(bridged):
        if comp.sum() < params.min_area:
            break
        if elongation(comp) >= params.min_elongation:
            keep |= comp
    return dilate(keep, disk(1)) if keep.any() else keep


_KNOWN, _BAND, _INSIDE = 0, 1, 2


@numba.njit(cache=True)
def _solve_eikonal(i1, j1, i2, j2, flags, t):
    h, w = flags.shape
    sol = 1.0e6
    if not (0 <= i1 < h and 0 <= j1 < w and 0 <= i2 < h and 0 <= j2 < w):
        return sol
    a_ok = flags[i1, j1] != _INSIDE
    b_ok = flags[i2, j2] != _INSIDE
    if a_ok and b_ok:
        t1, t2 = t[i1, j1], t[i2, j2]
        d = 2.0 - (t1 - t2) * (t1 - t2)
        if d > 0.0:
            r = np.sqrt(d)
            s = (t1 + t2 - r) / 2.0
            if s >= t1 and s >= t2:
                sol = s
            else:
                s += r
                if s >= t1 and s >= t2:
                    sol = s
        else:
            sol = 1.0 + min(t1, t2)
    elif a_ok:
        sol = 1.0 + t[i1, j1]
    elif b_ok:
        sol = 1.0 + t[i2, j2]
    return sol


@numba.njit(cache=True)
def _fmm_fill(img, flags, t, radius):
    h, w, nch = img.shape
    heap = [(0.0, 0, 0)]
    heap.pop()
    for i in range(h):
        for j in range(w):
            if flags[i, j] == _BAND:
                heapq.heappush(heap, (t[i, j], i, j))
    acc = np.zeros(nch)
    while len(heap) > 0:
        _, i, j = heapq.heappop(heap)
        if flags[i, j] == _KNOWN:
            continue
        flags[i, j] = _KNOWN
        for di, dj in ((-1, 0), (0, -1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < 0 or nj < 0 or ni >= h or nj >= w or flags[ni, nj] != _INSIDE:
                continue
            tn = min(
                _solve_eikonal(ni - 1, nj, ni, nj - 1, flags, t),
                _solve_eikonal(ni + 1, nj, ni, nj - 1, flags, t),
                _solve_eikonal(ni - 1, nj, ni, nj + 1, flags, t),
                _solve_eikonal(ni + 1, nj, ni, nj + 1, flags, t),
            )
            t[ni, nj] = tn
            # arrival-time gradient at the new pixel
            gx = 0.0
            gy = 0.0
            if nj + 1 < w and nj - 1 >= 0 and flags[ni, nj + 1] != _INSIDE and flags[ni, nj - 1] != _INSIDE:
                gx = (t[ni, nj + 1] - t[ni, nj - 1]) * 0.5
            elif nj + 1 < w and flags[ni, nj + 1] != _INSIDE:
                gx = t[ni, nj + 1] - tn
            elif nj - 1 >= 0 and flags[ni, nj - 1] != _INSIDE:
                gx = tn - t[ni, nj - 1]
            if ni + 1 < h and ni - 1 >= 0 and flags[ni + 1, nj] != _INSIDE and flags[ni - 1, nj] != _INSIDE:
                gy = (t[ni + 1, nj] - t[ni - 1, nj]) * 0.5
            elif ni + 1 < h and flags[ni + 1, nj] != _INSIDE:
                gy = t[ni + 1, nj] - tn
            elif ni - 1 >= 0 and flags[ni - 1, nj] != _INSIDE:
                gy = tn - t[ni - 1, nj]
            acc[:] = 0.0
            wsum = 0.0
            for ki in range(max(0, ni - radius), min(h, ni + radius + 1)):
                for kj in range(max(0, nj - radius), min(w, nj + radius + 1)):
                    if flags[ki, kj] == _INSIDE:
                        continue
                    ry = ni - ki
                    rx = nj - kj
                    d2 = rx * rx + ry * ry
                    if d2 == 0 or d2 > radius * radius:
                        continue
                    dist = np.sqrt(d2)
                    direc = abs(rx * gx + ry * gy) / dist
                    if direc < 1e-6:
                        direc = 1e-6
                    lev = 1.0 / (1.0 + abs(t[ki, kj] - tn))
                    wk = direc * lev / d2
                    wsum += wk
                    for c in range(nch):
                        acc[c] += wk * img[ki, kj, c]
            if wsum > 0.0:
                for c in range(nch):
                    img[ni, nj, c] = acc[c] / wsum
            flags[ni, nj] = _BAND
            heapq.heappush(heap, (tn, ni, nj))


def inpaint_fmm(img: np.ndarray, mask: np.ndarray, params: InpaintParams | None = None) -> np.ndarray:
    """Fill ``mask`` pixels by marching inward from the mask boundary.

    Each pixel is assigned, in order of arrival time, the weighted mean of the
    already-known pixels within ``radius``; weights favour close neighbours,
    neighbours along the marching direction and neighbours on the same level
    line. Pixels outside the mask are returned untouched.
    """
    params = params or InpaintParams()
    params.validate()
    img = np.asarray(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise ImageError("mask and image dimensions differ")
    if not mask.any():
        return img.copy()
    if mask.all():
        raise ImageError("mask covers the whole image; nothing to inpaint from")

    work = img.astype(np.float64).reshape(img.shape[0], img.shape[1], -1).copy()
    flags = np.where(mask, _INSIDE, _KNOWN).astype(np.int8)
    grown = ndimage.binary_dilation(mask, structure=ndimage.generate_binary_structure(2, 1))
    flags[grown & ~mask] = _BAND
    t = np.where(mask, 1.0e6, 0.0)
    _fmm_fill(work, flags, t, int(params.radius))

    filled = work.reshape(img.shape)
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        filled = np.clip(np.rint(filled), info.min, info.max)
    out = img.copy()
    out[mask] = filled[mask].astype(img.dtype)
    return out


def hair_mask(img: np.ndarray, detector: HairDetectorParams | None = None) -> np.ndarray:
    """Refined hair mask of an RGB image."""
    detector = detector or HairDetectorParams()
    return refine_hair_mask(detect_hairs(to_grayscale(img), detector), detector)


def remove_hair(img: np.ndarray, detector: HairDetectorParams | None = None,
                inpaint: InpaintParams | None = None, *, return_mask: bool = False):
    """Detect, refine and inpaint hairs in an RGB image."""
    mask = hair_mask(img, detector)
    log.debug("hair mask covers %d pixels", int(mask.sum()))
    out = inpaint_fmm(img, mask, inpaint) if mask.any() else np.asarray(img).copy()
    return (out, mask) if return_mask else out
