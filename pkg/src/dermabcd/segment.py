"""Lesion segmentation: threshold-initialised level set, GrowCut and mean shift.

All three engines assume the lesion is darker than the surrounding skin and
return a boolean mask holding a single hole-free connected component.
"""

from __future__ import annotations

import heapq
import logging
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .imgcore import (
    ImageError,
    centroid,
    connected_components,
    disk,
    erode,
    fill_holes,
    largest_component,
    resize,
    to_grayscale,
)

log = logging.getLogger(__name__)

STANDARD_SIZE = 512


class SegmentationError(RuntimeError):
    """The engine could not produce a usable lesion mask."""


class ConvergenceWarning(UserWarning):
    pass


def _single_region(mask: np.ndarray) -> np.ndarray:
    region = fill_holes(largest_component(mask))
    if not region.any():
        raise SegmentationError("no lesion region found")
    return region


# ---------------------------------------------------------------------------
# thresholding


def otsu_threshold(hist: np.ndarray, centers: np.ndarray) -> float:
    p = hist / hist.sum()
    w0 = np.cumsum(p)
    mu = np.cumsum(p * centers)
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu[-1] * w0 - mu) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def minimax_threshold(gray: np.ndarray, bins: int = 256) -> float:
    """Valley between the two dominant histogram modes.

    The global peak is paired with the peak that stands highest above the
    lowest histogram value separating the two; the threshold is that valley
    bottom. If no mode stands out by at least 5% of the global peak the
    histogram is treated as unimodal and Otsu's threshold is returned.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if np.ptp(gray) == 0:
        raise ImageError("cannot threshold a constant image")
    hist, edges = np.histogram(gray, bins=bins, range=(0.0, 1.0))
    centers = 0.5 * (edges[:-1] + edges[1:])
    smooth = ndimage.gaussian_filter1d(hist.astype(np.float64), 2.0, mode="constant")

    peak = int(np.argmax(smooth))
    best_depth, valley = 0.0, None
    for j in range(bins):
        if abs(j - peak) < 2:
            continue
        lo, hi = sorted((peak, j))
        seg = smooth[lo:hi + 1]
        k = int(np.argmin(seg))
        depth = min(smooth[j], smooth[peak]) - seg[k]
        if depth > best_depth:
            # centre of a flat valley floor
            floor = np.flatnonzero(seg <= seg[k] + 1e-12)
            best_depth, valley = depth, lo + int(round(floor.mean()))
    if valley is None or best_depth < 0.05 * smooth[peak]:
        log.debug("histogram unimodal; using Otsu threshold")
        return otsu_threshold(hist, centers)
    return float(centers[valley])


def threshold_init(gray: np.ndarray) -> np.ndarray:
    """Dark pixels below the minimax threshold, largest component, holes filled."""
    t = minimax_threshold(gray)
    return _single_region(np.asarray(gray) < t)


# ---------------------------------------------------------------------------
# level set


@dataclass
class LevelSetParams:
    """Level-set evolution settings.

    ``c`` is the initial level magnitude: the field starts at +c/2 inside the
    initial mask and -c/2 outside. ``None`` means c = epsilon.
    ``edge_gain`` rescales gray values before the edge map is computed, so the
    default measures gradients in 8-bit units.
    ``nu > 0`` shrinks the contour (the lesion is the region where phi >= 0).
    On a graded border of width s the balloon and the edge attraction balance
    roughly nu * s**2 / (2 * lam) pixels inside the steepest gradient, so nu is
    kept small; the threshold start is already close to the border.
    """

    sigma: float = 1.5
    nu: float = 0.3
    mu: float = 0.04
    tau: float = 5.0
    epsilon: float = 1.5
    c: float | None = 6.0
    lam: float = 1.0
    edge_gain: float = 255.0
    max_iters: int = 300
    convergence_tol: float = 1e-5
    patience: int = 5

    def validate(self) -> None:
        if self.tau * self.mu >= 0.25:
            raise ValueError("tau * mu must stay below 0.25 for stability")
        if self.epsilon <= 0 or self.sigma <= 0:
            raise ValueError("epsilon and sigma must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    @property
    def magnitude(self) -> float:
        return self.epsilon if self.c is None else self.c


@dataclass
class LevelSetState:
    phi: np.ndarray
    iteration: int = 0


def dirac(x, epsilon: float):
    """Smoothed delta: (1 + cos(pi x / eps)) / (2 eps) inside |x| <= eps, else 0."""
    x = np.asarray(x, dtype=np.float64)
    out = (1.0 + np.cos(np.pi * x / epsilon)) / (2.0 * epsilon)
    return np.where(np.abs(x) <= epsilon, out, 0.0)


def heaviside(x):
    return (np.asarray(x) >= 0).astype(np.float64)


def edge_indicator(gray: np.ndarray, sigma: float, gain: float = 1.0) -> np.ndarray:
    """g = 1 / (1 + |grad(G_sigma * I)|^2), the gradient taken with Gaussian derivative filters."""
    grad = ndimage.gaussian_gradient_magnitude(np.asarray(gray, dtype=np.float64) * gain, sigma,
                                               mode="nearest")
    return 1.0 / (1.0 + grad * grad)


def init_phi(mask: np.ndarray, params: LevelSetParams | None = None) -> LevelSetState:
    params = params or LevelSetParams(c=None)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ImageError("cannot initialise a level set from an empty mask")
    phi = -params.magnitude * (0.5 - mask.astype(np.float64))
    return LevelSetState(phi)


def length_area(state: LevelSetState, epsilon: float) -> tuple[float, float]:
    return float(dirac(state.phi, epsilon).sum()), float(heaviside(state.phi).sum())


def _neumann(phi: np.ndarray) -> np.ndarray:
    p = phi.copy()
    p[0, :], p[-1, :] = p[2, :], p[-3, :]
    p[:, 0], p[:, -1] = p[:, 2], p[:, -3]
    return p


def _laplacian(phi: np.ndarray) -> np.ndarray:
    return ndimage.laplace(phi, mode="nearest")


def _well_rate(s: np.ndarray) -> np.ndarray:
    """Diffusion rate p'(s)/s of the double-well potential.

    p(s) = (1 - cos 2 pi s) / (2 pi)^2 for s <= 1 and (s - 1)^2 / 2 beyond, so
    |grad phi| is driven to 1 near the front and to 0 in flat regions, where the
    rate tends to 1 (forward diffusion) instead of blowing up.
    """
    ps = np.where(s <= 1.0, np.sin(2 * np.pi * s) / (2 * np.pi), s - 1.0)
    num = np.where(ps == 0, 1.0, ps)
    den = np.where(s == 0, 1.0, s)
    return num / den


def level_set_step(phi: np.ndarray, g: np.ndarray, gx: np.ndarray, gy: np.ndarray,
                   params: LevelSetParams) -> np.ndarray:
    """One explicit update: distance regularisation + edge-weighted curvature + balloon."""
    phi = _neumann(phi)
    py, px = np.gradient(phi)
    s = np.sqrt(px * px + py * py)
    nx = px / (s + 1e-10)
    ny = py / (s + 1e-10)
    curvature = np.gradient(nx, axis=1) + np.gradient(ny, axis=0)
    rate = _well_rate(s)
    regular = (np.gradient(rate * px - px, axis=1) + np.gradient(rate * py - py, axis=0)
               + _laplacian(phi))
    d = dirac(phi, params.epsilon)
    edge = d * (gx * nx + gy * ny + g * curvature)
    balloon = -params.nu * g * d
    return phi + params.tau * (params.mu * regular + params.lam * edge + balloon)


@numba.njit(cache=True, inline="always")
def _grad(f, i, j, axis):
    # np.gradient: central inside, one-sided on the border
    h, w = f.shape
    if axis == 0:
        if i == 0:
            return f[1, j] - f[0, j]
        if i == h - 1:
            return f[h - 1, j] - f[h - 2, j]
        return 0.5 * (f[i + 1, j] - f[i - 1, j])
    if j == 0:
        return f[i, 1] - f[i, 0]
    if j == w - 1:
        return f[i, w - 1] - f[i, w - 2]
    return 0.5 * (f[i, j + 1] - f[i, j - 1])


@numba.njit(cache=True)
def _fused_step(phi, g, gx, gy, mu, lam, nu, tau, eps):
    # the arithmetic of level_set_step, in two passes without temporaries per term
    h, w = phi.shape
    p = phi.copy()
    p[0, :] = p[2, :]
    p[h - 1, :] = p[h - 3, :]
    p[:, 0] = p[:, 2]
    p[:, w - 1] = p[:, w - 3]
    nx = np.empty_like(p)
    ny = np.empty_like(p)
    qx = np.empty_like(p)
    qy = np.empty_like(p)
    two_pi = 2.0 * np.pi
    for i in range(h):
        for j in range(w):
            px = _grad(p, i, j, 1)
            py = _grad(p, i, j, 0)
            s = np.sqrt(px * px + py * py)
            nx[i, j] = px / (s + 1e-10)
            ny[i, j] = py / (s + 1e-10)
            ps = np.sin(two_pi * s) / two_pi if s <= 1.0 else s - 1.0
            rate = (1.0 if ps == 0 else ps) / (1.0 if s == 0 else s)
            qx[i, j] = rate * px - px
            qy[i, j] = rate * py - py
    out = np.empty_like(p)
    for i in range(h):
        for j in range(w):
            c = p[i, j]
            up = p[i - 1, j] if i > 0 else c
            down = p[i + 1, j] if i < h - 1 else c
            left = p[i, j - 1] if j > 0 else c
            right = p[i, j + 1] if j < w - 1 else c
            lap = up + down + left + right - 4.0 * c
            regular = _grad(qx, i, j, 1) + _grad(qy, i, j, 0) + lap
            upd = tau * mu * regular
            if abs(c) <= eps:
                d = (1.0 + np.cos(np.pi * c / eps)) / (2.0 * eps)
                curv = _grad(nx, i, j, 1) + _grad(ny, i, j, 0)
                edge = d * (gx[i, j] * nx[i, j] + gy[i, j] * ny[i, j] + g[i, j] * curv)
                upd += tau * (lam * edge - nu * g[i, j] * d)
            out[i, j] = c + upd
    return out


def evolve_level_set(gray: np.ndarray, init: np.ndarray, params: LevelSetParams | None = None,
                     *, history: list | None = None) -> np.ndarray:
    """Evolve a level set from ``init`` and return the converged lesion mask.

    Stops after ``max_iters`` updates or once the relative change of the
    enclosed area stays below ``convergence_tol`` for ``patience`` consecutive
    iterations. When given, ``history`` receives the area after every update.
    """
    params = params or LevelSetParams()
    params.validate()
    init = np.asarray(init, dtype=bool)
    if params.max_iters == 0:
        return init.copy()
    state = init_phi(init, params)
    g = edge_indicator(gray, params.sigma, params.edge_gain)
    gy, gx = np.gradient(g)
    n_pix = init.size

    area = float(heaviside(state.phi).sum())
    calm = 0
    for it in range(params.max_iters):
        state.phi = _fused_step(state.phi, g, gx, gy, params.mu, params.lam, params.nu,
                                params.tau, params.epsilon)
        state.iteration = it + 1
        new_area = float(np.count_nonzero(state.phi >= 0))
        if history is not None:
            history.append(new_area)
        if new_area == 0 or new_area == n_pix:
            raise SegmentationError("level set collapsed or flooded the image")
        calm = calm + 1 if abs(new_area - area) / area < params.convergence_tol else 0
        area = new_area
        if calm >= params.patience:
            break
    log.debug("level set stopped after %d iterations", state.iteration)
    return _single_region(state.phi >= 0)


def segment_unsupervised(img: np.ndarray, params: LevelSetParams | None = None,
                         *, stages: dict | None = None) -> np.ndarray:
    """Rescale, convert to gray, threshold, then refine with the level set.

    ``stages`` (if given) is filled with the intermediate images: the rescaled
    input, its gray version, the threshold mask and the final mask at the
    working size.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    scale = STANDARD_SIZE / max(h, w)
    work_shape = (max(1, round(h * scale)), max(1, round(w * scale)))
    work = resize(img, work_shape)
    gray = to_grayscale(work)
    init = threshold_init(gray)
    mask = evolve_level_set(gray, init, params)
    if stages is not None:
        stages.update(rescaled=work, gray=gray, threshold=init, levelset=mask)
    out = resize(mask, (h, w))
    return _single_region(out)


# ---------------------------------------------------------------------------
# GrowCut

UNLABELED, OBJECT, BACKGROUND = 0, 1, 2


@dataclass
class SeedMap:
    labels: np.ndarray
    strength: np.ndarray

    @classmethod
    def from_masks(cls, obj: np.ndarray, bg: np.ndarray) -> "SeedMap":
        labels = np.zeros(obj.shape, dtype=np.int8)
        labels[bg] = BACKGROUND
        labels[obj] = OBJECT
        return cls(labels, (labels != UNLABELED).astype(np.float64))

    @classmethod
    def from_image(cls, img: np.ndarray) -> "SeedMap":
        """Seed image convention: 255 object, 0 background, anything else unlabeled."""
        img = np.asarray(img)
        return cls.from_masks(img == 255, img == 0)


def auto_seeds(init: np.ndarray, radius: int = 5, frame: int = 3) -> SeedMap:
    """Object seeds deep inside ``init``, background seeds on the frame and far outside it."""
    init = np.asarray(init, dtype=bool)
    if not init.any():
        raise ImageError("cannot seed from an empty mask")
    inscribed = float(ndimage.distance_transform_edt(init).max())
    r = min(radius, int(inscribed // 2))
    obj = erode(init, disk(r)) if r >= 1 else np.zeros_like(init)
    if not obj.any():
        cx, cy = centroid(init)
        ys, xs = np.nonzero(init)
        k = int(np.argmin((xs - cx) ** 2 + (ys - cy) ** 2))
        obj = np.zeros_like(init)
        obj[ys[k], xs[k]] = True
    bg = erode(~init, disk(radius))
    bg[:frame, :] = bg[-frame:, :] = True
    bg[:, :frame] = bg[:, -frame:] = True
    bg &= ~init
    return SeedMap.from_masks(obj, bg)


def growcut_labels(img: np.ndarray, seeds: SeedMap, max_sweeps: int = 500) -> tuple[SeedMap, int, bool]:
    """Run the GrowCut automaton; returns (final state, sweeps, converged).

    A cell p is conquered by its von Neumann neighbour q when
    g(|C_p - C_q|) * theta_q > theta_p, with g(x) = 1 - x / max|C|, taking the
    strongest such attacker. Sweeps are synchronous and stop at a fixed point.
    """
    colors = np.asarray(img, dtype=np.float64)
    if colors.ndim == 2:
        colors = colors[..., None]
    if np.asarray(img).dtype == np.uint8:
        colors = colors / 255.0
    max_norm = np.sqrt(colors.shape[2])
    labels = seeds.labels.copy()
    theta = seeds.strength.astype(np.float64).copy()
    if not (labels != UNLABELED).any():
        raise ImageError("GrowCut needs at least one seed")

    h, w = labels.shape
    # (slice of p, slice of q) for the four von Neumann neighbours
    shifts = [
        ((slice(1, None), slice(None)), (slice(None, -1), slice(None))),
        ((slice(None, -1), slice(None)), (slice(1, None), slice(None))),
        ((slice(None), slice(1, None)), (slice(None), slice(None, -1))),
        ((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
    ]
    gains = []
    for sp, sq in shifts:
        diff = np.linalg.norm(colors[sp] - colors[sq], axis=-1)
        gains.append(1.0 - diff / max_norm)

    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        best = theta.copy()
        new_labels = labels.copy()
        for (sp, sq), gain in zip(shifts, gains):
            attack = gain * theta[sq]
            win = attack > best[sp]
            best[sp] = np.where(win, attack, best[sp])
            new_labels[sp] = np.where(win, labels[sq], new_labels[sp])
        if np.array_equal(new_labels, labels) and np.array_equal(best, theta):
            converged = True
            break
        labels, theta = new_labels, best
    return SeedMap(labels, theta), sweeps, converged


def growcut(img: np.ndarray, seeds: SeedMap, max_sweeps: int = 500) -> np.ndarray:
    state, sweeps, converged = growcut_labels(img, seeds, max_sweeps)
    if not converged:
        warnings.warn(f"GrowCut did not converge in {max_sweeps} sweeps", ConvergenceWarning)
    log.debug("GrowCut finished after %d sweeps", sweeps)
    return _single_region(state.labels == OBJECT)


def segment_growcut(img: np.ndarray, seeds: SeedMap | None = None) -> np.ndarray:
    """GrowCut on an RGB image, seeded from the threshold mask unless seeds are given."""
    if seeds is None:
        seeds = auto_seeds(threshold_init(to_grayscale(img)))
    return growcut(img, seeds)


# ---------------------------------------------------------------------------
# mean shift


@dataclass
class MeanShiftParams:
    hs: float = 8.0
    hr: float = 0.08
    min_region: int = 100
    max_iters: int = 20
    tol: float = 0.05
    # clusters smaller than this share of the image cannot be the lesion
    min_lesion_fraction: float = 0.005

    def validate(self) -> None:
        if self.hs <= 0 or self.hr <= 0:
            raise ValueError("bandwidths must be positive")
        if self.min_region < 1:
            raise ValueError("min_region must be >= 1")
        if not 0 <= self.min_lesion_fraction < 0.5:
            raise ValueError("min_lesion_fraction must be in [0, 0.5)")


def mean_shift_vector(x: np.ndarray, data: np.ndarray, h) -> np.ndarray:
    """Gaussian-weighted mean of ``data`` around ``x`` minus ``x``.

    ``h`` is a scalar or per-coordinate bandwidth; weights are
    exp(-|(x - x_i) / h|^2 / 2).
    """
    x = np.asarray(x, dtype=np.float64)
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.size == 0:
        raise ValueError("data must be non-empty")
    u = (data - x) / np.asarray(h, dtype=np.float64)
    wts = np.exp(-0.5 * np.sum(u * u, axis=1))
    if wts.sum() == 0:
        return np.zeros_like(x)
    return wts @ data / wts.sum() - x


def mean_shift_mode(x: np.ndarray, data: np.ndarray, h, tol: float = 1e-6, max_iters: int = 500) -> np.ndarray:
    """Iterate x <- x + m(x) until the shift falls below ``tol``."""
    x = np.asarray(x, dtype=np.float64).copy()
    for _ in range(max_iters):
        m = mean_shift_vector(x, data, h)
        x += m
        if np.linalg.norm(m) < tol:
            break
    return x


@numba.njit(cache=True, fastmath=True)
def _ms_filter(colors, hs, hr, max_iters, tol):
    h, w, nch = colors.shape
    out = np.empty_like(colors)
    rad = int(hs)
    inv_hs2 = 1.0 / (hs * hs)
    inv_hr2 = 1.0 / (hr * hr)
    cut = 9.0  # range distance beyond 3 hr carries negligible weight
    mode = np.empty(nch)
    acc = np.empty(nch)
    for i in range(h):
        for j in range(w):
            yc = float(i)
            xc = float(j)
            for c in range(nch):
                mode[c] = colors[i, j, c]
            for _ in range(max_iters):
                ic = int(yc + 0.5)
                jc = int(xc + 0.5)
                wsum = 0.0
                sy = 0.0
                sx = 0.0
                for c in range(nch):
                    acc[c] = 0.0
                for ki in range(max(0, ic - rad), min(h, ic + rad + 1)):
                    dy = ki - yc
                    for kj in range(max(0, jc - rad), min(w, jc + rad + 1)):
                        dx = kj - xc
                        ds = (dx * dx + dy * dy) * inv_hs2
                        if ds > 1.0:
                            continue
                        dr = 0.0
                        for c in range(nch):
                            t = colors[ki, kj, c] - mode[c]
                            dr += t * t
                        dr *= inv_hr2
                        if dr > cut:
                            continue
                        wk = np.exp(-0.5 * (ds + dr))
                        wsum += wk
                        sy += wk * ki
                        sx += wk * kj
                        for c in range(nch):
                            acc[c] += wk * colors[ki, kj, c]
                if wsum == 0.0:
                    break
                ny = sy / wsum
                nx = sx / wsum
                shift = ((ny - yc) ** 2 + (nx - xc) ** 2) * inv_hs2
                for c in range(nch):
                    v = acc[c] / wsum
                    shift += (v - mode[c]) ** 2 * inv_hr2
                    mode[c] = v
                yc = ny
                xc = nx
                if shift < tol * tol:
                    break
            for c in range(nch):
                out[i, j, c] = mode[c]
    return out


@numba.njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@numba.njit(cache=True)
def _ms_regions(filtered, hr):
    h, w, nch = filtered.shape
    parent = np.arange(h * w)
    hr2 = hr * hr
    for i in range(h):
        for j in range(w):
            for di, dj in ((0, 1), (1, 0)):
                ni = i + di
                nj = j + dj
                if ni >= h or nj >= w:
                    continue
                d = 0.0
                for c in range(nch):
                    t = filtered[i, j, c] - filtered[ni, nj, c]
                    d += t * t
                if d < hr2:
                    a = _find(parent, i * w + j)
                    b = _find(parent, ni * w + nj)
                    if a != b:
                        parent[max(a, b)] = min(a, b)
    labels = np.empty(h * w, dtype=np.int64)
    for k in range(h * w):
        labels[k] = _find(parent, k)
    return labels.reshape(h, w)


def mean_shift_filter(img: np.ndarray, params: MeanShiftParams | None = None) -> np.ndarray:
    """Discontinuity-preserving filtering in the joint spatial-range domain.

    Each pixel climbs to its density mode in (x, y, colour) space, with colour
    and position scaled by ``hr`` and ``hs``; the output holds the colour of
    that mode. The spatial window is truncated at ``hs``. Returns floats in
    [0, 1] with the input's channel count.
    """
    params = params or MeanShiftParams()
    params.validate()
    colors = np.asarray(img, dtype=np.float64)
    if np.asarray(img).dtype == np.uint8:
        colors = colors / 255.0
    squeeze = colors.ndim == 2
    if squeeze:
        colors = colors[..., None]
    out = _ms_filter(np.ascontiguousarray(colors), float(params.hs), float(params.hr),
                     int(params.max_iters), float(params.tol))
    return out[..., 0] if squeeze else out


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.reshape(labels.shape)


def _merge_small_regions(labels: np.ndarray, colors: np.ndarray, min_region: int) -> np.ndarray:
    """Absorb regions below ``min_region`` pixels into the adjacent region of closest mean colour."""
    n = int(labels.max()) + 1
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n).astype(np.int64)
    sums = np.stack([np.bincount(flat, weights=colors[..., c].ravel(), minlength=n)
                     for c in range(colors.shape[2])], axis=1)
    pairs = np.concatenate([
        np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1),
        np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    adjacent: list[set[int]] = [set() for _ in range(n)]
    for a, b in pairs:
        adjacent[a].add(int(b))
        adjacent[b].add(int(a))

    parent = list(range(n))

    def find(r: int) -> int:
        while parent[r] != r:
            parent[r] = parent[parent[r]]
            r = parent[r]
        return r

    heap = [(int(counts[r]), r) for r in range(n) if counts[r] < min_region]
    heapq.heapify(heap)
    while heap:
        size, r = heapq.heappop(heap)
        if find(r) != r or counts[r] != size or counts[r] >= min_region:
            continue
        neighbours = {find(q) for q in adjacent[r]} - {r}
        if not neighbours:
            continue
        cand = sorted(neighbours)
        means = sums[cand] / counts[cand][:, None]
        t = cand[int(np.argmin(np.linalg.norm(means - sums[r] / counts[r], axis=1)))]
        parent[r] = t
        counts[t] += counts[r]
        sums[t] += sums[r]
        adjacent[t] |= adjacent[r]
        if counts[t] < min_region:
            heapq.heappush(heap, (int(counts[t]), t))
    roots = np.array([find(r) for r in range(n)])
    return _relabel(roots[labels])


def mean_shift_clusters(filtered: np.ndarray, params: MeanShiftParams) -> np.ndarray:
    """Group adjacent pixels whose modes lie within ``hr``; absorb small regions."""
    f = filtered if filtered.ndim == 3 else filtered[..., None]
    labels = _relabel(_ms_regions(np.ascontiguousarray(f), float(params.hr)))
    return _merge_small_regions(labels, f, params.min_region)


def mean_shift_segment(img: np.ndarray, params: MeanShiftParams | None = None,
                       *, stages: dict | None = None) -> np.ndarray:
    """Filter, cluster, then keep the darkest cluster as the lesion."""
    params = params or MeanShiftParams()
    filtered = mean_shift_filter(img, params)
    labels = mean_shift_clusters(filtered, params)
    n = int(labels.max()) + 1
    if n < 2:
        raise SegmentationError("mean shift found a single cluster")
    rgb = filtered if filtered.ndim == 3 else np.repeat(filtered[..., None], 3, axis=2)
    lum = rgb @ np.array([0.299, 0.587, 0.114])
    counts = np.bincount(labels.ravel())
    mean_lum = np.bincount(labels.ravel(), weights=lum.ravel()) / counts
    big = counts >= params.min_lesion_fraction * labels.size
    if not big.any():
        raise SegmentationError("mean shift found no cluster large enough to be a lesion")
    lesion = labels == int(np.argmin(np.where(big, mean_lum, np.inf)))
    if stages is not None:
        stages.update(filtered=filtered, clusters=labels)
    return _single_region(lesion)


METHODS = ("levelset", "growcut", "meanshift")


@dataclass
class SegmentationConfig:
    method: str = "levelset"
    levelset: LevelSetParams = field(default_factory=LevelSetParams)
    meanshift: MeanShiftParams = field(default_factory=MeanShiftParams)


def segment(img: np.ndarray, config: SegmentationConfig | None = None, *,
            seeds: SeedMap | None = None, stages: dict | None = None) -> np.ndarray:
    """Dispatch to one of the three engines by ``config.method``."""
    config = config or SegmentationConfig()
    if config.method == "levelset":
        return segment_unsupervised(img, config.levelset, stages=stages)
    if config.method == "growcut":
        return segment_growcut(img, seeds)
    if config.method == "meanshift":
        return mean_shift_segment(img, config.meanshift, stages=stages)
    raise ValueError(f"unknown segmentation method {config.method!r}; expected one of {METHODS}")
