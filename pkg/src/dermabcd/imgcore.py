"""Raster primitives shared by every stage of the pipeline.

Rasters are plain numpy arrays:

* gray images are ``float64`` arrays of shape ``(H, W)`` with values in [0, 1];
* colour images are ``uint8`` arrays of shape ``(H, W, 3)``;
* binary masks are ``bool`` arrays of shape ``(H, W)``, True marking the object.

Point coordinates are always ``(x, y)`` with x the column and y the row, so the
y axis points down as the image is displayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

# Moore neighbourhood as (dx, dy), clockwise on screen starting east.
_MOORE = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}
_WEST = 4

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class ImageError(ValueError):
    """Raised when an image or mask violates an operation's preconditions."""


@dataclass(frozen=True)
class StructuringElement:
    shape: str
    radius: int

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise ValueError(f"unknown structuring element shape {self.shape!r}")
        if self.radius < 1:
            raise ValueError("structuring element radius must be >= 1")

    @property
    def array(self) -> np.ndarray:
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        return xx * xx + yy * yy <= r * r


def disk(radius: int) -> StructuringElement:
    return StructuringElement("disk", radius)


def square(radius: int) -> StructuringElement:
    return StructuringElement("square", radius)


@dataclass(frozen=True)
class Contour:
    """Closed polygonal boundary.

    ``points`` is an ``(N, 2)`` array of ``(x, y)`` coordinates. Traced contours
    hold integer pixel centres whose consecutive points are 8-neighbours; derived
    contours (smoothed, NCD) hold real coordinates. The closing edge from the
    last point back to the first is implicit.
    """

    points: np.ndarray
    closed: bool = True

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points[:, 0], self.points[:, 1]


# ---------------------------------------------------------------------------
# conversion and filtering


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Luma of an 8-bit RGB image, scaled to [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"expected an (H, W, 3) RGB image, got shape {img.shape}")
    gray = img.astype(np.float64) @ LUMA_WEIGHTS / 255.0
    return np.clip(gray, 0.0, 1.0)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at 3 sigma and renormalised to unit sum."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with replicated borders."""
    k = gaussian_kernel1d(sigma)
    out = np.asarray(img, dtype=np.float64)
    for axis in (0, 1):
        out = ndimage.convolve1d(out, k, axis=axis, mode="nearest")
    return out


def resize(img: np.ndarray, shape: tuple[int, int], *, nearest: bool = False) -> np.ndarray:
    """Resample an image or mask to ``shape = (H, W)``.

    Masks and ``nearest=True`` use nearest-neighbour sampling; everything else
    is bilinear.
    """
    h, w = shape
    if img.shape[:2] == (h, w):
        return img.copy()
    if img.dtype == bool or nearest:
        rows = np.minimum((np.arange(h) + 0.5) * img.shape[0] / h, img.shape[0] - 1).astype(int)
        cols = np.minimum((np.arange(w) + 0.5) * img.shape[1] / w, img.shape[1] - 1).astype(int)
        return img[rows][:, cols]
    if img.dtype == np.uint8:
        return np.asarray(Image.fromarray(img).resize((w, h), Image.BILINEAR))
    zoom = (h / img.shape[0], w / img.shape[1]) + (1,) * (img.ndim - 2)
    out = ndimage.zoom(np.asarray(img, dtype=np.float64), zoom, order=1, mode="nearest")
    return out[:h, :w]


# ---------------------------------------------------------------------------
# morphology


def dilate(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    return ndimage.binary_dilation(mask, structure=se.array)


def erode(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    return ndimage.binary_erosion(mask, structure=se.array, border_value=0)


def opening(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    return dilate(erode(mask, se), se)


def closing(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    # Padding keeps closing extensive for objects touching the frame.
    r = se.radius
    padded = np.pad(np.asarray(mask, dtype=bool), r)
    closed = erode(dilate(padded, se), se)
    return closed[r:-r, r:-r]


def fill_holes(mask: np.ndarray) -> np.ndarray:
    return ndimage.binary_fill_holes(mask)


# ---------------------------------------------------------------------------
# components and contours


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components as separate masks, largest area first."""
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    sizes = np.bincount(labels.ravel())[1:]
    order = np.argsort(-sizes, kind="stable")
    return [labels == (i + 1) for i in order]


def largest_component(mask: np.ndarray) -> np.ndarray:
    comps = connected_components(mask)
    if not comps:
        return np.zeros_like(mask, dtype=bool)
    return comps[0]


def trace_contour(mask: np.ndarray) -> Contour:
    """Moore-neighbour boundary trace of a single 8-connected object.

    The trace starts at the first object pixel in raster order and stops when a
    (pixel, backtrack) state repeats. Points come back counterclockwise as the
    image is displayed. Thin parts are walked out and back, so a one-pixel-wide
    row of n pixels yields 2n - 2 points.
    """
    mask = np.asarray(mask, dtype=bool)
    n_pix = int(mask.sum())
    if n_pix == 0:
        raise ImageError("cannot trace an empty mask")
    if len(connected_components(mask)) != 1:
        raise ImageError("trace_contour needs exactly one connected component")

    padded = np.pad(mask, 1)
    ys, xs = np.nonzero(padded)
    start = (int(xs[0]), int(ys[0]))
    if n_pix == 1:
        return Contour(np.array([[start[0] - 1, start[1] - 1]]))

    p, back = start, _WEST
    points = [p]
    seen = {(p, back)}
    while True:
        for k in range(1, 9):
            d = (back + k) % 8
            dx, dy = _MOORE[d]
            q = (p[0] + dx, p[1] + dy)
            if padded[q[1], q[0]]:
                break
        pdx, pdy = _MOORE[(back + k - 1) % 8]
        prev = (p[0] + pdx, p[1] + pdy)
        back = _MOORE_INDEX[(prev[0] - q[0], prev[1] - q[1])]
        p = q
        if (p, back) in seen:
            break
        seen.add((p, back))
        points.append(p)
    if len(points) > 1 and points[-1] == points[0]:
        points.pop()

    pts = np.array(points, dtype=np.int64) - 1
    # Moore tracing walks clockwise on screen; reverse to counterclockwise.
    pts = np.concatenate([pts[:1], pts[:0:-1]])
    return Contour(pts)


def rasterize_contour(contour: Contour, shape: tuple[int, int], *, fill: bool = True) -> np.ndarray:
    """Paint integer contour points into a mask and optionally fill the interior."""
    out = np.zeros(shape, dtype=bool)
    pts = np.rint(contour.points).astype(int)
    out[pts[:, 1], pts[:, 0]] = True
    return fill_holes(out) if fill else out


def signed_area(contour: Contour) -> float:
    """Shoelace area in (x, y) coordinates; negative for counterclockwise-on-screen."""
    x, y = contour.xy
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(contour: Contour) -> float:
    return abs(signed_area(contour))


# ---------------------------------------------------------------------------
# elementary measurements


def _require_nonempty(mask: np.ndarray) -> None:
    if not np.any(mask):
        raise ImageError("mask is empty")


def centroid(mask: np.ndarray) -> tuple[float, float]:
    _require_nonempty(mask)
    ys, xs = np.nonzero(mask)
    return float(xs.mean()), float(ys.mean())


def area(mask: np.ndarray) -> int:
    _require_nonempty(mask)
    return int(np.count_nonzero(mask))


def perimeter(contour: Contour) -> float:
    """Closed polygon length; unit and sqrt(2) steps for traced contours."""
    pts = np.asarray(contour.points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    steps = np.diff(np.vstack([pts, pts[:1]]), axis=0)
    return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


# ---------------------------------------------------------------------------
# file I/O


def read_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_rgb(path: str | Path, img: np.ndarray) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path)


def write_gray(path: str | Path, img: np.ndarray) -> None:
    data = np.asarray(img)
    if data.dtype != np.uint8:
        data = np.rint(np.clip(data, 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def read_gray8(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()


def read_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Masks are stored as 8-bit 0/255 images (PGM or PNG by suffix)."""
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)
