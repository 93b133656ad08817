"""Border error, classifier metrics and the synthetic lesion phantoms.

The phantoms stand in for a clinical image database: every image comes with an
exact ground-truth mask, so segmentation and feature code can be checked
against known answers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage, special

from .imgcore import LUMA_WEIGHTS, ImageError

MALIGNANT = 1
BENIGN = 0


def border_error(auto: np.ndarray, manual: np.ndarray) -> float:
    """XOR area between the automatic and manual masks, in percent of the manual area."""
    auto = np.asarray(auto, dtype=bool)
    manual = np.asarray(manual, dtype=bool)
    if auto.shape != manual.shape:
        raise ImageError(f"mask shapes differ: {auto.shape} vs {manual.shape}")
    ref = np.count_nonzero(manual)
    if ref == 0:
        raise ImageError("manual mask is empty")
    return 100.0 * np.count_nonzero(auto ^ manual) / ref


@dataclass(frozen=True)
class ClassMetrics:
    sn: float
    sp: float
    tcr: float

    def as_percent(self) -> dict[str, float]:
        return {"Sn(%)": 100 * self.sn, "Sp(%)": 100 * self.sp, "TCR(%)": 100 * self.tcr}


def class_metrics(predictions: Sequence[int], truth: Sequence[int]) -> ClassMetrics:
    """Sensitivity over malignant cases, specificity over benign ones, and overall accuracy."""
    pred = np.asarray(predictions).astype(int)
    true = np.asarray(truth).astype(int)
    if pred.shape != true.shape:
        raise ValueError("predictions and truth differ in length")
    pos = true == MALIGNANT
    neg = true == BENIGN
    if not pos.any() or not neg.any():
        raise ValueError("truth must contain both benign and malignant cases")
    tp = np.count_nonzero(pred[pos] == MALIGNANT)
    tn = np.count_nonzero(pred[neg] == BENIGN)
    return ClassMetrics(
        sn=tp / np.count_nonzero(pos),
        sp=tn / np.count_nonzero(neg),
        tcr=(tp + tn) / true.size,
    )


# ---------------------------------------------------------------------------
# phantoms


@dataclass
class PhantomSpec:
    """Recipe for one synthetic lesion image.

    ``harmonics`` maps a harmonic order k to its relative amplitude a_k in the
    blob radius r(t) = r0 * (1 + sum a_k cos(k t + phase_k)); phases are drawn
    from the seeded RNG. ``lesion_color2`` paints the half of the lesion beyond
    the line through the centre at ``split_angle``, for two-tone interiors.
    ``edge_softness`` (pixels) grades the lesion-to-skin transition with a
    normal-CDF profile of the signed distance to the true border, which stays
    the 50% iso-line.
    """

    size: int = 512
    lesion_shape: str = "disk"
    radius: float = 120.0
    aspect: float = 1.0
    angle: float = 0.0
    harmonics: dict[int, float] = field(default_factory=dict)
    center: tuple[float, float] | None = None
    lesion_color: tuple[int, int, int] = (115, 75, 55)
    lesion_color2: tuple[int, int, int] | None = None
    split_angle: float = 0.0
    skin_color: tuple[int, int, int] = (220, 175, 150)
    edge_softness: float = 0.0
    noise_sigma: float = 0.0
    hair_count: int = 0
    hair_width: float = 2.0
    hair_color: tuple[int, int, int] = (35, 25, 20)
    rng_seed: int = 0

    def validate(self) -> None:
        if self.lesion_shape not in ("disk", "ellipse", "blob"):
            raise ValueError(f"unknown lesion shape {self.lesion_shape!r}")
        if self.size < 16 or self.radius <= 0 or self.aspect <= 0:
            raise ValueError("size, radius and aspect must be positive")
        if self.edge_softness < 0:
            raise ValueError("edge_softness must be non-negative")
        if self.noise_sigma < 0 or self.hair_count < 0 or self.hair_width <= 0:
            raise ValueError("noise, hair count and hair width must be non-negative")
        skin = float(np.dot(self.skin_color, LUMA_WEIGHTS))
        for color in (self.lesion_color, self.lesion_color2):
            if color is not None and float(np.dot(color, LUMA_WEIGHTS)) >= skin:
                raise ValueError("lesion must be darker than skin")


class PhantomImage(NamedTuple):
    image: np.ndarray
    truth: np.ndarray
    hair: np.ndarray


def _radius_function(spec: PhantomSpec, rng: np.random.Generator):
    phases = {k: rng.uniform(0, 2 * np.pi) for k in sorted(spec.harmonics)}

    def r_of(theta: np.ndarray) -> np.ndarray:
        if spec.lesion_shape == "ellipse":
            a, b = spec.radius, spec.radius / spec.aspect
            t = theta - spec.angle
            return a * b / np.sqrt((b * np.cos(t)) ** 2 + (a * np.sin(t)) ** 2)
        r = np.ones_like(theta)
        if spec.lesion_shape == "blob":
            for k, amp in spec.harmonics.items():
                r = r + amp * np.cos(k * theta + phases[k])
        return spec.radius * r

    return r_of


def _segment_distance(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    t = ((px - ax) * vx + (py - ay) * vy) / max(vx * vx + vy * vy, 1e-12)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (ax + t * vx), py - (ay + t * vy))


def hair_polylines(spec: PhantomSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Gently curved hairs as sampled quadratic Bezier curves."""
    n = spec.size
    out = []
    for _ in range(spec.hair_count):
        mid = rng.uniform(0.15 * n, 0.85 * n, size=2)
        theta = rng.uniform(0, np.pi)
        half = 0.5 * rng.uniform(0.5, 1.0) * n
        d = np.array([np.cos(theta), np.sin(theta)])
        p0, p2 = mid - half * d, mid + half * d
        bend = rng.uniform(-0.15, 0.15) * n * np.array([-d[1], d[0]])
        p1 = mid + bend
        t = np.linspace(0, 1, 24)[:, None]
        out.append((1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2)
    return out


def render_phantom(spec: PhantomSpec) -> PhantomImage:
    """Render a phantom and also return the hair coverage mask (coverage > 0.5)."""
    spec.validate()
    n = spec.size
    shape_ss, noise_ss, hair_ss = np.random.SeedSequence(spec.rng_seed).spawn(3)
    r_of = _radius_function(spec, np.random.default_rng(shape_ss))

    cx, cy = spec.center if spec.center is not None else ((n - 1) / 2, (n - 1) / 2)
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    theta = np.arctan2(dy, dx)
    truth = np.hypot(dx, dy) <= r_of(theta)

    ys, xs = np.nonzero(truth)
    margin = 0.1 * n
    if xs.min() < margin or ys.min() < margin or xs.max() > n - 1 - margin or ys.max() > n - 1 - margin:
        raise ValueError("lesion does not fit the frame with a 10% margin")

    lesion = np.empty((n, n, 3), dtype=np.float64)
    lesion[:] = np.asarray(spec.lesion_color, dtype=np.float64) / 255
    if spec.lesion_color2 is not None:
        side = dx * np.cos(spec.split_angle) + dy * np.sin(spec.split_angle) > 0
        lesion[side] = np.asarray(spec.lesion_color2, dtype=np.float64) / 255
    if spec.edge_softness > 0:
        inside = ndimage.distance_transform_edt(truth) - 0.5
        outside = ndimage.distance_transform_edt(~truth) - 0.5
        signed = np.where(truth, -inside, outside)
        alpha = special.ndtr(-signed / spec.edge_softness)
    else:
        alpha = truth.astype(np.float64)
    skin = np.asarray(spec.skin_color, dtype=np.float64) / 255
    base = lesion * alpha[..., None] + skin * (1 - alpha[..., None])
    if spec.noise_sigma > 0:
        base += np.random.default_rng(noise_ss).normal(0.0, spec.noise_sigma, size=base.shape)

    coverage = np.zeros((n, n))
    for line in hair_polylines(spec, np.random.default_rng(hair_ss)):
        dist = np.full((n, n), np.inf)
        for a, b in zip(line[:-1], line[1:]):
            dist = np.minimum(dist, _segment_distance(xx, yy, a[0], a[1], b[0], b[1]))
        coverage = np.maximum(coverage, np.clip(spec.hair_width / 2 + 0.5 - dist, 0.0, 1.0))
    hair_rgb = np.asarray(spec.hair_color, dtype=np.float64) / 255
    base = base * (1 - coverage[..., None]) + hair_rgb * coverage[..., None]

    image = np.rint(np.clip(base, 0.0, 1.0) * 255).astype(np.uint8)
    return PhantomImage(image, truth, coverage > 0.5)


def generate_phantom(spec: PhantomSpec) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (image, truth mask) pair for ``spec``."""
    ph = render_phantom(spec)
    return ph.image, ph.truth


def standard_suite(count: int = 20, size: int = 512, noise_sigma: float = 0.05,
                   hair_count: int = 5, edge_softness: float = 2.0,
                   seed: int = 2024) -> list[PhantomSpec]:
    """Harmonic-blob benchmark phantoms with fixed seeds."""
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(count):
        harmonics = {int(k): float(rng.uniform(0.03, 0.12)) for k in rng.choice([2, 3, 4, 5, 6], size=3, replace=False)}
        radius = float(rng.uniform(0.18, 0.26) * size)
        specs.append(PhantomSpec(
            size=size, lesion_shape="blob", radius=radius, harmonics=harmonics,
            noise_sigma=noise_sigma, hair_count=hair_count, hair_width=2.0,
            edge_softness=edge_softness, rng_seed=seed + i,
        ))
    return specs
