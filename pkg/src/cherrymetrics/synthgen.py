"""Deterministic synthetic scenes of coloured discs with exact ground truth.

Randomness comes from xorshift64* (Vigna, 2016) seeded through one SplitMix64
step, implemented here on Python integers so that output is identical on every
platform and Python version.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .annot_io import AbsBox, Detection, DetectionSet, GroundTruthBox, LabeledImage
from .errors import PlacementError, RangeError
from .evaluation import iou
from .imaging import ImageRGB
from .phenotype import ColorPalette, ScaleCalibration, default_palette

MASK64 = (1 << 64) - 1
PRNG_NAME = "xorshift64*"


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* generator: 64-bit state, shifts (12, 25, 27), output multiplier 0x2545F4914F6CDD1D."""

    def __init__(self, seed: int) -> None:
        state = splitmix64(seed & MASK64)
        self.state = state or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive, without modulo bias."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError(f"empty range [{lo}, {hi}]")
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            v = self.next_u64()
            if v < limit:
                return lo + v % span


@dataclass(frozen=True)
class SceneSpec:
    width: int = 1024
    height: int = 1024
    cherry_count: int = 100
    radius_range: tuple[int, int] = (12, 20)
    palette_classes: Sequence[int] | None = None
    background: tuple[int, int, int] = (235, 235, 230)
    min_separation: float = 4.0
    mm_per_pixel: float = 0.8
    seed: int = 0
    image_id: str = "image"
    palette: ColorPalette | None = None

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise RangeError(f"scene size {self.width}x{self.height} must be positive")
        if self.cherry_count < 0:
            raise RangeError("cherry_count must be >= 0")
        rmin, rmax = self.radius_range
        if not (1 <= rmin <= rmax):
            raise RangeError(f"invalid radius range {self.radius_range}")
        if 2 * rmax > min(self.width, self.height):
            raise RangeError("largest disc does not fit in the image")
        if self.palette_classes is not None and len(self.palette_classes) != self.cherry_count:
            raise RangeError("palette_classes must give one class per cherry")


@dataclass(frozen=True)
class NoiseSpec:
    """Detector-noise model applied to ground truth.

    ``drop_count`` removes exactly that many truths (chosen at random) on top of
    the independent per-truth ``drop_prob`` deletion.
    """

    jitter_px: float = 0.0
    drop_prob: float = 0.0
    spurious_count: int = 0
    confidence_range: tuple[float, float] = (0.5, 1.0)
    seed: int = 0
    drop_count: int = 0
    spurious_max_iou: float = 0.1

    def __post_init__(self) -> None:
        if not (0.0 <= self.drop_prob <= 1.0):
            raise RangeError(f"drop_prob={self.drop_prob} outside [0, 1]")
        if self.jitter_px < 0:
            raise RangeError("jitter_px must be >= 0")
        lo, hi = self.confidence_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise RangeError(f"invalid confidence range {self.confidence_range}")
        if self.spurious_count < 0 or self.drop_count < 0:
            raise RangeError("counts must be >= 0")


@dataclass(frozen=True)
class Disc:
    cx: int
    cy: int
    radius: int
    color_class: int
    color: tuple[int, int, int] = field(default=(0, 0, 0))


class Scene(NamedTuple):
    image: ImageRGB
    truth: LabeledImage
    calibration: ScaleCalibration
    discs: tuple[Disc, ...]


def _place_discs(spec: SceneSpec, rng: XorShift64Star) -> list[tuple[int, int, int]]:
    placed: list[tuple[int, int, int]] = []
    budget = 10 * spec.cherry_count * 1000
    rmin, rmax = spec.radius_range
    attempts = 0
    while len(placed) < spec.cherry_count:
        if attempts >= budget:
            raise PlacementError(
                f"placed {len(placed)} of {spec.cherry_count} discs within {budget} attempts")
        attempts += 1
        r = rng.randint(rmin, rmax)
        cx = rng.randint(r, spec.width - r)
        cy = rng.randint(r, spec.height - r)
        if all((cx - x) ** 2 + (cy - y) ** 2 >= (r + q + spec.min_separation) ** 2
               for x, y, q in placed):
            placed.append((cx, cy, r))
    return placed


def generate_scene(spec: SceneSpec) -> Scene:
    palette = spec.palette or default_palette()
    refs = dict(palette.classes)
    rng = XorShift64Star(spec.seed)
    placements = _place_discs(spec, rng)

    pixels = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
    pixels[:, :] = spec.background
    discs = []
    boxes = []
    for k, (cx, cy, r) in enumerate(placements):
        cls = spec.palette_classes[k] if spec.palette_classes is not None else rng.randint(1, 7)
        ref = refs[cls]
        color = (round(ref.r), round(ref.g), round(ref.b))
        # pixel (col, row) is inside when its centre lies within the disc
        ys = np.arange(cy - r, cy + r) + 0.5 - cy
        xs = np.arange(cx - r, cx + r) + 0.5 - cx
        inside = ys[:, None] ** 2 + xs[None, :] ** 2 <= r * r
        pixels[cy - r:cy + r, cx - r:cx + r][inside] = color
        discs.append(Disc(cx, cy, r, cls, color))
        boxes.append(GroundTruthBox(AbsBox(cx - r, cy - r, cx + r, cy + r), 0))

    truth = LabeledImage(
        image_id=spec.image_id,
        width=spec.width,
        height=spec.height,
        boxes=tuple(boxes),
        filename=f"{spec.image_id}.ppm",
    )
    return Scene(ImageRGB(pixels), truth, ScaleCalibration(spec.mm_per_pixel), tuple(discs))


def _jittered(box: AbsBox, j: float, w: int, h: int, rng: XorShift64Star) -> AbsBox:
    if j == 0:
        return box
    x0, y0, x1, y1 = (v + rng.uniform(-j, j) for v in box.as_tuple())
    x0, x1 = sorted((min(max(x0, 0.0), w), min(max(x1, 0.0), w)))
    y0, y1 = sorted((min(max(y0, 0.0), h), min(max(y1, 0.0), h)))
    return AbsBox(x0, y0, x1, y1)


def perturb_detections(truth: LabeledImage, noise: NoiseSpec) -> DetectionSet:
    """Turn ground truth into a simulated detector output.

    Surviving truths come first in truth order, spurious boxes after them.
    Spurious boxes are resampled (up to 1000 tries each) until their IoU with every
    truth is below ``spurious_max_iou`` so they act as clean false positives.
    """
    rng = XorShift64Star(noise.seed)
    lo, hi = noise.confidence_range
    n = len(truth.boxes)

    dropped = set()
    for i in range(n):
        if rng.random() < noise.drop_prob:
            dropped.add(i)
    pool = [i for i in range(n) if i not in dropped]
    for _ in range(min(noise.drop_count, len(pool))):
        dropped.add(pool.pop(rng.randint(0, len(pool) - 1)))

    dets = []
    for i, gt in enumerate(truth.boxes):
        if i in dropped:
            continue
        box = _jittered(gt.box, noise.jitter_px, truth.width, truth.height, rng)
        dets.append(Detection(box, gt.class_id, rng.uniform(lo, hi)))

    sizes = [max(gt.box.width, gt.box.height) for gt in truth.boxes] or [min(truth.width, truth.height) / 10]
    smin = max(1.0, min(sizes))
    smax = max(smin, min(max(sizes), truth.width, truth.height))
    for _ in range(noise.spurious_count):
        for _attempt in range(1000):
            s = rng.uniform(smin, smax)
            x0 = rng.uniform(0.0, truth.width - s)
            y0 = rng.uniform(0.0, truth.height - s)
            box = AbsBox(x0, y0, x0 + s, y0 + s)
            if all(iou(box, gt.box) < noise.spurious_max_iou for gt in truth.boxes):
                break
        dets.append(Detection(box, 0, rng.uniform(lo, hi)))
    return DetectionSet(truth.image_id, tuple(dets))


def scene_metadata(spec: SceneSpec, noise: NoiseSpec | None = None) -> dict[str, str]:
    meta = {
        "prng": PRNG_NAME,
        "seed": str(spec.seed),
        "width": str(spec.width),
        "height": str(spec.height),
        "cherry_count": str(spec.cherry_count),
        "radius_min": str(spec.radius_range[0]),
        "radius_max": str(spec.radius_range[1]),
        "min_separation": repr(spec.min_separation),
        "mm_per_pixel": repr(spec.mm_per_pixel),
    }
    if noise is not None:
        meta.update({
            "noise_seed": str(noise.seed),
            "jitter_px": repr(noise.jitter_px),
            "drop_prob": repr(noise.drop_prob),
            "drop_count": str(noise.drop_count),
            "spurious_count": str(noise.spurious_count),
            "confidence_min": repr(noise.confidence_range[0]),
            "confidence_max": repr(noise.confidence_range[1]),
        })
    return meta

