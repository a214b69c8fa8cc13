"""
Procedural single-class shape images: a zero-download stand-in for object-class datasets.
"""
import logging
import math
import os
from typing import Literal

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, Field

from preprocessing.dataset import Dataset, save_png

logger = logging.getLogger(__name__)

Family = Literal['ellipse', 'rounded_rect', 'ngon']
FAMILIES: tuple[Family, ...] = ('ellipse', 'rounded_rect', 'ngon')
MARGIN = 2
SUPERSAMPLE = 4
SIZE_RANGE = (0.55, 0.95)
ASPECT_RANGE = (0.5, 1.0)
OUTLINE_POINTS = 96
CORNER_FRACTION = 0.25


def max_radius(resolution: int) -> float:
    """ Largest bounding radius keeping every vertex at least MARGIN + 1 px away from the border. """
    return (resolution - 1) / 2.0 - (MARGIN + 1)


class ShapeSpec(BaseModel):
    family: Family
    size: float = Field(..., gt=0.0, description="Bounding radius in pixels")
    aspect: float = Field(..., gt=0.0, le=1.0, description="Minor/major extent ratio")
    rotation: float = Field(..., description="Rotation in radians")
    sides: int = Field(default=0, ge=0, description="Vertex count for the ngon family")
    center: tuple[float, float] = Field(..., description="Shape center (x, y) in pixel coordinates")
    fill: tuple[float, float, float] = Field(..., description="Foreground RGB in [-1, 1]")
    background: tuple[float, float, float] = Field(..., description="Background RGB in [-1, 1]")
    stripe_frequency: float | None = Field(default=None, description="Stripe cycles per pixel, None for flat fill")
    stripe_angle: float = 0.0
    stripe_phase: float = 0.0

    def _rect_extents(self) -> tuple[float, float, float]:
        half_w = self.size / math.sqrt(1.0 + self.aspect ** 2)
        half_h = half_w * self.aspect
        return half_w, half_h, CORNER_FRACTION * half_h

    def outline(self) -> np.ndarray:
        """ Closed outline as a [P, 2] array of (x, y) pixel coordinates. """
        match self.family:
            case 'ellipse':
                theta = np.linspace(0.0, 2.0 * np.pi, OUTLINE_POINTS, endpoint=False)
                local = np.stack([self.size * np.cos(theta), self.size * self.aspect * np.sin(theta)], axis=1)
            case 'rounded_rect':
                half_w, half_h, radius = self._rect_extents()
                arcs = []
                for quadrant, (sx, sy) in enumerate(((1, 1), (-1, 1), (-1, -1), (1, -1))):
                    theta = np.linspace(quadrant * np.pi / 2, (quadrant + 1) * np.pi / 2, OUTLINE_POINTS // 4)
                    cx, cy = sx * (half_w - radius), sy * (half_h - radius)
                    arcs.append(np.stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)], axis=1))
                local = np.concatenate(arcs)
            case 'ngon':
                theta = np.arange(self.sides) * 2.0 * np.pi / self.sides
                local = np.stack([self.size * np.cos(theta), self.size * self.aspect * np.sin(theta)], axis=1)
            case _:
                raise ValueError(f"Unknown shape family: {self.family}")
        cos_r, sin_r = math.cos(self.rotation), math.sin(self.rotation)
        rotation = np.array([[cos_r, -sin_r], [sin_r, cos_r]])
        return local @ rotation.T + np.asarray(self.center)

    def area(self) -> float:
        """ Analytic foreground area in square pixels. """
        match self.family:
            case 'ellipse':
                return math.pi * self.size * self.size * self.aspect
            case 'rounded_rect':
                half_w, half_h, radius = self._rect_extents()
                return 4.0 * half_w * half_h - (4.0 - math.pi) * radius * radius
            case 'ngon':
                return 0.5 * self.sides * self.size ** 2 * math.sin(2.0 * math.pi / self.sides) * self.aspect
        raise ValueError(f"Unknown shape family: {self.family}")


def area_bounds(family: Family, resolution: int) -> tuple[float, float]:
    """ Smallest and largest analytic area the sampler can produce for a family. """
    r_max = max_radius(resolution)
    corners = []
    for size in (SIZE_RANGE[0] * r_max, SIZE_RANGE[1] * r_max):
        for aspect in ASPECT_RANGE:
            for sides in ((3, 7) if family == 'ngon' else (0,)):
                spec = ShapeSpec(family=family, size=size, aspect=aspect, rotation=0.0, sides=sides,
                                 center=(0.0, 0.0), fill=(0.0, 0.0, 0.0), background=(0.0, 0.0, 0.0))
                corners.append(spec.area())
    return min(corners), max(corners)


def random_spec(rng: np.random.Generator, family: Family, resolution: int) -> ShapeSpec:
    r_max = max_radius(resolution)
    size = rng.uniform(*SIZE_RANGE) * r_max
    slack = (r_max - size) / math.sqrt(2.0)
    middle = (resolution - 1) / 2.0
    striped = rng.uniform() < 0.5
    return ShapeSpec(
        family=family,
        size=size,
        aspect=rng.uniform(*ASPECT_RANGE),
        rotation=rng.uniform(0.0, np.pi),
        sides=int(rng.integers(3, 8)) if family == 'ngon' else 0,
        center=(middle + rng.uniform(-slack, slack), middle + rng.uniform(-slack, slack)),
        fill=tuple(float(v) for v in rng.uniform(0.1, 1.0, size=3)),
        background=tuple(float(v) for v in rng.uniform(-1.0, -0.2, size=3)),
        stripe_frequency=float(rng.uniform(0.1, 0.25)) if striped else None,
        stripe_angle=float(rng.uniform(0.0, np.pi)),
        stripe_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
    )


def coverage(spec: ShapeSpec, resolution: int) -> np.ndarray:
    """ Per-pixel foreground coverage in [0, 1], from a supersampled polygon raster. """
    big = resolution * SUPERSAMPLE
    points = (spec.outline() + 0.5) * SUPERSAMPLE - 0.5
    mask = Image.new('L', (big, big), 0)
    ImageDraw.Draw(mask).polygon([tuple(p) for p in points.tolist()], fill=255)
    raster = np.asarray(mask, dtype=np.float64) / 255.0
    return raster.reshape(resolution, SUPERSAMPLE, resolution, SUPERSAMPLE).mean(axis=(1, 3))


def render(spec: ShapeSpec, resolution: int) -> np.ndarray:
    """ [3, H, W] image in [-1, 1]. """
    cover = coverage(spec, resolution)
    fill = np.asarray(spec.fill).reshape(3, 1, 1) * np.ones((1, resolution, resolution))
    if spec.stripe_frequency is not None:
        ys, xs = np.mgrid[0:resolution, 0:resolution]
        phase = 2.0 * np.pi * spec.stripe_frequency * (xs * math.cos(spec.stripe_angle) + ys * math.sin(spec.stripe_angle))
        dark = np.sin(phase + spec.stripe_phase) > 0
        fill = np.where(dark[None], fill * 0.4, fill)
    background = np.asarray(spec.background).reshape(3, 1, 1)
    return background * (1.0 - cover) + fill * cover


def toy_specs(n: int, seed: int, resolution: int, family: Family | None = None) -> list[ShapeSpec]:
    rng = np.random.default_rng(seed)
    chosen = family or FAMILIES[int(rng.integers(len(FAMILIES)))]
    return [random_spec(rng, chosen, resolution) for _ in range(n)]


def gen_toy(n: int, seed: int, resolution: int, family: Family | None = None) -> Dataset:
    """
    n deterministic renders of one shape family (drawn from the seed unless given),
    varying geometry, color and stripe texture.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    specs = toy_specs(n, seed, resolution, family)
    logger.debug(f'rendering {n} toy {specs[0].family} images at {resolution}px (seed {seed})')
    return Dataset(images=np.stack([render(spec, resolution) for spec in specs]),
                   names=tuple(f'img_{i:05d}.png' for i in range(n)))


def write_toy(n: int, seed: int, resolution: int, root: str) -> str:
    """ Write `<root>/toy/<seed>/img_%05d.png` and return the folder. """
    folder = os.path.join(root, 'toy', str(seed))
    dataset = gen_toy(n, seed, resolution)
    for name, image in zip(dataset.names, dataset.images):
        save_png(image, os.path.join(folder, name))
    logger.info(f'wrote {n} toy images to {folder}')
    return folder
