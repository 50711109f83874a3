"""Deterministic synthetic scenes: piecewise-planar depth with an aligned
segmentation mask, a luminance image, and sparse depth sampling."""

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import SparseDepth

LAYOUTS = ("vertical_strips", "grid_tiles", "random_rectangles")
TEXTURES = ("flat", "per_region_shade", "noise_texture")
PROTOCOLS = ("uniform_random", "scanlines")

# additive sample noise can push a measurement to or below zero; measured
# depths are clamped to this floor to stay strictly positive
NOISE_FLOOR_M = 1e-6


@dataclass
class SceneSpec:
    """Recipe for one synthetic scene.

    Depth inside region r is the plane a*x + b*y + c (x = column index,
    y = row index, meters), clipped into depth_range. plane_params may be
    None, in which case gentle in-range planes are drawn from the seed.
    """

    height: int = 64
    width: int = 64
    region_count: int = 2
    plane_params: list = None
    layout: str = "vertical_strips"
    depth_range: tuple = (1.0, 9.0)
    texture_mode: str = "flat"
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ValueError(f"scene must be at least 2x2, got {self.height}x{self.width}")
        if self.region_count < 1:
            raise ValueError(f"region count must be >= 1, got {self.region_count}")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.texture_mode not in TEXTURES:
            raise ValueError(f"texture mode must be one of {TEXTURES}, got {self.texture_mode!r}")
        lo, hi = self.depth_range
        if not (0 < lo < hi):
            raise ValueError(f"depth range must satisfy 0 < min < max, got {self.depth_range}")
        if self.noise_std < 0:
            raise ValueError(f"noise std must be >= 0, got {self.noise_std}")
        if self.plane_params is not None:
            params = [tuple(float(v) for v in p) for p in self.plane_params]
            if len(params) != self.region_count or any(len(p) != 3 for p in params):
                raise ValueError("plane_params must hold one (a, b, c) per region")
            self.plane_params = params


@dataclass
class SamplingSpec:
    """How sparse measurements are drawn from ground truth."""

    protocol: str = "uniform_random"
    n: int = 200
    beam_count: int = 4

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.protocol == "uniform_random" and self.n < 1:
            raise ValueError(f"sample count must be >= 1, got {self.n}")
        if self.protocol == "scanlines" and self.beam_count < 1:
            raise ValueError(f"beam count must be >= 1, got {self.beam_count}")


@dataclass
class Scene:
    gt: np.ndarray
    mask: np.ndarray
    image: np.ndarray
    clipped: bool = False  # some plane left depth_range and was clipped


def _layout_labels(spec) -> np.ndarray:
    h, w, r = spec.height, spec.width, spec.region_count
    labels = np.zeros((h, w), dtype=np.int64)
    if spec.layout == "vertical_strips":
        for lab, cols in enumerate(np.array_split(np.arange(w), r)):
            labels[:, cols] = lab
        return labels
    if spec.layout == "grid_tiles":
        rows = max(d for d in range(1, int(math.isqrt(r)) + 1) if r % d == 0)
        cols = r // rows
        row_bands = np.array_split(np.arange(h), rows)
        col_bands = np.array_split(np.arange(w), cols)
        for br, rband in enumerate(row_bands):
            for bc, cband in enumerate(col_bands):
                labels[np.ix_(rband, cband)] = br * cols + bc
        return labels
    rng = np.random.default_rng([spec.seed, 0])
    for _ in range(50):
        labels[:] = 0
        for lab in range(1, r):
            rh = int(rng.integers(max(2, h // 6), max(3, h // 2) + 1))
            rw = int(rng.integers(max(2, w // 6), max(3, w // 2) + 1))
            r0 = int(rng.integers(0, h - rh + 1))
            c0 = int(rng.integers(0, w - rw + 1))
            labels[r0:r0 + rh, c0:c0 + rw] = lab
        if np.unique(labels).size == r:
            return labels
    raise ValueError(f"could not place {r} visible rectangles on a {h}x{w} grid")


def _auto_planes(spec) -> np.ndarray:
    """Seed-drawn planes guaranteed to stay inside depth_range unclipped."""
    rng = np.random.default_rng([spec.seed, 1])
    lo, hi = spec.depth_range
    span = hi - lo
    params = np.zeros((spec.region_count, 3))
    for r in range(spec.region_count):
        c = rng.uniform(lo + 0.3 * span, hi - 0.3 * span)
        # split a 0.25 * span excursion budget between the two slopes
        ax = rng.uniform(-1.0, 1.0) * 0.125 * span / max(spec.width - 1, 1)
        by = rng.uniform(-1.0, 1.0) * 0.125 * span / max(spec.height - 1, 1)
        params[r] = (ax, by, c)
    return params


def generate_scene(spec: SceneSpec) -> Scene:
    """Build (ground truth, mask, luminance) deterministically from the spec.

    Mask labels index the plane parameters, so region boundaries in the mask
    coincide exactly with depth discontinuities between planes.
    """
    labels = _layout_labels(spec)
    if spec.plane_params is not None:
        params = np.asarray(spec.plane_params, dtype=np.float64)
    else:
        params = _auto_planes(spec)
    cols, rows_idx = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    depth = (params[labels, 0] * cols + params[labels, 1] * rows_idx
             + params[labels, 2])
    lo, hi = spec.depth_range
    clipped = bool(np.any(depth < lo) or np.any(depth > hi))
    depth = np.clip(depth, lo, hi)

    rng = np.random.default_rng([spec.seed, 2])
    if spec.texture_mode == "flat":
        image = np.full((spec.height, spec.width), 0.5)
    elif spec.texture_mode == "per_region_shade":
        shades = rng.uniform(0.15, 0.85, spec.region_count)
        image = shades[labels]
    else:
        # high-frequency texture with no relation to depth or regions
        image = 0.5 + 0.35 * rng.uniform(-1.0, 1.0, (spec.height, spec.width))
    return Scene(gt=depth, mask=labels, image=image, clipped=clipped)


def sample_sparse(gt, spec: SamplingSpec, noise_std=0.0, seed=0) -> SparseDepth:
    """Draw sparse measurements from a dense ground-truth map.

    uniform_random picks n distinct pixels; scanlines keeps every
    floor(H / beam_count)-th row in full. Gaussian noise of noise_std meters
    is added afterwards and measurements are clamped positive.
    """
    gt = np.asarray(gt, dtype=np.float64)
    h, w = gt.shape
    rng = np.random.default_rng([seed, 3])
    if spec.protocol == "uniform_random":
        if spec.n > h * w:
            raise ValueError(f"cannot draw {spec.n} samples from {h * w} pixels")
        flat = np.sort(rng.choice(h * w, size=spec.n, replace=False))
        rows, cols = flat // w, flat % w
    else:
        step = h // spec.beam_count
        if step < 1:
            raise ValueError(
                f"beam count {spec.beam_count} exceeds {h} rows")
        beam_rows = np.arange(spec.beam_count) * step
        rows = np.repeat(beam_rows, w)
        cols = np.tile(np.arange(w), spec.beam_count)
    depths = gt[rows, cols]
    if noise_std > 0:
        depths = depths + rng.normal(0.0, noise_std, depths.shape)
    depths = np.maximum(depths, NOISE_FLOOR_M)
    return SparseDepth.from_samples(h, w, rows, cols, depths)
