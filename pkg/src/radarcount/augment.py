"""Augmentation operators: spatial flips, random amplitude scaling, and
frame dropping with linear interpolation.  All deterministic under a seed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, RadarCube

FLIP_AXES = ("azimuth", "range", "both")
SCALE_RANGE = (0.95, 1.05)
# one frame dropped per temporal third; endpoints excluded so both
# neighbors of a dropped frame always exist
DROP_WINDOWS = ((1, 19), (20, 39), (40, 58))


@dataclass(frozen=True)
class AugmentSpec:
    flips: tuple = ()
    scale: bool = False
    scale_range: tuple = SCALE_RANGE
    frame_drop: bool = False
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError("scale range must satisfy 0 < lo <= hi")
        for f in self.flips:
            if f not in FLIP_AXES:
                raise ValueError(f"unknown flip axis {f!r}")


def flip(cube: RadarCube, axis: str) -> RadarCube:
    """Spatial reversal along azimuth, range, or both, same for every frame."""
    a = cube.amplitudes
    if axis == "azimuth":
        out = a[:, :, ::-1]
    elif axis == "range":
        out = a[:, ::-1, :]
    elif axis == "both":
        out = a[:, ::-1, ::-1]
    else:
        raise ValueError(f"unknown flip axis {axis!r}")
    return cube.with_amplitudes(out, augment=("flip", axis))


def random_scale(cube: RadarCube, seed: int,
                 lo: float = SCALE_RANGE[0],
                 hi: float = SCALE_RANGE[1]) -> RadarCube:
    """Multiply the whole cube by one factor drawn uniformly from [lo, hi]."""
    k = float(np.random.default_rng(seed).uniform(lo, hi))
    out = np.asarray(cube.amplitudes, dtype=np.float64) * k
    return cube.with_amplitudes(out, augment=("scale", k))


def drop_and_interpolate(cube: RadarCube, seed: int) -> RadarCube:
    """Replace one frame per temporal third by the mean of its neighbors.

    Neighbors are taken from the original cube even if adjacent frames were
    themselves drawn, so the result does not depend on replacement order.
    """
    if cube.frames != 60:
        raise ValueError(f"frame dropping is defined for 60-frame cubes, "
                         f"got {cube.frames}")
    rng = np.random.default_rng(seed)
    original = np.asarray(cube.amplitudes, dtype=np.float64)
    out = original.copy()
    dropped = []
    for lo, hi in DROP_WINDOWS:
        t = int(rng.integers(lo, hi + 1))
        out[t] = 0.5 * (original[t - 1] + original[t + 1])
        dropped.append(t)
    return cube.with_amplitudes(out, augment=("framedrop", tuple(dropped)))


def augment_dataset(ds: Dataset, spec: AugmentSpec) -> Dataset:
    """Append augmented copies of every cube; originals come first.

    Per-cube seeds derive from the spec seed XOR the cube index so cubes can
    be processed in parallel with identical results.
    """
    cubes = list(ds.cubes)
    for i, cube in enumerate(ds.cubes):
        seed = spec.seed ^ i
        for axis in spec.flips:
            cubes.append(flip(cube, axis))
        if spec.scale:
            cubes.append(random_scale(cube, seed, *spec.scale_range))
        if spec.frame_drop:
            cubes.append(drop_and_interpolate(cube, seed))
    return Dataset(cubes=cubes)
