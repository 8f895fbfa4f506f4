"""Core data types, dataset containers, and on-disk formats.

A radar sample is a cube of amplitudes indexed by (frame, range bin,
azimuth bin), default 60 x 12 x 91 (about 7 s at 8.57 Hz).  All types are
immutable values; every operation returns a new object.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

DEFAULT_FRAMES = 60
DEFAULT_RANGE_BINS = 12
DEFAULT_AZIMUTH_BINS = 91
SAMPLE_RATE_HZ = 8.57

ACTIVITIES = ("standing", "walking", "mixed")
SPLITS = ("train", "val", "test")

# Wire codes for the environment field.  Names other than A/B/C are
# synthetic environments; they all share code 3 (the name itself lives in
# the dataset manifest, not the cube file).
_ENV_CODES = {"A": 0, "B": 1, "C": 2}
_ENV_NAMES = {0: "A", 1: "B", 2: "C", 3: "synthetic"}

CUBE_MAGIC = b"RDC1"
CUBE_VERSION = 1
# magic 4s | version, frames, range, azimuth u32 | label i32 |
# environment, activity, has_seed u32 | seed u64  -> 44 bytes
_HEADER_FMT = "<4sIIIIiIIIQ"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)


class CubeFormatError(ValueError):
    """Raised when a cube file is malformed; message names the byte offset."""


@dataclass(frozen=True)
class SampleMeta:
    """Label and provenance attached to one radar cube."""

    label: int
    environment: str = "A"
    activity: str = "standing"
    seed: int | None = None
    augment: tuple | None = None  # in-memory annotation, not serialized

    def __post_init__(self):
        if self.label not in (0, 1, 2, 3):
            raise ValueError(f"label must be in 0..3, got {self.label}")
        if self.activity not in ACTIVITIES:
            raise ValueError(f"unknown activity {self.activity!r}")


@dataclass(frozen=True)
class RadarCube:
    """One sample: frames x range x azimuth amplitude array plus metadata."""

    amplitudes: np.ndarray
    meta: SampleMeta

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.float32)
        if a.ndim != 3:
            raise ValueError(f"amplitudes must be 3-D, got shape {a.shape}")
        if a.shape[0] < 3:
            raise ValueError("need at least 3 frames")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitudes must be finite")
        a = np.ascontiguousarray(a)
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @property
    def frames(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def range_bins(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def azimuth_bins(self) -> int:
        return self.amplitudes.shape[2]

    def with_amplitudes(self, amplitudes, **meta_changes) -> "RadarCube":
        meta = replace(self.meta, **meta_changes) if meta_changes else self.meta
        return RadarCube(amplitudes=amplitudes, meta=meta)


@dataclass(frozen=True)
class NormalizationParams:
    """Clip percentiles and extrema used for min-max scaling of one cube."""

    clip_lo: float
    clip_hi: float
    vmin: float
    vmax: float
    degenerate: bool = False


@dataclass
class Dataset:
    """Ordered list of cubes with optional per-cube split tags."""

    cubes: list[RadarCube]
    split: list[str | None] | None = None

    def __post_init__(self):
        if self.split is not None and len(self.split) != len(self.cubes):
            raise ValueError("split tags must match number of cubes")

    def __len__(self) -> int:
        return len(self.cubes)

    def labels(self) -> np.ndarray:
        return np.array([c.meta.label for c in self.cubes], dtype=int)

    def subset(self, tag: str) -> "Dataset":
        if self.split is None:
            raise ValueError("dataset has no split tags")
        cubes = [c for c, s in zip(self.cubes, self.split) if s == tag]
        return Dataset(cubes=cubes)


def write_cube(cube: RadarCube, path) -> None:
    """Write one cube in the binary RDC1 format (little-endian throughout)."""
    m = cube.meta
    env_code = _ENV_CODES.get(m.environment, 3)
    act_code = ACTIVITIES.index(m.activity)
    has_seed = int(m.seed is not None)
    header = struct.pack(
        _HEADER_FMT,
        CUBE_MAGIC,
        CUBE_VERSION,
        cube.frames,
        cube.range_bins,
        cube.azimuth_bins,
        m.label,
        env_code,
        act_code,
        has_seed,
        m.seed if m.seed is not None else 0,
    )
    payload = np.ascontiguousarray(cube.amplitudes, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_cube(path) -> RadarCube:
    """Read a cube written by :func:`write_cube`; inverse on all fields."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise CubeFormatError(
            f"truncated header: {len(raw)} bytes, need {HEADER_SIZE} (offset 0)"
        )
    (magic, version, frames, rng, azi, label, env_code, act_code,
     has_seed, seed) = struct.unpack_from(_HEADER_FMT, raw)
    if magic != CUBE_MAGIC:
        raise CubeFormatError(f"bad magic {magic!r} at offset 0")
    if version != CUBE_VERSION:
        raise CubeFormatError(f"unsupported version {version} at offset 4")
    if env_code not in _ENV_NAMES:
        raise CubeFormatError(f"bad environment code {env_code} at offset 28")
    if not 0 <= act_code < len(ACTIVITIES):
        raise CubeFormatError(f"bad activity code {act_code} at offset 32")
    n = frames * rng * azi
    expected = HEADER_SIZE + 4 * n
    if len(raw) != expected:
        raise CubeFormatError(
            f"payload size mismatch: file has {len(raw)} bytes, header "
            f"implies {expected} (offset {HEADER_SIZE})"
        )
    amp = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE, count=n)
    amp = amp.reshape(frames, rng, azi)
    meta = SampleMeta(
        label=label,
        environment=_ENV_NAMES[env_code],
        activity=ACTIVITIES[act_code],
        seed=int(seed) if has_seed else None,
    )
    return RadarCube(amplitudes=amp, meta=meta)


def write_manifest(ds: Dataset, paths: list, manifest_path) -> None:
    """Write one JSON object per line: {path, label, environment, activity, split}."""
    if len(paths) != len(ds.cubes):
        raise ValueError("one path per cube required")
    split = ds.split if ds.split is not None else [None] * len(ds.cubes)
    lines = []
    for cube, path, tag in zip(ds.cubes, paths, split):
        lines.append(json.dumps({
            "path": str(path),
            "label": cube.meta.label,
            "environment": cube.meta.environment,
            "activity": cube.meta.activity,
            "split": tag,
        }, sort_keys=True))
    Path(manifest_path).write_text("\n".join(lines) + "\n")


def read_manifest(manifest_path) -> Dataset:
    """Load cubes listed in a manifest; relative paths resolve against it."""
    base = Path(manifest_path).parent
    cubes, split = [], []
    for line in Path(manifest_path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        p = Path(rec["path"])
        if not p.is_absolute():
            p = base / p
        cube = read_cube(p)
        # manifest carries the authoritative environment name
        cube = cube.with_amplitudes(
            cube.amplitudes, environment=rec["environment"],
            activity=rec["activity"], label=rec["label"],
        )
        cubes.append(cube)
        split.append(rec.get("split"))
    return Dataset(cubes=cubes, split=split)


def _largest_remainder_counts(n: int, fractions) -> list[int]:
    exact = [f * n for f in fractions]
    base = [int(np.floor(e)) for e in exact]
    short = n - sum(base)
    # hand leftover samples to the largest fractional parts; ties go to the
    # earlier split so the result is deterministic
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def stratified_split(ds: Dataset, fractions, seed: int) -> Dataset:
    """Tag every cube train/val/test, preserving per-class proportions.

    Deterministic for a fixed seed; per-class counts are within one sample
    of the exact fractional split.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    labels = ds.labels()
    if len(labels) == 0:
        raise ValueError("empty dataset")
    present = set(labels.tolist())
    missing = [c for c in (0, 1, 2, 3) if c not in present]
    if missing:
        raise ValueError(f"classes with 0 samples: {missing}")
    rng = np.random.default_rng(seed)
    tags: list[str | None] = [None] * len(ds)
    for cls in sorted(present):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_tr, n_va, n_te = _largest_remainder_counts(len(idx), fractions)
        for i in idx[:n_tr]:
            tags[i] = "train"
        for i in idx[n_tr:n_tr + n_va]:
            tags[i] = "val"
        for i in idx[n_tr + n_va:]:
            tags[i] = "test"
        assert n_tr + n_va + n_te == len(idx)
    return Dataset(cubes=list(ds.cubes), split=tags)


def clip_and_normalize(cube: RadarCube) -> tuple[RadarCube, NormalizationParams]:
    """Clip to the cube's 0.1st-99.9th percentiles, then min-max map to [0, 1].

    A constant cube (max == min after clipping) maps to all zeros with the
    degenerate flag set.
    """
    a = np.asarray(cube.amplitudes, dtype=np.float64)
    lo, hi = np.percentile(a, [0.1, 99.9])
    clipped = np.clip(a, lo, hi)
    vmin = float(clipped.min())
    vmax = float(clipped.max())
    if vmax - vmin < 1e-12:
        params = NormalizationParams(float(lo), float(hi), vmin, vmax,
                                     degenerate=True)
        return cube.with_amplitudes(np.zeros_like(clipped)), params
    out = (clipped - vmin) / (vmax - vmin)
    params = NormalizationParams(float(lo), float(hi), vmin, vmax)
    return cube.with_amplitudes(out), params
