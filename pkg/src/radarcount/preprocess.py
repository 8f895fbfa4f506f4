"""Signal-level transforms: std maps, threshold zeroing, sigmoid weighting,
Butterworth filtering, and low-rank background suppression.

The per-cell temporal standard deviation is the saliency signal: people
fluctuate (breathing, micro-movement), clutter does not.  Everything here
is a pure transform; input cubes are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.special import expit

from .core import Dataset, RadarCube, clip_and_normalize

DEFAULT_TAU = 0.02
DEFAULT_STEEPNESS = 0.01
DEFAULT_BACKGROUND_RANK = 8

METHODS = (
    "none",
    "threshold_zero",
    "sigmoid_weight",
    "butterworth_bandpass",
    "two_stage_highpass",
    "background_suppress",
)


@dataclass(frozen=True)
class StdMap:
    """Per-cell standard deviation over a cube's frames."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("std map must be 2-D")
        if np.any(v < 0):
            raise ValueError("std values must be non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class WeightMap:
    values: np.ndarray


@dataclass(frozen=True)
class SigmoidParams:
    tau: float = DEFAULT_TAU
    s: float = DEFAULT_STEEPNESS

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("steepness must be positive")


def std_map(cube: RadarCube) -> StdMap:
    """Population standard deviation (divisor N) of each cell over frames."""
    if cube.frames < 2:
        raise ValueError("need at least 2 frames for a std map")
    a = np.asarray(cube.amplitudes, dtype=np.float64)
    return StdMap(values=a.std(axis=0, ddof=0))


def threshold_zero(cube: RadarCube, tau: float = DEFAULT_TAU) -> RadarCube:
    """Zero every cell whose temporal std is <= tau, across all frames."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    sm = std_map(cube).values
    mask = sm > tau  # equality zeroes the cell
    out = np.asarray(cube.amplitudes, dtype=np.float64) * mask[None, :, :]
    return cube.with_amplitudes(out)


def sigmoid_weight_map(sm: StdMap, p: SigmoidParams = SigmoidParams()) -> WeightMap:
    """w = 1 / (1 + exp(-(sigma - tau)/s)), elementwise and overflow-safe."""
    return WeightMap(values=expit((sm.values - p.tau) / p.s))


def apply_weight(cube: RadarCube, w: WeightMap) -> RadarCube:
    """Multiply every frame by the weight map."""
    wv = np.asarray(w.values, dtype=np.float64)
    if wv.shape != cube.amplitudes.shape[1:]:
        raise ValueError(
            f"weight map shape {wv.shape} does not match cube spatial "
            f"shape {cube.amplitudes.shape[1:]}"
        )
    out = np.asarray(cube.amplitudes, dtype=np.float64) * wv[None, :, :]
    return cube.with_amplitudes(out)


def sigmoid_weight(cube: RadarCube, p: SigmoidParams = SigmoidParams()) -> RadarCube:
    """Convenience: std map -> sigmoid weights -> weighted cube."""
    return apply_weight(cube, sigmoid_weight_map(std_map(cube), p))


@dataclass(frozen=True)
class IirFilter:
    """Cascaded biquads (second-order sections) plus a design descriptor."""

    sections: np.ndarray  # (n, 6) sos rows: b0 b1 b2 a0 a1 a2
    design: dict

    def __post_init__(self):
        sos = np.atleast_2d(np.asarray(self.sections, dtype=np.float64))
        if sos.shape[1] != 6:
            raise ValueError("sos rows must have 6 coefficients")
        for row in sos:
            poles = np.roots(row[3:])
            if np.any(np.abs(poles) >= 1.0):
                raise ValueError("unstable section: pole on or outside the "
                                 "unit circle")
        sos.flags.writeable = False
        object.__setattr__(self, "sections", sos)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(row[3:]) for row in self.sections])

    def gain_at(self, freq_hz: float) -> float:
        fs = self.design["sample_rate"]
        w = 2 * np.pi * freq_hz / fs
        _, h = signal.sosfreqz(self.sections, worN=[w])
        return float(np.abs(h[0]))


def design_butterworth_bandpass(order: int = 4, lo: float = 0.1,
                                hi: float = 0.5,
                                fs: float = 8.57) -> IirFilter:
    """Butterworth band-pass from an order-`order` analog prototype via the
    bilinear transform with frequency prewarping (-3 dB at both edges)."""
    nyq = fs / 2
    if not (0 < lo < hi < nyq):
        raise ValueError(
            f"cutoffs must satisfy 0 < {lo} < {hi} < Nyquist limit {nyq:.2f} Hz"
        )
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return IirFilter(sections=sos, design={
        "kind": "butterworth_bandpass", "order": order,
        "cutoffs": (lo, hi), "sample_rate": fs,
    })


@dataclass(frozen=True)
class TwoStageHighpass:
    """8th-order high-pass (0.05 Hz) cascaded with a 2nd-order one (0.1 Hz);
    outputs blended 0.7:0.3.  `wiring` selects cascade (y2 = stage2(y1)) or
    parallel (y2 = stage2(x)) combination."""

    stage1: IirFilter
    stage2: IirFilter
    weights: tuple = (0.7, 0.3)
    wiring: str = "cascade"

    def __post_init__(self):
        if self.wiring not in ("cascade", "parallel"):
            raise ValueError("wiring must be 'cascade' or 'parallel'")


def design_two_stage_highpass(fs: float = 8.57,
                              wiring: str = "cascade") -> TwoStageHighpass:
    stage1 = IirFilter(
        sections=signal.butter(8, 0.05, btype="highpass", fs=fs, output="sos"),
        design={"kind": "butterworth_highpass", "order": 8,
                "cutoffs": (0.05,), "sample_rate": fs},
    )
    stage2 = IirFilter(
        sections=signal.butter(2, 0.1, btype="highpass", fs=fs, output="sos"),
        design={"kind": "butterworth_highpass", "order": 2,
                "cutoffs": (0.1,), "sample_rate": fs},
    )
    return TwoStageHighpass(stage1=stage1, stage2=stage2, wiring=wiring)


def _filtfilt(x: np.ndarray, filt: IirFilter, axis: int = 0) -> np.ndarray:
    # forward-backward with reflective edge padding (zero net phase);
    # scipy's sos kernel needs a writable coefficient array
    return signal.sosfiltfilt(filt.sections.copy(), x, axis=axis,
                              padtype="even")


def _apply_filter(x: np.ndarray, f) -> np.ndarray:
    if isinstance(f, IirFilter):
        return _filtfilt(x, f)
    if isinstance(f, TwoStageHighpass):
        y1 = _filtfilt(x, f.stage1)
        y2 = _filtfilt(y1 if f.wiring == "cascade" else x, f.stage2)
        return f.weights[0] * y1 + f.weights[1] * y2
    raise TypeError(f"unsupported filter type {type(f).__name__}")


def _n_sections(f) -> int:
    if isinstance(f, IirFilter):
        return len(f.sections)
    return max(len(f.stage1.sections), len(f.stage2.sections))


def filter_cube(cube: RadarCube, f, renormalize: bool = True) -> RadarCube:
    """Zero-phase filter every cell's time series independently.

    With `renormalize` the output is min-max rescaled to [0, 1] per cube
    (the downstream model expects that range); disable it to inspect raw
    filter gains.
    """
    if cube.frames < 3 * _n_sections(f):
        raise ValueError(
            f"need at least {3 * _n_sections(f)} frames, got {cube.frames}"
        )
    y = _apply_filter(np.asarray(cube.amplitudes, dtype=np.float64), f)
    if renormalize:
        vmin, vmax = y.min(), y.max()
        y = np.zeros_like(y) if vmax - vmin < 1e-12 else (y - vmin) / (vmax - vmin)
    return cube.with_amplitudes(y)


@dataclass(frozen=True)
class BackgroundModel:
    """Mean frame plus an orthonormal low-rank basis fit on 0-person cubes."""

    mean: np.ndarray           # (range, azimuth)
    basis: np.ndarray          # (rank, range, azimuth), orthonormal flattened
    rank: int

    def __post_init__(self):
        if self.rank != len(self.basis):
            raise ValueError("rank must equal number of basis frames")
        if self.rank:
            flat = self.basis.reshape(self.rank, -1)
            gram = flat @ flat.T
            if not np.allclose(gram, np.eye(self.rank), atol=1e-8):
                raise ValueError("basis is not orthonormal")


def fit_background(backgrounds: Dataset, rank: int = DEFAULT_BACKGROUND_RANK,
                   seed: int = 0, n_iter: int = 200) -> BackgroundModel:
    """Fit mean + top-`rank` directions of mean-centered background frames.

    Uses orthogonal (subspace) power iteration on the stacked frames of all
    0-person cubes; deterministic for a fixed seed.
    """
    for cube in backgrounds.cubes:
        if cube.meta.label != 0:
            raise ValueError("fit_background requires 0-person cubes only")
    if not backgrounds.cubes:
        raise ValueError("no background cubes")
    shape = backgrounds.cubes[0].amplitudes.shape[1:]
    frames = np.concatenate(
        [np.asarray(c.amplitudes, dtype=np.float64).reshape(c.frames, -1)
         for c in backgrounds.cubes], axis=0)
    if frames.shape[0] < rank + 1:
        raise ValueError(f"need at least {rank + 1} frames, got "
                         f"{frames.shape[0]}")
    mean = frames.mean(axis=0)
    if rank == 0:
        return BackgroundModel(mean=mean.reshape(shape),
                               basis=np.zeros((0, *shape)), rank=0)
    x = frames - mean
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((x.shape[1], rank)))
    for _ in range(n_iter):
        q, _ = np.linalg.qr(x.T @ (x @ q))
    # fix sign per direction so the result is reproducible
    for j in range(rank):
        k = int(np.argmax(np.abs(q[:, j])))
        if q[k, j] < 0:
            q[:, j] = -q[:, j]
    return BackgroundModel(mean=mean.reshape(shape),
                           basis=q.T.reshape(rank, *shape), rank=rank)


def suppress_background(cube: RadarCube, m: BackgroundModel,
                        renormalize: bool = True) -> RadarCube:
    """Subtract mean + low-rank projection per frame; output |residual|."""
    if cube.amplitudes.shape[1:] != m.mean.shape:
        raise ValueError(
            f"cube spatial shape {cube.amplitudes.shape[1:]} does not match "
            f"model shape {m.mean.shape}"
        )
    x = np.asarray(cube.amplitudes, dtype=np.float64).reshape(cube.frames, -1)
    centered = x - m.mean.ravel()
    if m.rank:
        flat = m.basis.reshape(m.rank, -1)
        centered = centered - (centered @ flat.T) @ flat
    resid = np.abs(centered)
    out = cube.with_amplitudes(resid.reshape(cube.amplitudes.shape))
    if renormalize:
        out, _ = clip_and_normalize(out)
    return out


def apply_method(cube: RadarCube, method: str,
                 tau: float = DEFAULT_TAU, s: float = DEFAULT_STEEPNESS,
                 background: BackgroundModel | None = None) -> RadarCube:
    """Dispatch on the preprocessing method selector."""
    if method == "none":
        return cube
    if method == "threshold_zero":
        return threshold_zero(cube, tau)
    if method == "sigmoid_weight":
        return sigmoid_weight(cube, SigmoidParams(tau=tau, s=s))
    if method == "butterworth_bandpass":
        return filter_cube(cube, design_butterworth_bandpass())
    if method == "two_stage_highpass":
        return filter_cube(cube, design_two_stage_highpass())
    if method == "background_suppress":
        if background is None:
            raise ValueError("background_suppress needs a fitted model")
        return suppress_background(cube, background)
    raise ValueError(f"unknown preprocessing method {method!r}")
