"""Synthetic range-azimuth scene generator.

Builds radar cubes out of three ingredients: static clutter cells with a
small per-frame jitter, i.i.d. background noise, and person blobs whose
amplitude breathes sinusoidally and whose center can wander on a seeded
random walk.  Environment suites model layout shift (same room statistics,
different clutter) and space shift (different gain, noise, and clutter
density) so cross-environment experiments can run at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .core import (
    ACTIVITIES,
    DEFAULT_AZIMUTH_BINS,
    DEFAULT_FRAMES,
    DEFAULT_RANGE_BINS,
    SAMPLE_RATE_HZ,
    Dataset,
    RadarCube,
    SampleMeta,
)


@dataclass(frozen=True)
class EnvironmentSpec:
    """Static properties of one room layout."""

    name: str
    # (range_idx, azimuth_idx, mean_amplitude) or
    # (range_idx, azimuth_idx, mean_amplitude, jitter) to override the
    # environment-wide clutter_jitter for that cell (e.g. a fan or vent
    # that sways much more than furniture).
    clutter_cells: tuple = ()
    clutter_jitter: float = 0.0  # std-dev of per-frame clutter sway
    noise_floor: float = 0.0     # std-dev of i.i.d. background noise
    drift_floor: float = 0.0     # std-dev of slow per-cell receiver drift
    baseline: float = 0.0        # static receiver pedestal added everywhere
    gain: float = 1.0
    # preferred standing spots (desks, workstations): persons who are not
    # walking usually occupy one of these (range_idx, azimuth_idx) positions
    seats: tuple = ()
    # (r_lo, r_hi, a_lo, a_hi) inclusive cell boxes people cannot occupy
    # (furniture banks); person placement keeps a clearance around them
    obstacles: tuple = ()

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.clutter_jitter < 0 or self.noise_floor < 0 \
                or self.drift_floor < 0 or self.baseline < 0:
            raise ValueError("jitter, noise_floor, drift_floor, and "
                             "baseline must be non-negative")
        for cell in self.clutter_cells:
            if cell[2] < 0:
                raise ValueError("clutter mean_amplitude must be >= 0")
            if len(cell) > 3 and cell[3] < 0:
                raise ValueError("clutter jitter must be >= 0")


@dataclass(frozen=True)
class PersonSpec:
    """One person: a fluctuating Gaussian blob, optionally pacing.

    Amplitude fluctuation has two parts: a small sinusoidal breathing
    modulation inside the respiration band and a larger, faster body
    micro-motion (fidgeting) well above it.
    """

    center: tuple  # (range_idx, azimuth_idx), real-valued
    extent: tuple = (1.2, 6.0)  # (range sigma, azimuth sigma) in bins
    peak_amplitude: float = 0.6
    breathing_freq: float = 0.3  # Hz, respiration band
    breathing_depth: float = 0.01  # fraction of peak
    motion_freq: float = 1.3     # Hz, body micro-motion
    motion_depth: float = 0.3    # fraction of peak
    walk_speed: float = 0.0      # bins/frame, 0 = standing
    path_seed: int = 0

    def __post_init__(self):
        if not (0.2 <= self.breathing_freq <= 0.5):
            raise ValueError("breathing_freq must lie in [0.2, 0.5] Hz")
        if self.motion_depth > 0 and not (0.8 <= self.motion_freq <= 2.5):
            raise ValueError("motion_freq must lie in [0.8, 2.5] Hz")
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValueError("extent must be positive")


@dataclass(frozen=True)
class SceneConfig:
    env: EnvironmentSpec
    persons: tuple = ()
    frames: int = DEFAULT_FRAMES
    range_bins: int = DEFAULT_RANGE_BINS
    azimuth_bins: int = DEFAULT_AZIMUTH_BINS
    sample_rate: float = SAMPLE_RATE_HZ
    seed: int = 0
    activity: str = "standing"

    def __post_init__(self):
        if len(self.persons) > 3:
            raise ValueError("at most 3 persons")
        for p in self.persons:
            if self.sample_rate <= 2 * max(p.breathing_freq, p.motion_freq):
                raise ValueError("sample_rate must exceed twice every "
                                 "modulation frequency")


def _person_track(p: PersonSpec, frames: int, nr: int, na: int) -> np.ndarray:
    """Per-frame (range, azimuth) centers.

    Walking is slow, smooth pacing along azimuth at constant speed with
    reflection at the edges; the initial direction comes from path_seed.
    """
    track = np.empty((frames, 2))
    track[:] = p.center
    if p.walk_speed <= 0:
        return track
    rng = np.random.default_rng(p.path_seed)
    direction = 1.0 if rng.uniform() < 0.5 else -1.0
    lim = na - 1.0
    pos = float(p.center[1])
    for t in range(1, frames):
        pos += direction * p.walk_speed
        if pos < 0:
            pos, direction = -pos, -direction
        elif pos > lim:
            pos, direction = 2 * lim - pos, -direction
        track[t, 1] = pos
    return track


def generate_cube(cfg: SceneConfig) -> RadarCube:
    """Render one cube. Pure function of the config (seeded RNG only)."""
    nr, na, nt = cfg.range_bins, cfg.azimuth_bins, cfg.frames
    env = cfg.env
    for p in cfg.persons:
        if not (0 <= p.center[0] <= nr - 1 and 0 <= p.center[1] <= na - 1):
            raise ValueError(f"person center {p.center} outside "
                             f"{nr}x{na} grid")
    rng = np.random.default_rng(cfg.seed)
    amp = np.zeros((nt, nr, na))

    if env.noise_floor > 0:
        # receiver noise state varies recording to recording (temperature,
        # AGC); one multiplier per cube
        noise_state = rng.uniform(0.4, 1.9)
        amp += rng.normal(0.0, noise_state * env.noise_floor, size=amp.shape)

    if env.drift_floor > 0:
        # per-cell receiver/vibration drift: a resonant AR(2) centered
        # near 0.3 Hz, scaled to stationary std drift_floor, vectorized
        # over the whole grid (burn-in discards the start-up transient)
        rho = 0.9
        omega = 2 * np.pi * 0.3 / cfg.sample_rate
        a1, a2 = 2 * rho * np.cos(omega), -rho ** 2
        var = (1 - a2) / ((1 + a2) * ((1 - a2) ** 2 - a1 ** 2))
        drift_state = rng.uniform(0.6, 1.7)
        sigma_e = drift_state * env.drift_floor / np.sqrt(var)
        burn = 40
        innov = rng.normal(0.0, sigma_e, size=(nt + burn, nr, na))
        drift = np.zeros_like(innov)
        for t in range(2, nt + burn):
            drift[t] = a1 * drift[t - 1] + a2 * drift[t - 2] + innov[t]
        amp += drift[burn:]

    for cell in env.clutter_cells:
        r, a, m = cell[0], cell[1], cell[2]
        jitter = cell[3] if len(cell) > 3 else env.clutter_jitter
        series = np.full(nt, float(m))
        if jitter > 0:
            # clutter sway is slow, not white: AR(1) with stationary std
            # equal to the cell's jitter, so its power sits at low
            # frequencies
            rho = 0.75
            innov = rng.normal(0.0, jitter * np.sqrt(1 - rho ** 2), size=nt)
            sway = np.empty(nt)
            sway[0] = rng.normal(0.0, jitter)
            for t in range(1, nt):
                sway[t] = rho * sway[t - 1] + innov[t]
            series = series + sway
        amp[:, int(r), int(a)] += series

    rr = np.arange(nr)[:, None]
    aa = np.arange(na)[None, :]
    t_idx = np.arange(nt)
    pfield = np.zeros_like(amp)
    for p in cfg.persons:
        breath_phase = rng.uniform(0.0, 2 * np.pi)
        motion_phase = rng.uniform(0.0, 2 * np.pi)
        envelope = p.peak_amplitude * (
            1.0
            + p.breathing_depth
            * np.sin(2 * np.pi * p.breathing_freq * t_idx / cfg.sample_rate
                     + breath_phase)
            + p.motion_depth
            * np.sin(2 * np.pi * p.motion_freq * t_idx / cfg.sample_rate
                     + motion_phase)
        )
        track = _person_track(p, nt, nr, na)
        sr, sa = p.extent
        for t in range(nt):
            cr, ca = track[t]
            # super-Gaussian footprint: flat core, sharp falloff
            d2 = ((rr - cr) ** 2) / (2 * sr ** 2) \
                + ((aa - ca) ** 2) / (2 * sa ** 2)
            blob = np.exp(-d2 ** 8)
            pfield[t] += envelope[t] * blob

    amp += pfield
    amp = np.abs(amp + env.baseline) * env.gain
    meta = SampleMeta(
        label=len(cfg.persons),
        environment=env.name,
        activity=cfg.activity,
        seed=cfg.seed,
    )
    return RadarCube(amplitudes=amp, meta=meta)


def _random_clutter(rng, n_cells: int, nr: int, na: int,
                    amp_range=(0.4, 0.9), region="corner",
                    exclude=()) -> tuple:
    """Static reflectors, sampled without replacement: wall cells near the
    azimuth edges ("corner", clear of the wall span used by furniture
    banks) or furniture in the central area where people move ("central")."""
    if region == "corner":
        spots = [(r, a) for r in range(nr) for a in range(na)
                 if (r < 2 or r > nr - 3) and (a < 10 or a > na - 11)]
    else:
        spots = [(r, a) for r in range(3, nr - 3) for a in range(10, na - 10)]
    taken = {(c[0], c[1]) for c in exclude}
    spots = [s for s in spots if s not in taken]
    idx = rng.choice(len(spots), size=n_cells, replace=False)
    return tuple((spots[i][0], spots[i][1], float(rng.uniform(*amp_range)))
                 for i in idx)


def _random_seats(rng, n_seats: int, nr: int, na: int) -> tuple:
    """Workstation positions in the central region: evenly spaced along
    azimuth with a random offset per seat, at a random depth."""
    lo, hi = 9.0, na - 10.0
    pitch = (hi - lo) / n_seats
    seats = []
    for k in range(n_seats):
        seats.append((float(rng.uniform(4.0, nr - 4.5)),
                      float(lo + (k + 0.5) * pitch + rng.uniform(-2.0, 2.0))))
    return tuple(seats)


def _random_persons(rng, count: int, activity: str, nr: int, na: int,
                    seats=(), obstacles=(), peak_range=(0.62, 0.68)) -> tuple:
    persons = []
    open_seats = [s for s in seats if not _blocked(s, obstacles)]
    for _ in range(count):
        walking = activity == "walking" or (
            activity == "mixed" and rng.uniform() < 0.10)
        if not walking and open_seats and rng.uniform() < 0.9:
            seat = open_seats.pop(int(rng.integers(0, len(open_seats))))
            center = (float(np.clip(seat[0] + rng.normal(0, 0.25),
                                    4.0, nr - 4.5)),
                      float(np.clip(seat[1] + rng.normal(0, 0.25),
                                    8.0, na - 9.0)))
        else:
            for _try in range(200):
                center = (float(rng.uniform(4.0, nr - 4.5)),
                          float(rng.uniform(8.0, na - 9.0)))
                if not _blocked(center, obstacles):
                    break
        persons.append(PersonSpec(
            center=center,
            extent=(1.75, 9.5),
            peak_amplitude=float(rng.uniform(*peak_range)),
            breathing_freq=float(rng.uniform(0.2, 0.5)),
            breathing_depth=float(rng.uniform(0.003, 0.008)),
            motion_freq=float(rng.uniform(2.0, 2.5)),
            motion_depth=float(rng.uniform(0.31, 0.35)),
            walk_speed=0.02 if walking else 0.0,
            path_seed=int(rng.integers(0, 2**32)),
        ))
    return tuple(persons)


# Shared room statistics for the layout-shift pair (A', B'); the space-shift
# environment (C') overrides all three.
_SHARED_NOISE = 0.015
_SHARED_DRIFT = 0.017
_SHARED_BASELINE = 0.08
_SHARED_JITTER_FRAC = 0.022  # 2.2% of mean clutter amplitude
_SHARED_GAIN = 1.0

N_LAYOUTS_A = 4


def _furniture_patch(rng, nr: int, na: int, amp_range=(0.9, 1.15),
                     origin=None):
    """A contiguous block of bright static cells (desk bank, cabinet row)
    in the central area.  Returns (cells, bounding_box); `origin` pins the
    block to a known spot instead of drawing one."""
    if origin is None:
        r0 = int(rng.integers(3, nr - 6))
        a0 = int(rng.integers(10, na - 30))
    else:
        r0, a0 = origin
    cells = tuple((r, a, float(rng.uniform(*amp_range)), 0.004)
                  for r in range(r0, r0 + 4) for a in range(a0, a0 + 20))
    return cells, (r0, r0 + 3, a0, a0 + 19)


# clearance (range bins, azimuth bins) between a person center and a
# furniture box: matches the flat-topped blob footprint
_CLEARANCE = (3.5, 14.0)


def _blocked(center, obstacles) -> bool:
    r, a = center
    return any(box[0] - _CLEARANCE[0] <= r <= box[1] + _CLEARANCE[0]
               and box[2] - _CLEARANCE[1] <= a <= box[3] + _CLEARANCE[1]
               for box in obstacles)


def _swaying_fixtures(rng, n_cells: int, nr: int, na: int,
                      jitter: float = 0.09) -> tuple:
    """Building fixtures that are identical in every layout of a space, so
    they carry neither person nor layout signal: a couple of strongly
    swaying reflectors (fan, vent) plus two bright static anchors (metal
    corner reflectors) that pin the amplitude scale of every recording."""
    cells = _random_clutter(rng, n_cells, nr, na, amp_range=(0.5, 0.8))
    swaying = tuple((r, a, m, jitter) for r, a, m in cells)
    anchors = tuple((r, a, 2.3, 0.004) for r, a, _ in
                    _random_clutter(rng, 4, nr, na, amp_range=(1.0, 1.1),
                                    exclude=swaying))
    return swaying + anchors


def make_layouts(seed: int) -> dict:
    """Environment specs for the suite: four A' layouts, one B', one C'."""
    rng = np.random.default_rng(seed)
    envs = {}
    mean_amp = 0.65
    jitter = _SHARED_JITTER_FRAC * mean_amp
    # the A'/B' building shares fixed strongly-swaying fixtures and fixed
    # workstation positions; only the movable clutter differs by layout
    fixtures = _swaying_fixtures(rng, 4, DEFAULT_RANGE_BINS,
                                 DEFAULT_AZIMUTH_BINS)
    seats = _random_seats(rng, 6, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS)
    # the furniture bank and movable-clutter spots sit at the same places
    # in every layout; what differs between layouts is which objects occupy
    # the spots, i.e. how much each one sways
    patch, box = _furniture_patch(rng, DEFAULT_RANGE_BINS,
                                  DEFAULT_AZIMUTH_BINS)
    spots = (_random_clutter(rng, 6, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS,
                             exclude=fixtures)
             + _random_clutter(rng, 8, DEFAULT_RANGE_BINS,
                               DEFAULT_AZIMUTH_BINS, amp_range=(0.3, 0.5),
                               region="central", exclude=patch))
    for i in range(N_LAYOUTS_A):
        envs[f"Aprime-L{i}"] = EnvironmentSpec(
            name=f"Aprime-L{i}",
            clutter_cells=fixtures
            + tuple((r, a, m, float(rng.uniform(0.012, 0.055)))
                    for r, a, m in spots)
            + patch,
            clutter_jitter=jitter,
            noise_floor=_SHARED_NOISE,
            drift_floor=_SHARED_DRIFT,
            baseline=_SHARED_BASELINE,
            gain=_SHARED_GAIN,
            seats=seats,
            obstacles=(box,),
        )
    # same floor plan as A' (people avoid the same furniture bank), but the
    # objects themselves are different
    patch_b, box_b = _furniture_patch(rng, DEFAULT_RANGE_BINS,
                                      DEFAULT_AZIMUTH_BINS,
                                      amp_range=(0.5, 1.5),
                                      origin=(box[0], box[2]))
    envs["Bprime"] = EnvironmentSpec(
        name="Bprime",
        clutter_cells=(fixtures_b := _swaying_fixtures(
            rng, 4, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS))
        + _random_clutter(rng, 6, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS,
                          exclude=fixtures_b)
        + _random_clutter(rng, 90, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS,
                          amp_range=(0.5, 1.1), region="central",
                          exclude=patch_b)
        + patch_b,
        clutter_jitter=jitter,
        noise_floor=_SHARED_NOISE,
        drift_floor=_SHARED_DRIFT,
        baseline=0.18,
        gain=_SHARED_GAIN,
        seats=seats,
        obstacles=(box_b,),
    )
    # space shift: different gain, noisier floor, denser clutter, its own
    # fixtures
    envs["Cprime"] = EnvironmentSpec(
        name="Cprime",
        clutter_cells=(fixtures_c := _swaying_fixtures(
            rng, 4, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS))
        + _random_clutter(rng, 14, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS,
                          amp_range=(0.3, 1.1), exclude=fixtures_c),
        clutter_jitter=0.02,
        noise_floor=0.012,
        drift_floor=0.02,
        baseline=0.1,
        gain=0.6,
        seats=_random_seats(rng, 6, DEFAULT_RANGE_BINS, DEFAULT_AZIMUTH_BINS),
    )
    return envs


def _generate_env_dataset(envs: list, seed: int, n_per_class: int) -> Dataset:
    rng = np.random.default_rng(seed)
    cubes = []
    for label in (0, 1, 2, 3):
        for i in range(n_per_class):
            env = envs[i % len(envs)]
            activity = ACTIVITIES[i % len(ACTIVITIES)]
            persons = _random_persons(rng, label, activity,
                                      DEFAULT_RANGE_BINS,
                                      DEFAULT_AZIMUTH_BINS,
                                      seats=env.seats,
                                      obstacles=env.obstacles)
            cfg = SceneConfig(
                env=env, persons=persons, seed=int(rng.integers(0, 2**32)),
                activity=activity,
            )
            cubes.append(generate_cube(cfg))
    return Dataset(cubes=cubes)


def make_environment_suite(seed: int, n_per_class: int,
                           n_per_class_c: int | None = None):
    """Three datasets: A' (four layouts), B' (layout shift), C' (space shift).

    A' and B' share gain and noise statistics and differ only in clutter
    cells; C' additionally changes gain, noise floor, and clutter density.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    envs = make_layouts(seed)
    a_envs = [envs[f"Aprime-L{i}"] for i in range(N_LAYOUTS_A)]
    ds_a = _generate_env_dataset(a_envs, seed + 1, n_per_class)
    ds_b = _generate_env_dataset([envs["Bprime"]], seed + 2, n_per_class)
    ds_c = _generate_env_dataset([envs["Cprime"]], seed + 3,
                                 n_per_class_c or n_per_class)
    return ds_a, ds_b, ds_c


def scene_config_to_json(cfg: SceneConfig) -> str:
    return json.dumps(asdict(cfg), indent=2, sort_keys=True)


def scene_config_from_json(text: str) -> SceneConfig:
    d = json.loads(text)
    env = d.pop("env")
    env["clutter_cells"] = tuple(tuple(c) for c in env["clutter_cells"])
    env["seats"] = tuple(tuple(s) for s in env.get("seats", ()))
    env["obstacles"] = tuple(tuple(b) for b in env.get("obstacles", ()))
    persons = tuple(
        PersonSpec(**{**p, "center": tuple(p["center"]),
                      "extent": tuple(p["extent"])})
        for p in d.pop("persons")
    )
    return SceneConfig(env=EnvironmentSpec(**env), persons=persons, **d)


def load_scene_config(path) -> SceneConfig:
    return scene_config_from_json(Path(path).read_text())
