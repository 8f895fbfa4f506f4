"""Render one synthetic scene and print a coarse ASCII view of the std map.

Usage: python3 demos/render_scene.py [seed]
"""

import sys

import numpy as np

from radarcount import (
    EnvironmentSpec,
    PersonSpec,
    SceneConfig,
    clip_and_normalize,
    generate_cube,
    std_map,
)

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

env = EnvironmentSpec(
    name="demo-room",
    clutter_cells=((2, 12, 0.8), (9, 70, 0.7), (5, 30, 0.5, 0.08)),
    clutter_jitter=0.015,
    noise_floor=0.015,
    drift_floor=0.017,
    baseline=0.08,
)
persons = (
    PersonSpec(center=(6.0, 25.0)),
    PersonSpec(center=(7.5, 60.0), walk_speed=0.02, path_seed=seed),
)
cube = generate_cube(SceneConfig(env=env, persons=persons, seed=seed,
                                 activity="mixed"))
cube, _ = clip_and_normalize(cube)
sm = std_map(cube).values

print(f"cube: {cube.frames} frames x {cube.range_bins} range x "
      f"{cube.azimuth_bins} azimuth, label={cube.meta.label}")
print("std map (row = range bin, 1 char per ~3 azimuth bins):")
ramp = " .:-=+*#%@"
for row in sm:
    pooled = row[: 90].reshape(30, 3).mean(axis=1)
    scale = np.clip(pooled / max(sm.max(), 1e-9), 0, 1)
    print("".join(ramp[int(v * (len(ramp) - 1))] for v in scale))
print(f"max std {sm.max():.4f}, median std {np.median(sm):.4f} "
       "(people are the bright blobs; statics stay dark)")
