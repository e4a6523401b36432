"""From a seed to a world: route, trajectory, tracks, terrain and scene.

Run:  python3 demos/01_route_to_world.py [out_dir]
"""

import sys
from collections import Counter
from pathlib import Path

import numpy as np

from railsim import pipeline
from railsim.io.config import ScenarioConfig
from railsim.routegen import RouteParams

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/world")

# A short scenario: six blocks, one global seed for every random choice.
scen = pipeline.effective_scenario(ScenarioConfig(seed=7, route=RouteParams(n_blocks=6), duration=20.0))
route = pipeline.make_route(scen)
print(f"route: {route.length:.0f} m in {len(route.blocks)} blocks")
for b in route.blocks:
    extent = route.block_extent(route.blocks.index(b))
    print(f"  {b.type.value:<9} {extent[0]:7.0f} .. {extent[1]:7.0f} m")

# The train follows the speed limits; the trajectory is sampled every 10 ms.
traj = pipeline.make_trajectory(route, scen)
print(f"trajectory: {len(traj)} samples, top speed {traj.speed.max():.1f} m/s, "
      f"distance {traj.s[-1] - traj.s[0]:.0f} m")

world = pipeline.build_world(route, scen)
hm = world.heightmap
print(f"tracks: {len(world.railroad.tracks)} (main + auxiliaries)")
print(f"terrain: {hm.heights.shape[1]} x {hm.heights.shape[0]} vertices at {hm.spacing} m, "
      f"heights {hm.heights.min():.1f} .. {hm.heights.max():.1f} m")
classes = Counter(o.cls.name.lower() for o in world.scene.objects)
print(f"scene: {len(world.scene.triangles)} triangles; objects by class {dict(sorted(classes.items()))}")

m = pipeline.write_world(out, world, scen, force=True)
print(f"wrote {len(m['files'])} files to {out}, scene digest {m['scene_digest'][:16]}")
assert np.isfinite(hm.heights).all()
