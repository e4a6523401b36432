"""One VLP-16 revolution from the train roof, with labels and intensities.

Run:  python3 demos/02_lidar_scan.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from railsim import pipeline
from railsim.io.config import ScenarioConfig
from railsim.io.formats import write_pointcloud_kitti
from railsim.routegen import RouteParams
from railsim.scene import SemanticClass
from railsim.sensors import LidarConfig, Tracer, lidar_scan
from railsim.timeline import pose_at

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/scan")
out.mkdir(parents=True, exist_ok=True)

scen = pipeline.effective_scenario(ScenarioConfig(seed=3, route=RouteParams(n_blocks=4), duration=5.0))
route = pipeline.make_route(scen)
traj = pipeline.make_trajectory(route, scen)
world = pipeline.build_world(route, scen)

# normalise intensities at 20 m so mid-range returns use the lower band instead of reading ~0
cfg = LidarConfig(sigma=0.02, intensity_ref=20.0)
state = pose_at(traj, 250)  # 2.5 s into the run
pose = state.sensor_pose(cfg.mount.pose())
cloud = lidar_scan(pose, cfg, Tracer(world.scene), frame=250, seed=scen.seed)

r = np.linalg.norm(cloud.points, axis=1)
print(f"{len(cloud)} returns of {cfg.n_beams * cfg.n_azimuth} rays, range {r.min():.1f} .. {r.max():.1f} m")
print("class        points  mean intensity")
for c in SemanticClass:
    sel = cloud.cls == c
    if sel.any():
        print(f"{c.name.lower():<12} {sel.sum():6d}  {cloud.intensity[sel].mean():6.1f}")

write_pointcloud_kitti(cloud, out / "000250.bin", out / "000250.label")
print(f"wrote {out / '000250.bin'} ({(out / '000250.bin').stat().st_size} bytes)")
