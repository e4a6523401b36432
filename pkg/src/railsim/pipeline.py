"""End-to-end stages behind the command line: route, world, simulation.

Each stage writes a directory whose contents depend only on its inputs and
the seed; no timestamps or host details are recorded.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io.config import ScenarioConfig, SensorSpec, default_sensors, sensor_to_dict, to_dict
from .io.dataset import DatasetWriter, _json_bytes, write_atomic
from .io.formats import depth_scale_for
from .multitrack import Railroad, emit_railroad, generate_auxiliaries, parse_railroad, railroad_from_route
from .routegen import (
    Route,
    Trajectory,
    generate_route,
    generate_trajectory,
    load_route,
    load_trajectory,
    route_from_points,
    save_route,
    save_route_points,
    save_trajectory,
    velocity_profile,
)
from .scene import Scene, build_scene, load_scene, save_scene
from .sensors import (
    AmbientConfig,
    ImuModel,
    Tracer,
    camera_cast,
    depth_image,
    lidar_scan,
    pixel_rays,
    scan_pattern,
    segmentation_image,
    shaded_image,
)
from .terrain import HeightMap, build_heightmap, export_tiles, partition
from .timeline import build_timeline, pose_at, validate_schedules

MANIFEST = "manifest.json"


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _prepare(out, force: bool) -> Path:
    out = Path(out)
    if (out / MANIFEST).exists() and not force:
        raise FileExistsError(f"{out} already holds output (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST).unlink(missing_ok=True)
    return out


def effective_scenario(scen: ScenarioConfig, seed: int | None = None) -> ScenarioConfig:
    """Apply the global seed to every seeded stage."""
    s = dataclasses.replace(scen, seed=scen.seed if seed is None else int(seed))
    s.multitrack = dataclasses.replace(s.multitrack, seed=s.seed)
    s.terrain = dataclasses.replace(s.terrain, seed=s.seed)
    s.scene = dataclasses.replace(s.scene, seed=s.seed)
    return s


# -- route ---------------------------------------------------------------------


def make_route(scen: ScenarioConfig, points=None) -> Route:
    if points is not None:
        return route_from_points(points, scen.route.smoothing)
    return generate_route(scen.seed, scen.route)


def make_trajectory(route: Route, scen: ScenarioConfig) -> Trajectory:
    profile = velocity_profile(route, scen.train, scen.speed_limits)
    return generate_trajectory(route, profile, scen.train, duration=scen.duration or None)


def write_route(out, scen: ScenarioConfig, points=None, force: bool = False) -> dict:
    out = _prepare(out, force)
    route = make_route(scen, points)
    traj = make_trajectory(route, scen)
    save_route(route, out / "route.json")
    save_route_points(route.points, out / "route_points.txt")
    save_trajectory(traj, out / "trajectory.csv")
    files = {n: _sha((out / n).read_bytes()) for n in ("route.json", "route_points.txt", "trajectory.csv")}
    manifest = {"stage": "route", "parameters": to_dict(scen), "length_m": route.length, "samples": len(traj),
                "files": files}
    write_atomic(out / MANIFEST, _json_bytes(manifest))
    return manifest


def read_route_dir(path) -> tuple[Route, Trajectory, ScenarioConfig | None]:
    path = Path(path)
    scen = None
    m = path / MANIFEST
    if m.exists():
        from .io.config import parse_dataclass

        scen = parse_dataclass(ScenarioConfig, json.loads(m.read_text())["parameters"], str(m))
    return load_route(path / "route.json"), load_trajectory(path / "trajectory.csv"), scen


# -- world ---------------------------------------------------------------------


@dataclass
class World:
    railroad: Railroad
    heightmap: HeightMap
    scene: Scene
    n_tiles: int = 0
    kept_tiles: tuple = ()


def build_world(route: Route, scen: ScenarioConfig) -> World:
    rr = railroad_from_route(route)
    rr = generate_auxiliaries(rr, scen.multitrack)
    hm = build_heightmap(rr, scen.terrain)
    scene, _ = build_scene(rr, hm, scen.scene)
    tiles = partition(hm, rr, scen.terrain.keep_radius)
    return World(rr, hm, scene, len(tiles), tuple(t.index for t in tiles if t.keep))


def write_world(out, world: World, scen: ScenarioConfig, force: bool = False) -> dict:
    out = _prepare(out, force)
    emit_railroad(world.railroad, out / "railroad.json")
    save_scene(world.scene, out / "scene.bin")
    hm = world.heightmap
    np.save(out / "heights.npy", hm.heights)
    np.save(out / "valley.npy", hm.valley if hm.valley is not None else np.zeros(hm.heights.shape, bool))
    (out / "heightmap.json").write_text(json.dumps({"origin": list(hm.origin), "spacing": hm.spacing}) + "\n")
    if scen.export_tiles:
        export_tiles(partition(hm, world.railroad, scen.terrain.keep_radius), hm.spacing, out / "tiles")
    files = {p.relative_to(out).as_posix(): _sha(p.read_bytes())
             for p in sorted(out.rglob("*")) if p.is_file() and p.name != MANIFEST}
    manifest = {
        "stage": "world",
        "parameters": to_dict(scen),
        "scene_digest": world.scene.digest(),
        "n_triangles": int(len(world.scene.triangles)),
        "n_objects": len(world.scene.objects),
        "tiles_total": world.n_tiles,
        "tiles_kept": [list(i) for i in world.kept_tiles],
        "files": files,
    }
    write_atomic(out / MANIFEST, _json_bytes(manifest))
    return manifest


def read_world(path) -> World:
    path = Path(path)
    meta = json.loads((path / "heightmap.json").read_text())
    hm = HeightMap(tuple(meta["origin"]), meta["spacing"], np.load(path / "heights.npy"), np.load(path / "valley.npy"))
    m = json.loads((path / MANIFEST).read_text()) if (path / MANIFEST).exists() else {}
    return World(parse_railroad(path / "railroad.json"), hm, load_scene(path / "scene.bin"), m.get("tiles_total", 0),
                 tuple(tuple(i) for i in m.get("tiles_kept", [])))


# -- simulation ------------------------------------------------------------------


def simulate(world: World, traj: Trajectory, sensors: list[SensorSpec] | None, out, seed: int = 0,
             ambient: AmbientConfig | None = None, publish=None, resume_from: int = 0, force: bool = False,
             parameters: dict | None = None) -> dict:
    """Render every scheduled frame into a dataset; ``publish`` receives each stream message.

    With ``resume_from`` the frames of earlier samples are taken from ``out``
    as an interrupted run left them, so the finished tree matches a full run.
    """
    sensors = sensors if sensors is not None else default_sensors()
    ambient = ambient or AmbientConfig()
    schedules = validate_schedules(traj.ts, {s.name: s.period for s in sensors})
    events = build_timeline(len(traj), traj.ts, schedules)
    tracer = Tracer(world.scene)
    writer = DatasetWriter(_prepare(out, force), force=True)
    specs = {s.name: s for s in sensors}
    ordinal = {s.name: i for i, s in enumerate(sensors)}
    cache = {}
    for s in sensors:
        extra = {}
        if s.kind == "camera":
            extra.update(depth_scale=depth_scale_for(s.config.depth_max), depth=s.config.depth,
                         seg=s.config.segmentation, rgb=s.config.shaded)
            cache[s.name] = pixel_rays(s.config)
        elif s.kind == "lidar":
            cache[s.name] = scan_pattern(s.config)
        writer.add_sensor(s.name, s.kind, s.period, schedules[s.name].k, **extra)

    # IMU streams are computed whole: their noise state runs through every sample
    imu_msgs = {}
    for s in sensors:
        if s.kind != "imu":
            continue
        ev = [e for e in events if e.sensor_id == s.name]
        idx = np.array([e.index for e in ev], int)
        tab = ImuModel(s.config, seed, ordinal[s.name]).run_table(
            traj.t[idx], traj.front_acceleration[idx], traj.omega[idx], traj.orientation[idx])
        msgs = writer.imu_stream(s.name, tab, ev)
        imu_msgs[s.name] = dict(zip(idx.tolist(), msgs))

    for ev in events:
        s = specs[ev.sensor_id]
        if s.kind == "imu":
            msgs = [imu_msgs[s.name][ev.index]]
        else:
            state = pose_at(traj, ev)
            pose = state.sensor_pose(s.config.mount.pose())
            if ev.index < resume_from:
                # frames of an interrupted run are kept as written
                writer.adopt_frame(s.name, ev, pose)
                continue
            if s.kind == "lidar":
                cloud = lidar_scan(pose, s.config, tracer, frame=ev.index, seed=seed, timestamp=ev.timestamp,
                                   pattern=cache[s.name], sensor=ordinal[s.name])
                msgs = writer.lidar_frame(s.name, ev, cloud)
            else:
                cfg = s.config
                ch = camera_cast(pose, cfg, tracer, cache[s.name])
                msgs = writer.camera_frame(
                    s.name, ev, pose,
                    depth=depth_image(ch) if cfg.depth else None,
                    seg=segmentation_image(ch) if cfg.segmentation else None,
                    rgb=shaded_image(ch, tracer, ambient) if cfg.shaded else None,
                )
        if publish is not None and ev.index >= resume_from:
            for m in msgs:
                publish(m)

    calib = {s.name: sensor_to_dict(s) for s in sensors}
    params = dict(parameters or {})
    params.update({"seed": seed, "ambient": to_dict(ambient), "ts": traj.ts,
                   "samples": len(traj), "scene_digest": world.scene.digest()})
    return writer.finish(params, calib)


def set_threads(n: int | None) -> int:
    """Numba worker count: explicit value, else RAILSIM_THREADS, else all cores."""
    import numba

    if n is None:
        env = os.environ.get("RAILSIM_THREADS")
        n = int(env) if env else None
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    return numba.get_num_threads()
