"""``railsim`` command line.

Exit codes: 0 success, 1 unexpected failure, 2 invalid configuration or
arguments, 3 file-system or network errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .io.config import ConfigError, ScenarioConfig, SensorSpec, default_sensors, load_configs
from .io.dataset import dataset_messages, load_lidar_frames, read_manifest, verify
from .io.formats import depth_scale_for, read_poses, write_images
from .io.stream import DEFAULT_BACKLOG, StreamServer, stream_serve
from .metrics import icp_odometry, odometry_report, pc_rmse
from .scene import SemanticClass
from .sensors import AmbientConfig, SunSlot, Tracer, camera_cast, depth_image, segmentation_image, shaded_image
from .timeline import ScheduleError, pose_at, vehicle_pose

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "RAILSIM_THREADS"

log = logging.getLogger("railsim")


class UsageError(ValueError):
    pass


# -- shared helpers ---------------------------------------------------------------


def _load(args) -> tuple[np.ndarray | None, ScenarioConfig, list[SensorSpec] | None]:
    if args.config:
        points, _, sensors, scen = load_configs(args.config)
        sensors = sensors or None
    else:
        points, sensors, scen = None, None, ScenarioConfig()
    return points, pipeline.effective_scenario(scen, args.seed), sensors


def _route_and_scenario(args):
    """Route and trajectory from --route, or generated from the configuration."""
    points, scen, sensors = _load(args)
    if getattr(args, "route", None):
        route, traj, saved = pipeline.read_route_dir(args.route)
        if not args.config and saved is not None:
            scen = pipeline.effective_scenario(saved, args.seed)
    else:
        route = pipeline.make_route(scen, points)
        traj = pipeline.make_trajectory(route, scen)
    return route, traj, scen, sensors


def _out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def _emit(text: str, dest):
    if dest:
        Path(dest).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands -----------------------------------------------------------------


def cmd_route(args) -> int:
    points, scen, _ = _load(args)
    m = pipeline.write_route(_out(args), scen, points, force=args.force)
    log.info("route %.1f m, %d samples", m["length_m"], m["samples"])
    return EXIT_OK


def cmd_world(args) -> int:
    route, _, scen, _ = _route_and_scenario(args)
    world = pipeline.build_world(route, scen)
    m = pipeline.write_world(_out(args), world, scen, force=args.force)
    log.info("world: %d objects, %d triangles, %d/%d tiles kept", m["n_objects"], m["n_triangles"],
             len(m["tiles_kept"]), m["tiles_total"])
    return EXIT_OK


def cmd_simulate(args) -> int:
    route, traj, scen, sensors = _route_and_scenario(args)
    world = pipeline.read_world(args.world) if args.world else pipeline.build_world(route, scen)
    params = {"scenario": pipeline.to_dict(scen)}
    run = dict(seed=scen.seed, ambient=scen.ambient, resume_from=args.resume_from, force=args.force,
               parameters=params)
    if args.stream is None:
        m = pipeline.simulate(world, traj, sensors, _out(args), **run)
    else:
        with StreamServer(args.host, args.stream, args.backlog) as srv:
            log.info("streaming on %s:%d", *srv.address)
            if args.wait_clients:
                srv.wait_for_clients(args.wait_clients, args.timeout)
            m = pipeline.simulate(world, traj, sensors, _out(args), publish=srv.publish, **run)
    log.info("dataset: %s", {n: len(s["frames"]) for n, s in m["sensors"].items()})
    return EXIT_OK


def _compare(args) -> dict:
    a, b = args.dataset, args.reference
    name = args.sensor or _first_lidar(a)
    fa, ca = load_lidar_frames(a, name)
    fb, cb = load_lidar_frames(b, name)
    by_index = {f["index"]: c for f, c in zip(fb, cb)}
    crop = tuple(np.radians(args.crop)) if args.crop else None
    rows = [(f["index"], pc_rmse(c.points, by_index[f["index"]].points, crop))
            for f, c in zip(fa, ca) if f["index"] in by_index]
    if not rows:
        raise UsageError("the datasets share no frames")
    r = np.array([v for _, v in rows])
    return {"mode": "rmse", "sensor": name, "frames": len(rows),
            "rmse": {"mean": float(r.mean()), "max": float(r.max())}, "per_frame": rows}


def _odometry(args) -> dict:
    name = args.sensor or _first_lidar(args.dataset)
    _, clouds = load_lidar_frames(args.dataset, name)
    if len(clouds) < 2:
        raise UsageError("odometry needs at least two frames")
    gt = read_poses(Path(args.dataset) / name / "poses.txt")
    keep = _class_ids(args.classes)
    pts = [c.points if keep is None else c.points[np.isin(c.cls, keep)] for c in clouds]
    rep = odometry_report(icp_odometry(pts), gt)
    return {"mode": "odometry", "sensor": name, "frames": len(clouds), "summary": rep.summary(), "report": rep}


def _class_ids(names):
    if not names:
        return None
    try:
        return [int(SemanticClass[n.strip().upper()]) for n in names.split(",") if n.strip()]
    except KeyError as e:
        raise UsageError(f"unknown class {e.args[0]!r}; choose from {', '.join(c.name.lower() for c in SemanticClass)}")


def _first_lidar(root) -> str:
    for n, s in read_manifest(root)["sensors"].items():
        if s["kind"] == "lidar":
            return n
    raise UsageError(f"{root} has no LiDAR sensor")


def cmd_validate(args) -> int:
    bad = verify(args.dataset)
    if bad:
        raise OSError(f"{len(bad)} files fail their manifest checksum, first {bad[0]}")
    res = _compare(args) if args.reference else _odometry(args)
    if args.format == "json":
        out = {k: v for k, v in res.items() if k != "report"}
        text = json.dumps(out, indent=2) + "\n"
    elif args.format == "csv":
        if res["mode"] == "odometry":
            text = res["report"].csv()
        else:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["index", "rmse"])
            w.writerows(res["per_frame"])
            text = buf.getvalue()
    elif res["mode"] == "odometry":
        text = res["report"].table() + "\n"
    else:
        text = f"frames {res['frames']}  rmse mean {res['rmse']['mean']:.6f} m  max {res['rmse']['max']:.6f} m\n"
    _emit(text, args.report)
    return EXIT_OK


def cmd_preview(args) -> int:
    route, traj, scen, sensors = _route_and_scenario(args)
    sensors = sensors or default_sensors()
    cams = [s for s in sensors if s.kind == "camera" and (args.sensor is None or s.name == args.sensor)]
    if not cams:
        raise UsageError("no matching camera sensor")
    cam = cams[0]
    world = pipeline.read_world(args.world) if args.world else pipeline.build_world(route, scen)
    if args.pose is not None:
        n, e, d, yaw, pitch, roll = args.pose
        body = vehicle_pose(np.radians([yaw, pitch, roll]), np.array([n, e, d]))
    else:
        body = pose_at(traj, args.index).pose
    pose = body.compose(cam.config.mount.pose())
    ambient = scen.ambient
    if args.slot:
        ambient = AmbientConfig(SunSlot[args.slot.upper()], ambient.fog_density, ambient.fog_color)
    tracer = Tracer(world.scene)
    ch = camera_cast(pose, cam.config, tracer)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / "preview"
    existing = [p for p in out.glob("preview_*.png")]
    if existing and not args.force:
        raise FileExistsError(f"{existing[0]} exists (use --force to overwrite)")
    write_images(stem, depth=depth_image(ch), seg=segmentation_image(ch), rgb=shaded_image(ch, tracer, ambient),
                 depth_scale=depth_scale_for(cam.config.depth_max))
    return EXIT_OK


def cmd_stream(args) -> int:
    if verify(args.dataset):
        raise OSError(f"{args.dataset} fails its manifest checksums")

    def ready(addr):
        log.info("streaming %s on %s:%d", args.dataset, *addr)

    n = stream_serve(dataset_messages(args.dataset), args.host, args.port, args.wait_clients, args.timeout,
                     args.backlog, on_ready=ready)
    log.info("sent %d messages", n)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], metavar="FILE",
                        help="scenario JSON, then optional extra sensor JSON files (repeatable)")
    common.add_argument("--seed", type=int, default=None, help="global seed; overrides every seed in the config")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None,
                        help=f"ray-casting threads (default: ${THREADS_ENV} or all cores)")
    common.add_argument("--force", action="store_true", help="overwrite existing output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="railsim", description="Procedural railway worlds and synthetic sensor datasets.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("route", parents=[common], help="generate a route and its train trajectory")

    w = sub.add_parser("world", parents=[common], help="build tracks, terrain and scene along a route")
    w.add_argument("--route", help="route directory (default: generate from the config)")

    net = argparse.ArgumentParser(add_help=False)
    net.add_argument("--host", default="127.0.0.1")
    net.add_argument("--wait-clients", type=int, default=0, help="block until this many clients connect")
    net.add_argument("--timeout", type=float, default=None, help="seconds to wait for clients")
    net.add_argument("--backlog", type=int, default=DEFAULT_BACKLOG, help="frames a client may lag before drop")

    s = sub.add_parser("simulate", parents=[common, net], help="render sensor frames into a dataset")
    s.add_argument("--route", help="route directory")
    s.add_argument("--world", help="world directory")
    s.add_argument("--stream", type=int, default=None, metavar="PORT", help="also publish frames over TCP")
    s.add_argument("--resume-from", type=int, default=0, metavar="INDEX",
                   help="keep frames of earlier samples already in --out")

    v = sub.add_parser("validate", parents=[common], help="check a dataset: ICP odometry or cloud RMSE")
    v.add_argument("dataset")
    v.add_argument("--reference", help="second dataset; compare clouds frame by frame")
    v.add_argument("--sensor", help="LiDAR name (default: the first)")
    v.add_argument("--crop", type=float, nargs=2, metavar=("MIN_DEG", "MAX_DEG"), help="azimuth window")
    v.add_argument("--classes", help="comma-separated classes fed to odometry, e.g. pole,tree (default: all)")
    v.add_argument("--format", choices=("table", "json", "csv"), default="table")
    v.add_argument("--report", help="write the report here instead of stdout")

    pv = sub.add_parser("preview", parents=[common], help="render one camera view to PNGs")
    pv.add_argument("--route")
    pv.add_argument("--world")
    pv.add_argument("--sensor", help="camera name (default: the first)")
    g = pv.add_mutually_exclusive_group()
    g.add_argument("--index", type=int, default=0, help="trajectory sample")
    g.add_argument("--pose", type=float, nargs=6, metavar=("N", "E", "D", "YAW", "PITCH", "ROLL"),
                   help="vehicle pose, NED metres and degrees")
    pv.add_argument("--slot", choices=[x.name.lower() for x in SunSlot])

    st = sub.add_parser("stream", parents=[common, net], help="replay a dataset over TCP")
    st.add_argument("dataset")
    st.add_argument("--port", type=int, default=0)
    return p


COMMANDS = {"route": cmd_route, "world": cmd_world, "simulate": cmd_simulate, "validate": cmd_validate,
            "preview": cmd_preview, "stream": cmd_stream}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        pipeline.set_threads(args.threads)
        return COMMANDS[args.command](args)
    except (ConfigError, ScheduleError, UsageError) as e:
        print(f"railsim: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"railsim: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"railsim: invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
