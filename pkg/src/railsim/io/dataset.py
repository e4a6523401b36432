"""KITTI-style dataset directory.

::

    root/
      <lidar>/velodyne/NNNNNN.bin  <lidar>/labels/NNNNNN.label
      <lidar>/poses.txt  <lidar>/times.txt
      <camera>/depth/NNNNNN.png  <camera>/seg/NNNNNN.png  <camera>/rgb/NNNNNN.png
      <camera>/poses.txt  <camera>/times.txt
      <imu>/imu.csv
      calib.json  seg_palette.json  manifest.json

NNNNNN is the trajectory sample index of the acquisition, so frames taken
at the same instant by different sensors share a file name. The manifest
is written last, atomically, and lists a sha256 for every other file.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .stream import Message, MessageType

MANIFEST = "manifest.json"
INDEX_DIGITS = 6


def frame_name(index: int, ext: str) -> str:
    return f"{index:0{INDEX_DIGITS}d}.{ext}"


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_atomic(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


@dataclass
class SensorRecord:
    kind: str
    period: float
    k: int
    frames: list = field(default_factory=list)  # (index, timestamp, timestamp_ns)
    poses: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


class DatasetWriter:
    """Writes frames as they are produced and returns the matching stream messages."""

    def __init__(self, root, force: bool = False):
        self.root = Path(root)
        if (self.root / MANIFEST).exists() and not force:
            raise FileExistsError(f"{self.root} already holds a dataset (use force to overwrite)")
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / MANIFEST).unlink(missing_ok=True)
        self.sensors: dict[str, SensorRecord] = {}
        self.hashes: dict[str, str] = {}

    def add_sensor(self, name: str, kind: str, period: float, k: int, **extra):
        self.sensors[name] = SensorRecord(kind, period, k, extra=extra)

    def _put(self, rel: str, data: bytes):
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)
        self.hashes[rel] = hashlib.sha256(data).hexdigest()

    def _record(self, name, event, pose):
        rec = self.sensors[name]
        rec.frames.append((event.index, event.timestamp, event.timestamp_ns))
        rec.poses.append(pose)

    def lidar_frame(self, name: str, event, cloud) -> list[Message]:
        b, lab = formats.cloud_bin_bytes(cloud), formats.cloud_label_bytes(cloud)
        self._put(f"{name}/velodyne/{frame_name(event.index, 'bin')}", b)
        self._put(f"{name}/labels/{frame_name(event.index, 'label')}", lab)
        self._record(name, event, cloud.pose)
        ns = event.timestamp_ns
        return [Message(MessageType.POINT_CLOUD, ns, b), Message(MessageType.POINT_LABELS, ns, lab),
                Message(MessageType.POSE, ns, formats.poses_bytes([cloud.pose]))]

    def camera_frame(self, name: str, event, pose, depth=None, seg=None, rgb=None) -> list[Message]:
        scale = self.sensors[name].extra.get("depth_scale", 1.0)
        out = [Message(MessageType.POSE, event.timestamp_ns, formats.poses_bytes([pose]))]
        for tag, img, enc, mt in (
            ("depth", depth, lambda x: formats.depth_png_bytes(x, scale), MessageType.DEPTH_IMAGE),
            ("seg", seg, formats.seg_png_bytes, MessageType.SEG_IMAGE),
            ("rgb", rgb, formats.rgb_png_bytes, MessageType.RGB_IMAGE),
        ):
            if img is not None:
                data = enc(img)
                self._put(f"{name}/{tag}/{frame_name(event.index, 'png')}", data)
                out.append(Message(mt, event.timestamp_ns, data))
        self._record(name, event, pose)
        return out

    def adopt_frame(self, name: str, event, pose) -> list[Message]:
        """Register a frame already on disk from an interrupted run; messages carry its bytes."""
        rec = self.sensors[name]
        if rec.kind == "lidar":
            parts = [("velodyne", "bin", MessageType.POINT_CLOUD), ("labels", "label", MessageType.POINT_LABELS)]
        else:
            parts = [(t, "png", mt) for t, mt in (("depth", MessageType.DEPTH_IMAGE), ("seg", MessageType.SEG_IMAGE),
                                                  ("rgb", MessageType.RGB_IMAGE))]
        out = [Message(MessageType.POSE, event.timestamp_ns, formats.poses_bytes([pose]))]
        for tag, ext, mt in parts:
            rel = f"{name}/{tag}/{frame_name(event.index, ext)}"
            p = self.root / rel
            if not p.exists():
                if rec.kind == "lidar" or rec.extra.get(tag, True):
                    raise FileNotFoundError(f"cannot resume: {rel} missing")
                continue
            data = p.read_bytes()
            self.hashes[rel] = hashlib.sha256(data).hexdigest()
            out.append(Message(mt, event.timestamp_ns, data))
        if rec.kind == "lidar":
            out = out[1:] + out[:1]  # same order as lidar_frame
        self._record(name, event, pose)
        return out

    def imu_stream(self, name: str, table, events) -> list[Message]:
        """Write the whole IMU file; one message per sample carrying that sample's line."""
        rows = np.asarray(table, float).reshape(-1, 10)
        if len(rows) != len(events):
            raise ValueError("one IMU row per event expected")
        self._put(f"{name}/imu.csv", formats.imu_bytes(rows))
        rec = self.sensors[name]
        rec.frames += [(e.index, e.timestamp, e.timestamp_ns) for e in events]
        return [Message(MessageType.IMU, int(e.timestamp_ns), formats.imu_row_bytes(r)) for r, e in zip(rows, events)]

    def finish(self, parameters: dict, calib: dict) -> dict:
        """Write per-sensor pose/time files, calibration, palette, then the manifest."""
        for name, rec in self.sensors.items():
            if rec.kind == "imu":
                continue
            order = sorted(range(len(rec.frames)), key=lambda i: rec.frames[i][0])
            self._put(f"{name}/poses.txt", formats.poses_bytes([rec.poses[i] for i in order]))
            self._put(f"{name}/times.txt", "".join(f"{rec.frames[i][1]!r}\n" for i in order).encode("ascii"))
        self._put("calib.json", _json_bytes(calib))
        self._put("seg_palette.json", _json_bytes(formats.seg_palette()))
        manifest = {
            "format": "railsim-kitti",
            "version": 1,
            "parameters": parameters,
            "sensors": {
                n: {"kind": r.kind, "period": r.period, "k": r.k, **r.extra,
                    "frames": [{"index": i, "timestamp": t, "timestamp_ns": ns} for i, t, ns in sorted(r.frames)]}
                for n, r in sorted(self.sensors.items())
            },
            "files": dict(sorted(self.hashes.items())),
        }
        write_atomic(self.root / MANIFEST, _json_bytes(manifest))
        return manifest


def read_manifest(root) -> dict:
    p = Path(root) / MANIFEST
    if not p.exists():
        raise FileNotFoundError(f"{root}: no {MANIFEST} (incomplete or not a dataset)")
    return json.loads(p.read_text(encoding="utf-8"))


def verify(root) -> list[str]:
    """Files whose sha256 differs from the manifest (empty when intact)."""
    m = read_manifest(root)
    bad = []
    for rel, digest in m["files"].items():
        p = Path(root) / rel
        if not p.exists() or hashlib.sha256(p.read_bytes()).hexdigest() != digest:
            bad.append(rel)
    return bad


def tree_digest(root) -> str:
    """sha256 over every file path and content under ``root`` in sorted order."""
    h = hashlib.sha256()
    root = Path(root)
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def load_lidar_frames(root, name: str):
    """(manifest frames, list of PointCloud) for one LiDAR of a dataset."""
    m = read_manifest(root)
    frames = m["sensors"][name]["frames"]
    root = Path(root)
    clouds = [formats.read_pointcloud_kitti(root / name / "velodyne" / frame_name(f["index"], "bin"),
                                            root / name / "labels" / frame_name(f["index"], "label")) for f in frames]
    return frames, clouds


def dataset_messages(root):
    """Stream messages rebuilt from a finished dataset, in acquisition order.

    The order and bytes match what the simulation publishes live: events
    sorted by (sample index, sensor name), each sensor's parts in its fixed order.
    """
    root = Path(root)
    m = read_manifest(root)
    events = []
    lines = {}
    for name, s in m["sensors"].items():
        if s["kind"] == "imu":
            lines[name] = (root / name / "imu.csv").read_bytes().splitlines(keepends=True)[1:]
        else:
            lines[name] = (root / name / "poses.txt").read_bytes().splitlines(keepends=True)
        events += [(f["index"], name, k, f["timestamp_ns"]) for k, f in enumerate(s["frames"])]
    for index, name, k, ns in sorted(events):
        s = m["sensors"][name]
        if s["kind"] == "imu":
            yield Message(MessageType.IMU, ns, lines[name][k])
            continue
        pose = Message(MessageType.POSE, ns, lines[name][k])
        if s["kind"] == "lidar":
            yield Message(MessageType.POINT_CLOUD, ns, (root / name / "velodyne" / frame_name(index, "bin")).read_bytes())
            yield Message(MessageType.POINT_LABELS, ns, (root / name / "labels" / frame_name(index, "label")).read_bytes())
            yield pose
        else:
            yield pose
            for tag, mt in (("depth", MessageType.DEPTH_IMAGE), ("seg", MessageType.SEG_IMAGE),
                            ("rgb", MessageType.RGB_IMAGE)):
                p = root / name / tag / frame_name(index, "png")
                if p.exists():
                    yield Message(mt, ns, p.read_bytes())
