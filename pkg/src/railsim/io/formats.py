"""On-disk encodings of sensor frames.

Each writer has a ``*_bytes`` form returning exactly the file contents, so
the stream server can send the same bytes it would write.

* ``.bin``: little-endian float32 (x, y, z, intensity / 255) per point.
* ``.label``: little-endian uint32 per point, class in the low 16 bits,
  instance in the high 16 bits.
* poses: 12 numbers per line, the top 3x4 of world <- sensor, row-major.
* depth: 16-bit grey PNG in millimetres (times a recorded scale).
* seg: 8-bit palette PNG of class ids. rgb: 8-bit RGB PNG.
* imu: CSV with a header row.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from ..geom import Pose
from ..scene import SemanticClass
from ..sensors import PointCloud, palette_array

DEPTH_UNIT = 0.001  # metres per count at scale 1
IMU_COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz")


def _write(path, data: bytes):
    Path(path).write_bytes(data)


# -- point clouds --------------------------------------------------------------


def cloud_bin_bytes(cloud) -> bytes:
    pts = np.asarray(cloud.points, np.float32).reshape(-1, 3)
    inten = (np.asarray(cloud.intensity, np.float32) / np.float32(255.0)).reshape(-1, 1)
    return np.ascontiguousarray(np.hstack([pts, inten]), dtype="<f4").tobytes()


def cloud_label_bytes(cloud) -> bytes:
    cls = np.asarray(cloud.cls, np.uint32) & 0xFFFF
    inst = np.asarray(cloud.instance, np.int64)
    inst = np.where(inst < 0, 0, inst).astype(np.uint32) & 0xFFFF
    return ((inst << 16) | cls).astype("<u4").tobytes()


def write_pointcloud_kitti(cloud, bin_path, label_path) -> None:
    _write(bin_path, cloud_bin_bytes(cloud))
    _write(label_path, cloud_label_bytes(cloud))


def decode_bin(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) % 16:
        raise ValueError("velodyne .bin size must be a multiple of 16 bytes")
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    return arr[:, :3].copy(), arr[:, 3].copy()


def decode_label(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) % 4:
        raise ValueError(".label size must be a multiple of 4 bytes")
    w = np.frombuffer(data, dtype="<u4")
    return (w & 0xFFFF).astype(np.uint16), (w >> 16).astype(np.uint16)


def read_pointcloud_kitti(bin_path, label_path=None) -> PointCloud:
    pts, inten = decode_bin(Path(bin_path).read_bytes())
    if label_path is not None:
        cls, inst = decode_label(Path(label_path).read_bytes())
        if len(cls) != len(pts):
            raise ValueError("point and label counts differ")
    else:
        cls, inst = np.zeros(len(pts), np.uint16), np.zeros(len(pts), np.uint16)
    n = len(pts)
    return PointCloud(0.0, Pose(np.zeros(3)), pts, np.rint(inten * 255.0).astype(np.uint8), cls,
                      inst.astype(np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64))


# -- poses -----------------------------------------------------------------


def pose_line(T) -> str:
    M = T.matrix() if hasattr(T, "matrix") else np.asarray(T, float)
    return " ".join(_num(x) for x in M[:3, :4].ravel())


def _num(x: float) -> str:
    x = float(x)
    if x == 0.0:
        return "0"  # also folds -0.0
    r = repr(x)
    return r[:-2] if r.endswith(".0") else r


def poses_bytes(poses) -> bytes:
    return "".join(pose_line(T) + "\n" for T in poses).encode("ascii")


def write_poses(poses, path) -> None:
    _write(path, poses_bytes(poses))


def parse_poses(text: str) -> np.ndarray:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    out = np.zeros((len(rows), 4, 4))
    for k, r in enumerate(rows):
        if len(r) != 12:
            raise ValueError(f"pose line {k + 1}: expected 12 numbers, got {len(r)}")
        out[k, :3, :4] = np.array([float(v) for v in r]).reshape(3, 4)
        out[k, 3, 3] = 1.0
    return out


def read_poses(path) -> np.ndarray:
    return parse_poses(Path(path).read_text(encoding="ascii"))


# -- images ------------------------------------------------------------------


def _png(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def depth_scale_for(depth_max: float) -> float:
    """Smallest integer scale s with depth_max / (s mm) <= 65535 (1 keeps plain millimetres)."""
    return float(max(1, int(np.ceil(depth_max / (65535 * DEPTH_UNIT) - 1e-12))))


def depth_png_bytes(depth, scale: float = 1.0) -> bytes:
    counts = np.rint(np.asarray(depth, float) / (DEPTH_UNIT * scale))
    if counts.max(initial=0) > 65535:
        raise ValueError("depth exceeds the 16-bit range at this scale; record a larger scale")
    return _png(Image.fromarray(counts.astype(np.uint16)))


def decode_depth_png(data: bytes, scale: float = 1.0) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data)), dtype=np.uint16).astype(float) * DEPTH_UNIT * scale


def seg_png_bytes(seg) -> bytes:
    img = Image.fromarray(np.asarray(seg, np.uint8), mode="P")
    img.putpalette(palette_array().ravel().tolist())
    return _png(img)


def decode_seg_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    if img.mode != "P":
        raise ValueError("segmentation PNG must be palette-indexed")
    return np.asarray(img, dtype=np.uint8)


def rgb_png_bytes(rgb) -> bytes:
    return _png(Image.fromarray(np.asarray(rgb, np.uint8), mode="RGB"))


def decode_rgb_png(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data)).convert("RGB"), dtype=np.uint8)


def seg_palette() -> dict:
    """Palette sidecar: index -> class name and colour."""
    pal = palette_array()
    return {int(c): {"name": c.name.title().replace("_", ""), "rgb": pal[int(c)].tolist()} for c in SemanticClass}


def write_images(stem, depth=None, seg=None, rgb=None, depth_scale: float = 1.0) -> list[Path]:
    """Write whichever modalities are given as ``<stem>_{depth,seg,rgb}.png``."""
    stem = Path(stem)
    out = []
    for tag, img, enc in (("depth", depth, lambda x: depth_png_bytes(x, depth_scale)),
                          ("seg", seg, seg_png_bytes), ("rgb", rgb, rgb_png_bytes)):
        if img is not None:
            p = stem.with_name(f"{stem.name}_{tag}.png")
            _write(p, enc(img))
            out.append(p)
    return out


# -- IMU -----------------------------------------------------------------------


IMU_HEADER = (",".join(IMU_COLUMNS) + "\n").encode("ascii")


def imu_row_bytes(row) -> bytes:
    """One sample line; the file is the header followed by these lines."""
    return (",".join(f"{v:.17g}" for v in np.asarray(row, float).reshape(10)) + "\n").encode("ascii")


def imu_bytes(table) -> bytes:
    """Rows of (t, accel, gyro, mag); every value written with 17 significant digits."""
    tab = np.asarray(table, float).reshape(-1, 10)
    return IMU_HEADER + b"".join(imu_row_bytes(r) for r in tab)


def write_imu(samples, path) -> None:
    _write(path, imu_bytes(_imu_table(samples)))


def _imu_table(samples):
    if isinstance(samples, np.ndarray):
        return samples
    return np.array([np.concatenate([[s.t], s.accel, s.gyro, s.mag]) for s in samples]).reshape(-1, 10)


def parse_imu(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or tuple(lines[0].split(",")) != IMU_COLUMNS:
        raise ValueError("IMU file must start with the header " + ",".join(IMU_COLUMNS))
    tab = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln], dtype=float).reshape(-1, 10)
    if np.any(np.diff(tab[:, 0]) <= 0):
        raise ValueError("IMU timestamps must increase strictly")
    return tab


def read_imu(path) -> np.ndarray:
    return parse_imu(Path(path).read_text(encoding="ascii"))
