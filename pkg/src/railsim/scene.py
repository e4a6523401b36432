"""Labelled low-poly scene: terrain, track furniture and scattered objects.

Everything is a triangle soup in the ENU world frame. Each triangle belongs to
exactly one :class:`SceneObject`, which carries the semantic class, a unique
instance id and the material used by the intensity model.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ._rng import make_rng
from .multitrack import Railroad
from .routegen import BlockType, block_mask
from .terrain import HeightMap

STREAM_SPAWN = 3
STREAM_VARIANT = 4

SCENE_MAGIC = b"RSCN"
SCENE_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_OBJECT = struct.Struct("<IHHdddd")


class SemanticClass(enum.IntEnum):
    """Stable class ids; append only, never reorder."""

    BACKGROUND = 0
    TERRAIN = 1
    TRACKBED = 2
    RAIL_TRACK = 3
    POLE = 4
    CATENARY = 5
    TREE = 6
    ROCK = 7
    BUILDING = 8
    FENCE = 9
    TUNNEL = 10
    BRIDGE = 11
    PLATFORM = 12


@dataclass(frozen=True)
class Material:
    diffuse: float
    specular: float
    theta_max: float  # radians
    roughness: float = 0.5

    def __post_init__(self):
        for name in ("diffuse", "specular", "roughness"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"material {name} must lie in [0, 1]")
        if self.diffuse + self.specular > 1.0 + 1e-12:
            raise ValueError("diffuse + specular must not exceed 1")
        if not 0.0 < self.theta_max <= np.pi / 2 + 1e-12:
            raise ValueError("theta_max must lie in (0, pi/2]")

    def as_tuple(self):
        return (self.diffuse, self.specular, self.theta_max, self.roughness)


def _mat(d, s, deg, rough=0.5):
    return Material(d, s, float(np.deg2rad(deg)), rough)


# Calibration inputs, not measured values.
DEFAULT_MATERIALS: dict[SemanticClass, Material] = {
    SemanticClass.BACKGROUND: Material(0.0, 0.0, np.pi / 2, 0.5),
    SemanticClass.TERRAIN: _mat(0.55, 0.05, 90),
    SemanticClass.TRACKBED: _mat(0.45, 0.05, 90),
    SemanticClass.RAIL_TRACK: _mat(0.20, 0.60, 30, 0.15),
    SemanticClass.POLE: _mat(0.25, 0.50, 40, 0.15),
    SemanticClass.CATENARY: _mat(0.25, 0.50, 40, 0.15),
    SemanticClass.TREE: _mat(0.50, 0.05, 85),
    SemanticClass.ROCK: _mat(0.50, 0.10, 85),
    SemanticClass.BUILDING: _mat(0.60, 0.15, 75),
    SemanticClass.FENCE: _mat(0.30, 0.40, 45, 0.15),
    SemanticClass.TUNNEL: _mat(0.50, 0.10, 85),
    SemanticClass.BRIDGE: _mat(0.50, 0.10, 85),
    SemanticClass.PLATFORM: _mat(0.55, 0.10, 85),
}


def material_for(cls, table: dict | None = None) -> Material:
    try:
        cls = SemanticClass(cls)
    except ValueError:
        raise ValueError(f"unknown semantic class {cls!r}") from None
    if table and cls in table:
        return table[cls]
    return DEFAULT_MATERIALS[cls]


@dataclass
class SceneObject:
    instance_id: int
    cls: SemanticClass
    triangles: np.ndarray  # (n, 3, 3) ENU
    material: Material

    def __post_init__(self):
        self.triangles = np.asarray(self.triangles, dtype=float).reshape(-1, 3, 3)
        self.cls = SemanticClass(self.cls)
        if not np.all(np.isfinite(self.triangles)):
            raise ValueError("triangle vertices must be finite")

    @property
    def name(self) -> str:
        return f"{self.cls.name.title().replace('_', '')}_{self.instance_id}"

    @property
    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.triangles.reshape(-1, 3)
        return v.min(0), v.max(0)


@dataclass
class Scene:
    objects: list[SceneObject] = field(default_factory=list)

    def __post_init__(self):
        ids = [o.instance_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("instance ids must be unique")

    @cached_property
    def triangles(self) -> np.ndarray:
        if not self.objects:
            return np.empty((0, 3, 3))
        return np.ascontiguousarray(np.concatenate([o.triangles for o in self.objects]))

    @cached_property
    def tri_object(self) -> np.ndarray:
        """Index into ``objects`` for every triangle."""
        counts = [len(o.triangles) for o in self.objects]
        return np.repeat(np.arange(len(self.objects), dtype=np.uint32), counts)

    @cached_property
    def object_class(self) -> np.ndarray:
        return np.array([int(o.cls) for o in self.objects], dtype=np.int32)

    @cached_property
    def object_instance(self) -> np.ndarray:
        return np.array([o.instance_id for o in self.objects], dtype=np.int64)

    @cached_property
    def object_material(self) -> np.ndarray:
        """(n_objects, 4): diffuse, specular, theta_max, roughness."""
        return np.array([o.material.as_tuple() for o in self.objects], dtype=float).reshape(-1, 4)

    def __len__(self):
        return len(self.objects)

    def to_bytes(self) -> bytes:
        return scene_to_bytes(self)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


# -- binary container ------------------------------------------------------------


def scene_to_bytes(scene: Scene) -> bytes:
    """Header, object table, float64 triangles, uint32 per-triangle object index."""
    parts = [_HEADER.pack(SCENE_MAGIC, SCENE_VERSION, len(scene.objects), len(scene.triangles))]
    for o in scene.objects:
        m = o.material
        parts.append(_OBJECT.pack(o.instance_id, int(o.cls), 0, m.diffuse, m.specular, m.theta_max, m.roughness))
    parts.append(scene.triangles.astype("<f8").tobytes())
    parts.append(scene.tri_object.astype("<u4").tobytes())
    return b"".join(parts)


def scene_from_bytes(buf: bytes) -> Scene:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated scene container")
    magic, version, n_obj, n_tri = _HEADER.unpack_from(buf, 0)
    if magic != SCENE_MAGIC or version != SCENE_VERSION:
        raise ValueError("not a scene container or unsupported version")
    expected = _HEADER.size + n_obj * _OBJECT.size + n_tri * 9 * 8 + n_tri * 4
    if len(buf) != expected:
        raise ValueError(f"scene container size {len(buf)} != expected {expected}")
    off = _HEADER.size
    table = []
    for _ in range(n_obj):
        table.append(_OBJECT.unpack_from(buf, off))
        off += _OBJECT.size
    tris = np.frombuffer(buf, "<f8", n_tri * 9, off).reshape(-1, 3, 3)
    off += n_tri * 72
    owner = np.frombuffer(buf, "<u4", n_tri, off)
    if n_tri and (np.any(np.diff(owner.astype(np.int64)) < 0) or owner.max() >= n_obj):
        raise ValueError("triangle object index out of order or out of range")
    bounds = np.searchsorted(owner, np.arange(n_obj + 1))
    objects = []
    for k, (iid, cls, _, d, s, th, r) in enumerate(table):
        objects.append(SceneObject(iid, SemanticClass(cls), tris[bounds[k] : bounds[k + 1]].copy(), Material(d, s, th, r)))
    return Scene(objects)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_bytes(scene_to_bytes(scene))


def load_scene(path) -> Scene:
    return scene_from_bytes(Path(path).read_bytes())


def export_obj(scene: Scene, path) -> None:
    """Wavefront OBJ with one group per object plus a JSON sidecar of labels."""
    path = Path(path)
    lines = ["# railsim scene"]
    base = 1
    for o in scene.objects:
        lines.append(f"o {o.name}")
        v = o.triangles.reshape(-1, 3)
        lines.extend(f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in v)
        idx = base + np.arange(len(v)).reshape(-1, 3)
        lines.extend(f"f {a} {b} {c}" for a, b, c in idx)
        base += len(v)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    side = {
        o.name: {"class": o.cls.name, "class_id": int(o.cls), "instance": o.instance_id, "material": o.material.as_tuple()}
        for o in scene.objects
    }
    path.with_suffix(".json").write_text(json.dumps(side, indent=1), encoding="utf-8")


# -- primitive meshes --------------------------------------------------------------

_BOX_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ]
)
_BOX_CORNERS = np.array(
    [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1], [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], float
)


def boxes(centers, half, yaw=0.0) -> np.ndarray:
    """Oriented boxes (rotated about +z by ``yaw``) as (12k, 3, 3) triangles."""
    centers = np.atleast_2d(np.asarray(centers, float))
    k = len(centers)
    half = np.broadcast_to(np.asarray(half, float), (k, 3))
    yaw = np.broadcast_to(np.asarray(yaw, float), (k,))
    c, s = np.cos(yaw), np.sin(yaw)
    local = _BOX_CORNERS[None] * half[:, None, :]
    world = np.empty_like(local)
    world[..., 0] = c[:, None] * local[..., 0] - s[:, None] * local[..., 1]
    world[..., 1] = s[:, None] * local[..., 0] + c[:, None] * local[..., 1]
    world[..., 2] = local[..., 2]
    world += centers[:, None, :]
    return world[:, _BOX_FACES].reshape(-1, 3, 3)


def segment_box(a, b, half_w, half_h) -> np.ndarray:
    """Box whose long axis joins points a and b (horizontal cross-section)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    L = np.linalg.norm(d)
    yaw = np.arctan2(d[1], d[0])
    # small pitch is ignored; the box spans the mean height
    return boxes((a + b) / 2, (L / 2, half_w, half_h), yaw)


def sweep(centre, left, profile, closed=True, caps=True) -> np.ndarray:
    """Extrude a 2-D (lateral, up) profile along a polyline.

    ``left`` holds horizontal unit vectors pointing left of travel. Profile
    points are ordered counter-clockwise seen along the direction of travel.
    """
    centre = np.asarray(centre, float)
    prof = np.asarray(profile, float)
    n, m = len(centre), len(prof)
    left3 = np.column_stack([left, np.zeros(n)])
    up = np.array([0.0, 0.0, 1.0])
    ring = centre[:, None, :] + prof[None, :, 0, None] * left3[:, None, :] + prof[None, :, 1, None] * up
    jn = np.arange(m) if closed else np.arange(m - 1)
    jn1 = (jn + 1) % m
    a = ring[:-1][:, jn]
    b = ring[:-1][:, jn1]
    c = ring[1:][:, jn1]
    d = ring[1:][:, jn]
    quads = np.stack([np.stack([a, d, c], 2), np.stack([a, c, b], 2)], 2).reshape(-1, 3, 3)
    if not (closed and caps) or m < 3:
        return quads
    fan = np.arange(1, m - 1)
    start = np.stack([ring[0, np.zeros_like(fan)], ring[0, fan + 1], ring[0, fan]], 1)
    end = np.stack([ring[-1, np.zeros_like(fan)], ring[-1, fan], ring[-1, fan + 1]], 1)
    return np.concatenate([quads, start, end])


def cone(radius, height, z0=0.0, n=8) -> np.ndarray:
    ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    rim = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.full(n, z0)])
    apex = np.array([0.0, 0.0, z0 + height])
    base = np.array([0.0, 0.0, z0])
    nxt = np.roll(rim, -1, axis=0)
    side = np.stack([rim, nxt, np.broadcast_to(apex, rim.shape)], 1)
    bottom = np.stack([rim, np.broadcast_to(base, rim.shape), nxt], 1)
    return np.concatenate([side, bottom])


def cylinder(radius, height, z0=0.0, n=6) -> np.ndarray:
    ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    lo = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.full(n, z0)])
    hi = lo + [0.0, 0.0, height]
    lo1, hi1 = np.roll(lo, -1, 0), np.roll(hi, -1, 0)
    side = np.concatenate([np.stack([lo, lo1, hi1], 1), np.stack([lo, hi1, hi], 1)])
    top = np.stack([hi, hi1, np.broadcast_to([0.0, 0.0, z0 + height], hi.shape)], 1)
    return np.concatenate([side, top])


def icosphere(subdiv=1) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere vertices and faces."""
    t = (1.0 + 5**0.5) / 2.0
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4], [11, 10, 2],
         [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9], [4, 9, 5],
         [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdiv):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return np.array(verts), np.array(faces)


def gabled_house(w, d, h, roof) -> np.ndarray:
    body = boxes([0.0, 0.0, h / 2], (w / 2, d / 2, h / 2))
    a, b, c, e = (np.array(q) for q in ([-w / 2, -d / 2, h], [w / 2, -d / 2, h], [w / 2, d / 2, h], [-w / 2, d / 2, h]))
    r0, r1 = np.array([-w / 2, 0.0, h + roof]), np.array([w / 2, 0.0, h + roof])
    roof_tris = [[a, b, r1], [a, r1, r0], [c, e, r0], [c, r0, r1], [b, c, r1], [e, a, r0]]
    return np.concatenate([body, np.array(roof_tris)])


def ball(radius, z, subdiv=1) -> np.ndarray:
    v, f = icosphere(subdiv)
    return v[f] * radius + [0.0, 0.0, z]


def _rock_variant(k: int) -> np.ndarray:
    v, f = icosphere(1)
    g = np.random.Generator(np.random.PCG64(1000 + k))
    v = v * g.uniform(0.75, 1.15, (len(v), 1))
    v[:, 2] = v[:, 2] * (0.55 + 0.1 * k) + 0.25
    return v[f]


def _fence_variant(length: float) -> np.ndarray:
    n_posts = int(round(length / 2.0)) + 1
    xs = np.linspace(-length / 2, length / 2, n_posts)
    posts = boxes(np.column_stack([xs, np.zeros(n_posts), np.full(n_posts, 0.6)]), (0.06, 0.06, 0.6))
    rails = boxes([[0.0, 0.0, 0.5], [0.0, 0.0, 1.0]], (length / 2, 0.03, 0.05))
    return np.concatenate([posts, rails])


VARIANTS: dict[SemanticClass, list[np.ndarray]] = {
    SemanticClass.TREE: [
        np.concatenate([cylinder(0.2, 2.0), cone(2.0, 6.0, 1.5)]),
        np.concatenate([cylinder(0.2, 1.5), cone(2.0, 4.0, 1.2), cone(1.4, 3.5, 3.8)]),
        np.concatenate([cylinder(0.25, 3.0), ball(1.8, 4.2)]),
    ],
    SemanticClass.ROCK: [_rock_variant(k) for k in range(3)],
    SemanticClass.BUILDING: [gabled_house(8, 6, 3, 2), gabled_house(6, 6, 5, 1.5), gabled_house(10, 5, 4, 2.5)],
    SemanticClass.FENCE: [_fence_variant(L) for L in (8.0, 12.0, 16.0)],
}

# Footprint radius bounding every variant of a class, at scale 1.
FOOTPRINT = {
    c: float(max(np.hypot(m[..., 0], m[..., 1]).max() for m in meshes)) for c, meshes in VARIANTS.items()
}
SCALE_RANGE = {
    SemanticClass.TREE: (0.8, 1.4),
    SemanticClass.ROCK: (0.6, 1.6),
    SemanticClass.BUILDING: (0.8, 1.2),
    SemanticClass.FENCE: (1.0, 1.0),
}
MIN_CLEARANCE = {
    SemanticClass.TREE: 8.0,
    SemanticClass.ROCK: 7.0,
    SemanticClass.BUILDING: 12.0,
    SemanticClass.FENCE: 7.0,
}
DEFAULT_DENSITY = {  # objects per km of main track
    SemanticClass.TREE: 60.0,
    SemanticClass.ROCK: 20.0,
    SemanticClass.BUILDING: 4.0,
    SemanticClass.FENCE: 6.0,
}


# -- placement ---------------------------------------------------------------------


@dataclass(frozen=True)
class Placement:
    cls: SemanticClass
    position: tuple[float, float, float]
    yaw: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("scale must be > 0")

    @property
    def radius(self) -> float:
        return FOOTPRINT[self.cls] * self.scale


def _enu(points_ned):
    p = np.asarray(points_ned, float)
    return np.column_stack([p[:, 1], p[:, 0], -p[:, 2]])


def _left_normals(p_enu):
    t = np.gradient(p_enu[:, :2], axis=0)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    return np.column_stack([-t[:, 1], t[:, 0]]), t


def generate_spawn_points(
    railroad: Railroad,
    heightmap: HeightMap,
    densities: dict | None = None,
    seed: int = 0,
    band: float = 60.0,
    attempts_per_object: int = 30,
) -> list[Placement]:
    """Rejection-sample non-overlapping footprints in a band along the main track."""
    densities = DEFAULT_DENSITY if densities is None else {SemanticClass(k): v for k, v in densities.items()}
    main = _enu(railroad.main.points)
    left, tan = _left_normals(main)
    length_km = float(np.linalg.norm(np.diff(main, axis=0), axis=1).sum()) / 1000.0
    tree = cKDTree(_enu(railroad.all_points())[:, :2])
    centres = np.empty((0, 2))
    radii = np.empty(0)
    out: list[Placement] = []
    # larger footprints first so they are not crowded out
    order = sorted((c for c in densities if densities[c] > 0), key=lambda c: (-FOOTPRINT[c], int(c)))
    for cls in order:
        if cls not in FOOTPRINT:
            raise ValueError(f"class {cls.name} has no spawnable meshes")
        target = int(round(densities[cls] * length_km))
        rng = make_rng(seed, STREAM_SPAWN, int(cls))
        lo_s, hi_s = SCALE_RANGE[cls]
        placed = 0
        for _ in range(target * attempts_per_object):
            if placed >= target:
                break
            i = int(rng.integers(len(main)))
            side = 1.0 if rng.random() < 0.5 else -1.0
            scale = float(rng.uniform(lo_s, hi_s))
            r = FOOTPRINT[cls] * scale
            lat = rng.uniform(MIN_CLEARANCE[cls] + r, max(band, MIN_CLEARANCE[cls] + r + 1.0))
            yaw_draw = rng.uniform(-np.pi, np.pi)
            xy = main[i, :2] + side * lat * left[i]
            d, _ = tree.query(xy)
            if d - r < MIN_CLEARANCE[cls]:
                continue
            if len(radii) and np.any(np.hypot(*(centres - xy).T) < radii + r):
                continue
            if cls == SemanticClass.FENCE:
                yaw = float(np.arctan2(tan[i, 1], tan[i, 0]))
            else:
                yaw = float(yaw_draw)
            ring = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
            ez = xy[0] + np.r_[0.0, r * np.cos(ring)]
            nz = xy[1] + np.r_[0.0, r * np.sin(ring)]
            z = float(np.min(heightmap.height_at(ez, nz)))
            out.append(Placement(cls, (float(xy[0]), float(xy[1]), z), yaw, scale))
            centres = np.vstack([centres, xy])
            radii = np.append(radii, r)
            placed += 1
    return out


def instantiate_objects(placements, seed: int = 0, first_id: int = 0, materials: dict | None = None) -> list[SceneObject]:
    rng = make_rng(seed, STREAM_VARIANT)
    objs = []
    for k, p in enumerate(placements):
        variants = VARIANTS[p.cls]
        mesh = variants[int(rng.integers(len(variants)))]
        c, s = np.cos(p.yaw), np.sin(p.yaw)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        tris = (mesh * p.scale) @ R.T + np.asarray(p.position)
        objs.append(SceneObject(first_id + k, p.cls, tris, material_for(p.cls, materials)))
    return objs


# -- track furniture ------------------------------------------------------------------


@dataclass
class TrackGeometryParams:
    gauge: float = 1.435
    sleeper_pitch: float = 0.6
    pole_interval: float = 50.0
    pole_offset: float = 2.6
    pole_height: float = 7.0
    wire_height: float = 6.0  # above formation level
    ballast_bottom: float = 2.0  # half width
    ballast_top: float = 1.4
    ballast_height: float = 0.3
    sleeper_half: tuple[float, float, float] = (1.3, 0.125, 0.075)
    rail_half_width: float = 0.035
    rail_height: float = 0.15
    tunnel_half_width: float = 4.5
    tunnel_wall: float = 3.0
    tunnel_crown: float = 7.0
    bridge_half_width: float = 3.0
    bridge_depth: float = 1.5
    pier_interval: float = 30.0
    pier_height: float = 25.0
    platform_offset: tuple[float, float] = (2.4, 6.4)
    platform_height: float = 0.9
    clearance: float = 2.0

    @property
    def rail_base(self) -> float:
        return self.ballast_height + 2 * self.sleeper_half[2]


def _runs(mask):
    """Half-open index runs where mask is true."""
    m = np.r_[False, np.asarray(mask, bool), False].astype(np.int8)
    edges = np.flatnonzero(np.diff(m))
    return list(zip(edges[::2], edges[1::2]))


def _arc_positions(p, step):
    seg = np.linalg.norm(np.diff(p[:, :2], axis=0), axis=1)
    s = np.r_[0.0, np.cumsum(seg)]
    q = np.arange(0.0, s[-1] + 1e-9, step)
    return s, q


def build_track_geometry(railroad: Railroad, params: TrackGeometryParams | None = None, first_id: int = 0,
                         materials: dict | None = None) -> list[SceneObject]:
    params = params or TrackGeometryParams()
    g = params
    all_xy = _enu(railroad.all_points())[:, :2]
    owner = np.repeat(np.arange(len(railroad.tracks)), [len(t.points) for t in railroad.tracks])
    tree = cKDTree(all_xy)
    objs: list[SceneObject] = []

    def add(cls, tris):
        if len(tris):
            objs.append(SceneObject(first_id + len(objs), cls, tris, material_for(cls, materials)))

    def clear_of_others(xy, ti, r):
        hits = tree.query_ball_point(xy, r)
        return np.array([not np.any(owner[h] != ti) for h in hits], bool)

    for ti, track in enumerate(railroad.tracks):
        p = _enu(track.points)
        left, tan = _left_normals(p)
        left3 = np.column_stack([left, np.zeros(len(p))])
        tunnel = block_mask(track.blocks, len(p), BlockType.TUNNEL)
        bw, tw, bh = g.ballast_bottom, g.ballast_top, g.ballast_height
        add(SemanticClass.TRACKBED, sweep(p, left, [(bw, 0.0), (-bw, 0.0), (-tw, bh), (tw, bh)]))
        # sleepers at a fixed arc-length pitch
        s, q = _arc_positions(p, g.sleeper_pitch)
        sx = np.interp(q, s, p[:, 0])
        sy = np.interp(q, s, p[:, 1])
        sz = np.interp(q, s, p[:, 2]) + bh + g.sleeper_half[2]
        k = np.clip(np.searchsorted(s, q), 0, len(p) - 1)
        yaw = np.arctan2(left[k, 1], left[k, 0])
        add(SemanticClass.TRACKBED, boxes(np.column_stack([sx, sy, sz]), g.sleeper_half, yaw))
        rb, rw, rh = g.rail_base, g.rail_half_width, g.rail_height
        for side in (1.0, -1.0):
            c = side * g.gauge / 2
            add(SemanticClass.RAIL_TRACK, sweep(p, left, [(c + rw, rb), (c - rw, rb), (c - rw, rb + rh), (c + rw, rb + rh)]))
        # poles on the side away from the main track, skipped where another track is near
        out = 1.0 if track.slot <= 0 else -1.0  # +1 = left of travel
        s, q = _arc_positions(p, g.pole_interval)
        idx = np.unique(np.clip(np.searchsorted(s, q), 0, len(p) - 1))
        idx = idx[~tunnel[idx]]
        base = p[idx] + out * g.pole_offset * left3[idx]
        ok = clear_of_others(base[:, :2], ti, g.clearance + g.ballast_bottom)
        idx, base = idx[ok], base[ok]
        for i, b0 in zip(idx, base):
            add(SemanticClass.POLE, boxes(b0 + [0.0, 0.0, g.pole_height / 2], (0.15, 0.15, g.pole_height / 2)))
        wire = []
        for i, b0 in zip(idx, base):
            top = b0 + [0.0, 0.0, g.wire_height + 0.3]
            over = p[i] + [0.0, 0.0, g.wire_height + 0.3]
            wire.append(segment_box(top, over, 0.04, 0.04))
        for i0, i1 in zip(idx[:-1], idx[1:]):
            a = p[i0] + [0.0, 0.0, g.wire_height]
            b = p[i1] + [0.0, 0.0, g.wire_height]
            # contact wire drawn as chords between supports
            wire.append(segment_box(a, b, 0.01, 0.01))
        if wire:
            add(SemanticClass.CATENARY, np.concatenate(wire))
        for lo, hi in _runs(tunnel):
            lo0, hi0 = max(lo - 1, 0), min(hi + 1, len(p))
            hw, wall, crown = g.tunnel_half_width, g.tunnel_wall, g.tunnel_crown
            ang = np.linspace(0.0, np.pi, 9)
            arch = [(hw * np.cos(a), wall + (crown - wall) * np.sin(a)) for a in ang]
            prof = [(hw, 0.0), *arch, (-hw, 0.0)]
            add(SemanticClass.TUNNEL, sweep(p[lo0:hi0], left[lo0:hi0], prof, closed=False))
        for lo, hi in _runs(block_mask(track.blocks, len(p), BlockType.BRIDGE)):
            lo0, hi0 = max(lo - 1, 0), min(hi + 1, len(p))
            bw2, dd = g.bridge_half_width, g.bridge_depth
            deck = sweep(p[lo0:hi0], left[lo0:hi0], [(bw2, -dd), (bw2, -0.01), (-bw2, -0.01), (-bw2, -dd)][::-1])
            s, q = _arc_positions(p[lo0:hi0], g.pier_interval)
            k = np.clip(np.searchsorted(s, q[1:]), 0, hi0 - lo0 - 1) + lo0
            piers = boxes(p[k] - [0.0, 0.0, dd + g.pier_height / 2], (0.75, 0.75, g.pier_height / 2))
            add(SemanticClass.BRIDGE, np.concatenate([deck, piers]))
        for lo, hi in _runs(block_mask(track.blocks, len(p), BlockType.STATION)):
            a, b = g.platform_offset
            for side in (out, -out):
                mid = p[lo:hi] + side * (a + b) / 2 * left3[lo:hi]
                ok = clear_of_others(mid[:, :2], ti, (b - a) / 2 + g.clearance + g.ballast_bottom)
                if ok.all():
                    prof = [(side * a, 0.0), (side * b, 0.0), (side * b, g.platform_height), (side * a, g.platform_height)]
                    if side < 0:
                        prof = prof[::-1]
                    add(SemanticClass.PLATFORM, sweep(p[lo:hi], left[lo:hi], prof))
                    break
    return objs


def terrain_object(hm: HeightMap, railroad: Railroad, band: float = 120.0, stride: int = 2, instance_id: int = 0,
                   materials: dict | None = None) -> SceneObject:
    """Triangulated height map restricted to cells within ``band`` of any track."""
    H = hm.heights[::stride, ::stride]
    rows, cols = H.shape
    sp = hm.spacing * stride
    ce = hm.origin[0] + (np.arange(cols - 1) + 0.5) * sp
    cn = hm.origin[1] + (np.arange(rows - 1) + 0.5) * sp
    E, N = np.meshgrid(ce, cn)
    tree = cKDTree(_enu(railroad.all_points())[:, :2])
    d, _ = tree.query(np.column_stack([E.ravel(), N.ravel()]), distance_upper_bound=band + sp)
    ii, jj = np.divmod(np.flatnonzero(d <= band), cols - 1)

    def v(i, j):
        return np.stack([hm.origin[0] + j * sp, hm.origin[1] + i * sp, H[i, j]], -1)

    v00, v10, v01, v11 = v(ii, jj), v(ii, jj + 1), v(ii + 1, jj), v(ii + 1, jj + 1)
    tris = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    return SceneObject(instance_id, SemanticClass.TERRAIN, tris, material_for(SemanticClass.TERRAIN, materials))


@dataclass
class SceneParams:
    seed: int = 0
    densities: dict = field(default_factory=lambda: dict(DEFAULT_DENSITY))
    object_band: float = 60.0
    terrain_band: float = 120.0
    terrain_stride: int = 2
    track: TrackGeometryParams = field(default_factory=TrackGeometryParams)


def build_scene(railroad: Railroad, hm: HeightMap, params: SceneParams | None = None,
                materials: dict | None = None) -> tuple[Scene, list[Placement]]:
    params = params or SceneParams()
    objs = [terrain_object(hm, railroad, params.terrain_band, params.terrain_stride, 0, materials)]
    objs += build_track_geometry(railroad, params.track, first_id=1, materials=materials)
    placements = generate_spawn_points(railroad, hm, params.densities, params.seed, params.object_band)
    objs += instantiate_objects(placements, params.seed, first_id=len(objs), materials=materials)
    return Scene(objs), placements
