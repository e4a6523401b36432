"""Pseudo-random routes, block speed limits and bogie trajectories.

A route is a sequence of straight and circular-arc blocks sampled at an even
arc-length step. Some straights are then re-typed as bridges, tunnels or
stations. Three smoothing splines (north, east, down) over the samples give a
continuous centreline on which the train is driven.

The longitudinal control law is a speed plan over arc length: a forward pass
under the traction limit and a backward (look-ahead braking) pass under the
braking limit, both clipped to a friction circle so that the longitudinal
and centripetal accelerations never add up past the largest configured limit.
The planned motion is then run through a moving-average filter of
``smoothing_time`` seconds, which bounds jerk. Speed caps and curvature are
applied over zones widened by the distance the filter can travel, so the
filtered motion still respects every cap.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d

from ._rng import make_rng
from .geom import SmoothingSpline, eval_spline

STREAM_ROUTE = 1


class BlockType(str, enum.Enum):
    STRAIGHT = "Straight"
    CURVE = "Curve"
    STATION = "Station"
    TUNNEL = "Tunnel"
    BRIDGE = "Bridge"


OVERLAY_TYPES = (BlockType.STATION, BlockType.TUNNEL, BlockType.BRIDGE)


@dataclass(frozen=True)
class Block:
    """Typed run of route points ``[start, end)``; the last block owns the final point."""

    type: BlockType
    start: int
    end: int
    radius: float | None = None
    speed_cap: float | None = None

    def to_dict(self) -> dict:
        d = {"type": self.type.value, "range": [self.start, self.end]}
        if self.radius is not None:
            d["radius"] = self.radius
        if self.speed_cap is not None:
            d["speed_cap"] = self.speed_cap
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        start, end = d["range"]
        return cls(BlockType(d["type"]), int(start), int(end), d.get("radius"), d.get("speed_cap"))


@dataclass
class RouteParams:
    n_blocks: int = 8
    straight_length: tuple[float, float] = (200.0, 450.0)
    curve_length: tuple[float, float] = (150.0, 350.0)
    min_radius: float = 400.0
    max_radius: float = 1500.0
    p_curve: float = 0.5
    p_bridge: float = 0.15
    p_tunnel: float = 0.1
    p_station: float = 0.15
    ds: float = 1.0
    height: float = 0.0
    heading: float = 0.0
    smoothing: float = 0.1

    def validate(self):
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.ds <= 0.0:
            raise ValueError("ds must be > 0")
        if self.min_radius <= 0.0 or self.max_radius < self.min_radius:
            raise ValueError("need 0 < min_radius <= max_radius")
        for name in ("p_curve", "p_bridge", "p_tunnel", "p_station"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.p_bridge + self.p_tunnel + self.p_station > 1.0 + 1e-12:
            raise ValueError("overlay probabilities must sum to at most 1")
        for name in ("straight_length", "curve_length"):
            lo, hi = getattr(self, name)
            if lo < self.ds or hi < lo:
                raise ValueError(f"{name} range must satisfy ds <= lo <= hi")


class Route:
    """Main-track centreline: NED points at even spacing plus their blocks."""

    def __init__(self, points, blocks, smoothing: float = 0.1):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
            raise ValueError("a route needs at least 4 NED points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("route points must be finite")
        self.points = pts
        self.blocks = list(blocks)
        self.smoothing = float(smoothing)
        if not self.blocks:
            raise ValueError("a route needs at least one block")
        if self.blocks[0].start != 0 or self.blocks[-1].end != len(pts):
            raise ValueError("blocks must cover every route point")
        for a, b in zip(self.blocks[:-1], self.blocks[1:]):
            if a.end != b.start or a.end <= a.start:
                raise ValueError("blocks must be contiguous and non-empty")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0.0):
            raise ValueError("duplicate consecutive route points")
        self.s = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @cached_property
    def splines(self) -> tuple[SmoothingSpline, SmoothingSpline, SmoothingSpline]:
        return tuple(SmoothingSpline(self.s, self.points[:, k], self.smoothing) for k in range(3))

    def _eval(self, s, order):
        return np.stack([eval_spline(sp, s, order) for sp in self.splines], axis=-1)

    def position(self, s):
        return self._eval(s, 0)

    def tangent(self, s):
        return self._eval(s, 1)

    def curvature_vector(self, s):
        return self._eval(s, 2)

    def block_extent(self, i: int) -> tuple[float, float]:
        b = self.blocks[i]
        return float(self.s[b.start]), float(self.s[min(b.end, len(self.points) - 1)])

    def block_index_at(self, s) -> np.ndarray:
        starts = np.array([self.s[b.start] for b in self.blocks])
        return np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(self.blocks) - 1)

    def block_mask(self, *kinds: BlockType) -> np.ndarray:
        return block_mask(self.blocks, len(self.points), *kinds)

    def to_dict(self) -> dict:
        return {
            "smoothing": self.smoothing,
            "blocks": [b.to_dict() for b in self.blocks],
            "points": self.points.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Route":
        return cls(d["points"], [Block.from_dict(b) for b in d["blocks"]], d.get("smoothing", 0.1))

    def __eq__(self, other):
        return (
            isinstance(other, Route)
            and np.array_equal(self.points, other.points)
            and self.blocks == other.blocks
            and self.smoothing == other.smoothing
        )


def block_mask(blocks, n: int, *kinds: BlockType) -> np.ndarray:
    """Boolean mask over ``n`` points that lie in a block of one of ``kinds``."""
    out = np.zeros(n, dtype=bool)
    for b in blocks:
        if b.type in kinds:
            out[b.start : b.end] = True
    return out


def trace_path(p0, heading0: float, segments, ds: float):
    """Sample a planar path made of (length, curvature) segments every ``ds``.

    Heading is measured clockwise from north; positive curvature turns right.
    Each segment length must be an integer multiple of ``ds``. Returns the
    NED points (first point included, last included) and the end heading.
    """
    p = np.asarray(p0, dtype=float).copy()
    psi = float(heading0)
    pts = [p[None, :]]
    for length, kappa in segments:
        n = int(round(length / ds))
        u = np.arange(1, n + 1) * ds
        seg = _arc_points(p, psi, u, kappa)
        pts.append(seg)
        p = seg[-1].copy() if n else p
        psi = psi + kappa * n * ds
    return np.concatenate(pts), psi


def _arc_points(p0, psi0, u, kappa):
    out = np.empty((len(u), 3))
    out[:, 2] = p0[2]
    if kappa == 0.0:
        out[:, 0] = p0[0] + u * np.cos(psi0)
        out[:, 1] = p0[1] + u * np.sin(psi0)
    else:
        psi = psi0 + kappa * u
        out[:, 0] = p0[0] + (np.sin(psi) - np.sin(psi0)) / kappa
        out[:, 1] = p0[1] - (np.cos(psi) - np.cos(psi0)) / kappa
    return out


def generate_route(seed: int, params: RouteParams | None = None) -> Route:
    params = params or RouteParams()
    params.validate()
    rng = make_rng(seed, STREAM_ROUTE)
    ds = params.ds
    specs = []  # (type, n_steps, radius, signed curvature)
    for i in range(params.n_blocks):
        is_curve = rng.random() < params.p_curve
        if i == 0 or i == params.n_blocks - 1:
            is_curve = False
        overlay_draw = rng.random()
        if is_curve:
            radius = float(rng.uniform(params.min_radius, params.max_radius))
            side = 1.0 if rng.random() < 0.5 else -1.0
            length = min(float(rng.uniform(*params.curve_length)), 0.5 * np.pi * radius)
            n = max(1, int(round(length / ds)))
            specs.append((BlockType.CURVE, n, radius, side / radius))
            continue
        length = float(rng.uniform(*params.straight_length))
        n = max(1, int(round(length / ds)))
        btype = BlockType.STRAIGHT
        edges = np.cumsum([params.p_bridge, params.p_tunnel, params.p_station])
        if overlay_draw < edges[0]:
            btype = BlockType.BRIDGE
        elif overlay_draw < edges[1]:
            btype = BlockType.TUNNEL
        elif overlay_draw < edges[2]:
            btype = BlockType.STATION
        specs.append((btype, n, None, 0.0))

    p0 = np.array([0.0, 0.0, -params.height])
    points, _ = trace_path(p0, params.heading, [(n * ds, k) for _, n, _, k in specs], ds)
    blocks = []
    start = 0
    for i, (btype, n, radius, _) in enumerate(specs):
        end = start + n if i < len(specs) - 1 else len(points)
        blocks.append(Block(btype, start, end, radius))
        start += n
    return Route(points, blocks, params.smoothing)


def route_from_points(points, smoothing: float = 0.1, curve_threshold: float = 1.0 / 5000.0) -> Route:
    """Build a route from imported NED points, inferring Straight/Curve blocks.

    A point belongs to a curve when the circumradius through it and its two
    neighbours is below ``1 / curve_threshold``.
    """
    pts = np.asarray(points, dtype=float)
    kappa = np.zeros(len(pts))
    a, b, c = pts[:-2, :2], pts[1:-1, :2], pts[2:, :2]
    kappa[1:-1] = circumcurvature(a, b, c)
    kappa[0], kappa[-1] = kappa[1], kappa[-2]
    curved = kappa > curve_threshold
    blocks = []
    start = 0
    for i in range(1, len(pts) + 1):
        if i == len(pts) or curved[i] != curved[start]:
            if curved[start]:
                blocks.append(Block(BlockType.CURVE, start, i, float(1.0 / np.median(kappa[start:i]))))
            else:
                blocks.append(Block(BlockType.STRAIGHT, start, i))
            start = i
    return Route(pts, blocks, smoothing)


def circumcurvature(a, b, c):
    """1 / circumradius of triangles (a, b, c); 0 for collinear points."""
    ab = np.linalg.norm(b - a, axis=-1)
    bc = np.linalg.norm(c - b, axis=-1)
    ca = np.linalg.norm(a - c, axis=-1)
    u, v = b - a, c - a
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    if u.shape[-1] == 3:
        cross = np.linalg.norm(np.cross(u, v), axis=-1)
    return 2.0 * np.abs(cross) / (ab * bc * ca)


# -- speed limits ----------------------------------------------------------


@dataclass
class TrainParams:
    bogie_spacing: float = 15.0
    a_max: float = 0.6
    d_max: float = 0.8
    a_lat_max: float = 0.65
    line_speed: float = 40.0
    ts: float = 0.01
    initial_speed: float = 0.0
    stop_at_end: bool = True
    smoothing_time: float = 1.0

    def validate(self):
        for name in ("bogie_spacing", "a_max", "d_max", "a_lat_max", "line_speed", "ts"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.initial_speed < 0.0 or self.smoothing_time < 0.0:
            raise ValueError("initial_speed and smoothing_time must be >= 0")


@dataclass
class SpeedLimits:
    station: float = 12.0
    tunnel: float = 30.0
    bridge: float = 30.0


@dataclass
class VelocityProfile:
    v_max: np.ndarray


def velocity_profile(route: Route, train: TrainParams, limits: SpeedLimits | None = None) -> VelocityProfile:
    limits = limits or SpeedLimits()
    caps = {
        BlockType.STATION: limits.station,
        BlockType.TUNNEL: limits.tunnel,
        BlockType.BRIDGE: limits.bridge,
    }
    out = []
    for b in route.blocks:
        v = train.line_speed
        if b.type == BlockType.CURVE:
            v = min(v, float(np.sqrt(train.a_lat_max * b.radius)))
        elif b.type in caps:
            v = min(v, caps[b.type])
        if b.speed_cap is not None:
            v = min(v, b.speed_cap)
        out.append(v)
    return VelocityProfile(np.array(out))


# -- trajectory ------------------------------------------------------------

TRAJECTORY_COLUMNS = (
    ["t", "s", "speed", "accel_long"]
    + [f"front_{q}{a}" for q in ("p", "v", "a") for a in "ned"]
    + [f"rear_{q}{a}" for q in ("p", "v", "a") for a in "ned"]
    + ["yaw", "pitch", "roll", "wn", "we", "wd"]
)


@dataclass
class TrajectorySample:
    t: float
    front_position: np.ndarray
    front_velocity: np.ndarray
    front_acceleration: np.ndarray
    rear_position: np.ndarray
    rear_velocity: np.ndarray
    rear_acceleration: np.ndarray
    orientation: np.ndarray
    omega: np.ndarray


@dataclass
class Trajectory:
    """Column store of bogie states sampled every ``ts`` (all NED).

    ``orientation`` holds (yaw, pitch, roll) of the track tangent at the front
    bogie; ``omega`` is the angular velocity of that frame expressed in NED.
    """

    t: np.ndarray
    s: np.ndarray
    speed: np.ndarray
    accel_long: np.ndarray
    front_position: np.ndarray
    front_velocity: np.ndarray
    front_acceleration: np.ndarray
    rear_position: np.ndarray
    rear_velocity: np.ndarray
    rear_acceleration: np.ndarray
    orientation: np.ndarray
    omega: np.ndarray
    ts: float = 0.01
    bogie_spacing: float = 15.0

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k: int) -> TrajectorySample:
        return TrajectorySample(
            float(self.t[k]),
            self.front_position[k],
            self.front_velocity[k],
            self.front_acceleration[k],
            self.rear_position[k],
            self.rear_velocity[k],
            self.rear_acceleration[k],
            self.orientation[k],
            self.omega[k],
        )

    def as_table(self) -> np.ndarray:
        return np.column_stack(
            [
                self.t,
                self.s,
                self.speed,
                self.accel_long,
                self.front_position,
                self.front_velocity,
                self.front_acceleration,
                self.rear_position,
                self.rear_velocity,
                self.rear_acceleration,
                self.orientation,
                self.omega,
            ]
        )

    def head(self, n: int) -> "Trajectory":
        kw = {k: v[:n] if isinstance(v, np.ndarray) else v for k, v in self.__dict__.items()}
        return Trajectory(**kw)


def _zone_min(values_at_nodes, node_s, zones):
    out = np.asarray(values_at_nodes, dtype=float).copy()
    for lo, hi, cap in zones:
        i0 = np.searchsorted(node_s, lo, side="left")
        i1 = np.searchsorted(node_s, hi, side="right")
        out[i0:i1] = np.minimum(out[i0:i1], cap)
    return out


def generate_trajectory(
    route: Route,
    profile: VelocityProfile,
    train: TrainParams | None = None,
    duration: float | None = None,
    grid_step: float = 0.1,
) -> Trajectory:
    train = train or TrainParams()
    train.validate()
    L = train.bogie_spacing
    if route.length <= L:
        raise ValueError("route shorter than the bogie spacing")
    ts = train.ts
    n_half = int(round(0.5 * train.smoothing_time / ts))
    window = (2 * n_half + 1) * ts
    margin = train.line_speed * window + grid_step
    a_top = max(train.a_max, train.d_max, train.a_lat_max)

    v0 = train.initial_speed
    s_start = L + v0 * (n_half + 1) * ts + 1e-6
    s_end = route.length
    if s_start >= s_end:
        raise ValueError("route too short for the requested initial speed")
    n_nodes = int(np.ceil((s_end - s_start) / grid_step)) + 1
    node_s = np.linspace(s_start, s_end, n_nodes)
    step = node_s[1] - node_s[0]

    # caps and curvature act on the whole vehicle, widened by the filter reach
    zones = []
    for i, v in enumerate(profile.v_max):
        lo, hi = route.block_extent(i)
        zones.append((lo - margin, hi + L + margin, float(v)))
    cap = _zone_min(np.full(n_nodes, train.line_speed), node_s, zones)

    probe = np.arange(0.0, route.length + 0.5 * grid_step, grid_step)
    probe = probe[probe <= route.length]
    kappa = np.linalg.norm(route.curvature_vector(probe), axis=1)
    reach = int(np.ceil((0.5 * L + margin) / grid_step))
    kmax = maximum_filter1d(kappa, size=2 * reach + 1, mode="nearest")
    centre = np.clip(np.round((node_s - 0.5 * L) / grid_step).astype(int), 0, len(probe) - 1)
    kz = kmax[centre]
    with np.errstate(divide="ignore"):
        cap = np.minimum(cap, np.where(kz > 0.0, np.sqrt(a_top / np.maximum(kz, 1e-300)), np.inf))
    kcell = np.maximum(kz[:-1], kz[1:])

    if v0 > cap[0] + 1e-12:
        raise ValueError(f"initial speed {v0} exceeds the local limit {cap[0]:.3f}")
    v = cap.copy()
    v[0] = v0
    two_step = 2.0 * step
    for i in range(n_nodes - 1):
        vhi2 = v[i] ** 2 + two_step * a_top
        lim = min(train.a_max, np.sqrt(max(a_top**2 - (vhi2 * kcell[i]) ** 2, 0.0)))
        v[i + 1] = min(cap[i + 1], np.sqrt(v[i] ** 2 + two_step * lim))
    v_end = 0.0 if train.stop_at_end else v[-1]
    v[-1] = min(v[-1], v_end)
    for i in range(n_nodes - 2, -1, -1):
        vhi2 = v[i + 1] ** 2 + two_step * a_top
        lim = min(train.d_max, np.sqrt(max(a_top**2 - (vhi2 * kcell[i]) ** 2, 0.0)))
        v[i] = min(v[i], np.sqrt(v[i + 1] ** 2 + two_step * lim))
    if v[0] < v0 - 1e-9:
        raise ValueError("speed profile infeasible: cannot brake in time for the next limit")

    vsum = v[:-1] + v[1:]
    if np.any(vsum <= 0.0):
        raise ValueError("speed profile stalls before the end of the route")
    cell_acc = (v[1:] ** 2 - v[:-1] ** 2) / (2.0 * step)
    node_t = np.concatenate([[0.0], np.cumsum(2.0 * step / vsum)])
    t_end = node_t[-1]

    if train.stop_at_end:
        n_out = int(np.ceil(t_end / ts)) + n_half + 1
    else:
        n_out = int(np.floor((t_end - n_half * ts) / ts)) + 1
    if duration is not None:
        n_out = min(n_out, int(np.floor(duration / ts + 1e-9)) + 1)
    if n_out < 1:
        raise ValueError("route too short to produce a trajectory")

    tau = (np.arange(n_out + 2 * n_half) - n_half) * ts
    sp = np.empty_like(tau)
    vp = np.empty_like(tau)
    ap = np.zeros_like(tau)
    before = tau < 0.0
    after = tau > t_end
    inside = ~(before | after)
    sp[before] = s_start + v0 * tau[before]
    vp[before] = v0
    sp[after] = s_end + v_end * (tau[after] - t_end)
    vp[after] = v_end
    ti = tau[inside]
    k = np.clip(np.searchsorted(node_t, ti, side="right") - 1, 0, n_nodes - 2)
    u = ti - node_t[k]
    ap[inside] = cell_acc[k]
    sp[inside] = node_s[k] + v[k] * u + 0.5 * cell_acc[k] * u * u
    vp[inside] = v[k] + cell_acc[k] * u

    box = np.full(2 * n_half + 1, 1.0 / (2 * n_half + 1))
    s_f = np.minimum(np.convolve(sp, box, mode="valid"), s_end)
    v_f = np.convolve(vp, box, mode="valid")
    a_f = np.convolve(ap, box, mode="valid")

    front = _bogie_states(route, s_f, v_f, a_f)
    rear = _bogie_states(route, s_f - L, v_f, a_f)
    return Trajectory(
        t=np.arange(n_out) * ts,
        s=s_f,
        speed=v_f,
        accel_long=a_f,
        front_position=front[0],
        front_velocity=front[1],
        front_acceleration=front[2],
        rear_position=rear[0],
        rear_velocity=rear[1],
        rear_acceleration=rear[2],
        orientation=front[3],
        omega=front[4],
        ts=ts,
        bogie_spacing=L,
    )


def _bogie_states(route: Route, s, v, a):
    pos = route.position(s)
    tan = route.tangent(s)
    cur = route.curvature_vector(s)
    vel = tan * v[:, None]
    acc = cur * (v * v)[:, None] + tan * a[:, None]
    tn, te, td = tan[:, 0], tan[:, 1], tan[:, 2]
    kn, ke, kd = cur[:, 0], cur[:, 1], cur[:, 2]
    hz2 = tn * tn + te * te
    hz = np.sqrt(hz2)
    yaw = np.arctan2(te, tn)
    pitch = np.arctan2(-td, hz)
    yaw_rate = (tn * ke - te * kn) / hz2 * v
    dhz = (tn * kn + te * ke) / hz
    pitch_rate = (-kd * hz + td * dhz) / (td * td + hz2) * v
    # angular velocity of the Z-Y-X tangent frame (roll fixed at 0), NED axes
    omega = np.zeros_like(pos)
    omega[:, 0] = -np.sin(yaw) * pitch_rate
    omega[:, 1] = np.cos(yaw) * pitch_rate
    omega[:, 2] = yaw_rate
    orient = np.column_stack([yaw, pitch, np.zeros_like(yaw)])
    return pos, vel, acc, orient, omega


def point_trajectory(traj: Trajectory, offset: float) -> dict[str, np.ndarray]:
    """States of a point ``offset`` metres along the vehicle axis from the front bogie.

    ``offset = 0`` is the front bogie and ``offset = -L`` the rear one; values
    outside ``[-L, 0]`` extrapolate linearly along the vehicle. Orientation is
    the rear-to-front axis of the vehicle.
    """
    w = -float(offset) / traj.bogie_spacing
    out = {}
    for name in ("position", "velocity", "acceleration"):
        f = getattr(traj, f"front_{name}")
        r = getattr(traj, f"rear_{name}")
        out[name] = (1.0 - w) * f + w * r
    axis = traj.front_position - traj.rear_position
    yaw = np.arctan2(axis[:, 1], axis[:, 0])
    pitch = np.arctan2(-axis[:, 2], np.hypot(axis[:, 0], axis[:, 1]))
    out["orientation"] = np.column_stack([yaw, pitch, np.zeros_like(yaw)])
    out["t"] = traj.t.copy()
    return out


def speed_limit_along(route: Route, profile: VelocityProfile, s_front, bogie_spacing: float) -> np.ndarray:
    """Smallest block cap touched by a vehicle whose front bogie is at ``s_front``."""
    s_front = np.atleast_1d(np.asarray(s_front, dtype=float))
    out = np.full(s_front.shape, np.inf)
    for i, cap in enumerate(profile.v_max):
        lo, hi = route.block_extent(i)
        hit = (s_front >= lo) & (s_front - bogie_spacing <= hi)
        out[hit] = np.minimum(out[hit], cap)
    return out


# -- files -----------------------------------------------------------------


def save_trajectory(traj: Trajectory, path) -> None:
    """Comma-separated text, header row then one row per sample (``%.17g``)."""
    path = Path(path)
    header = ",".join(TRAJECTORY_COLUMNS)
    meta = f"# ts={traj.ts!r} bogie_spacing={traj.bogie_spacing!r}\n"
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(meta)
        np.savetxt(fh, traj.as_table(), fmt="%.17g", delimiter=",", header=header, comments="")


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        meta = fh.readline()
        header = fh.readline().strip().split(",")
        if header != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected trajectory columns")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    kv = dict(item.split("=") for item in meta.lstrip("# ").split())
    c = {name: i for i, name in enumerate(TRAJECTORY_COLUMNS)}

    def cols(prefix):
        return data[:, [c[prefix + a] for a in "ned"]]

    return Trajectory(
        t=data[:, c["t"]],
        s=data[:, c["s"]],
        speed=data[:, c["speed"]],
        accel_long=data[:, c["accel_long"]],
        front_position=cols("front_p"),
        front_velocity=cols("front_v"),
        front_acceleration=cols("front_a"),
        rear_position=cols("rear_p"),
        rear_velocity=cols("rear_v"),
        rear_acceleration=cols("rear_a"),
        orientation=data[:, [c["yaw"], c["pitch"], c["roll"]]],
        omega=data[:, [c["wn"], c["we"], c["wd"]]],
        ts=float(kv["ts"]),
        bogie_spacing=float(kv["bogie_spacing"]),
    )


def save_route_points(points, path) -> None:
    """One ``n e d`` line per point."""
    np.savetxt(path, np.asarray(points, dtype=float), fmt="%.17g", delimiter=" ")


def load_route_points(path) -> np.ndarray:
    pts = np.loadtxt(path, ndmin=2)
    if pts.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns (n e d)")
    return pts


def save_route(route: Route, path) -> None:
    Path(path).write_text(json.dumps(route.to_dict()), encoding="utf-8")


def load_route(path) -> Route:
    return Route.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
