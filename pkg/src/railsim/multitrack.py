"""Duplicated main track, auxiliary tracks and the railroad description file.

Parallel tracks occupy lateral *slots*: slot ``k`` runs at ``|k| * D`` from
the main centreline, right of the direction of travel for ``k > 0`` and left
for ``k < 0``. The duplicate owns slot +1. Auxiliaries always take the next
free slot outward on their side and only the outermost track of a side may
end, so entering and outgoing parts never cross an active parallel track.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ._rng import make_rng
from .routegen import Block, BlockType, Route, trace_path

STREAM_AUX = 2
DEFAULT_INTER_TRACK_DISTANCE = 4.0


class TrackKind(str, enum.Enum):
    MAIN = "Main"
    DUPLICATE = "Duplicate"
    AUXILIARY = "Auxiliary"


@dataclass
class Track:
    points: np.ndarray
    blocks: list[Block]
    kind: TrackKind = TrackKind.MAIN
    slot: int = 0
    parallel: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.kind = TrackKind(self.kind)
        self.parallel = [tuple(map(int, p)) for p in self.parallel]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "slot": self.slot,
            "parallel": [list(p) for p in self.parallel],
            "blocks": [b.to_dict() for b in self.blocks],
            "points": self.points.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Track":
        return cls(
            np.array(d["points"], dtype=float).reshape(-1, 3),
            [Block.from_dict(b) for b in d["blocks"]],
            TrackKind(d["kind"]),
            int(d.get("slot", 0)),
            [tuple(p) for p in d.get("parallel", [])],
        )

    def __eq__(self, other):
        return (
            isinstance(other, Track)
            and np.array_equal(self.points, other.points)
            and self.blocks == other.blocks
            and self.kind == other.kind
            and self.slot == other.slot
            and self.parallel == other.parallel
        )

    def parallel_points(self) -> np.ndarray:
        if not self.parallel:
            return np.empty((0, 3))
        return np.concatenate([self.points[a:b] for a, b in self.parallel])


@dataclass
class Railroad:
    main: Track
    others: list[Track] = field(default_factory=list)
    inter_track_distance: float = DEFAULT_INTER_TRACK_DISTANCE
    smoothing: float = 0.1

    @property
    def tracks(self) -> list[Track]:
        return [self.main, *self.others]

    def main_route(self) -> Route:
        return Route(self.main.points, self.main.blocks, self.smoothing)

    def all_points(self) -> np.ndarray:
        return np.concatenate([t.points for t in self.tracks])

    def to_dict(self) -> dict:
        return {
            "inter_track_distance": self.inter_track_distance,
            "smoothing": self.smoothing,
            "tracks": [t.to_dict() for t in self.tracks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Railroad":
        tracks = [Track.from_dict(t) for t in d["tracks"]]
        if not tracks or tracks[0].kind != TrackKind.MAIN:
            raise ValueError("the first railroad track must be the main track")
        return cls(tracks[0], tracks[1:], float(d["inter_track_distance"]), float(d.get("smoothing", 0.1)))

    def __eq__(self, other):
        return (
            isinstance(other, Railroad)
            and self.main == other.main
            and self.others == other.others
            and self.inter_track_distance == other.inter_track_distance
            and self.smoothing == other.smoothing
        )


def railroad_from_route(route: Route) -> Railroad:
    main = Track(route.points, list(route.blocks), TrackKind.MAIN, 0, [(0, len(route.points))])
    return Railroad(main, [], DEFAULT_INTER_TRACK_DISTANCE, route.smoothing)


def _frames(route: Route):
    """Unit horizontal tangents, right normals and signed curvature at each point."""
    tan = route.tangent(route.s)
    cur = route.curvature_vector(route.s)
    h = np.hypot(tan[:, 0], tan[:, 1])
    t2 = tan[:, :2] / h[:, None]
    right = np.column_stack([-t2[:, 1], t2[:, 0]])
    kappa = (tan[:, 0] * cur[:, 1] - tan[:, 1] * cur[:, 0]) / h**3
    return t2, right, kappa


def offset_points(route: Route, lateral: float) -> np.ndarray:
    """Points at ``lateral`` metres right (negative: left) of the centreline, same height."""
    _, right, _ = _frames(route)
    out = route.points.copy()
    out[:, :2] += lateral * right
    return out


def _offset_blocks(route: Route, lateral: float, kappa: np.ndarray) -> list[Block]:
    blocks = []
    for b in route.blocks:
        radius = None
        if b.type == BlockType.CURVE:
            mid = (b.start + b.end) // 2
            # right-hand curve (kappa > 0) has its centre on the right
            radius = b.radius - lateral if kappa[mid] > 0 else b.radius + lateral
        blocks.append(Block(b.type, b.start, b.end, radius))
    return blocks


def _min_radius(route: Route) -> float:
    radii = [b.radius for b in route.blocks if b.type == BlockType.CURVE and b.radius]
    if radii:
        return min(radii)
    _, _, kappa = _frames(route)
    k = np.abs(kappa).max()
    return np.inf if k < 1e-12 else 1.0 / k


def duplicate_main(route: Route, D: float = DEFAULT_INTER_TRACK_DISTANCE) -> Track:
    if D <= 0.0:
        raise ValueError("inter-track distance must be > 0")
    if D >= _min_radius(route):
        raise ValueError("inter-track distance exceeds the smallest curve radius")
    _, _, kappa = _frames(route)
    pts = offset_points(route, D)
    return Track(pts, _offset_blocks(route, D, kappa), TrackKind.DUPLICATE, 1, [(0, len(pts))])


@dataclass
class AuxParams:
    max_parallel: int = 2
    p_spawn: float = 0.3
    p_end: float = 0.4
    D: float = DEFAULT_INTER_TRACK_DISTANCE
    dead_end_length: float = 30.0
    join_angle: float = np.deg2rad(8.0)
    join_radius: float = 400.0
    duplicate_main: bool = False
    seed: int = 0

    def validate(self):
        for name in ("p_spawn", "p_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.D <= 0.0 or self.dead_end_length <= 0.0 or self.join_radius <= 0.0:
            raise ValueError("D, dead_end_length and join_radius must be > 0")
        if self.max_parallel < 0:
            raise ValueError("max_parallel must be >= 0")
        if not 0.0 < self.join_angle < np.pi / 2:
            raise ValueError("join_angle must lie in (0, pi/2)")


@dataclass
class _Active:
    slot: int
    entering: np.ndarray
    entering_blocks: list[tuple[BlockType, int, float | None]]
    start_index: int
    blocks: list[int]


def _stub(route, tree, p, heading, backward, params, straight_only, ds):
    """Entering (backward) or outgoing (forward) part starting at slot point ``p``."""
    if backward:
        heading = heading + np.pi
    stub = round(params.dead_end_length / ds) * ds
    if straight_only:
        pts, _ = trace_path(p, heading, [(stub, 0.0)], ds)
        parts = [(BlockType.STRAIGHT, len(pts) - 1, None)]
    else:
        arc = max(ds, round(params.join_radius * params.join_angle / ds) * ds)
        best = None
        for sign in (1.0, -1.0):
            cand, _ = trace_path(p, heading, [(arc, sign / params.join_radius), (stub, 0.0)], ds)
            d, _ = tree.query(cand[-1, :2])
            if best is None or d > best[0]:
                best = (d, cand)
        pts = best[1]
        n_arc = int(round(arc / ds))
        parts = [(BlockType.CURVE, n_arc, params.join_radius), (BlockType.STRAIGHT, len(pts) - 1 - n_arc, None)]
    return pts[1:], parts


def generate_auxiliaries(railroad: Railroad, params: AuxParams) -> Railroad:
    params.validate()
    route = railroad.main_route()
    D = params.D
    rng = make_rng(params.seed, STREAM_AUX)
    t2, right, kappa = _frames(route)
    heading = np.arctan2(t2[:, 1], t2[:, 0])
    tree = cKDTree(route.points[:, :2])
    ds = float(np.median(np.diff(route.s)))
    others = list(railroad.others)
    if params.duplicate_main and not any(t.kind == TrackKind.DUPLICATE for t in others):
        others.insert(0, duplicate_main(route, D))
    has_dup = any(t.kind == TrackKind.DUPLICATE for t in others)
    base = {1: 2 if has_dup else 1, -1: 1}

    blocks = route.blocks
    nb = len(blocks)
    active: dict[int, list[_Active]] = {1: [], -1: []}
    ended_at: dict[int, int] = {1: -10, -1: -10}
    new_tracks: list[Track] = []

    def slot_point(idx, slot):
        p = route.points[idx].copy()
        p[:2] += slot * D * right[idx]
        return p

    def is_outside(bi, slot):
        b = blocks[bi]
        if b.type != BlockType.CURVE:
            return False
        mid = (b.start + b.end) // 2
        return np.sign(kappa[mid]) != np.sign(slot)

    def slot_fits(bi, slot):
        b = blocks[bi]
        return b.type != BlockType.CURVE or abs(slot) * D < 0.25 * b.radius

    def finish(a: _Active, bi: int):
        idx = blocks[bi].start if bi < nb else len(route.points) - 1
        par = np.array([slot_point(i, a.slot) for i in range(a.start_index, idx + 1)])
        parts = list(a.entering_blocks)
        for j in a.blocks:
            mb = blocks[j]
            lo = max(mb.start, a.start_index)
            hi = idx + 1 if j == a.blocks[-1] else mb.end
            if mb.type == BlockType.CURVE:
                mid = (mb.start + mb.end) // 2
                lateral = a.slot * D
                r = mb.radius - lateral if kappa[mid] > 0 else mb.radius + lateral
                parts.append((BlockType.CURVE, hi - lo, r))
            else:
                parts.append((BlockType.STRAIGHT, hi - lo, None))
        straight_only = is_outside(min(bi, nb - 1), a.slot)
        out_pts, out_parts = _stub(route, tree, par[-1], heading[idx], False, params, straight_only, ds)
        parts += out_parts
        pts = np.concatenate([a.entering, par, out_pts])
        tb: list[Block] = []
        pos = 0
        for t, n, r in parts:
            if n > 0:
                tb.append(Block(t, pos, pos + n, r))
                pos += n
        n_ent = len(a.entering)
        new_tracks.append(Track(pts, tb, TrackKind.AUXILIARY, a.slot, [(n_ent, n_ent + len(par))]))

    for bi in range(1, nb):
        b = blocks[bi]
        tunnel_here = b.type == BlockType.TUNNEL or (bi + 1 < nb and blocks[bi + 1].type == BlockType.TUNNEL)
        # endings: outermost first on each side
        for side in (1, -1):
            stack = active[side]
            while stack:
                a = stack[-1]
                forced = tunnel_here or not slot_fits(bi, a.slot)
                if forced or rng.random() < params.p_end:
                    stack.pop()
                    finish(a, bi)
                    ended_at[side] = bi
                else:
                    break
        # spawn at most one track per block
        spawn_draw = rng.random()
        side = 1 if rng.random() < 0.5 else -1
        n_active = len(active[1]) + len(active[-1])
        if (
            spawn_draw < params.p_spawn
            and n_active < params.max_parallel
            and not tunnel_here
            and blocks[bi - 1].type != BlockType.TUNNEL
            and ended_at[side] < bi - 1
        ):
            slot = side * (base[side] + len(active[side]))
            if slot_fits(bi, slot):
                idx = b.start
                ent, parts = _stub(
                    route, tree, slot_point(idx, slot), heading[idx], True, params, is_outside(bi, slot), ds
                )
                ent = ent[::-1]
                ent_blocks = [(t, n, r) for t, n, r in parts[::-1]]
                active[side].append(_Active(slot, ent, ent_blocks, idx, []))
        for stack in active.values():
            for a in stack:
                a.blocks.append(bi)
    for side in (1, -1):
        while active[side]:
            finish(active[side].pop(), nb)
    return Railroad(railroad.main, others + new_tracks, D, railroad.smoothing)


def emit_railroad(railroad: Railroad, path) -> None:
    Path(path).write_text(json.dumps(railroad.to_dict()), encoding="utf-8")


def parse_railroad(path) -> Railroad:
    return Railroad.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
