"""Height-map landscape around the tracks.

Heights live on a regular ENU grid: row ``i`` runs north, column ``j`` runs
east, vertex ``(i, j)`` sits at ``origin + (j * spacing, i * spacing)``.
Each vertex takes the height of its nearest track point close to the line,
pure fractal noise far from it, and a linear blend in between::

    M = U * (1 - f(d)) + N * f(d)

with ``f`` ramping from 0 at ``d_near`` to 1 at ``d_far``. Bridges carve a
raised-cosine valley under the deck and station blocks widen the flat band.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from .multitrack import Railroad
from .routegen import BlockType, block_mask

TILE = 1009
D_NEAR_FLOOR = 1.5

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_PX = np.uint64(0x8CB92BA72F3D8DD7)
_PY = np.uint64(0xD6E8FEB86659FD93)


@dataclass
class TerrainParams:
    d_near: float = 5.0
    d_far: float = 60.0
    amplitude: float = 40.0
    octaves: int = 5
    wavelength: float = 400.0  # coarsest octave, metres
    persistence: float = 0.5
    seed: int = 0
    valley_depth: float = 12.0
    valley_width: float = 80.0  # bowl radius, metres
    station_multiplier: float = 3.0
    margin: float = 200.0  # grid extends this far past the outermost track point
    spacing: float = 1.0
    keep_radius: float = 1000.0

    def validate(self):
        if self.d_near < D_NEAR_FLOOR:
            raise ValueError(f"d_near must be >= {D_NEAR_FLOOR} m")
        if self.d_far <= self.d_near:
            raise ValueError("d_far must exceed d_near")
        if self.amplitude < 0.0 or self.octaves < 1 or self.wavelength <= 0.0:
            raise ValueError("noise needs amplitude >= 0, octaves >= 1 and wavelength > 0")
        if not 0.0 < self.persistence <= 1.0:
            raise ValueError("persistence must lie in (0, 1]")
        if self.valley_depth < 0.0 or self.valley_width <= 0.0:
            raise ValueError("valley depth must be >= 0 and width > 0")
        if self.station_multiplier < 1.0:
            raise ValueError("station_multiplier must be >= 1")
        if self.spacing <= 0.0 or self.margin < 0.0 or self.keep_radius < 0.0:
            raise ValueError("spacing must be > 0; margin and keep_radius >= 0")

    def octave_table(self) -> list[tuple[float, float]]:
        """(amplitude, wavelength) per octave; amplitudes sum to ``amplitude``."""
        w = self.persistence ** np.arange(self.octaves)
        amps = self.amplitude * w / w.sum()
        return [(float(a), self.wavelength / 2.0**o) for o, a in enumerate(amps)]

    def lipschitz(self) -> float:
        """Upper bound of |N(x + h) - N(x)| / |h| along either grid axis."""
        return sum(2.0 * a / lam for a, lam in self.octave_table())


# -- noise -------------------------------------------------------------------


def _hash01(ix, iy, seed: int, octave: int):
    """Lattice value in [-1, 1] from a splitmix64-style integer hash."""
    with np.errstate(over="ignore"):
        k = ix.astype(np.int64).view(np.uint64) * _PX
        k ^= iy.astype(np.int64).view(np.uint64) * _PY
        k ^= np.uint64((int(seed) * 0x100000001B3 + octave) & 0xFFFFFFFFFFFFFFFF) * _GOLD
        k ^= k >> np.uint64(30)
        k *= _M1
        k ^= k >> np.uint64(27)
        k *= _M2
        k ^= k >> np.uint64(31)
    return (k >> np.uint64(11)).astype(np.float64) * (2.0 / 2.0**53) - 1.0


def noise_at(e, n, params: TerrainParams):
    """Fractal value noise at world positions (metres); |N| <= amplitude."""
    e = np.asarray(e, dtype=float)
    n = np.asarray(n, dtype=float)
    e, n = np.broadcast_arrays(e, n)
    out = np.zeros(e.shape)
    for o, (amp, lam) in enumerate(params.octave_table()):
        x, y = e / lam, n / lam
        x0, y0 = np.floor(x), np.floor(y)
        tx, ty = x - x0, y - y0
        ix, iy = x0.astype(np.int64), y0.astype(np.int64)
        v00 = _hash01(ix, iy, params.seed, o)
        v10 = _hash01(ix + 1, iy, params.seed, o)
        v01 = _hash01(ix, iy + 1, params.seed, o)
        v11 = _hash01(ix + 1, iy + 1, params.seed, o)
        a = v00 + tx * (v10 - v00)
        b = v01 + tx * (v11 - v01)
        out += amp * (a + ty * (b - a))
    return out


def noise_height(i, j, params: TerrainParams, origin=(0.0, 0.0)):
    """Noise at grid vertex (row i, column j) for a grid anchored at ``origin`` (E, N)."""
    i = np.asarray(i)
    j = np.asarray(j)
    return noise_at(origin[0] + j * params.spacing, origin[1] + i * params.spacing, params)


# -- track lookup --------------------------------------------------------------


class TrackIndex:
    """Nearest-track-point queries over every track of a railroad (ENU metres)."""

    def __init__(self, railroad: Railroad):
        pts, bridge, station = [], [], []
        for t in railroad.tracks:
            p = t.points
            pts.append(np.column_stack([p[:, 1], p[:, 0], -p[:, 2]]))
            bridge.append(block_mask(t.blocks, len(p), BlockType.BRIDGE))
            station.append(block_mask(t.blocks, len(p), BlockType.STATION))
        self.points = np.concatenate(pts)
        self.bridge = np.concatenate(bridge)
        self.station = np.concatenate(station)
        self.tree = cKDTree(self.points[:, :2])

    def query(self, en, upper: float = np.inf):
        """Distance and index of the nearest point; beyond ``upper`` gives (inf, -1)."""
        en = np.asarray(en, dtype=float)
        d, k = self.tree.query(en, distance_upper_bound=upper, workers=-1)
        k = np.where(np.isfinite(d), k, -1)
        return d, k


def distance_to_track(vertex_en, railroad_or_index):
    """Horizontal distance to the nearest track point and that point (ENU)."""
    idx = railroad_or_index if isinstance(railroad_or_index, TrackIndex) else TrackIndex(railroad_or_index)
    d, k = idx.query(vertex_en)
    return d, idx.points[k]


def blend(d, d_near: float, d_far: float):
    """0 inside ``d_near``, 1 beyond ``d_far``, linear in between."""
    d = np.asarray(d, dtype=float)
    return np.clip((d - d_near) / (d_far - d_near), 0.0, 1.0)


def compose_height(track_height, noise, f):
    return track_height * (1.0 - f) + noise * f


def widen_station(params: TerrainParams, in_station) -> tuple:
    """Effective (d_near, d_far) for vertices whose nearest point is in a station."""
    dn = np.where(in_station, params.d_near * params.station_multiplier, params.d_near)
    df = np.maximum(params.d_far, dn + 1.0)
    return dn, df


# -- height map -----------------------------------------------------------------


@dataclass
class HeightMap:
    origin: tuple[float, float]
    spacing: float
    heights: np.ndarray
    valley: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        if self.spacing <= 0.0:
            raise ValueError("spacing must be > 0")
        if not np.all(np.isfinite(self.heights)):
            raise ValueError("heights must be finite")

    @property
    def shape(self):
        return self.heights.shape

    def vertex_en(self, i, j):
        return self.origin[0] + np.asarray(j) * self.spacing, self.origin[1] + np.asarray(i) * self.spacing

    def height_at(self, e, n):
        """Bilinear height at world (E, N); clamps to the grid edge."""
        rows, cols = self.heights.shape
        x = np.clip((np.asarray(e, float) - self.origin[0]) / self.spacing, 0.0, cols - 1.0)
        y = np.clip((np.asarray(n, float) - self.origin[1]) / self.spacing, 0.0, rows - 1.0)
        j0 = np.minimum(np.floor(x).astype(int), cols - 2)
        i0 = np.minimum(np.floor(y).astype(int), rows - 2)
        tx, ty = x - j0, y - i0
        H = self.heights
        a = H[i0, j0] + tx * (H[i0, j0 + 1] - H[i0, j0])
        b = H[i0 + 1, j0] + tx * (H[i0 + 1, j0 + 1] - H[i0 + 1, j0])
        return a + ty * (b - a)


def grid_extent(railroad: Railroad, params: TerrainParams):
    """Grid origin (E, N) and shape padded up to whole tiles."""
    p = railroad.all_points()
    e, n = p[:, 1], p[:, 0]
    e0 = np.floor((e.min() - params.margin) / params.spacing) * params.spacing
    n0 = np.floor((n.min() - params.margin) / params.spacing) * params.spacing
    cols = int(np.ceil((e.max() + params.margin - e0) / params.spacing)) + 1
    rows = int(np.ceil((n.max() + params.margin - n0) / params.spacing)) + 1
    rows = -(-rows // TILE) * TILE
    cols = -(-cols // TILE) * TILE
    return (float(e0), float(n0)), (rows, cols)


def build_heightmap(railroad: Railroad, params: TerrainParams | None = None, chunk_rows: int = 256) -> HeightMap:
    params = params or TerrainParams()
    params.validate()
    origin, (rows, cols) = grid_extent(railroad, params)
    index = TrackIndex(railroad)
    H = np.empty((rows, cols))
    jj = np.arange(cols)
    for r0 in range(0, rows, chunk_rows):
        ii = np.arange(r0, min(rows, r0 + chunk_rows))
        E, N = np.meshgrid(origin[0] + jj * params.spacing, origin[1] + ii * params.spacing)
        H[ii] = _compose_block(E, N, index, params)
    hm = HeightMap(origin, params.spacing, H)
    apply_valley(hm, railroad, params, index)
    return hm


def _compose_block(E, N, index: TrackIndex, params: TerrainParams):
    # past the widest blend band the nearest point no longer matters (f = 1)
    reach = max(params.d_far, params.d_near * params.station_multiplier + 1.0)
    d, k = index.query(np.column_stack([E.ravel(), N.ravel()]), upper=reach + params.spacing)
    far = k < 0
    dn, df = widen_station(params, index.station[k] & ~far)
    f = np.where(far, 1.0, blend(d, dn, df))
    U = np.where(far, 0.0, index.points[k, 2])
    noise = noise_at(E.ravel(), N.ravel(), params)
    return compose_height(U, noise, f).reshape(E.shape)


def vertex_height(e, n, index: TrackIndex, params: TerrainParams):
    """Eq. (1) at individual world positions, before valley patches."""
    return _compose_block(np.atleast_1d(e), np.atleast_1d(n), index, params)


def _bridge_centres(railroad: Railroad):
    out = []
    for t in railroad.tracks:
        for b in t.blocks:
            if b.type == BlockType.BRIDGE:
                m = t.points[(b.start + b.end - 1) // 2]
                half = 0.5 * np.linalg.norm(t.points[b.end - 1, :2] - t.points[b.start, :2])
                out.append((m[1], m[0], -m[2], half))
    return out


def valley_profile(r, depth: float, width: float):
    """Raised-cosine bowl: ``depth`` at the centre, 0 at and beyond ``width``."""
    r = np.asarray(r, dtype=float)
    return np.where(r < width, 0.5 * depth * (1.0 + np.cos(np.pi * np.minimum(r, width) / width)), 0.0)


def apply_valley(hm: HeightMap, railroad: Railroad, params: TerrainParams, index: TrackIndex | None = None):
    """Lower the ground under every bridge in place; returns the mask of changed vertices.

    The bowl radius is ``max(valley_width, half deck length + d_near)`` so the
    valley spans the whole bridge. Vertices inside the flat track band of a
    non-bridge track point keep their height; under the deck they drop.
    """
    index = index or TrackIndex(railroad)
    mask = np.zeros(hm.heights.shape, dtype=bool)
    if params.valley_depth > 0.0:
        for ce, cn, cu, half in _bridge_centres(railroad):
            width = max(params.valley_width, half + params.d_near)
            j0 = max(0, int(np.floor((ce - width - hm.origin[0]) / hm.spacing)))
            j1 = min(hm.shape[1], int(np.ceil((ce + width - hm.origin[0]) / hm.spacing)) + 1)
            i0 = max(0, int(np.floor((cn - width - hm.origin[1]) / hm.spacing)))
            i1 = min(hm.shape[0], int(np.ceil((cn + width - hm.origin[1]) / hm.spacing)) + 1)
            if i0 >= i1 or j0 >= j1:
                continue
            E, N = hm.vertex_en(np.arange(i0, i1)[:, None], np.arange(j0, j1)[None, :])
            E, N = np.broadcast_arrays(E, N)
            r = np.hypot(E - ce, N - cn)
            drop = valley_profile(r, params.valley_depth, width)
            d, k = index.query(np.column_stack([E.ravel(), N.ravel()]))
            dn, _ = widen_station(params, index.station[k])
            exempt = ((d <= dn) & ~index.bridge[k]).reshape(E.shape)
            drop[exempt] = 0.0
            # the bowl is relative to the deck height, never raises ground
            target = np.minimum(hm.heights[i0:i1, j0:j1], cu - drop)
            changed = (drop > 0.0) & (target < hm.heights[i0:i1, j0:j1])
            hm.heights[i0:i1, j0:j1] = np.where(changed, target, hm.heights[i0:i1, j0:j1])
            mask[i0:i1, j0:j1] |= changed
    hm.valley = mask
    return mask


# -- partition and export ------------------------------------------------------------


@dataclass
class SubMap:
    index: tuple[int, int]
    heights: np.ndarray
    keep: bool
    origin: tuple[float, float]


def partition(hm: HeightMap, railroad: Railroad, keep_radius: float = 1000.0) -> list[SubMap]:
    """Disjoint TILE x TILE tiles, row-major from the south-west corner.

    A tile's footprint is the half-open square ``[origin, origin + TILE * spacing)``
    so footprints tile the plane without gaps.
    """
    rows, cols = hm.shape
    if rows % TILE or cols % TILE:
        raise ValueError(f"height map shape {hm.shape} is not a multiple of {TILE}")
    p = railroad.all_points()
    e, n = p[:, 1], p[:, 0]
    tiles = []
    ext = TILE * hm.spacing
    for ti in range(rows // TILE):
        for tj in range(cols // TILE):
            e0, n0 = hm.vertex_en(ti * TILE, tj * TILE)
            de = np.maximum(np.maximum(e0 - e, e - (e0 + ext)), 0.0)
            dn = np.maximum(np.maximum(n0 - n, n - (n0 + ext)), 0.0)
            dist = np.hypot(de, dn).min()
            block = hm.heights[ti * TILE : (ti + 1) * TILE, tj * TILE : (tj + 1) * TILE]
            tiles.append(SubMap((ti, tj), block, bool(dist <= keep_radius), (float(e0), float(n0))))
    return tiles


def export_tiles(tiles: list[SubMap], spacing: float, out_dir) -> list[Path]:
    """16-bit PNG per kept tile (north row first) plus a JSON sidecar with the height range."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in tiles:
        if not t.keep:
            continue
        lo, hi = float(t.heights.min()), float(t.heights.max())
        scale = (hi - lo) / 65535.0 if hi > lo else 1.0
        q = np.rint((t.heights - lo) / scale).astype(np.uint16)[::-1]
        stem = out_dir / f"tile_{t.index[0]:03d}_{t.index[1]:03d}"
        Image.fromarray(q).save(stem.with_suffix(".png"))
        meta = {
            "index": list(t.index),
            "origin_en": list(t.origin),
            "spacing": spacing,
            "size": TILE,
            "height_min": lo,
            "height_max": hi,
            "row_order": "north_to_south",
        }
        stem.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="utf-8")
        written.append(stem.with_suffix(".png"))
    return written


def load_tile(png_path) -> tuple[np.ndarray, dict]:
    png_path = Path(png_path)
    meta = json.loads(png_path.with_suffix(".json").read_text(encoding="utf-8"))
    q = np.asarray(Image.open(png_path), dtype=np.float64)[::-1]
    lo, hi = meta["height_min"], meta["height_max"]
    scale = (hi - lo) / 65535.0 if hi > lo else 1.0
    return lo + q * scale, meta
