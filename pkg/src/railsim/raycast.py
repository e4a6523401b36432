"""Nearest-hit ray casting against a triangle soup through a BVH.

The hierarchy is built with a binned surface-area heuristic (fixed bin count,
so builds are deterministic). Traversal is a plain stack walk visiting the
nearer child first. Ties in hit distance go to the lowest original triangle
index, which makes the result independent of the tree layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

# OpenMP first: it is safe for concurrent callers and avoids the TBB version probe.
nb.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

T_MIN = 1e-4  # self-hit guard, metres
N_BINS = 16
MAX_LEAF = 4
_BARY_EPS = 1e-9
_STACK = 128

_jit = nb.njit(cache=True, error_model="numpy", fastmath=False)


@_jit
def _build(lo_t, hi_t, cent, max_leaf, n_bins):
    n = cent.shape[0]
    idx = np.arange(n)
    cap = max(1, 2 * n)
    node_lo = np.empty((cap, 3))
    node_hi = np.empty((cap, 3))
    node_left = np.full(cap, -1, np.int64)
    node_start = np.zeros(cap, np.int64)
    node_count = np.zeros(cap, np.int64)
    if n == 0:
        return idx, node_lo[:0], node_hi[:0], node_left[:0], node_start[:0], node_count[:0]
    st_node = np.empty(cap, np.int64)
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    sp = 0
    st_node[0], st_s[0], st_e[0] = 0, 0, n
    sp = 1
    n_nodes = 1
    bin_cnt = np.zeros(n_bins, np.int64)
    bin_lo = np.empty((n_bins, 3))
    bin_hi = np.empty((n_bins, 3))
    right_area = np.empty(n_bins)
    right_cnt = np.empty(n_bins, np.int64)
    while sp > 0:
        sp -= 1
        node, s, e = st_node[sp], st_s[sp], st_e[sp]
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for i in range(s, e):
            k = idx[i]
            for a in range(3):
                lo[a] = min(lo[a], lo_t[k, a])
                hi[a] = max(hi[a], hi_t[k, a])
                clo[a] = min(clo[a], cent[k, a])
                chi[a] = max(chi[a], cent[k, a])
        node_lo[node] = lo
        node_hi[node] = hi
        count = e - s
        if count <= max_leaf:
            node_start[node] = s
            node_count[node] = count
            continue
        best_cost = np.inf
        best_axis = -1
        best_split = -1
        for a in range(3):
            ext = chi[a] - clo[a]
            if ext <= 0.0:
                continue
            bin_cnt[:] = 0
            bin_lo[:] = np.inf
            bin_hi[:] = -np.inf
            for i in range(s, e):
                k = idx[i]
                b = int((cent[k, a] - clo[a]) / ext * n_bins)
                if b >= n_bins:
                    b = n_bins - 1
                bin_cnt[b] += 1
                for c in range(3):
                    bin_lo[b, c] = min(bin_lo[b, c], lo_t[k, c])
                    bin_hi[b, c] = max(bin_hi[b, c], hi_t[k, c])
            # suffix sweep
            rlo = np.full(3, np.inf)
            rhi = np.full(3, -np.inf)
            rc = 0
            for b in range(n_bins - 1, 0, -1):
                rc += bin_cnt[b]
                for c in range(3):
                    rlo[c] = min(rlo[c], bin_lo[b, c])
                    rhi[c] = max(rhi[c], bin_hi[b, c])
                right_cnt[b] = rc
                if rc > 0:
                    dx, dy, dz = rhi[0] - rlo[0], rhi[1] - rlo[1], rhi[2] - rlo[2]
                    right_area[b] = dx * dy + dy * dz + dz * dx
                else:
                    right_area[b] = 0.0
            llo = np.full(3, np.inf)
            lhi = np.full(3, -np.inf)
            lc = 0
            for b in range(0, n_bins - 1):
                lc += bin_cnt[b]
                for c in range(3):
                    llo[c] = min(llo[c], bin_lo[b, c])
                    lhi[c] = max(lhi[c], bin_hi[b, c])
                rcn = right_cnt[b + 1]
                if lc == 0 or rcn == 0:
                    continue
                dx, dy, dz = lhi[0] - llo[0], lhi[1] - llo[1], lhi[2] - llo[2]
                cost = (dx * dy + dy * dz + dz * dx) * lc + right_area[b + 1] * rcn
                if cost < best_cost:
                    best_cost = cost
                    best_axis = a
                    best_split = b + 1
        dx, dy, dz = hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]
        area = dx * dy + dy * dz + dz * dx
        if best_axis >= 0 and area > 0.0 and 1.0 + best_cost / area >= count and count <= 4 * max_leaf:
            best_axis = -2  # splitting does not pay off
        if best_axis == -2:
            node_start[node] = s
            node_count[node] = count
            continue
        if best_axis == -1:
            mid = (s + e) // 2  # coincident centroids
        else:
            a = best_axis
            ext = chi[a] - clo[a]
            i, j = s, e - 1
            while i <= j:
                b = int((cent[idx[i], a] - clo[a]) / ext * n_bins)
                if b >= n_bins:
                    b = n_bins - 1
                if b < best_split:
                    i += 1
                else:
                    idx[i], idx[j] = idx[j], idx[i]
                    j -= 1
            mid = i
        left = n_nodes
        n_nodes += 2
        node_left[node] = left
        st_node[sp], st_s[sp], st_e[sp] = left + 1, mid, e
        sp += 1
        st_node[sp], st_s[sp], st_e[sp] = left, s, mid
        sp += 1
    return idx, node_lo[:n_nodes], node_hi[:n_nodes], node_left[:n_nodes], node_start[:n_nodes], node_count[:n_nodes]


@_jit
def _slab(o, inv, d, lo, hi, tmin, tmax):
    t0, t1 = tmin, tmax
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < lo[a] or o[a] > hi[a]:
                return np.inf
            continue
        ta = (lo[a] - o[a]) * inv[a]
        tb = (hi[a] - o[a]) * inv[a]
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return np.inf
    return t0


@_jit
def _trace(o, d, tmax, tmin, node_lo, node_hi, node_left, node_start, node_count, tri, perm, any_hit):
    best_t = tmax
    best = -1
    if node_lo.shape[0] == 0:
        return best, best_t
    inv = np.empty(3)
    for a in range(3):
        inv[a] = 1.0 / d[a] if d[a] != 0.0 else np.inf
    stack = np.empty(_STACK, np.int64)
    sp = 0
    if _slab(o, inv, d, node_lo[0], node_hi[0], tmin, best_t) == np.inf:
        return best, best_t
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if node_left[node] < 0:
            for k in range(node_start[node], node_start[node] + node_count[node]):
                v0x, v0y, v0z = tri[k, 0], tri[k, 1], tri[k, 2]
                e1x, e1y, e1z = tri[k, 3] - v0x, tri[k, 4] - v0y, tri[k, 5] - v0z
                e2x, e2y, e2z = tri[k, 6] - v0x, tri[k, 7] - v0y, tri[k, 8] - v0z
                px = d[1] * e2z - d[2] * e2y
                py = d[2] * e2x - d[0] * e2z
                pz = d[0] * e2y - d[1] * e2x
                det = e1x * px + e1y * py + e1z * pz
                if det == 0.0:
                    continue
                inv_det = 1.0 / det
                sx, sy, sz = o[0] - v0x, o[1] - v0y, o[2] - v0z
                u = (sx * px + sy * py + sz * pz) * inv_det
                if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
                    continue
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv_det
                if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                if t <= tmin or t > best_t:
                    continue
                if t < best_t or best < 0 or perm[k] < best:
                    best_t = t
                    best = perm[k]
                    if any_hit:
                        return best, best_t
            continue
        a = node_left[node]
        b = a + 1
        ta = _slab(o, inv, d, node_lo[a], node_hi[a], tmin, best_t)
        tb = _slab(o, inv, d, node_lo[b], node_hi[b], tmin, best_t)
        if ta > tb:
            a, b = b, a
            ta, tb = tb, ta
        if tb != np.inf:
            stack[sp] = b
            sp += 1
        if ta != np.inf:
            stack[sp] = a
            sp += 1
    return best, best_t


@nb.njit(cache=True, error_model="numpy", parallel=True)
def _trace_batch(origins, dirs, tmax, tmin, node_lo, node_hi, node_left, node_start, node_count, tri, perm, any_hit):
    n = origins.shape[0]
    out_i = np.empty(n, np.int64)
    out_t = np.empty(n)
    for r in nb.prange(n):
        i, t = _trace(origins[r], dirs[r], tmax[r], tmin, node_lo, node_hi, node_left, node_start, node_count,
                      tri, perm, any_hit)
        out_i[r] = i
        out_t[r] = t
    return out_i, out_t


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_max: float = np.inf

    def __post_init__(self):
        o = np.asarray(self.origin, float).reshape(3)
        d = np.asarray(self.direction, float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be a unit vector")
        if not self.t_max > 0.0:
            raise ValueError("t_max must be > 0")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class Hit:
    point: np.ndarray
    t: float
    normal: np.ndarray
    triangle: int
    instance_id: int = -1
    cls: int = 0


@dataclass
class HitBatch:
    """Column-wise cast results; ``triangle == -1`` marks a miss."""

    triangle: np.ndarray
    t: np.ndarray
    point: np.ndarray
    normal: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.triangle >= 0

    def __len__(self):
        return len(self.triangle)


class Accelerator:
    """Read-only BVH over an (N, 3, 3) triangle array; safe to share across threads."""

    def __init__(self, triangles, t_min: float = T_MIN, n_bins: int = N_BINS, max_leaf: int = MAX_LEAF):
        tris = np.ascontiguousarray(np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3))
        if not np.all(np.isfinite(tris)):
            raise ValueError("triangles must be finite")
        self.triangles = tris
        self.t_min = float(t_min)
        lo = tris.min(axis=1)
        hi = tris.max(axis=1)
        cent = tris.mean(axis=1)
        perm, self.node_lo, self.node_hi, self.node_left, self.node_start, self.node_count = _build(
            lo, hi, cent, max_leaf, n_bins
        )
        self.perm = perm
        self._tri = np.ascontiguousarray(tris[perm].reshape(-1, 9))
        n = len(tris)
        self.unit_normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]) if n else np.empty((0, 3))
        norms = np.linalg.norm(self.unit_normals, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.unit_normals = np.where(norms > 0, self.unit_normals / norms, 0.0)

    @classmethod
    def from_scene(cls, scene, **kw) -> "Accelerator":
        return cls(scene.triangles, **kw)

    @property
    def n_nodes(self) -> int:
        return len(self.node_lo)

    def leaves(self):
        for k in np.flatnonzero(self.node_left < 0):
            s, c = self.node_start[k], self.node_count[k]
            yield k, self.perm[s : s + c]

    def cast_batch(self, origins, directions, t_max=np.inf, any_hit: bool = False) -> HitBatch:
        o = np.ascontiguousarray(np.asarray(origins, float).reshape(-1, 3))
        d = np.ascontiguousarray(np.asarray(directions, float).reshape(-1, 3))
        if o.shape[0] == 1 and d.shape[0] > 1:
            o = np.ascontiguousarray(np.broadcast_to(o, d.shape))
        if o.shape != d.shape:
            raise ValueError("origins and directions must have the same shape")
        tm = np.ascontiguousarray(np.broadcast_to(np.asarray(t_max, float), (len(d),)))
        idx, t = _trace_batch(o, d, tm, self.t_min, self.node_lo, self.node_hi, self.node_left, self.node_start,
                              self.node_count, self._tri, self.perm, any_hit)
        hit = idx >= 0
        t = np.where(hit, t, np.inf)
        point = np.full((len(d), 3), np.nan)
        point[hit] = o[hit] + t[hit, None] * d[hit]
        normal = np.full((len(d), 3), np.nan)
        if hit.any():
            nrm = self.unit_normals[idx[hit]]
            flip = np.einsum("ij,ij->i", nrm, d[hit]) > 0.0
            nrm[flip] *= -1.0
            normal[hit] = nrm
        return HitBatch(idx, t, point, normal)

    def cast(self, ray: Ray) -> Hit | None:
        b = self.cast_batch(ray.origin[None], ray.direction[None], ray.t_max)
        if not b.hit[0]:
            return None
        return Hit(b.point[0], float(b.t[0]), b.normal[0], int(b.triangle[0]))

    def occluded(self, origins, directions, t_max=np.inf) -> np.ndarray:
        """True where anything lies along the ray before ``t_max``."""
        return self.cast_batch(origins, directions, t_max, any_hit=True).hit


def build(scene_or_triangles, **kw) -> Accelerator:
    tris = getattr(scene_or_triangles, "triangles", scene_or_triangles)
    return Accelerator(tris, **kw)


def label_hits(scene, hits: HitBatch) -> tuple[np.ndarray, np.ndarray]:
    """(class id, instance id) per ray; Background/-1 for misses."""
    cls = np.zeros(len(hits), np.int32)
    inst = np.full(len(hits), -1, np.int64)
    m = hits.hit
    if m.any():
        obj = scene.tri_object[hits.triangle[m]]
        cls[m] = scene.object_class[obj]
        inst[m] = scene.object_instance[obj]
    return cls, inst
