"""Point-cloud comparison and odometry error metrics.

``icp_align`` is a plain point-to-point ICP: nearest-neighbour
correspondences, then the closed-form rigid fit minimising
sum ||R p_i + t - q_i||^2, repeated until the RMS residual stops improving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geom import is_rotation


@dataclass(frozen=True)
class RigidTransform:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R, float).reshape(3, 3)
        if not is_rotation(R, 1e-6):
            raise ValueError("R must be a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", np.asarray(self.t, float).reshape(3))

    @classmethod
    def from_matrix(cls, T) -> "RigidTransform":
        T = np.asarray(T, float)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3], T[:3, 3] = self.R, self.t
        return T

    def apply(self, pts) -> np.ndarray:
        return np.asarray(pts, float) @ self.R.T + self.t

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)

    @property
    def angle(self) -> float:
        """Rotation angle in radians."""
        return float(np.arccos(np.clip((np.trace(self.R) - 1.0) / 2.0, -1.0, 1.0)))


def _as_points(c) -> np.ndarray:
    pts = getattr(c, "points", c)
    return np.asarray(pts, float).reshape(-1, 3)


def crop_azimuth(points, lo: float, hi: float) -> np.ndarray:
    """Keep points whose azimuth atan2(y, x) lies in [lo, hi]."""
    p = _as_points(points)
    az = np.arctan2(p[:, 1], p[:, 0])
    return p[(az >= lo) & (az <= hi)]


def nearest_distances(a, b) -> np.ndarray:
    """Distance from each point of ``a`` to its nearest neighbour in ``b``."""
    d, _ = cKDTree(_as_points(b)).query(_as_points(a), workers=-1)
    return d


def pc_rmse(a, b, crop: tuple[float, float] | None = None, symmetric: bool = False) -> float:
    """RMS nearest-neighbour distance from ``a`` to ``b`` (both cropped first)."""
    a, b = _as_points(a), _as_points(b)
    if crop is not None:
        a, b = crop_azimuth(a, *crop), crop_azimuth(b, *crop)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cloud empty after crop")
    r = float(np.sqrt(np.mean(nearest_distances(a, b) ** 2)))
    if symmetric:
        r = max(r, float(np.sqrt(np.mean(nearest_distances(b, a) ** 2))))
    return r


def best_rigid_fit(p, q) -> RigidTransform:
    """Orthogonal Procrustes: the rotation and translation minimising sum ||R p + t - q||^2."""
    p, q = _as_points(p), _as_points(q)
    cp, cq = p.mean(axis=0), q.mean(axis=0)
    H = (p - cp).T @ (q - cq)
    U, _, Vt = np.linalg.svd(H)
    s = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, 1.0, s]) @ U.T
    return RigidTransform(R, cq - R @ cp)


def _check_spread(p, name):
    if len(p) < 3:
        raise ValueError(f"{name} needs at least 3 points")
    sv = np.linalg.svd(p - p.mean(axis=0), compute_uv=False)
    if sv[0] <= 0.0 or sv[1] <= 1e-9 * sv[0]:
        raise ValueError(f"{name} is degenerate (coincident or collinear points)")


@dataclass
class IcpResult:
    transform: RigidTransform
    residuals: list[float]  # RMS residual per iteration, starting from the initial guess
    iterations: int
    converged: bool


DEFAULT_PYRAMID = (4.0, 2.0, 1.0, 0.5)  # voxel sizes in metres, coarse to fine


def voxel_downsample(points, size: float) -> np.ndarray:
    """Centroid of the points in each occupied cube of edge ``size`` (sorted by cube index)."""
    p = _as_points(points)
    key = np.floor(p / size).astype(np.int64)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    out = np.zeros((inv.max() + 1 if len(inv) else 0, 3))
    np.add.at(out, inv, p)
    return out / np.bincount(inv)[:, None]


def _icp_stage(src, dst, T, max_iter, tol):
    tree = cKDTree(dst)
    d, idx = tree.query(T.apply(src), workers=-1)
    residuals = [float(np.sqrt(np.mean(d**2)))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        step = best_rigid_fit(T.apply(src), dst[idx])
        cand = step.compose(T)
        d, cand_idx = tree.query(cand.apply(src), workers=-1)
        r = float(np.sqrt(np.mean(d**2)))
        if r > residuals[-1]:
            # cannot happen in exact arithmetic; guard against round-off creep
            converged = True
            break
        T, idx = cand, cand_idx
        residuals.append(r)
        if residuals[-2] - r < tol:
            converged = True
            break
    return IcpResult(T, residuals, it, converged)


def icp_align(source, target, initial: RigidTransform | None = None, max_iter: int = 50,
              tol: float = 1e-6, pyramid: tuple[float, ...] = DEFAULT_PYRAMID) -> IcpResult:
    """Transform mapping ``source`` onto ``target`` (R p + t ~ q).

    Point-to-point ICP on the full clouds. The ``pyramid`` stages run the same
    iteration on voxel centroids first, only to supply a starting guess; on
    ring-structured LiDAR scans this avoids the local minima a cold start from
    identity falls into. The reported residuals are those of the final stage.
    """
    src, dst = _as_points(source), _as_points(target)
    _check_spread(src, "source")
    _check_spread(dst, "target")
    T = initial or RigidTransform()
    for size in pyramid:
        a, b = voxel_downsample(src, size), voxel_downsample(dst, size)
        if min(len(a), len(b)) < 10:
            continue
        T = _icp_stage(a, b, T, max_iter, tol).transform
    return _icp_stage(src, dst, T, max_iter, tol)


# -- odometry -----------------------------------------------------------------


def _matrices(seq) -> np.ndarray:
    out = []
    for T in seq:
        if isinstance(T, RigidTransform):
            out.append(T.matrix())
        elif hasattr(T, "matrix"):
            out.append(T.matrix())
        else:
            out.append(np.asarray(T, float))
    return np.array(out).reshape(-1, 4, 4)


def relative_steps(poses) -> np.ndarray:
    """T_k = P_k^-1 P_{k+1} for world <- sensor poses P."""
    P = _matrices(poses)
    return np.array([np.linalg.inv(P[k]) @ P[k + 1] for k in range(len(P) - 1)]).reshape(-1, 4, 4)


def _stats(x) -> dict:
    x = np.asarray(x, float)
    if len(x) == 0:
        return {"mean": 0.0, "std": 0.0, "max": 0.0}
    return {"mean": float(x.mean()), "std": float(x.std()), "max": float(x.max())}


@dataclass
class OdometryReport:
    tex: np.ndarray  # m, per step
    tey: np.ndarray  # m, per step
    eod: np.ndarray  # percent, per step

    def summary(self) -> dict:
        return {"TEX": _stats(self.tex), "TEY": _stats(self.tey), "EOD": _stats(self.eod)}

    def table(self) -> str:
        rows = ["metric   mean      std       max"]
        for name, s in self.summary().items():
            unit = "%" if name == "EOD" else "m"
            rows.append(f"{name:<4}{unit:>3}  {s['mean']:<9.4f} {s['std']:<9.4f} {s['max']:.4f}")
        return "\n".join(rows)

    def csv(self) -> str:
        lines = ["step,tex_m,tey_m,eod_pct"]
        lines += [f"{k},{a:.9g},{b:.9g},{c:.9g}" for k, (a, b, c) in enumerate(zip(self.tex, self.tey, self.eod))]
        return "\n".join(lines) + "\n"


def odometry_report(estimated_steps, ground_truth_poses) -> OdometryReport:
    """Per-step translation errors and drift over distance travelled.

    ``estimated_steps`` holds n relative transforms (frame k+1 expressed in frame k),
    ``ground_truth_poses`` the n + 1 world <- sensor poses they should chain into.
    """
    est = _matrices(estimated_steps)
    gt = _matrices(ground_truth_poses)
    if len(gt) != len(est) + 1:
        raise ValueError(f"need len(poses) == len(steps) + 1, got {len(gt)} and {len(est)}")
    true = relative_steps(gt)
    tex = np.abs(est[:, 0, 3] - true[:, 0, 3])
    tey = np.abs(est[:, 1, 3] - true[:, 1, 3])
    travelled = np.cumsum(np.linalg.norm(true[:, :3, 3], axis=1))
    acc = gt[0].copy()
    eod = np.zeros(len(est))
    for k in range(len(est)):
        acc = acc @ est[k]
        err = acc[:2, 3] - gt[k + 1][:2, 3]
        eod[k] = 100.0 * np.linalg.norm(err) / travelled[k] if travelled[k] > 0 else 0.0
    return OdometryReport(tex, tey, eod)


def icp_odometry(clouds, **kw) -> list[RigidTransform]:
    """Frame-to-frame ICP: step k maps cloud k+1 into the frame of cloud k."""
    steps = []
    prev = None
    for c in clouds:
        pts = _as_points(c)
        if prev is not None:
            init = steps[-1] if steps else None
            steps.append(icp_align(pts, prev, initial=init, **kw).transform)
        prev = pts
    return steps
