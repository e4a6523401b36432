"""Vector, rotation and frame helpers plus the natural cubic smoothing spline.

Conventions
-----------
* Route and trajectory quantities live in a local NED frame (north, east, down).
* The scene, the terrain and every sensor live in a local ENU frame.
* Vehicle body axes are FRD (forward, right, down) when expressed against NED,
  and FLU (forward, left, up) when expressed against ENU. Sensors use FLU.
* Euler angles are intrinsic Z-Y-X (yaw, pitch, roll); ``R`` maps body
  vectors into the world frame: ``v_world = R @ v_body``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

ORTHO_TOL = 1e-9

# NED -> ENU is an involution: swap the first two axes and flip the third.
NED_TO_ENU = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
# FLU <-> FRD body axes.
FLU_TO_FRD = np.diag([1.0, -1.0, -1.0])


class FrameTag(str, enum.Enum):
    NED = "NED"
    ENU = "ENU"
    BODY = "BODY"
    SENSOR = "SENSOR"


def ned_to_enu(v):
    """(n, e, d) -> (e, n, -d); works on a single vector or an (N, 3) array."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = v[..., 1]
    out[..., 1] = v[..., 0]
    out[..., 2] = -v[..., 2]
    return out


def enu_to_ned(v):
    """(e, n, u) -> (n, e, -u)."""
    return ned_to_enu(v)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_euler(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Body-to-world rotation for intrinsic Z-Y-X angles (radians)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rotations_from_euler(yaw, pitch, roll) -> np.ndarray:
    """Vectorised :func:`rotation_from_euler`: (n,) angle arrays to (n, 3, 3)."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    R = np.empty(np.shape(yaw) + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def euler_from_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_from_euler`, returns (yaw, pitch, roll)."""
    R = np.asarray(R, dtype=float)
    pitch = float(np.arcsin(np.clip(-R[2, 0], -1.0, 1.0)))
    yaw = float(np.arctan2(R[1, 0], R[0, 0]))
    roll = float(np.arctan2(R[2, 1], R[2, 2]))
    return yaw, pitch, roll


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0.0)
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def ned_frd_to_enu_flu(R_ned_frd: np.ndarray) -> np.ndarray:
    """Re-express a body (FRD) -> NED rotation as body (FLU) -> ENU."""
    return NED_TO_ENU @ np.asarray(R_ned_frd, dtype=float) @ FLU_TO_FRD


def enu_flu_to_ned_frd(R_enu_flu: np.ndarray) -> np.ndarray:
    return NED_TO_ENU @ np.asarray(R_enu_flu, dtype=float) @ FLU_TO_FRD


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping ``child`` coordinates into ``frame`` coordinates."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    frame: FrameTag = FrameTag.ENU
    child: FrameTag = FrameTag.BODY

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("pose position must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "frame", FrameTag(self.frame))
        object.__setattr__(self, "child", FrameTag(self.child))

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``; ``other.frame`` must be ``self.child``."""
        if other.frame != self.child:
            raise ValueError(f"cannot compose {self.child.value} with a pose expressed in {other.frame.value}")
        return Pose(
            self.position + self.rotation @ other.position,
            self.rotation @ other.rotation,
            self.frame,
            other.child,
        )

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(-Rt @ self.position, Rt, self.child, self.frame)

    def apply(self, pts):
        """Map child-frame points (3,) or (N, 3) into the parent frame."""
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.T + self.position

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    @classmethod
    def from_matrix(cls, T, frame=FrameTag.ENU, child=FrameTag.BODY) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], T[:3, :3], frame, child)


class SmoothingSpline:
    """Natural cubic smoothing spline on strictly increasing abscissae.

    Minimises ``sum (y_i - f(x_i))**2 + lam * integral f''(x)**2 dx`` over all
    C2 functions; the minimiser is the natural cubic spline with knots at the
    data abscissae (Reinsch). ``lam = 0`` interpolates.
    """

    def __init__(self, x, y, lam: float = 0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-D arrays of equal length")
        if x.size < 4:
            raise ValueError("a smoothing spline needs at least 4 samples")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("samples must be finite")
        h = np.diff(x)
        if np.any(h <= 0.0):
            raise ValueError("abscissae must be strictly increasing (duplicates rejected)")
        if lam < 0.0 or not np.isfinite(lam):
            raise ValueError("smoothing parameter must be >= 0")
        self.x = x
        self.lam = float(lam)
        self.values, self.second = _reinsch(x, y, h, self.lam)
        self._h = h
        self.residual_ss = float(np.sum((y - self.values) ** 2))

    @property
    def knots(self) -> np.ndarray:
        return self.x

    def penalty(self) -> float:
        """Integrated squared second derivative over the knot range."""
        M, h = self.second, self._h
        # f'' is linear on each interval
        return float(np.sum(h * (M[:-1] ** 2 + M[:-1] * M[1:] + M[1:] ** 2) / 3.0))

    def objective(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.sum((y - self.values) ** 2) + self.lam * self.penalty())

    def __call__(self, s, order: int = 0):
        return eval_spline(self, s, order)


def _reinsch(x, y, h, lam):
    n = x.size
    m = n - 2
    inv = 1.0 / h
    # Q is n x m with three non-zeros per column j: rows j, j+1, j+2.
    q0 = inv[:-1]
    q1 = -inv[:-1] - inv[1:]
    q2 = inv[1:]
    Qty = q0 * y[:-2] + q1 * y[1:-1] + q2 * y[2:]
    if lam == 0.0:
        # interpolation: R gamma = Q^T y, tridiagonal
        ab = np.zeros((3, m))
        ab[0, 1:] = h[1:-1] / 6.0
        ab[1] = (h[:-1] + h[1:]) / 3.0
        ab[2, :-1] = h[1:-1] / 6.0
        gamma = solve_banded((1, 1), ab, Qty)
        values = y.copy()
    else:
        # (R + lam Q^T Q) is symmetric pentadiagonal
        d0 = (h[:-1] + h[1:]) / 3.0 + lam * (q0**2 + q1**2 + q2**2)
        d1 = h[1:-1] / 6.0 + lam * (q1[:-1] * q0[1:] + q2[:-1] * q1[1:])
        d2 = lam * (q2[:-2] * q0[2:])
        ab = np.zeros((5, m))
        ab[0, 2:] = d2
        ab[1, 1:] = d1
        ab[2] = d0
        ab[3, :-1] = d1
        ab[4, :-2] = d2
        gamma = solve_banded((2, 2), ab, Qty)
        Qg = np.zeros(n)
        Qg[:-2] += q0 * gamma
        Qg[1:-1] += q1 * gamma
        Qg[2:] += q2 * gamma
        values = y - lam * Qg
    second = np.zeros(n)
    second[1:-1] = gamma
    return values, second


def fit_smoothing_spline(s, values, lam: float = 0.0) -> SmoothingSpline:
    return SmoothingSpline(s, values, lam)


def eval_spline(spline: SmoothingSpline, s, order: int = 0):
    """Value (order 0), slope (1) or curvature term (2) of the spline at ``s``."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    x = spline.x
    s_arr = np.asarray(s, dtype=float)
    tol = 1e-9 * max(1.0, x[-1] - x[0])
    if np.any(s_arr < x[0] - tol) or np.any(s_arr > x[-1] + tol) or not np.all(np.isfinite(s_arr)):
        raise ValueError(f"abscissa outside spline range [{x[0]}, {x[-1]}]")
    sc = np.clip(s_arr, x[0], x[-1])
    i = np.clip(np.searchsorted(x, sc, side="right") - 1, 0, x.size - 2)
    h = spline._h[i]
    g0, g1 = spline.values[i], spline.values[i + 1]
    M0, M1 = spline.second[i], spline.second[i + 1]
    t = sc - x[i]
    if order == 0:
        b = (g1 - g0) / h - h * (2.0 * M0 + M1) / 6.0
        out = g0 + t * (b + t * (M0 / 2.0 + t * (M1 - M0) / (6.0 * h)))
    elif order == 1:
        b = (g1 - g0) / h - h * (2.0 * M0 + M1) / 6.0
        out = b + t * (M0 + t * (M1 - M0) / (2.0 * h))
    else:
        out = M0 + t * (M1 - M0) / h
    return float(out) if np.ndim(out) == 0 else out
