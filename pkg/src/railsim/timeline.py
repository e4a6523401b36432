"""Acquisition scheduling on the trajectory time grid.

Sensors fire only at trajectory sample instants: a sensor whose period is
k * T_S fires at samples offset, offset + k, offset + 2k, ... Periods are
compared as exact fractions at nanosecond resolution so 0.1 / 0.01 is
10, not 9.999...
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geom import FrameTag, Pose, ned_frd_to_enu_flu, ned_to_enu, rotation_from_euler


class ScheduleError(ValueError):
    def __init__(self, sensor: str, message: str):
        super().__init__(f"sensor {sensor!r}: {message}")
        self.sensor = sensor


def exact(x) -> Fraction:
    """Closest fraction with denominator <= 1e9 (nanosecond resolution): 0.1 -> 1/10."""
    if isinstance(x, Fraction):
        return x
    return Fraction(x).limit_denominator(1_000_000_000)


@dataclass(frozen=True)
class SensorSchedule:
    sensor_id: str
    period: float
    k: int
    offset: int = 0


@dataclass(frozen=True)
class AcquisitionEvent:
    sensor_id: str
    index: int
    timestamp: float
    timestamp_ns: int


def validate_schedules(ts: float, periods, offsets=None) -> dict[str, SensorSchedule]:
    """Check every period is a positive integer multiple of ``ts``.

    ``periods`` maps sensor id to period in seconds. Returns the schedules keyed
    by id; raises :class:`ScheduleError` naming the first offending sensor.
    """
    if not ts > 0:
        raise ValueError("T_S must be > 0")
    offsets = offsets or {}
    fts = exact(ts)
    out = {}
    for sid, period in periods.items():
        if not period > 0:
            raise ScheduleError(sid, f"period {period} must be > 0")
        ratio = exact(period) / fts
        if ratio.denominator != 1:
            raise ScheduleError(sid, f"period {period} s is not an integer multiple of T_S = {ts} s (ratio {float(ratio):g})")
        off = int(offsets.get(sid, 0))
        if not 0 <= off < ratio.numerator:
            raise ScheduleError(sid, f"offset {off} must lie in [0, {ratio.numerator})")
        out[sid] = SensorSchedule(sid, float(period), ratio.numerator, off)
    return out


def sample_time_ns(ts: float, index: int) -> int:
    t = exact(ts) * index * 1_000_000_000
    return int(t) if t.denominator == 1 else int(round(t))


def build_timeline(n_samples: int, ts: float, schedules) -> list[AcquisitionEvent]:
    """All events over ``n_samples`` trajectory samples, sorted by (time, sensor id)."""
    if hasattr(n_samples, "__len__"):
        n_samples = len(n_samples)
    sched = schedules.values() if isinstance(schedules, dict) else schedules
    events = []
    for s in sched:
        for i in range(s.offset, n_samples, s.k):
            events.append(AcquisitionEvent(s.sensor_id, i, i * ts, sample_time_ns(ts, i)))
    events.sort(key=lambda e: (e.index, e.sensor_id))
    return events


def events_for(events, sensor_id: str) -> list[AcquisitionEvent]:
    return [e for e in events if e.sensor_id == sensor_id]


def vehicle_pose(orientation, position_ned) -> Pose:
    """World (ENU) <- body (FLU) pose from NED yaw/pitch/roll and a NED position."""
    R = ned_frd_to_enu_flu(rotation_from_euler(*orientation))
    return Pose(ned_to_enu(position_ned), R, FrameTag.ENU, FrameTag.BODY)


@dataclass
class VehicleState:
    index: int
    t: float
    pose: Pose  # world <- body
    accel_ned: np.ndarray
    omega_ned: np.ndarray
    orientation: np.ndarray

    def sensor_pose(self, mount: Pose | None = None) -> Pose:
        """World <- sensor; identity mount returns the body pose itself."""
        return self.pose if mount is None else self.pose.compose(mount)


def pose_at(trajectory, event) -> VehicleState:
    """The stored trajectory sample for an event (or a bare index), verbatim."""
    k = event.index if isinstance(event, AcquisitionEvent) else int(event)
    if not 0 <= k < len(trajectory):
        raise IndexError(f"sample index {k} outside trajectory of {len(trajectory)} samples")
    s = trajectory[k]
    return VehicleState(k, s.t, vehicle_pose(s.orientation, s.front_position), s.front_acceleration, s.omega,
                        s.orientation)
