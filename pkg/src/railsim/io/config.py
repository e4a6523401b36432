"""Strict JSON configuration for scenarios and sensors.

Every config type is a dataclass; files carry exactly its field names.
Angular fields may instead be given in degrees under ``<name>_deg``.
Unknown keys are errors unless ``strict=False``, in which case they are
logged and ignored. Errors name the file and the dotted field path.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..multitrack import AuxParams
from ..routegen import RouteParams, SpeedLimits, TrainParams, load_route_points
from ..scene import SceneParams, SemanticClass
from ..sensors import AmbientConfig, CameraConfig, ImuChannel, ImuConfig, LidarConfig, Mount
from ..terrain import TerrainParams

log = logging.getLogger(__name__)

ANGLE_FIELDS = {
    LidarConfig: {"v_fov", "h_fov", "h_res", "v_center"},
    CameraConfig: {"h_fov"},
    Mount: {"rpy"},
    ImuConfig: {"mount_rpy"},
    RouteParams: {"heading"},
    AuxParams: {"join_angle"},
}

SENSOR_TYPES = {"lidar": LidarConfig, "camera": CameraConfig, "imu": ImuConfig}


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass
class SensorSpec:
    name: str
    kind: str
    config: object
    source: str = ""

    @property
    def period(self) -> float:
        return self.config.period


@dataclass
class ScenarioConfig:
    seed: int = 0
    route: RouteParams = field(default_factory=RouteParams)
    route_points: str = ""  # optional NED points file replacing the generated route
    train: TrainParams = field(default_factory=TrainParams)
    speed_limits: SpeedLimits = field(default_factory=SpeedLimits)
    duration: float = 0.0  # seconds of trajectory; 0 = whole route
    multitrack: AuxParams = field(default_factory=AuxParams)
    terrain: TerrainParams = field(default_factory=TerrainParams)
    scene: SceneParams = field(default_factory=SceneParams)
    sensors: list = field(default_factory=list)  # sensor config paths, relative to the scenario file
    ambient: AmbientConfig = field(default_factory=AmbientConfig)
    export_tiles: bool = False

    def validate(self):
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        return self


def _join(path, name):
    return f"{path}.{name}" if path else name


def _convert(tp, value, where: str, strict: bool):
    origin = typing.get_origin(tp)
    if origin is typing.Union or (origin is not None and str(origin) == "types.UnionType"):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(args[0], value, where, strict)
    if dataclasses.is_dataclass(tp):
        return parse_dataclass(tp, value, where, strict)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            raise ConfigError(where, f"{value!r} is not one of {[e.value for e in tp]}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(where, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(where, f"expected a string, got {value!r}")
        return value
    if tp is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(where, f"expected a list, got {value!r}")
        return tuple(_plain_tuple(v, f"{where}[{i}]") for i, v in enumerate(value))
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(where, f"expected a list, got {value!r}")
        return list(value)
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(where, f"expected an object, got {value!r}")
        return dict(value)
    return value


def _plain_tuple(v, where):
    if isinstance(v, (list, tuple)):
        return tuple(_plain_tuple(x, f"{where}[{i}]") for i, x in enumerate(v))
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, f"expected a number, got {v!r}")
    return float(v)


def _densities(value, where):
    if not isinstance(value, dict):
        raise ConfigError(where, "expected an object mapping class names to objects per km")
    out = {}
    names = {c.name.lower().replace("_", ""): c for c in SemanticClass}
    for k, v in value.items():
        cls = names.get(str(k).lower().replace("_", "").replace(" ", ""))
        if cls is None:
            raise ConfigError(_join(where, str(k)), "unknown object class")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
            raise ConfigError(_join(where, str(k)), f"density must be a number >= 0, got {v!r}")
        out[cls] = float(v)
    return out


def parse_dataclass(cls, data, where: str = "", strict: bool = True):
    if not isinstance(data, dict):
        raise ConfigError(where, f"expected an object for {cls.__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    angles = ANGLE_FIELDS.get(cls, set())
    kw = {}
    for key, value in data.items():
        name, deg = key, False
        if key.endswith("_deg") and key[:-4] in angles:
            name, deg = key[:-4], True
        path = _join(where, key)
        if name not in names:
            if strict:
                raise ConfigError(path, f"unknown field for {cls.__name__}")
            log.warning("%s: ignoring unknown field", path)
            continue
        if name in kw:
            raise ConfigError(path, f"{name} given twice (radians and degrees)")
        if cls is SceneParams and name == "densities":
            kw[name] = _densities(value, path)
            continue
        v = _convert(hints[name], value, path, strict)
        if deg:
            v = tuple(np.deg2rad(x) for x in v) if isinstance(v, tuple) else float(np.deg2rad(v))
        kw[name] = v
    try:
        obj = cls(**kw)
        if hasattr(obj, "validate"):
            obj.validate()
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(where or cls.__name__, str(e)) from None
    return obj


def to_dict(obj):
    """Normal form: radians, lists for tuples, class names for density keys."""
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if isinstance(obj, SceneParams) and f.name == "densities":
                out[f.name] = {SemanticClass(k).name.title().replace("_", ""): float(x) for k, x in sorted(v.items())}
            else:
                out[f.name] = to_dict(v)
        return out
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): to_dict(v) for k, v in obj.items()}
    return obj


def dumps(obj) -> str:
    return json.dumps(to_dict(obj), indent=2, sort_keys=True) + "\n"


def _read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None


def parse_sensor(data, where: str = "", strict: bool = True) -> SensorSpec:
    if not isinstance(data, dict):
        raise ConfigError(where, "expected an object")
    body = dict(data)
    kind = body.pop("type", None)
    name = body.pop("name", None)
    if kind not in SENSOR_TYPES:
        raise ConfigError(_join(where, "type"), f"must be one of {sorted(SENSOR_TYPES)}, got {kind!r}")
    if not isinstance(name, str) or not name:
        raise ConfigError(_join(where, "name"), "a non-empty sensor name is required")
    return SensorSpec(name, kind, parse_dataclass(SENSOR_TYPES[kind], body, where, strict), where)


def sensor_to_dict(spec: SensorSpec) -> dict:
    return {"type": spec.kind, "name": spec.name, **to_dict(spec.config)}


def load_sensor(path, strict: bool = True) -> SensorSpec:
    return parse_sensor(_read_json(path), str(path), strict)


def load_scenario(path, strict: bool = True) -> ScenarioConfig:
    return parse_dataclass(ScenarioConfig, _read_json(path), str(path), strict)


def load_configs(paths, strict: bool = True):
    """Scenario file first, then any extra sensor files.

    Returns (route points or None, train params, sensor specs, scenario).
    Sensor paths listed inside the scenario resolve relative to it.
    """
    paths = [Path(p) for p in ([paths] if isinstance(paths, (str, Path)) else paths)]
    if not paths:
        raise ConfigError("", "no configuration files given")
    scen = load_scenario(paths[0], strict)
    base = paths[0].parent
    sensor_paths = [base / p for p in scen.sensors] + list(paths[1:])
    sensors = [load_sensor(p, strict) for p in sensor_paths]
    names = [s.name for s in sensors]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError(str(paths[0]), f"duplicate sensor names {sorted(dup)}")
    points = None
    if scen.route_points:
        rp = base / scen.route_points
        try:
            points = load_route_points(rp)
        except (OSError, ValueError) as e:
            raise ConfigError(str(rp), str(e)) from None
    return points, scen.train, sensors, scen


def default_sensors() -> list[SensorSpec]:
    """VLP-16 at 10 Hz, a 640x360 camera at 10 Hz, an IMU at the trajectory rate."""
    return [
        SensorSpec("velodyne", "lidar", LidarConfig()),
        SensorSpec("camera", "camera", CameraConfig()),
        SensorSpec("imu", "imu", ImuConfig(accel=ImuChannel(noise_density=0.002, bias_instability=0.0005,
                                                            random_walk=0.0003, quantization=0.0005),
                                           gyro=ImuChannel(noise_density=0.0002, bias_instability=0.00005,
                                                           random_walk=0.00002, quantization=0.00005),
                                           mag=ImuChannel(noise_density=0.1, quantization=0.01))),
    ]
