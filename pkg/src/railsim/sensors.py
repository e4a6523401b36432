"""LiDAR, camera and IMU emulation.

All sensors work in FLU sensor frames (x forward, y left, z up) mounted on
the vehicle body, which is itself FLU against the ENU world. Noise is drawn
from counter-based streams keyed by (seed, sensor, frame) so a frame's
output never depends on which frames were rendered before it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from ._rng import make_rng
from .geom import FrameTag, Pose, rotation_from_euler, rotations_from_euler
from .raycast import Accelerator, HitBatch
from .scene import Scene, SemanticClass

STREAM_LIDAR = 10
STREAM_IMU = 11

GRAVITY = 9.80665
D_REF = 1.0  # intensity normalisation distance, m
DIFFUSE_SCALE = 100.0  # diffuse-only returns land in [0, 100]
SPECULAR_SCALE = 155.0
NOISE_CLIP = 6.0  # range noise is truncated at this many sigmas


@dataclass
class Mount:
    """Sensor placement on the vehicle body (FLU), yaw/pitch/roll in radians."""

    position: tuple = (0.0, 0.0, 0.0)
    rpy: tuple = (0.0, 0.0, 0.0)

    def pose(self) -> Pose:
        yaw, pitch, roll = self.rpy[2], self.rpy[1], self.rpy[0]
        return Pose(np.asarray(self.position, float), rotation_from_euler(yaw, pitch, roll), FrameTag.BODY,
                    FrameTag.SENSOR)


def _check_period(period):
    if not period > 0.0:
        raise ValueError("period must be > 0")


# -- scene access ------------------------------------------------------------


class Tracer:
    """A scene plus its ray-cast accelerator, with per-hit labels and materials."""

    def __init__(self, scene: Scene, accelerator: Accelerator | None = None):
        self.scene = scene
        self.accel = accelerator if accelerator is not None else Accelerator.from_scene(scene)

    def cast(self, origins, directions, t_max=np.inf) -> "LabelledHits":
        hits = self.accel.cast_batch(origins, directions, t_max)
        n = len(hits)
        cls = np.zeros(n, np.uint16)
        inst = np.full(n, -1, np.int64)
        mat = np.zeros((n, 4))
        m = hits.hit
        if m.any():
            obj = self.scene.tri_object[hits.triangle[m]]
            cls[m] = self.scene.object_class[obj]
            inst[m] = self.scene.object_instance[obj]
            mat[m] = self.scene.object_material[obj]
        return LabelledHits(hits, cls, inst, mat)

    def occluded(self, origins, directions, t_max=np.inf) -> np.ndarray:
        return self.accel.occluded(origins, directions, t_max)


@dataclass
class LabelledHits:
    hits: HitBatch
    cls: np.ndarray
    instance: np.ndarray
    material: np.ndarray


# -- LiDAR ---------------------------------------------------------------------


@dataclass
class LidarConfig:
    n_beams: int = 16
    v_fov: float = np.deg2rad(30.0)
    h_fov: float = 2.0 * np.pi
    h_res: float = np.deg2rad(0.2)
    range: float = 100.0
    period: float = 0.1
    sigma: float = 0.0
    v_center: float = 0.0
    intensity_ref: float = D_REF  # range at which a Lambertian target of albedo 1 reads full diffuse scale
    mount: Mount = field(default_factory=lambda: Mount((0.0, 0.0, 3.0)))

    def validate(self):
        if int(self.n_beams) != self.n_beams or self.n_beams < 1:
            raise ValueError("n_beams must be a positive integer")
        if self.n_beams > 1 and not self.v_fov > 0.0:
            raise ValueError("v_fov must be > 0")
        if not 0.0 < self.h_res <= self.h_fov <= 2.0 * np.pi + 1e-12:
            raise ValueError("need 0 < h_res <= h_fov <= 2*pi")
        if not self.range > 0.0:
            raise ValueError("range must be > 0")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if not self.intensity_ref > 0.0:
            raise ValueError("intensity_ref must be > 0")
        _check_period(self.period)
        return self

    @property
    def n_azimuth(self) -> int:
        return int(np.floor(self.h_fov / self.h_res + 1e-9))


def vlp16(**kw) -> LidarConfig:
    """16 beams over 30 deg, 0.2 deg azimuth step, 100 m, 10 Hz."""
    return LidarConfig(**kw)


@dataclass
class ScanPattern:
    beam: np.ndarray
    azimuth_index: np.ndarray
    directions: np.ndarray
    elevations: np.ndarray
    azimuths: np.ndarray

    def __len__(self):
        return len(self.beam)


def scan_pattern(config: LidarConfig) -> ScanPattern:
    """Azimuth-major ray list: all beams of the first azimuth step, then the next.

    Azimuths are centred on the forward axis and increase counter-clockwise;
    elevations span ``v_fov`` evenly, bottom beam first.
    """
    config.validate()
    nb, na = int(config.n_beams), config.n_azimuth
    if nb == 1:
        el = np.array([config.v_center])
    else:
        el = config.v_center + np.linspace(-config.v_fov / 2.0, config.v_fov / 2.0, nb)
    az = (np.arange(na) - (na - 1) / 2.0) * config.h_res
    A, E = np.meshgrid(az, el, indexing="ij")
    d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)
    beam = np.tile(np.arange(nb), na)
    azi = np.repeat(np.arange(na), nb)
    return ScanPattern(beam, azi, d, el, az)


@dataclass
class PointCloud:
    timestamp: float
    pose: Pose
    points: np.ndarray
    intensity: np.ndarray
    cls: np.ndarray
    instance: np.ndarray
    beam: np.ndarray
    azimuth_index: np.ndarray

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls, timestamp=0.0, pose=None):
        z = np.zeros(0, np.int64)
        return cls(timestamp, pose or Pose(np.zeros(3)), np.zeros((0, 3)), np.zeros(0, np.uint8),
                   np.zeros(0, np.uint16), z, z.copy(), z.copy())


def intensity_terms(d, cos_theta, material, d_ref=D_REF):
    """Pre-quantisation (diffuse, specular) backscatter for a material row or Material.

    diffuse  = rho_d cos(theta) (d_ref/d)^2
    specular = rho_s exp(-tan^2(theta)/m^2) / (cos^5(theta) m^2) * cos(theta) (d_ref/d)^2
    The trailing cos(theta) projects the Beckmann lobe back onto the
    receiving direction, which coincides with the emitter for a LiDAR.
    Both are zero at or beyond the material's maximum incidence angle.
    """
    rho_d, rho_s, theta_max, m = _material_columns(material)
    d = np.asarray(d, float)
    c = np.clip(np.asarray(cos_theta, float), 0.0, 1.0)
    theta = np.arccos(c)
    ok = (theta < theta_max) & (c > 0.0)
    falloff = (d_ref / np.where(d > 0, d, np.inf)) ** 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cs = np.where(ok, c, 1.0)
        tan2 = (1.0 - cs**2) / cs**2
        lobe = np.exp(-tan2 / m**2) / (cs**4 * m**2)
    diffuse = np.where(ok, rho_d * c * falloff, 0.0)
    specular = np.where(ok & (rho_s > 0), rho_s * lobe * falloff, 0.0)
    return diffuse, specular


def _material_columns(material):
    if hasattr(material, "as_tuple"):
        material = material.as_tuple()
    m = np.asarray(material, float)
    return m[..., 0], m[..., 1], m[..., 2], m[..., 3]


def intensity_map(diffuse, specular):
    """Map raw backscatter to [0, 255]: diffuse linearly into [0, 100], the specular lobe saturating above it."""
    diffuse = np.asarray(diffuse, float)
    specular = np.asarray(specular, float)
    return DIFFUSE_SCALE * np.minimum(diffuse, 1.0) + SPECULAR_SCALE * (1.0 - np.exp(-specular))


def backscatter_intensity(d, cos_theta, material, d_ref=D_REF):
    """Integer intensity in [0, 255] (scalar inputs give a Python int)."""
    level = np.clip(np.rint(intensity_map(*intensity_terms(d, cos_theta, material, d_ref))), 0, 255).astype(np.uint8)
    return int(level) if level.ndim == 0 else level


def lidar_scan(pose: Pose, config: LidarConfig, tracer: Tracer, frame: int = 0, seed: int = 0,
               timestamp: float = 0.0, pattern: ScanPattern | None = None, sensor: int = 0) -> PointCloud:
    """One revolution from a single frozen sensor pose (world <- sensor)."""
    pattern = pattern or scan_pattern(config)
    d_world = pattern.directions @ pose.rotation.T
    lab = tracer.cast(pose.position[None], d_world, config.range)
    hit = lab.hits.hit
    t = lab.hits.t
    r = t.copy()
    if config.sigma > 0.0:
        # one draw per pattern ray so noise is tied to (frame, ray), not to which rays hit
        z = make_rng(seed, STREAM_LIDAR, sensor, frame).standard_normal(len(pattern))
        r = t + config.sigma * np.clip(z, -NOISE_CLIP, NOISE_CLIP)
        hit = hit & (r > 0.0)
    cos_t = -np.einsum("ij,ij->i", lab.hits.normal[hit], d_world[hit])
    inten = backscatter_intensity(t[hit], cos_t, lab.material[hit], config.intensity_ref)
    return PointCloud(
        timestamp,
        pose,
        pattern.directions[hit] * r[hit, None],
        np.asarray(inten, np.uint8).reshape(-1),
        lab.cls[hit],
        lab.instance[hit],
        pattern.beam[hit],
        pattern.azimuth_index[hit],
    )


# -- cameras -----------------------------------------------------------------


@dataclass
class CameraConfig:
    width: int = 640
    height: int = 360
    h_fov: float = np.deg2rad(90.0)
    depth_max: float = 100.0
    period: float = 0.1
    depth: bool = True
    segmentation: bool = True
    shaded: bool = True
    mount: Mount = field(default_factory=lambda: Mount((0.5, 0.0, 3.0)))

    def validate(self):
        if self.width < 1 or self.height < 1 or int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("width and height must be positive integers")
        if not 0.0 < self.h_fov < np.pi:
            raise ValueError("h_fov must be in (0, pi)")
        if not self.depth_max > 0.0:
            raise ValueError("depth_max must be > 0")
        _check_period(self.period)
        return self

    @property
    def focal(self) -> float:
        return (self.width / 2.0) / np.tan(self.h_fov / 2.0)


def pixel_rays(config: CameraConfig) -> np.ndarray:
    """(H, W, 3) unit rays through pixel centres; optical axis +x, image right = -y, image down = -z."""
    config.validate()
    u = np.arange(config.width) + 0.5 - config.width / 2.0
    v = np.arange(config.height) + 0.5 - config.height / 2.0
    V, U = np.meshgrid(v, u, indexing="ij")
    d = np.stack([np.full_like(U, config.focal), -U, -V], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass
class CameraHits:
    """The shared primary cast behind every image modality of one frame."""

    config: CameraConfig
    pose: Pose
    rays: np.ndarray  # (H*W, 3) world directions
    hits: LabelledHits

    @property
    def shape(self):
        return (self.config.height, self.config.width)


def camera_cast(pose: Pose, config: CameraConfig, tracer: Tracer, rays: np.ndarray | None = None) -> CameraHits:
    rays = pixel_rays(config) if rays is None else rays
    d_world = rays.reshape(-1, 3) @ pose.rotation.T
    return CameraHits(config, pose, d_world, tracer.cast(pose.position[None], d_world))


def depth_image(ch: CameraHits) -> np.ndarray:
    t = np.where(ch.hits.hits.hit, ch.hits.hits.t, ch.config.depth_max)
    return np.minimum(t, ch.config.depth_max).reshape(ch.shape)


def segmentation_image(ch: CameraHits) -> np.ndarray:
    return ch.hits.cls.astype(np.uint8).reshape(ch.shape)


def render_depth(pose: Pose, config: CameraConfig, tracer: Tracer) -> np.ndarray:
    """Euclidean distance per pixel in metres, clamped to ``depth_max``; misses read ``depth_max``."""
    return depth_image(camera_cast(pose, config, tracer))


def render_segmentation(pose: Pose, config: CameraConfig, tracer: Tracer) -> np.ndarray:
    """Class id of the nearest hit per pixel, Background on a miss."""
    return segmentation_image(camera_cast(pose, config, tracer))


class SunSlot(str, enum.Enum):
    MORNING = "Morning"
    EVENING = "Evening"
    NIGHT = "Night"


# elevation, azimuth (clockwise from north), sun intensity, ambient, sun colour, sky colour
SLOT_LIGHTING = {
    SunSlot.MORNING: (np.deg2rad(25.0), np.deg2rad(100.0), 0.85, 0.35, (1.0, 0.97, 0.9), (0.55, 0.7, 0.9)),
    SunSlot.EVENING: (np.deg2rad(12.0), np.deg2rad(260.0), 0.7, 0.25, (1.0, 0.75, 0.5), (0.8, 0.55, 0.45)),
    SunSlot.NIGHT: (np.deg2rad(40.0), np.deg2rad(200.0), 0.06, 0.04, (0.7, 0.75, 1.0), (0.02, 0.02, 0.05)),
}

CLASS_PALETTE = {
    SemanticClass.BACKGROUND: (0, 0, 0),
    SemanticClass.TERRAIN: (110, 140, 70),
    SemanticClass.TRACKBED: (120, 110, 100),
    SemanticClass.RAIL_TRACK: (170, 170, 180),
    SemanticClass.POLE: (90, 90, 95),
    SemanticClass.CATENARY: (60, 60, 60),
    SemanticClass.TREE: (40, 100, 40),
    SemanticClass.ROCK: (130, 125, 120),
    SemanticClass.BUILDING: (180, 150, 120),
    SemanticClass.FENCE: (150, 120, 80),
    SemanticClass.TUNNEL: (100, 95, 90),
    SemanticClass.BRIDGE: (150, 150, 150),
    SemanticClass.PLATFORM: (200, 190, 170),
}


def palette_array() -> np.ndarray:
    pal = np.zeros((256, 3), np.uint8)
    for c, rgb in CLASS_PALETTE.items():
        pal[int(c)] = rgb
    return pal


@dataclass
class AmbientConfig:
    slot: SunSlot = SunSlot.MORNING
    fog_density: float = 0.0
    fog_color: tuple = (0.7, 0.72, 0.75)

    def __post_init__(self):
        self.slot = SunSlot(self.slot)

    def validate(self):
        if not self.fog_density >= 0.0:
            raise ValueError("fog_density must be >= 0")
        return self

    def sun_direction(self) -> np.ndarray:
        """Unit ENU vector pointing toward the sun."""
        el, az = SLOT_LIGHTING[self.slot][:2]
        return np.array([np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)])


SHADOW_OFFSET = 1e-3


def shaded_image(ch: CameraHits, tracer: Tracer, ambient: AmbientConfig) -> np.ndarray:
    ambient.validate()
    _, _, sun_i, amb, sun_rgb, sky = SLOT_LIGHTING[ambient.slot]
    hb = ch.hits.hits
    hit = hb.hit
    rgb = np.tile(np.asarray(sky, float), (len(hit), 1))
    if hit.any():
        base = palette_array()[ch.hits.cls[hit]].astype(float) / 255.0
        n = hb.normal[hit]
        sun = ambient.sun_direction()
        lit = np.maximum(n @ sun, 0.0)
        facing = lit > 0.0
        if facing.any():
            p = hb.point[hit][facing] + SHADOW_OFFSET * n[facing]
            shadow = tracer.occluded(p, np.broadcast_to(sun, p.shape))
            lit[np.flatnonzero(facing)[shadow]] = 0.0
        col = base * (amb + sun_i * lit[:, None] * np.asarray(sun_rgb))
        with np.errstate(invalid="ignore"):
            w = -np.expm1(-ambient.fog_density * hb.t[hit])
        w = np.where(np.isnan(w), 1.0, w)[:, None]
        rgb[hit] = (1.0 - w) * col + w * np.asarray(ambient.fog_color, float)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8).reshape(*ch.shape, 3)


def render_shaded(pose: Pose, config: CameraConfig, tracer: Tracer, ambient: AmbientConfig | None = None) -> np.ndarray:
    """Lambert shading with one shadow ray toward the sun and exponential fog."""
    return shaded_image(camera_cast(pose, config, tracer), tracer, ambient or AmbientConfig())


def luminance(rgb) -> float:
    return float((np.asarray(rgb, float) @ [0.2126, 0.7152, 0.0722]).mean())


# -- IMU ---------------------------------------------------------------------


@dataclass
class ImuChannel:
    """Error model of one triad; noise terms share the same units as the reading."""

    bias: tuple = (0.0, 0.0, 0.0)
    noise_density: float = 0.0  # per sqrt(Hz)
    bias_instability: float = 0.0  # steady-state sigma of the Gauss-Markov bias
    correlation_time: float = 100.0  # s
    random_walk: float = 0.0  # per sqrt(s)
    quantization: float = 0.0

    def validate(self, name="channel"):
        for f in ("noise_density", "bias_instability", "random_walk", "quantization"):
            if getattr(self, f) < 0.0:
                raise ValueError(f"{name}.{f} must be >= 0")
        if not self.correlation_time > 0.0:
            raise ValueError(f"{name}.correlation_time must be > 0")


@dataclass
class ImuConfig:
    period: float = 0.01
    misalignment: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    accel: ImuChannel = field(default_factory=ImuChannel)
    gyro: ImuChannel = field(default_factory=ImuChannel)
    mag: ImuChannel = field(default_factory=ImuChannel)
    mount_rpy: tuple = (0.0, 0.0, 0.0)  # IMU axes relative to the FRD body
    mag_field: tuple = (20.0, 1.0, 44.0)  # world field in NED, microtesla
    gravity: float = GRAVITY
    specific_force: bool = False  # False: (a + g) as written; True: (a - g), a conventional accelerometer

    def validate(self):
        _check_period(self.period)
        M = np.asarray(self.misalignment, float)
        if M.shape != (3, 3) or abs(np.linalg.det(M)) < 1e-9:
            raise ValueError("misalignment must be an invertible 3x3 matrix")
        for name in ("accel", "gyro", "mag"):
            getattr(self, name).validate(name)
        return self

    @property
    def rate(self) -> float:
        return 1.0 / self.period


@dataclass
class ImuSample:
    t: float
    accel: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray


def ned_to_imu(orientation, mount_rpy=(0.0, 0.0, 0.0)) -> np.ndarray:
    """C: rotates NED vectors into the IMU frame, given body (yaw, pitch, roll) of shape (3,) or (n, 3)."""
    th = np.asarray(orientation, float)
    R_body = rotations_from_euler(th[..., 0], th[..., 1], th[..., 2])
    R_mount = rotation_from_euler(mount_rpy[2], mount_rpy[1], mount_rpy[0])
    return np.swapaxes(R_body @ R_mount, -1, -2)


def quantize(x, step: float):
    x = np.asarray(x, float)
    return x if step <= 0.0 else np.rint(x / step) * step


def _channel_noise(ch: ImuChannel, z, dt, gm0, rw0):
    """delta for n samples from standard normals z (n, 3 terms, 3 axes), continuing from (gm0, rw0).

    delta = white noise + first-order Gauss-Markov bias + random walk.
    Returns (delta, last Gauss-Markov state, last random-walk state).
    """
    white = ch.noise_density * np.sqrt(1.0 / dt) * z[:, 0]
    phi = np.exp(-dt / ch.correlation_time)
    drive = ch.bias_instability * np.sqrt(1.0 - phi * phi) * z[:, 1]
    gm, _ = lfilter([1.0], [1.0, -phi], drive, axis=0, zi=(phi * gm0)[None, :])
    rw = rw0 + np.cumsum(ch.random_walk * np.sqrt(dt) * z[:, 2], axis=0)
    return white + gm + rw, gm[-1], rw[-1]


class ImuModel:
    """Stateful IMU: noise processes persist across :meth:`step` calls.

    :meth:`run` produces the same numbers as repeated :meth:`step` calls
    from a fresh model with the same seed.
    """

    def __init__(self, config: ImuConfig, seed: int = 0, sensor: int = 0):
        self.config = config.validate()
        self.rng = make_rng(seed, STREAM_IMU, sensor)
        self._state = {k: (np.zeros(3), np.zeros(3)) for k in ("accel", "gyro", "mag")}

    def _delta(self, z):
        """z: (n, 3 channels, 3 terms, 3 axes) standard normals."""
        out = []
        for c, name in enumerate(("accel", "gyro", "mag")):
            d, gm, rw = _channel_noise(getattr(self.config, name), z[:, c], self.config.period, *self._state[name])
            self._state[name] = (gm, rw)
            out.append(d)
        return out

    def run(self, t, accel_ned, omega_ned, orientation) -> list[ImuSample]:
        tab = self.run_table(t, accel_ned, omega_ned, orientation)
        return [ImuSample(float(r[0]), r[1:4], r[4:7], r[7:10]) for r in tab]

    def run_table(self, t, accel_ned, omega_ned, orientation) -> np.ndarray:
        """(n, 10) rows t, ax, ay, az, gx, gy, gz, mx, my, mz."""
        cfg = self.config
        t = np.atleast_1d(np.asarray(t, float))
        n = len(t)
        a = np.asarray(accel_ned, float).reshape(n, 3)
        w = np.asarray(omega_ned, float).reshape(n, 3)
        th = np.asarray(orientation, float).reshape(n, 3)
        z = self.rng.standard_normal((n, 3, 3, 3))
        d_acc, d_gyr, d_mag = self._delta(z)
        Mis = np.asarray(cfg.misalignment, float)
        C = ned_to_imu(th, cfg.mount_rpy)
        g = np.array([0.0, 0.0, cfg.gravity])
        f = a - g if cfg.specific_force else a + g
        MC = Mis @ C
        acc = np.einsum("nij,nj->ni", MC, f) + np.asarray(cfg.accel.bias) + d_acc
        gyr = np.einsum("nij,nj->ni", MC, w) + np.asarray(cfg.gyro.bias) + d_gyr
        mag = np.einsum("nij,j->ni", MC, np.asarray(cfg.mag_field, float)) + np.asarray(cfg.mag.bias) + d_mag
        return np.column_stack([
            t,
            quantize(acc, cfg.accel.quantization),
            quantize(gyr, cfg.gyro.quantization),
            quantize(mag, cfg.mag.quantization),
        ])

    def step(self, t, accel_ned, omega_ned, orientation) -> ImuSample:
        return self.run([t], [accel_ned], [omega_ned], [orientation])[0]


def imu_sample(accel_ned, omega_ned, orientation, config: ImuConfig, model: ImuModel | None = None, t: float = 0.0):
    """One reading; without a model the noise state starts from zero with seed 0."""
    model = model or ImuModel(config)
    return model.step(t, accel_ned, omega_ned, orientation)
