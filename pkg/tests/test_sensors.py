import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from railsim.geom import Pose, rotation_from_euler, rotations_from_euler
from railsim.scene import Material, Scene, SceneObject, SemanticClass, material_for
from railsim.sensors import (
    AmbientConfig,
    CameraConfig,
    ImuChannel,
    ImuConfig,
    ImuModel,
    LidarConfig,
    SunSlot,
    Tracer,
    backscatter_intensity,
    camera_cast,
    depth_image,
    imu_sample,
    intensity_map,
    intensity_terms,
    lidar_scan,
    luminance,
    ned_to_imu,
    quantize,
    render_depth,
    render_segmentation,
    render_shaded,
    scan_pattern,
    segmentation_image,
)

G = 9.80665
DIFFUSE = Material(0.8, 0.0, np.pi / 2)


def quad(c, u, v):
    """Two triangles spanning c +- u +- v."""
    c, u, v = (np.asarray(x, float) for x in (c, u, v))
    a, b, cc, d = c - u - v, c + u - v, c + u + v, c - u + v
    return np.array([[a, b, cc], [a, cc, d]])


def wall_scene(x=10.0, size=500.0, cls=SemanticClass.BUILDING, material=DIFFUSE):
    tris = quad([x, 0, 0], [0, size, 0], [0, 0, size])
    return Scene([SceneObject(7, cls, tris, material)])


@pytest.fixture(scope="module")
def wall():
    return Tracer(wall_scene())


@pytest.fixture(scope="module")
def empty():
    return Tracer(Scene([]))


# -- scan pattern ----------------------------------------------------------------


def test_vlp16_pattern():
    p = scan_pattern(LidarConfig())
    assert len(p) == 28800 == 16 * 1800
    assert np.allclose(np.diff(p.elevations), np.deg2rad(2.0), atol=1e-12)
    assert np.allclose(np.linalg.norm(p.directions, axis=1), 1.0)
    # azimuth-major: the first 16 rays share azimuth 0 index
    assert np.all(p.azimuth_index[:16] == 0) and list(p.beam[:16]) == list(range(16))


def test_single_forward_ray():
    res = np.deg2rad(0.2)
    p = scan_pattern(LidarConfig(n_beams=1, h_fov=res, h_res=res))
    assert len(p) == 1
    assert np.allclose(p.directions[0], [1.0, 0.0, 0.0], atol=0)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 64),
    st.floats(0.01, 1.0),
    st.floats(0.05, 2 * np.pi),
    st.floats(0.001, 0.05),
)
def test_pattern_cardinality(n_beams, v_fov, h_fov, h_res):
    cfg = LidarConfig(n_beams=n_beams, v_fov=v_fov, h_fov=h_fov, h_res=min(h_res, h_fov))
    p = scan_pattern(cfg)
    assert len(p) == n_beams * int(np.floor(h_fov / min(h_res, h_fov) + 1e-9))
    assert len(set(zip(p.beam, p.azimuth_index))) == len(p)


# -- LiDAR scan ---------------------------------------------------------------


def single_beam(**kw):
    res = np.deg2rad(0.2)
    return LidarConfig(n_beams=1, h_fov=res, h_res=res, **kw)


def test_plane_ten_metres_ahead(wall):
    pc = lidar_scan(Pose(np.zeros(3)), single_beam(), wall)
    assert len(pc) == 1
    assert np.array_equal(pc.points[0], [10.0, 0.0, 0.0])
    assert pc.cls[0] == SemanticClass.BUILDING and pc.instance[0] == 7


def test_full_scan_matches_closed_form_ranges():
    # tilted plane n . x = c with the sensor off the origin and yawed
    n = np.array([0.8, 0.1, 0.3])
    n /= np.linalg.norm(n)
    c = 12.0
    u = np.cross(n, [0, 0, 1.0])
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    tracer = Tracer(Scene([SceneObject(1, SemanticClass.TERRAIN, quad(c * n, 400 * u, 400 * v), DIFFUSE)]))
    pose = Pose([1.0, -2.0, 0.5], rotation_from_euler(0.2, 0.05, -0.03))
    cfg = LidarConfig(range=200.0)
    pc = lidar_scan(pose, cfg, tracer)
    assert len(pc) > 1000
    d_sensor = pc.points / np.linalg.norm(pc.points, axis=1, keepdims=True)
    d_world = d_sensor @ pose.rotation.T
    t_expected = (c - n @ pose.position) / (d_world @ n)
    assert np.max(np.abs(np.linalg.norm(pc.points, axis=1) - t_expected)) <= 1e-4
    # every ray whose closed-form range is inside the limit returned a point
    pat = scan_pattern(cfg)
    dw = pat.directions @ pose.rotation.T
    with np.errstate(divide="ignore"):
        t_all = (c - n @ pose.position) / (dw @ n)
    assert len(pc) == int(np.sum((t_all > 0) & (t_all <= cfg.range)))


def test_empty_scene_gives_empty_cloud(empty):
    pc = lidar_scan(Pose(np.zeros(3)), LidarConfig(), empty)
    assert len(pc) == 0 and pc.points.shape == (0, 3)


def test_range_noise_statistics(wall):
    cfg = single_beam(sigma=0.05)
    r = np.array([lidar_scan(Pose(np.zeros(3)), cfg, wall, frame=k, seed=3).points[0, 0] for k in range(10_000)])
    assert abs(r.std(ddof=1) - 0.05) <= 0.05 * 0.05
    assert abs(r.mean() - 10.0) < 0.005


def test_noisy_points_within_bound(wall):
    cfg = LidarConfig(sigma=0.3, range=30.0)
    pc = lidar_scan(Pose(np.zeros(3)), cfg, wall, seed=1)
    assert len(pc) > 0
    assert np.all(np.linalg.norm(pc.points, axis=1) <= cfg.range + 6 * cfg.sigma)


def test_noiseless_points_lie_on_geometry(world_tracer):
    tracer, pose = world_tracer
    pc = lidar_scan(pose, LidarConfig(), tracer)
    assert len(pc) > 5000
    dist = np.linalg.norm(pc.points, axis=1)
    d_world = (pc.points / dist[:, None]) @ pose.rotation.T
    again = tracer.cast(pose.position[None], d_world)
    assert again.hits.hit.all()
    assert np.max(np.abs(again.hits.t - dist)) <= 1e-5


def test_scan_deterministic_per_frame(wall):
    cfg = LidarConfig(sigma=0.05)
    a = lidar_scan(Pose(np.zeros(3)), cfg, wall, frame=4, seed=2)
    b = lidar_scan(Pose(np.zeros(3)), cfg, wall, frame=4, seed=2)
    c = lidar_scan(Pose(np.zeros(3)), cfg, wall, frame=5, seed=2)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.intensity, b.intensity)
    assert not np.array_equal(a.points, c.points)


@pytest.fixture(scope="module")
def world_tracer():
    from railsim.multitrack import railroad_from_route
    from railsim.routegen import RouteParams, generate_route
    from railsim.scene import SceneParams, build_scene
    from railsim.terrain import TerrainParams, build_heightmap

    route = generate_route(3, RouteParams(n_blocks=4))
    rr = railroad_from_route(route)
    scene, _ = build_scene(rr, build_heightmap(rr, TerrainParams(seed=3)), SceneParams(seed=3))
    p = route.points[len(route.points) // 2]
    pose = Pose([p[1], p[0], -p[2] + 3.0], rotation_from_euler(0.3, 0.0, 0.0))
    return Tracer(scene), pose


# -- intensity ------------------------------------------------------------------


def test_intensity_zero_beyond_theta_max():
    m = Material(0.5, 0.3, np.deg2rad(70.0), 0.3)
    assert backscatter_intensity(5.0, np.cos(np.deg2rad(70.0)), m) == 0
    assert backscatter_intensity(5.0, np.cos(np.deg2rad(80.0)), m) == 0
    assert backscatter_intensity(5.0, np.cos(np.deg2rad(10.0)), m) > 0


def test_cosine_and_inverse_square_laws():
    d0, _ = intensity_terms(3.0, 1.0, DIFFUSE)
    d60, _ = intensity_terms(3.0, np.cos(np.deg2rad(60.0)), DIFFUSE)
    d2, _ = intensity_terms(6.0, 1.0, DIFFUSE)
    assert d60 == pytest.approx(d0 / 2, rel=1e-12)
    assert d2 == pytest.approx(d0 / 4, rel=1e-12)
    # after mapping to integer levels the laws hold within one level
    i0 = backscatter_intensity(1.0, 1.0, DIFFUSE)
    assert abs(backscatter_intensity(1.0, np.cos(np.deg2rad(60.0)), DIFFUSE) - i0 / 2) <= 1
    assert abs(backscatter_intensity(2.0, 1.0, DIFFUSE) - i0 / 4) <= 1
    assert i0 == 80


def test_lidar_intensity_ref_validated():
    with pytest.raises(ValueError):
        LidarConfig(intensity_ref=0.0).validate()


def test_diffuse_only_stays_in_lower_band():
    m = Material(1.0, 0.0, np.pi / 2)
    assert backscatter_intensity(0.1, 1.0, m) <= 100


materials = st.builds(
    lambda d, s, th, r: Material(d * (1 - s), s, th, r),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
    st.floats(0.05, np.pi / 2),
    st.floats(0.05, 1.0),
)


@settings(max_examples=100, deadline=None)
@given(materials, st.floats(0.1, 200.0), st.floats(0.0, 1.0), st.floats(0.5, 50.0))
def test_reference_distance_is_a_range_rescale(m, d, c, ref):
    # reading at d with reference ref equals reading at d / ref with the default reference
    a = intensity_terms(d, c, m, d_ref=ref)
    b = intensity_terms(d / ref, c, m)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


@settings(max_examples=200, deadline=None)
@given(materials, st.floats(0.05, 500.0), st.floats(0.0, 1.0), st.floats(1.0, 3.0))
def test_intensity_range_and_distance_monotone(m, d, c, k):
    a = backscatter_intensity(d, c, m)
    b = backscatter_intensity(d * k, c, m)
    assert 0 <= a <= 255 and 0 <= b <= 255
    assert b <= a
    ra = intensity_map(*intensity_terms(d, c, m))
    rb = intensity_map(*intensity_terms(d * k, c, m))
    assert rb <= ra + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.05, 200.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_diffuse_monotone_in_angle(rho, d, c1, c2):
    m = Material(rho, 0.0, np.pi / 2)
    lo, hi = sorted((c1, c2))  # larger cosine = smaller angle
    assert backscatter_intensity(d, lo, m) <= backscatter_intensity(d, hi, m)


def test_rail_brighter_than_ballast():
    rail = backscatter_intensity(10.0, 0.99, material_for(SemanticClass.RAIL_TRACK))
    bed = backscatter_intensity(10.0, 0.99, material_for(SemanticClass.TRACKBED))
    assert rail > bed


# -- cameras ------------------------------------------------------------------


def test_sky_reads_depth_max(empty):
    d = render_depth(Pose(np.zeros(3)), CameraConfig(width=32, height=18), empty)
    assert d.shape == (18, 32) and np.all(d == 100.0)
    seg = render_segmentation(Pose(np.zeros(3)), CameraConfig(width=32, height=18), empty)
    assert np.all(seg == SemanticClass.BACKGROUND)


def test_wall_depth_closed_form(wall):
    cfg = CameraConfig(width=65, height=33, h_fov=np.deg2rad(60.0))
    d = render_depth(Pose(np.zeros(3)), cfg, wall)
    assert d[16, 32] == pytest.approx(10.0, abs=1e-4)
    # every pixel: distance to the plane x = 10 along its ray is 10 / cos(angle to axis)
    u = np.arange(65) + 0.5 - 32.5
    v = np.arange(33) + 0.5 - 16.5
    V, U = np.meshgrid(v, u, indexing="ij")
    expected = 10.0 * np.sqrt(cfg.focal**2 + U**2 + V**2) / cfg.focal
    assert np.max(np.abs(d - expected)) <= 1e-4


def test_depth_clamped(wall):
    d = render_depth(Pose(np.zeros(3)), CameraConfig(width=64, height=36, depth_max=10.5), wall)
    assert d.min() >= 0.0 and d.max() <= 10.5
    assert np.any(d == 10.5) and np.any(d < 10.5)


def test_modalities_share_hits(world_tracer):
    tracer, pose = world_tracer
    cfg = CameraConfig(width=96, height=54)
    ch = camera_cast(pose, cfg, tracer)
    seg, depth = segmentation_image(ch), depth_image(ch)
    hit = ch.hits.hits.hit.reshape(seg.shape)
    assert np.all((seg == 0) == ~hit)
    assert np.array_equal(seg, render_segmentation(pose, cfg, tracer))
    assert np.array_equal(depth, render_depth(pose, cfg, tracer))
    obj = tracer.scene.tri_object[ch.hits.hits.triangle[ch.hits.hits.hit]]
    assert np.array_equal(seg[hit], tracer.scene.object_class[obj])
    h1 = np.bincount(seg.ravel(), minlength=13)
    assert np.array_equal(h1, np.bincount(render_segmentation(pose, cfg, tracer).ravel(), minlength=13))
    assert len(set(seg.ravel())) >= 3


def test_fog_limits(world_tracer):
    tracer, pose = world_tracer
    cfg = CameraConfig(width=64, height=36)
    clear = render_shaded(pose, cfg, tracer, AmbientConfig(fog_density=0.0, fog_color=(1.0, 0.0, 0.0)))
    clear2 = render_shaded(pose, cfg, tracer, AmbientConfig(fog_density=0.0, fog_color=(0.0, 1.0, 0.0)))
    assert np.array_equal(clear, clear2)
    thick = render_shaded(pose, cfg, tracer, AmbientConfig(fog_density=np.inf, fog_color=(1.0, 0.0, 0.0)))
    hit = render_segmentation(pose, cfg, tracer) > 0
    assert np.all(thick[hit] == [255, 0, 0])
    assert np.array_equal(thick[~hit], clear[~hit])


def test_night_darker_than_morning(world_tracer):
    tracer, pose = world_tracer
    cfg = CameraConfig(width=64, height=36)
    night = render_shaded(pose, cfg, tracer, AmbientConfig(SunSlot.NIGHT))
    morning = render_shaded(pose, cfg, tracer, AmbientConfig(SunSlot.MORNING))
    assert luminance(night) < luminance(morning)


def test_shadow_from_overhead_slab():
    ground = SceneObject(0, SemanticClass.TERRAIN, quad([0, 0, 0], [200, 0, 0], [0, 200, 0]),
                         material_for(SemanticClass.TERRAIN))
    slab = SceneObject(1, SemanticClass.BRIDGE, quad([0, 0, 50], [1000, 0, 0], [0, 1000, 0]),
                       material_for(SemanticClass.BRIDGE))
    pose = Pose([0, 0, 10.0], rotation_from_euler(0.0, np.pi / 2, 0.0))  # FLU pitched to look straight down
    cfg = CameraConfig(width=16, height=16)
    amb = AmbientConfig(SunSlot.MORNING)
    lit = render_shaded(pose, cfg, Tracer(Scene([ground])), amb)
    shadowed = render_shaded(pose, cfg, Tracer(Scene([ground, slab])), amb)
    assert np.all(shadowed.astype(int) <= lit.astype(int))
    assert luminance(shadowed) < 0.6 * luminance(lit)


# -- IMU ----------------------------------------------------------------------


def test_stationary_level_reading():
    s = imu_sample(np.zeros(3), np.zeros(3), np.zeros(3), ImuConfig())
    assert np.array_equal(s.accel, [0.0, 0.0, G])
    assert np.array_equal(s.gyro, np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-1.4, 1.4), st.floats(-np.pi, np.pi))
def test_stationary_reading_equals_rotated_gravity(yaw, pitch, roll):
    s = imu_sample(np.zeros(3), np.zeros(3), [yaw, pitch, roll], ImuConfig())
    C = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix().T
    assert np.allclose(s.accel, C @ [0.0, 0.0, G], atol=1e-12, rtol=0)
    assert np.array_equal(s.accel, ned_to_imu([yaw, pitch, roll]) @ np.array([0.0, 0.0, G]))


def test_specific_force_flag():
    s = imu_sample(np.zeros(3), np.zeros(3), np.zeros(3), ImuConfig(specific_force=True))
    assert np.array_equal(s.accel, [0.0, 0.0, -G])


def test_quantization_exact_multiples():
    ch = ImuChannel(noise_density=0.05, quantization=0.01)
    cfg = ImuConfig(accel=ch, gyro=ImuChannel(noise_density=0.01, quantization=0.01))
    rng = np.random.default_rng(0)
    tab = ImuModel(cfg, seed=1).run_table(np.arange(500) * 0.01, rng.normal(size=(500, 3)),
                                          rng.normal(size=(500, 3)), rng.normal(size=(500, 3)))
    vals = tab[:, 1:7]
    assert np.array_equal(vals, quantize(vals, 0.01))
    assert np.allclose(vals / 0.01, np.rint(vals / 0.01), atol=1e-9, rtol=0)


def test_bias_additive():
    cfg0 = ImuConfig()
    cfg1 = ImuConfig(accel=ImuChannel(bias=(0.1, 0.0, 0.0)))
    a = np.array([0.3, -0.2, 0.1])
    th = np.array([0.4, 0.02, -0.01])
    s0 = imu_sample(a, np.zeros(3), th, cfg0)
    s1 = imu_sample(a, np.zeros(3), th, cfg1)
    assert np.allclose(s1.accel - s0.accel, [0.1, 0.0, 0.0], atol=1e-15, rtol=0)


def test_misalignment_applied():
    M = ((1.0, 0.01, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    s = imu_sample([1.0, 0.0, 0.0], np.zeros(3), np.zeros(3), ImuConfig(misalignment=M))
    assert np.allclose(s.accel, np.asarray(M) @ [1.0, 0.0, G])


def test_white_noise_std():
    nd, period = 0.002, 0.01
    cfg = ImuConfig(period=period, accel=ImuChannel(noise_density=nd))
    n = 100_000
    tab = ImuModel(cfg, seed=5).run_table(np.arange(n) * period, np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)))
    acc = tab[:, 1:4] - [0.0, 0.0, G]
    expected = nd * np.sqrt(1.0 / period)
    assert np.all(np.abs(acc.std(axis=0) / expected - 1.0) <= 0.05)


def test_random_walk_variance_linear():
    rw, period, n = 0.01, 0.01, 1000
    cfg = ImuConfig(period=period, accel=ImuChannel(random_walk=rw))
    t = np.arange(1, n + 1) * period
    paths = []
    for seed in range(400):
        tab = ImuModel(cfg, seed=seed).run_table(t, np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)))
        paths.append(tab[:, 1:4] - [0.0, 0.0, G])
    paths = np.concatenate(paths, axis=1)  # (n, 1200) independent walks
    var = paths.var(axis=1)
    slope = np.linalg.lstsq(t[:, None], var, rcond=None)[0][0]
    assert abs(slope / rw**2 - 1.0) <= 0.10
    fit = slope * t
    assert 1 - np.sum((var - fit) ** 2) / np.sum((var - var.mean()) ** 2) > 0.95


def test_gauss_markov_steady_state():
    cfg = ImuConfig(gyro=ImuChannel(bias_instability=0.001, correlation_time=0.5))
    n = 200_000
    tab = ImuModel(cfg, seed=2).run_table(np.arange(n) * 0.01, np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)))
    assert np.all(np.abs(tab[:, 4:7].std(axis=0) / 0.001 - 1.0) < 0.1)


def test_step_matches_run():
    ch = ImuChannel(noise_density=0.01, bias_instability=0.002, correlation_time=2.0, random_walk=0.001)
    cfg = ImuConfig(accel=ch, gyro=ch, mag=ch)
    rng = np.random.default_rng(1)
    a, w, th = rng.normal(size=(3, 50, 3))
    t = np.arange(50) * 0.01
    ref = ImuModel(cfg, seed=9).run_table(t, a, w, th)
    m = ImuModel(cfg, seed=9)
    steps = np.array([np.concatenate([[s.t], s.accel, s.gyro, s.mag]) for s in (m.step(t[k], a[k], w[k], th[k])
                                                                               for k in range(50))])
    assert np.allclose(steps, ref, atol=1e-12, rtol=0)


def test_imu_config_rejected():
    with pytest.raises(ValueError):
        ImuConfig(misalignment=np.zeros((3, 3))).validate()
    with pytest.raises(ValueError):
        ImuConfig(accel=ImuChannel(noise_density=-1.0)).validate()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_batched_euler_matches_single(a):
    assert np.allclose(rotations_from_euler(*a), rotation_from_euler(*a), atol=1e-15)
