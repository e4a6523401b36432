import numpy as np
import pytest
from scipy.spatial import cKDTree

from railsim.multitrack import (
    AuxParams,
    Railroad,
    Track,
    TrackKind,
    duplicate_main,
    emit_railroad,
    generate_auxiliaries,
    parse_railroad,
    railroad_from_route,
)
from railsim.routegen import Block, BlockType, Route, RouteParams, generate_route, trace_path


def fit_circle(xy):
    """Algebraic least-squares circle (Kasa fit): x^2 + y^2 + a x + b y + c = 0."""
    A = np.column_stack([xy[:, 0], xy[:, 1], np.ones(len(xy))])
    rhs = -(xy[:, 0] ** 2 + xy[:, 1] ** 2)
    (a, b, c), *_ = np.linalg.lstsq(A, rhs, rcond=None)
    cx, cy = -a / 2, -b / 2
    return np.sqrt(cx * cx + cy * cy - c), (cx, cy)


@pytest.fixture(scope="module")
def busy():
    route = generate_route(3, RouteParams(n_blocks=12))
    params = AuxParams(p_spawn=0.7, p_end=0.3, duplicate_main=True, max_parallel=3, seed=1)
    return route, generate_auxiliaries(railroad_from_route(route), params)


def test_duplicate_on_northbound_straight():
    pts, _ = trace_path([0.0, 0.0, 0.0], 0.0, [(300.0, 0.0)], 1.0)
    route = Route(pts, [Block(BlockType.STRAIGHT, 0, len(pts))])
    dup = duplicate_main(route, 4.0)
    assert dup.kind == TrackKind.DUPLICATE
    assert np.allclose(dup.points[:, 1], 4.0, atol=1e-9)
    assert np.array_equal(dup.points[:, 2], pts[:, 2])
    d, _ = cKDTree(pts).query(dup.points)
    assert np.abs(d - 4.0).max() < 1e-3


def test_duplicate_left_curve_radius():
    R = 500.0
    pts, _ = trace_path([0.0, 0.0, 0.0], 0.0, [(100.0, 0.0), (400.0, -1.0 / R), (100.0, 0.0)], 1.0)
    route = Route(
        pts,
        [
            Block(BlockType.STRAIGHT, 0, 100),
            Block(BlockType.CURVE, 100, 500, R),
            Block(BlockType.STRAIGHT, 500, len(pts)),
        ],
        smoothing=0.0,
    )
    dup = duplicate_main(route, 4.0)
    radius, _ = fit_circle(dup.points[140:460, :2])
    assert radius == pytest.approx(R + 4.0, abs=1e-2)
    assert dup.blocks[1].radius == R + 4.0


def test_duplicate_rejects_large_offset():
    pts, _ = trace_path([0.0, 0.0, 0.0], 0.0, [(50.0, 0.0), (60.0, 1.0 / 30.0), (50.0, 0.0)], 1.0)
    route = Route(pts, [Block(BlockType.STRAIGHT, 0, 50), Block(BlockType.CURVE, 50, 110, 30.0),
                        Block(BlockType.STRAIGHT, 110, len(pts))])
    with pytest.raises(ValueError):
        duplicate_main(route, 40.0)
    with pytest.raises(ValueError):
        duplicate_main(route, 0.0)


def test_zero_spawn_is_noop():
    route = generate_route(3, RouteParams(n_blocks=12))
    rr = railroad_from_route(route)
    out = generate_auxiliaries(rr, AuxParams(p_spawn=0.0, seed=5))
    assert out == rr
    assert len(out.tracks) == 1


def test_auxiliaries_deterministic(busy):
    route, rr = busy
    again = generate_auxiliaries(
        railroad_from_route(route),
        AuxParams(p_spawn=0.7, p_end=0.3, duplicate_main=True, max_parallel=3, seed=1),
    )
    assert again == rr
    assert sum(t.kind == TrackKind.AUXILIARY for t in rr.others) >= 2


def test_parallel_parts_hold_slot_distance(busy):
    route, rr = busy
    tree = cKDTree(route.points[:, :2])
    for t in rr.others:
        par = t.parallel_points()
        assert len(par) > 0
        d, _ = tree.query(par[:, :2])
        assert np.abs(d - abs(t.slot) * rr.inter_track_distance).max() < 0.05


def test_tracks_keep_clearance_on_parallel_sections(busy):
    _, rr = busy
    tracks = rr.tracks
    for i, a in enumerate(tracks):
        pa = a.parallel_points()
        for b in tracks[i + 1 :]:
            d, _ = cKDTree(b.parallel_points()[:, :2]).query(pa[:, :2])
            assert d.min() >= rr.inter_track_distance - 0.05


def test_auxiliary_ends_are_dead_end_straights(busy):
    _, rr = busy
    for t in rr.others:
        assert t.blocks[0].start == 0 and t.blocks[-1].end == len(t.points)
        for b0, b1 in zip(t.blocks[:-1], t.blocks[1:]):
            assert b0.end == b1.start
        if t.kind == TrackKind.AUXILIARY:
            assert t.blocks[0].type == BlockType.STRAIGHT
            assert t.blocks[-1].type == BlockType.STRAIGHT


def test_auxiliaries_avoid_tunnels():
    p = RouteParams(n_blocks=20, p_tunnel=0.4, p_bridge=0.0, p_station=0.0)
    route = generate_route(8, p)
    rr = generate_auxiliaries(railroad_from_route(route), AuxParams(p_spawn=1.0, p_end=0.1, seed=2))
    tunnel = np.zeros(len(route.points), bool)
    for b in route.blocks:
        if b.type == BlockType.TUNNEL:
            tunnel[b.start : b.end] = True
    assert tunnel.any()
    tree = cKDTree(route.points[:, :2])
    for t in rr.others:
        _, idx = tree.query(t.parallel_points()[:, :2])
        assert not tunnel[idx].any()


def test_emit_parse_round_trip(tmp_path, busy):
    _, rr = busy
    path = tmp_path / "railroad.json"
    emit_railroad(rr, path)
    assert parse_railroad(path) == rr


def test_emit_track_counts(tmp_path, busy):
    route, _ = busy
    main = railroad_from_route(route)
    dup = duplicate_main(route)
    aux = [Track(dup.points + [0, 10.0 * k, 0], dup.blocks, TrackKind.AUXILIARY, 2 + k) for k in (1, 2)]
    for others, count in (([dup, *aux], 4), ([], 1)):
        rr = Railroad(main.main, others)
        path = tmp_path / f"rr{count}.json"
        emit_railroad(rr, path)
        back = parse_railroad(path)
        assert len(back.tracks) == count
        assert back.tracks[0].kind == TrackKind.MAIN
