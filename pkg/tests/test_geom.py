import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from railsim.geom import (
    FrameTag,
    Pose,
    enu_to_ned,
    eval_spline,
    euler_from_rotation,
    fit_smoothing_spline,
    is_rotation,
    ned_frd_to_enu_flu,
    ned_to_enu,
    rotation_from_euler,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
angles = st.floats(-10.0, 10.0, allow_nan=False)


def test_ned_to_enu_examples():
    assert ned_to_enu([1.0, 2.0, 3.0]).tolist() == [2.0, 1.0, -3.0]
    assert ned_to_enu([0.0, 0.0, 0.0]).tolist() == [0.0, 0.0, 0.0]


@given(st.tuples(finite, finite, finite))
def test_frame_round_trip_exact(v):
    v = np.array(v)
    assert np.array_equal(enu_to_ned(ned_to_enu(v)), v)


def test_rotation_identity_and_quarter_turn():
    assert np.array_equal(rotation_from_euler(0.0, 0.0, 0.0), np.eye(3))
    east = rotation_from_euler(np.pi / 2, 0.0, 0.0) @ np.array([1.0, 0.0, 0.0])
    assert east == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)


def test_rotation_orthonormal_random():
    rng = np.random.default_rng(0)
    for yaw, pitch, roll in rng.uniform(-np.pi, np.pi, size=(1000, 3)):
        R = rotation_from_euler(yaw, pitch, roll)
        assert abs(np.linalg.det(R) - 1.0) < 1e-9
        assert is_rotation(R)


@settings(max_examples=200)
@given(angles, st.floats(-1.5, 1.5), angles)
def test_euler_round_trip(yaw, pitch, roll):
    R = rotation_from_euler(yaw, pitch, roll)
    assert np.allclose(rotation_from_euler(*euler_from_rotation(R)), R, atol=1e-12)


def test_body_frame_conversion_keeps_forward():
    R = rotation_from_euler(0.3, 0.1, 0.0)
    fwd_ned = R @ [1.0, 0.0, 0.0]
    fwd_enu = ned_frd_to_enu_flu(R) @ [1.0, 0.0, 0.0]
    assert fwd_enu == pytest.approx(ned_to_enu(fwd_ned))
    assert is_rotation(ned_frd_to_enu_flu(R))


def test_pose_compose_inverse():
    a = Pose([1.0, 2.0, 3.0], rotation_from_euler(0.4, -0.2, 0.1), FrameTag.ENU, FrameTag.BODY)
    mount = Pose([1.5, 0.0, 2.0], rotation_from_euler(0.1, 0.0, 0.0), FrameTag.BODY, FrameTag.SENSOR)
    back = a.compose(mount).compose(mount.inverse())
    assert back.frame == FrameTag.ENU and back.child == FrameTag.BODY
    assert np.allclose(back.matrix(), a.matrix(), atol=1e-9)
    with pytest.raises(ValueError):
        a.compose(a)


# -- smoothing spline -------------------------------------------------------


def dense_smoothing_oracle(x, y, lam):
    """Penalised least squares over the full cubic B-spline space on the knots."""
    k = 3
    t = np.r_[[x[0]] * k, x, [x[-1]] * k]
    nb = len(t) - k - 1
    eye = np.eye(nb)
    basis = [BSpline(t, eye[i], k) for i in range(nb)]
    B = np.array([b(x) for b in basis]).T
    gx, gw = np.polynomial.legendre.leggauss(4)
    omega = np.zeros((nb, nb))
    for a, b in zip(x[:-1], x[1:]):
        pts = 0.5 * (b - a) * gx + 0.5 * (a + b)
        w = 0.5 * (b - a) * gw
        d2 = np.array([bs.derivative(2)(pts) for bs in basis])
        omega += (d2 * w) @ d2.T
    c = np.linalg.solve(B.T @ B + lam * omega, B.T @ y)
    resid = y - B @ c
    return float(resid @ resid + lam * c @ omega @ c), B @ c


def test_spline_reproduces_line():
    s = np.linspace(0.0, 10.0, 11)
    y = 3.0 * s - 2.0
    for lam in (0.0, 0.5, 100.0):
        sp = fit_smoothing_spline(s, y, lam)
        assert sp.residual_ss == pytest.approx(0.0, abs=1e-18 + 1e-20 * lam)
        q = np.linspace(0.0, 10.0, 37)
        assert np.allclose(eval_spline(sp, q), 3.0 * q - 2.0, atol=1e-9)
        assert np.allclose(eval_spline(sp, q, 1), 3.0, atol=1e-9)
        assert np.allclose(eval_spline(sp, q, 2), 0.0, atol=1e-9)


def test_spline_interpolates_when_lambda_zero():
    s = np.array([0.0, 1.0, 2.5, 3.0, 4.2])
    y = np.array([1.0, -2.0, 0.5, 3.0, 2.0])
    sp = fit_smoothing_spline(s, y, 0.0)
    assert np.allclose(eval_spline(sp, s), y, atol=1e-9)


def test_spline_objective_matches_dense_oracle():
    rng = np.random.default_rng(7)
    s = np.array([0.0, 1.0, 2.0, 3.5, 5.0])
    y = np.sin(s) + 0.1 * rng.standard_normal(5)
    sp = fit_smoothing_spline(s, y, 1.0)
    ref_obj, ref_fit = dense_smoothing_oracle(s, y, 1.0)
    assert sp.objective(y) == pytest.approx(ref_obj, abs=1e-6)
    assert np.allclose(sp.values, ref_fit, atol=1e-6)


@pytest.mark.parametrize("lam", [0.0, 0.01, 3.0])
def test_spline_objective_oracle_larger(lam):
    rng = np.random.default_rng(3)
    s = np.sort(rng.uniform(0.0, 20.0, 12))
    y = np.cos(0.4 * s) + 0.2 * rng.standard_normal(12)
    sp = fit_smoothing_spline(s, y, lam)
    ref_obj, _ = dense_smoothing_oracle(s, y, lam)
    assert sp.objective(y) == pytest.approx(ref_obj, abs=1e-6)


def test_spline_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_smoothing_spline([0.0, 1.0, 1.0, 2.0], [0.0, 1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        fit_smoothing_spline([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    sp = fit_smoothing_spline([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        eval_spline(sp, 3.5)


def test_spline_derivatives_match_finite_differences():
    rng = np.random.default_rng(11)
    s = np.cumsum(rng.uniform(0.5, 1.5, 30))
    y = np.sin(0.3 * s) + 0.05 * rng.standard_normal(30)
    sp = fit_smoothing_spline(s, y, 0.2)
    h = 1e-4
    q = rng.uniform(s[0] + h, s[-1] - h, 100)
    fd1 = (eval_spline(sp, q + h) - eval_spline(sp, q - h)) / (2 * h)
    assert np.allclose(eval_spline(sp, q, 1), fd1, atol=1e-5)
    fd2 = (eval_spline(sp, q + h, 1) - eval_spline(sp, q - h, 1)) / (2 * h)
    assert np.allclose(eval_spline(sp, q, 2), fd2, atol=1e-5)
