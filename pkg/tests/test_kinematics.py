import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softarm.kinematics import (
    ConfigurationArc,
    KinematicsError,
    RobotGeometry,
    StraightConfigurationError,
    UnreachablePointError,
    actuator_from_config,
    config_from_actuator,
    config_from_position,
    elongation_from_pulses,
    inverse_kinematics,
    pose_at,
    pulses_from_elongation,
    tip_position,
    tip_positions,
)

GEO = RobotGeometry()


def arc_tip(lam, phi, theta, xi=1.0):
    """Closed-form arc point, written out independently of the library."""
    return np.array([
        lam * (1 - math.cos(xi * phi)) * math.cos(theta),
        lam * (1 - math.cos(xi * phi)) * math.sin(theta),
        lam * math.sin(xi * phi),
    ])


def test_arc_parameters_of_a_generic_state():
    arc = config_from_actuator(GEO, [0.01, 0.02, 0.03])
    assert arc.s == pytest.approx(math.sqrt(3e-4), rel=1e-12)
    assert arc.phi == pytest.approx(0.28867513459481287, rel=1e-12)
    assert arc.lam == pytest.approx(0.5888972745734183, rel=1e-12)
    assert arc.theta == pytest.approx(math.pi / 6, rel=1e-12)
    # phi * lam is the mean backbone length
    assert arc.phi * arc.lam == pytest.approx(GEO.L0 + 0.02, rel=1e-12)


def test_bending_plane_quadrants():
    assert config_from_actuator(GEO, [0.02, 0.01, 0.01]).theta == pytest.approx(math.pi)
    assert config_from_actuator(GEO, [0.0, 0.01, 0.01]).theta == pytest.approx(0.0)
    # the section bends away from the longest actuator (actuators at 0, 2pi/3, 4pi/3)
    assert config_from_actuator(GEO, [0.0, 0.01, 0.0]).theta == pytest.approx(-math.pi / 3)
    assert config_from_actuator(GEO, [0.0, 0.0, 0.01]).theta == pytest.approx(math.pi / 3)


def test_equal_elongations_are_straight():
    arc = config_from_actuator(GEO, [0.03, 0.03, 0.03])
    assert arc.straight and arc.s == 0 and arc.phi == 0 and math.isinf(arc.lam)
    pose = pose_at(GEO, arc, 1.0)
    np.testing.assert_allclose(pose.translation, [0, 0, GEO.L0 + 0.03], atol=1e-15)
    np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-15)


def test_base_pose_is_identity():
    arc = config_from_actuator(GEO, [0.01, 0.02, 0.03])
    np.testing.assert_allclose(pose_at(GEO, arc, 0.0).matrix(), np.eye(4), atol=1e-15)


def test_pose_matches_closed_form_along_backbone():
    arc = config_from_actuator(GEO, [0.01, 0.02, 0.03])
    for xi in (0.1, 0.5, 1.0):
        np.testing.assert_allclose(pose_at(GEO, arc, xi).translation,
                                   arc_tip(arc.lam, arc.phi, arc.theta, xi), atol=1e-14)


def test_pose_rotation_is_orthonormal():
    arc = config_from_actuator(GEO, [-0.02, 0.04, 0.01])
    R = pose_at(GEO, arc, 0.7).rotation
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_xi_out_of_range():
    with pytest.raises(KinematicsError):
        pose_at(GEO, config_from_actuator(GEO, [0, 0.01, 0]), 1.5)


def test_smooth_tip_matches_composed_transforms():
    rng = np.random.default_rng(0)
    L = rng.uniform(-0.05, 0.05, size=(200, 3))
    fast = tip_positions(GEO, L)
    for l, p in zip(L, fast):
        np.testing.assert_allclose(pose_at(GEO, config_from_actuator(GEO, l), 1.0).translation, p, atol=1e-13)


def test_inverse_kinematics_of_the_circle_start():
    # reference values evaluated at 50-digit precision
    l = inverse_kinematics(GEO, [0.0, 0.05, 0.19])
    np.testing.assert_allclose(l, [0.04865390636, 0.03082600116, 0.06648181656], atol=1e-10)
    np.testing.assert_allclose(tip_position(GEO, l), [0.0, 0.05, 0.19], atol=1e-14)


def test_config_from_position_matches_arc():
    arc = config_from_actuator(GEO, [0.01, 0.02, 0.03])
    back = config_from_position(arc_tip(arc.lam, arc.phi, arc.theta), GEO)
    assert back.phi == pytest.approx(arc.phi, rel=1e-12)
    assert back.lam == pytest.approx(arc.lam, rel=1e-12)
    assert back.theta == pytest.approx(arc.theta, rel=1e-12)
    assert back.s == pytest.approx(arc.s, rel=1e-12)
    assert math.isnan(config_from_position(arc_tip(arc.lam, arc.phi, arc.theta)).s)


def test_on_axis_point_routes_to_straight_branch():
    with pytest.raises(StraightConfigurationError):
        config_from_position([0, 0, 0.19])
    np.testing.assert_allclose(inverse_kinematics(GEO, [0, 0, 0.19]), [0.04] * 3, atol=1e-15)
    # near the axis: finite and continuous, no overflow
    l = inverse_kinematics(GEO, [0, 1e-8, 0.19])
    assert np.all(np.isfinite(l))
    np.testing.assert_allclose(l, [0.04] * 3, atol=1e-7)


def test_unreachable_and_invalid_inputs():
    with pytest.raises(UnreachablePointError):
        config_from_position([0.01, 0, -0.1])
    with pytest.raises(KinematicsError):
        config_from_actuator(GEO, [0.0, -0.08, 0.0])
    with pytest.raises(KinematicsError):
        config_from_actuator(GEO, [0.0, np.nan, 0.0])
    with pytest.raises(KinematicsError):
        config_from_actuator(GEO, [0.0, 0.0])
    with pytest.raises(ValueError):
        RobotGeometry(r=0)


def test_straight_sentinel_maps_to_uniform_extension():
    np.testing.assert_allclose(actuator_from_config(GEO, ConfigurationArc.straight_arc(0.19)), [0.04] * 3)


@settings(max_examples=200, deadline=None)
@given(
    phi=st.floats(0.05, 1.4),
    theta=st.floats(-math.pi, math.pi),
    length=st.floats(0.15, 0.22),
)
def test_round_trip_and_chord_identity(phi, theta, length):
    lam = length / phi
    P = arc_tip(lam, phi, theta)
    assert np.dot(P, P) == pytest.approx(2 * lam**2 * (1 - math.cos(phi)), rel=1e-9)
    l = inverse_kinematics(GEO, P)
    assert np.linalg.norm(tip_position(GEO, l) - P) < 1e-9
    arc = config_from_actuator(GEO, l)
    assert arc.phi == pytest.approx(phi, rel=1e-9)


def test_encoder_step_and_round_trip():
    assert GEO.encoder_step == 2 * math.pi * 0.01 / 2400
    counts = np.arange(-500, 500)
    np.testing.assert_array_equal(pulses_from_elongation(GEO, elongation_from_pulses(GEO, counts)), counts)
    # one and a half quanta truncate to one, in both directions
    assert pulses_from_elongation(GEO, 1.5 * GEO.encoder_step) == 1
    assert pulses_from_elongation(GEO, -1.5 * GEO.encoder_step) == -1
    assert isinstance(pulses_from_elongation(GEO, 0.001), int)
