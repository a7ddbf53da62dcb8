import math
from types import SimpleNamespace

import numpy as np
import pytest

from softarm.kinematics import RobotGeometry, tip_positions
from softarm.trajectories import (
    CircleSpec,
    UnreachableTrajectoryError,
    actuator_trajectory,
    circle_reference,
    error_report,
)

GEO = RobotGeometry()


def test_circle_reference_values():
    spec = CircleSpec()
    np.testing.assert_allclose(circle_reference(spec, 0.0), [0.0, 0.05, 0.19])
    np.testing.assert_allclose(circle_reference(spec, math.pi / 2), [0.05, 0.0, 0.19], atol=1e-15)
    pts = circle_reference(spec, np.linspace(0, 10, 101))
    np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 0.05)
    assert spec.period == pytest.approx(2 * math.pi)
    with pytest.raises(ValueError):
        circle_reference(spec, -1.0)
    with pytest.raises(ValueError):
        CircleSpec(radius=0)


def test_actuator_trajectory_lands_on_the_circle():
    spec = CircleSpec(duration=2 * math.pi, dt=1e-2)
    traj = actuator_trajectory(GEO, spec)
    assert len(traj) == spec.n_samples
    np.testing.assert_allclose(tip_positions(GEO, traj.q), circle_reference(spec, traj.times), atol=1e-12)


def test_actuator_rates_match_chain_rule():
    """Differenced rates agree with J^-1 dP/dt computed from the kinematics."""
    spec = CircleSpec(omega=3.0, duration=1.0, dt=1e-3)
    traj = actuator_trajectory(GEO, spec)
    h = 1e-6
    for k in (10, 400, 900):
        l = traj.q[k]
        J = np.column_stack([(tip_positions(GEO, (l + h * e)[None])[0] - tip_positions(GEO, (l - h * e)[None])[0]) / (2 * h)
                             for e in np.eye(3)])
        t = traj.times[k]
        Pdot = np.array([0.05 * 3 * math.cos(3 * t), -0.05 * 3 * math.sin(3 * t), 0.0])
        np.testing.assert_allclose(traj.qd[k], np.linalg.solve(J, Pdot), rtol=1e-4, atol=1e-7)
    # second derivative agrees with a difference of the rates at second order
    fine = actuator_trajectory(GEO, CircleSpec(omega=3.0, duration=1.0, dt=5e-4))
    np.testing.assert_allclose(traj.qdd[100:-100], fine.qdd[200:-200:2], atol=1e-5)


def test_constant_target_has_zero_rates():
    traj = actuator_trajectory(GEO, CircleSpec(omega=0.0, duration=0.1))
    np.testing.assert_allclose(traj.qd, 0, atol=1e-10)
    np.testing.assert_allclose(traj.qdd, 0, atol=1e-10)
    p = traj.point(5)
    np.testing.assert_array_equal(p.q_d, traj.q[5])


def test_unreachable_circle_reports_phase():
    with pytest.raises(UnreachableTrajectoryError) as info:
        actuator_trajectory(GEO, CircleSpec(radius=0.05, z_plane=0.02, duration=1.0))
    assert info.value.phase is not None


def test_error_report_statistics():
    t = np.arange(11) * 0.1
    q_d = np.zeros((11, 3))
    q = np.zeros((11, 3))
    q[:, 0] = np.arange(11) * 1e-3
    rep = error_report(SimpleNamespace(t=t, q=q, q_d=q_d), GEO, window=0.5)
    assert rep.window_start == pytest.approx(0.5)
    np.testing.assert_allclose(rep.actuator_errors, q[:, 0])
    assert rep.actuator["mean"] == pytest.approx(np.mean(q[5:, 0]))
    assert rep.actuator["max"] == pytest.approx(0.01)
    assert rep.actuator["median"] == pytest.approx(0.0075)
    assert rep.actuator_full["mean"] == pytest.approx(0.005)
    # task errors are forward-kinematics distances
    np.testing.assert_allclose(rep.task_errors,
                               np.linalg.norm(tip_positions(GEO, q) - tip_positions(GEO, q_d), axis=1))
    full = error_report(SimpleNamespace(t=t, q=q, q_d=q_d), GEO)
    assert full.task == full.task_full
