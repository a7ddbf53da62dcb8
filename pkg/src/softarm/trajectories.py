"""Circular task-space references, their actuator-space images, and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllers import TrajectoryPoint
from .kinematics import KinematicsError, RobotGeometry, inverse_kinematics, tip_positions


class UnreachableTrajectoryError(KinematicsError):
    def __init__(self, message, phase=None):
        super().__init__(message)
        self.phase = phase


@dataclass(frozen=True)
class CircleSpec:
    """Horizontal circle ``(R sin wt, R cos wt, z)``; defaults are the hardware test."""

    radius: float = 0.05
    omega: float = 1.0
    z_plane: float = 0.19
    duration: float = 20.0
    dt: float = 1e-3

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.duration < self.dt:
            raise ValueError("duration must be at least one sample period")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / abs(self.omega) if self.omega else math.inf

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt)) + 1


def circle_reference(spec: CircleSpec, t):
    """Desired tip position(s) at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    wt = spec.omega * t
    return np.stack(
        [spec.radius * np.sin(wt), spec.radius * np.cos(wt), np.full_like(wt, spec.z_plane)],
        axis=-1,
    )


@dataclass(frozen=True)
class ActuatorTrajectory:
    times: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __len__(self):
        return len(self.times)

    def point(self, k: int) -> TrajectoryPoint:
        return TrajectoryPoint(self.q[k], self.qd[k], self.qdd[k])

    @property
    def points(self):
        return [self.point(k) for k in range(len(self))]


def actuator_trajectory(geometry: RobotGeometry, spec: CircleSpec) -> ActuatorTrajectory:
    """Sample the circle, invert the kinematics, and difference for rates.

    Interior derivatives are second-order central differences; the end
    samples use second-order one-sided stencils.
    """
    times = np.arange(spec.n_samples) * spec.dt
    P = circle_reference(spec, times)
    q = np.empty_like(P)
    for k, p in enumerate(P):
        try:
            q[k] = inverse_kinematics(geometry, p)
        except KinematicsError as exc:
            phase = (spec.omega * times[k]) % (2.0 * math.pi)
            raise UnreachableTrajectoryError(
                f"circle point {p} at t={times[k]:.6g}s (phase {phase:.6g} rad) is unreachable: {exc}",
                phase=phase,
            ) from exc
        if np.any(q[k] <= -0.5 * geometry.L0):
            phase = (spec.omega * times[k]) % (2.0 * math.pi)
            raise UnreachableTrajectoryError(
                f"circle point {p} at phase {phase:.6g} rad needs elongations {q[k]} "
                f"below the validity bound", phase=phase,
            )
    if len(times) >= 3:
        qd = np.gradient(q, spec.dt, axis=0, edge_order=2)
        qdd = np.gradient(qd, spec.dt, axis=0, edge_order=2)
    else:
        qd = np.zeros_like(q)
        qdd = np.zeros_like(q)
    return ActuatorTrajectory(times=times, q=q, qd=qd, qdd=qdd)


def _stats(x: np.ndarray) -> dict:
    if len(x) == 0:
        return {k: math.nan for k in ("mean", "std", "max", "q1", "median", "q3")}
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return {
        "mean": float(np.mean(x)),
        "std": float(np.std(x)),
        "max": float(np.max(x)),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
    }


@dataclass(frozen=True)
class ErrorReport:
    """Per-sample L2 errors and their aggregates.

    ``actuator``/``task`` summarise the aggregation window; ``*_full``
    summarise the whole trace.
    """

    times: np.ndarray
    actuator_errors: np.ndarray
    task_errors: np.ndarray
    window_start: float
    actuator: dict
    task: dict
    actuator_full: dict
    task_full: dict


def error_report(trace, geometry: RobotGeometry, window: float | None = None) -> ErrorReport:
    """Tracking errors of ``trace`` (anything with ``t``, ``q``, ``q_d`` arrays).

    Task-space error compares forward kinematics of the measured and the
    desired elongations. ``window`` keeps only the final ``window`` seconds
    for the headline statistics; ``None`` uses the full trace.
    """
    t = np.asarray(trace.t, dtype=float)
    if len(t) == 0:
        raise ValueError("empty trace")
    q = np.asarray(trace.q, dtype=float)
    q_d = np.asarray(trace.q_d, dtype=float)
    act = np.linalg.norm(q - q_d, axis=1)
    task = np.linalg.norm(tip_positions(geometry, q) - tip_positions(geometry, q_d), axis=1)
    if window is None or not math.isfinite(window):
        start = t[0]
    else:
        start = max(t[0], t[-1] - window)
    mask = t >= start - 1e-12
    return ErrorReport(
        times=t,
        actuator_errors=act,
        task_errors=task,
        window_start=float(start),
        actuator=_stats(act[mask]),
        task=_stats(task[mask]),
        actuator_full=_stats(act),
        task_full=_stats(task),
    )
