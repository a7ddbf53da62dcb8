"""Geometry of a three-actuator constant-curvature section.

Three mappings live here:

* actuator space (elongations ``l = [l1, l2, l3]``) -> arc parameters
* arc parameters -> homogeneous pose of the disk at backbone parameter ``xi``
* tip position -> arc parameters -> elongations (closed-form inverse)

plus the string-encoder pulse/elongation conversion.

All functions are pure and operate on plain numpy arrays or the small
frozen dataclasses defined below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT3 = math.sqrt(3.0)

#: arcs with ``s`` below this are treated as straight (metres)
STRAIGHT_EPS = 1e-9


class KinematicsError(ValueError):
    """Input outside the domain of a kinematic mapping."""


class StraightConfigurationError(KinematicsError):
    """The bending plane is undefined; use the straight branch."""


class UnreachablePointError(KinematicsError):
    """No constant-curvature arc reaches the requested point."""


@dataclass(frozen=True)
class RobotGeometry:
    """Section geometry.

    Parameters
    ----------
    L0 : float
        Initial actuator length [m].
    r : float
        Distance from the backbone to each actuator [m].
    r_e : float
        String-encoder rotor radius [m].
    n_ppr : int
        Encoder pulses per revolution.
    """

    L0: float = 0.15
    r: float = 0.04
    r_e: float = 0.01
    n_ppr: int = 600

    def __post_init__(self):
        for name in ("L0", "r", "r_e"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if int(self.n_ppr) != self.n_ppr or self.n_ppr <= 0:
            raise ValueError(f"n_ppr must be a positive integer, got {self.n_ppr!r}")

    @property
    def encoder_step(self) -> float:
        """Elongation per quadrature count [m]."""
        return 2.0 * math.pi * self.r_e / (4.0 * self.n_ppr)


@dataclass(frozen=True)
class ConfigurationArc:
    """Arc parameters of the backbone.

    ``lam`` is ``math.inf`` for the straight configuration; ``length`` is the
    mean backbone length, which stays finite in that limit.
    """

    s: float
    phi: float
    lam: float
    theta: float
    length: float

    @property
    def straight(self) -> bool:
        return self.phi == 0.0

    @classmethod
    def straight_arc(cls, length: float) -> "ConfigurationArc":
        return cls(s=0.0, phi=0.0, lam=math.inf, theta=0.0, length=float(length))


@dataclass(frozen=True)
class BackbonePose:
    rotation: np.ndarray
    translation: np.ndarray

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def _as_elongations(geometry: RobotGeometry, l) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    if l.shape != (3,):
        raise KinematicsError(f"expected 3 elongations, got shape {l.shape}")
    if not np.all(np.isfinite(l)):
        raise KinematicsError(f"non-finite elongation {l}")
    if np.any(l <= -0.5 * geometry.L0):
        raise KinematicsError(
            f"elongation {l} below the validity bound -L0/2 = {-0.5 * geometry.L0}"
        )
    return l


def config_from_actuator(geometry: RobotGeometry, l) -> ConfigurationArc:
    """Arc parameters ``(s, phi, lam, theta)`` for actuator elongations ``l``."""
    l1, l2, l3 = _as_elongations(geometry, l)
    length = geometry.L0 + (l1 + l2 + l3) / 3.0
    s2 = l1 * l1 + l2 * l2 + l3 * l3 - l1 * l2 - l2 * l3 - l1 * l3
    s = math.sqrt(max(s2, 0.0))
    if s < STRAIGHT_EPS:
        return ConfigurationArc.straight_arc(length)
    phi = 2.0 * s / (3.0 * geometry.r)
    lam = (3.0 * geometry.L0 + l1 + l2 + l3) * geometry.r / (2.0 * s)
    # quadrant-aware form of arctan(sqrt(3)(l3-l2) / (l2+l3-2 l1))
    theta = math.atan2(SQRT3 * (l3 - l2), l2 + l3 - 2.0 * l1)
    return ConfigurationArc(s=s, phi=phi, lam=lam, theta=theta, length=length)


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1.0]])


def pose_at(geometry: RobotGeometry, arc: ConfigurationArc, xi: float) -> BackbonePose:
    """Pose of the disk at backbone parameter ``xi`` in [0, 1].

    Equals ``Rz(theta) Tx(lam) Ry(xi phi) Tx(-lam) Rz(-theta)``. The
    translation is written with ``lam = length / phi`` folded into sinc
    terms, so it stays exact as ``phi -> 0`` instead of cancelling
    ``lam (1 - cos)`` with a huge ``lam``.
    """
    if not (0.0 <= xi <= 1.0):
        raise KinematicsError(f"xi must lie in [0, 1], got {xi}")
    if arc.straight:
        return BackbonePose(np.eye(3), np.array([0.0, 0.0, xi * arc.length]))
    psi = xi * arc.phi
    arc_len = xi * arc.length
    half = np.sinc(psi / (2.0 * np.pi))  # sin(psi/2)/(psi/2)
    radial = arc_len * psi * 0.5 * half * half  # lam (1 - cos psi)
    axial = arc_len * np.sinc(psi / np.pi)  # lam sin psi
    ct, st = math.cos(arc.theta), math.sin(arc.theta)
    R = rot_z(arc.theta)[:3, :3] @ rot_y(psi)[:3, :3] @ rot_z(-arc.theta)[:3, :3]
    return BackbonePose(R, np.array([radial * ct, radial * st, axial]))


def tip_position(geometry: RobotGeometry, l) -> np.ndarray:
    """Forward kinematics of the distal disk."""
    return pose_at(geometry, config_from_actuator(geometry, l), 1.0).translation


def tip_positions(geometry: RobotGeometry, L: np.ndarray) -> np.ndarray:
    """Vectorised tip positions for an ``(N, 3)`` array of elongations.

    Uses the closed form of the composed transform written in terms of
    ``phi*cos(theta)`` and ``phi*sin(theta)``, which is smooth through the
    straight configuration.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    l1, l2, l3 = L[:, 0], L[:, 1], L[:, 2]
    bx = (l2 + l3 - 2.0 * l1) / (3.0 * geometry.r)
    by = SQRT3 * (l3 - l2) / (3.0 * geometry.r)
    phi = np.hypot(bx, by)
    length = geometry.L0 + (l1 + l2 + l3) / 3.0
    half = np.sinc(phi / (2.0 * np.pi))  # sin(phi/2)/(phi/2)
    g1 = 0.5 * half * half  # (1 - cos phi) / phi^2
    out = np.empty_like(L)
    out[:, 0] = length * g1 * bx
    out[:, 1] = length * g1 * by
    out[:, 2] = length * np.sinc(phi / np.pi)
    return out


def config_from_position(P, geometry: RobotGeometry | None = None) -> ConfigurationArc:
    """Arc parameters that place the tip at ``P``.

    ``phi`` uses a two-argument arctangent so bends past a quarter turn are
    representable. Points on the +Z axis raise
    :class:`StraightConfigurationError`. ``s`` depends on the actuator radius
    and is NaN unless ``geometry`` is given.
    """
    px, py, pz = np.asarray(P, dtype=float)
    if not all(math.isfinite(v) for v in (px, py, pz)):
        raise KinematicsError(f"non-finite position {P}")
    if pz <= 0.0:
        raise UnreachablePointError(f"tip height must be positive, got Pz={pz}")
    rho = math.hypot(px, py)
    if rho < STRAIGHT_EPS:
        raise StraightConfigurationError(f"{P} lies on the Z axis; bending plane undefined")
    theta = math.atan2(py, px)
    lam = (px * px + py * py + pz * pz) / (2.0 * rho)
    phi = math.atan2(pz / lam, 1.0 - rho / lam)
    s = 1.5 * geometry.r * phi if geometry is not None else math.nan
    return ConfigurationArc(s=s, phi=phi, lam=lam, theta=theta, length=lam * phi)


def actuator_from_config(geometry: RobotGeometry, arc: ConfigurationArc) -> np.ndarray:
    """Elongations producing ``arc``."""
    if arc.straight:
        return np.full(3, arc.length - geometry.L0)
    angles = 2.0 * math.pi / 3.0 * np.arange(3)
    l = (arc.lam - geometry.r * np.cos(angles - arc.theta)) * arc.phi - geometry.L0
    if not np.all(np.isfinite(l)):
        raise KinematicsError(f"non-finite elongations from {arc}")
    return l


def inverse_kinematics(geometry: RobotGeometry, P) -> np.ndarray:
    """Elongations placing the tip at ``P``, routing on-axis points to the straight branch."""
    try:
        arc = config_from_position(P, geometry)
    except StraightConfigurationError:
        arc = ConfigurationArc.straight_arc(float(np.asarray(P, dtype=float)[2]))
    return actuator_from_config(geometry, arc)


def elongation_from_pulses(geometry: RobotGeometry, p):
    """Encoder counts -> elongation [m]."""
    return geometry.encoder_step * np.asarray(p)


def pulses_from_elongation(geometry: RobotGeometry, dl):
    """Elongation -> encoder counts, rounding toward zero.

    Values within 1e-9 counts of a lattice point snap to it so that the
    conversion inverts :func:`elongation_from_pulses` exactly.
    """
    ratio = np.asarray(dl, dtype=float) / geometry.encoder_step
    nearest = np.round(ratio)
    on_lattice = np.abs(ratio - nearest) <= 1e-9 * np.maximum(1.0, np.abs(nearest))
    counts = np.where(on_lattice, nearest, np.trunc(ratio))
    if counts.ndim == 0:
        return int(counts)
    return counts.astype(np.int64)
