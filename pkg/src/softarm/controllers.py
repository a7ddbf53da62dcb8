"""Tracking controllers in actuator space.

Two laws share the same inputs (measured ``q``, ``qd`` and a desired
:class:`TrajectoryPoint`):

* PD feedback linearisation, the benchmark. It cancels the nominal model
  and imposes ``e'' + kd e' + kp e = 0`` on ``e = q - q_d``.
* Adaptive passivity. It uses the nominal ``M`` and ``G`` only and adapts
  per-actuator stiffness and damping online through a linear regressor.

Both return raw generalised forces; saturation is applied by
:func:`saturate`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicParameters, DynamicsMatrices, Model

THETA_INIT_MODES = ("nominal", "zero")
GAMMA_CONVENTIONS = ("inverse", "direct")


@dataclass(frozen=True)
class PdflGains:
    kp: float = 900.0
    kd: float = 60.0

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise ValueError("kp and kd must be non-negative")


@dataclass(frozen=True)
class ApGains:
    """Adaptive passivity gains.

    ``gamma_convention="inverse"`` reads ``gamma_K``/``gamma_D`` as the
    diagonal of Gamma and adapts with Gamma^-1; ``"direct"`` treats them as
    the entries of Gamma^-1 (i.e. as learning rates).
    """

    lambda_ap: float = 8.0
    kg: float = 8.0
    gamma_K: float = 1e-5
    gamma_D: float = 1e-2
    gamma_convention: str = "inverse"

    def __post_init__(self):
        for name in ("lambda_ap", "kg"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("gamma_K", "gamma_D"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma_convention not in GAMMA_CONVENTIONS:
            raise ValueError(f"gamma_convention must be one of {GAMMA_CONVENTIONS}")

    @property
    def gamma(self) -> np.ndarray:
        """Diagonal of Gamma (6,)."""
        g = np.repeat([self.gamma_K, self.gamma_D], 3).astype(float)
        return g if self.gamma_convention == "inverse" else 1.0 / g

    @property
    def adaptation_rates(self) -> np.ndarray:
        """Diagonal of Gamma^-1 (6,)."""
        return 1.0 / self.gamma


@dataclass(frozen=True)
class TrajectoryPoint:
    q_d: np.ndarray
    qd_dot: np.ndarray
    qd_ddot: np.ndarray

    @classmethod
    def hold(cls, q_d) -> "TrajectoryPoint":
        z = np.zeros(3)
        return cls(np.asarray(q_d, dtype=float), z, z.copy())


def pdfl_torque(gains: PdflGains, dyn: DynamicsMatrices, params: DynamicParameters,
                q, q_dot, target: TrajectoryPoint) -> np.ndarray:
    """``M (qdd_d - kd e' - kp e) + C qd + D qd + K q + G`` with ``e = q - q_d``."""
    q = np.asarray(q, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    e = q - target.q_d
    e_dot = q_dot - target.qd_dot
    outer = target.qd_ddot - gains.kd * e_dot - gains.kp * e
    return dyn.M @ outer + dyn.C @ q_dot + params.D @ q_dot + params.K @ q + dyn.G


def ap_reference_signals(gains: ApGains, q, q_dot, target: TrajectoryPoint):
    """Reference velocity ``v``, its derivative ``a`` and sliding variable ``r``."""
    e = np.asarray(q, dtype=float) - target.q_d
    e_dot = np.asarray(q_dot, dtype=float) - target.qd_dot
    v = target.qd_dot - gains.lambda_ap * e
    a = target.qd_ddot - gains.lambda_ap * e_dot
    r = e_dot + gains.lambda_ap * e
    return v, a, r


def regressor(q, v) -> np.ndarray:
    """``Y = [diag(q), diag(v)]`` so that ``Y @ theta = K_hat q + D_hat v``."""
    return np.hstack([np.diag(np.asarray(q, dtype=float)), np.diag(np.asarray(v, dtype=float))])


def ap_torque(gains: ApGains, dyn: DynamicsMatrices, q, q_dot, target: TrajectoryPoint,
              theta_hat) -> np.ndarray:
    """``M a + G - kg r + Y(q, v) theta_hat``; the Coriolis feedforward is omitted."""
    v, a, r = ap_reference_signals(gains, q, q_dot, target)
    return dyn.M @ a + dyn.G - gains.kg * r + regressor(q, v) @ np.asarray(theta_hat, float)


def adaptation_step(gains: ApGains, q, v, r, theta_hat, dt: float) -> np.ndarray:
    """Explicit Euler update ``theta <- theta - dt Gamma^-1 Y^T r``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    Y = regressor(q, v)
    return np.asarray(theta_hat, dtype=float) - dt * gains.adaptation_rates * (Y.T @ np.asarray(r, float))


def saturate(tau, tau_max: float) -> np.ndarray:
    return np.clip(tau, -tau_max, tau_max)


def nominal_theta(params: DynamicParameters) -> np.ndarray:
    return np.concatenate([np.diag(params.K), np.diag(params.D)])


class PdflController:
    """Benchmark controller bound to a nominal model."""

    name = "pdfl"

    def __init__(self, gains: PdflGains, model: Model, tau_max: float = 200.0):
        self.gains = gains
        self.model = model
        self.tau_max = tau_max
        self.theta_hat = None

    def __call__(self, q, q_dot, target: TrajectoryPoint, dt: float) -> np.ndarray:
        dyn = self.model.matrices(q, q_dot)
        return pdfl_torque(self.gains, dyn, self.model.params, q, q_dot, target)


class AdaptivePassivityController:
    """Adaptive passivity law; owns the stiffness/damping estimates.

    Each call computes the torque from the current estimate and then
    advances the estimate by one control period. ``projection`` clamps the
    estimate to ``[0, 10 x nominal]`` and is off unless requested.
    """

    name = "ap"

    def __init__(self, gains: ApGains, model: Model, theta_init="nominal",
                 tau_max: float = 200.0, projection: bool = False):
        self.gains = gains
        self.model = model
        self.tau_max = tau_max
        self.projection = projection
        self._nominal = nominal_theta(model.params)
        if isinstance(theta_init, str):
            if theta_init not in THETA_INIT_MODES:
                raise ValueError(f"theta_init must be one of {THETA_INIT_MODES} or 6 values")
            theta = self._nominal.copy() if theta_init == "nominal" else np.zeros(6)
        else:
            theta = np.asarray(theta_init, dtype=float)
            if theta.shape != (6,):
                raise ValueError(f"explicit theta_init needs 6 values, got shape {theta.shape}")
        self.theta_hat = theta

    def __call__(self, q, q_dot, target: TrajectoryPoint, dt: float) -> np.ndarray:
        dyn = self.model.matrices(q)
        tau = ap_torque(self.gains, dyn, q, q_dot, target, self.theta_hat)
        v, _, r = ap_reference_signals(self.gains, q, q_dot, target)
        theta = adaptation_step(self.gains, q, v, r, self.theta_hat, dt)
        if self.projection:
            theta = np.clip(theta, 0.0, 10.0 * self._nominal)
        self.theta_hat = theta
        return tau
