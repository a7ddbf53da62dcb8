"""Euler-Lagrange model of the section.

Equation of motion in actuator space::

    M(q) qdd + C(q, qd) qd + D qd + K q + G(q) + kappa h = tau + J(q)^T F_ext

with a velocity-driven Bouc-Wen state ``h`` per actuator. ``M`` integrates
the linear and angular kinetic energy of a uniformly distributed mass along
the backbone; ``C`` comes from the Christoffel symbols of ``M``. Spatial
partials are central differences of the pose and the backbone integrals use
Gauss-Legendre quadrature on ``xi`` in [0, 1].
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as kern
from .kinematics import RobotGeometry

GRAVITY = (0.0, 0.0, -9.81)


class NumericalError(RuntimeError):
    """Model evaluation produced non-finite or ill-conditioned results."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


def _diag3(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.eye(3) * float(arr)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr.copy()
    raise ValueError(f"expected scalar, 3-vector or 3x3 matrix, got shape {arr.shape}")


@dataclass(frozen=True, eq=False)
class DynamicParameters:
    """Lumped parameters. Defaults are the identified hardware values."""

    m: float = 1.17
    K: np.ndarray = field(default_factory=lambda: np.eye(3) * 538.18)
    D: np.ndarray = field(default_factory=lambda: np.eye(3) * 130.42)
    alpha_h: float = 4.78
    beta_h: float = 17.67
    gamma_h: float = -68.95
    kappa_h: float = 1.0
    I_xx: float = 1e-4
    g_vec: np.ndarray = field(default_factory=lambda: np.array(GRAVITY))

    def __post_init__(self):
        object.__setattr__(self, "K", _diag3(self.K))
        object.__setattr__(self, "D", _diag3(self.D))
        object.__setattr__(self, "g_vec", np.asarray(self.g_vec, dtype=float).reshape(3))
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if self.I_xx < 0:
            raise ValueError(f"I_xx must be non-negative, got {self.I_xx}")
        for name in ("K", "D"):
            A = getattr(self, name)
            if not np.allclose(A, A.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(A).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")

    def scaled(self, stiffness: float = 1.0, damping: float = 1.0) -> "DynamicParameters":
        """Copy with ``K`` and ``D`` multiplied by the given factors."""
        return replace(self, K=self.K * stiffness, D=self.D * damping)

    def without_hysteresis(self) -> "DynamicParameters":
        return replace(self, kappa_h=0.0)


@dataclass(frozen=True)
class QuadratureSettings:
    """Numerical settings for the backbone integrals and spatial partials.

    ``fd_step`` differentiates the pose; ``fd_step_inertia`` differentiates
    the inertia matrix when forming Christoffel symbols. The latter sits on
    top of the former, so it has to be larger to keep round-off under
    control.
    """

    n_nodes: int = 16
    fd_step: float = 1e-6
    fd_step_inertia: float = 5e-5

    def __post_init__(self):
        if self.n_nodes < 4:
            raise ValueError(f"n_nodes must be >= 4, got {self.n_nodes}")
        if not (self.fd_step > 0 and self.fd_step_inertia > 0):
            raise ValueError("finite-difference steps must be positive")


@dataclass(frozen=True)
class DynamicsMatrices:
    M: np.ndarray
    C: np.ndarray
    G: np.ndarray
    Jv: np.ndarray


@functools.lru_cache(maxsize=None)
def gauss_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


class Model:
    """Packed, reusable evaluator for one parameter set.

    ``tip_mass`` adds a point mass at the distal disk (the payload); it only
    ever appears on the plant side.
    """

    def __init__(
        self,
        geometry: RobotGeometry,
        params: DynamicParameters,
        quad: QuadratureSettings | None = None,
        tip_mass: float = 0.0,
    ):
        if tip_mass < 0:
            raise ValueError(f"tip mass must be non-negative, got {tip_mass}")
        self.geometry = geometry
        self.params = params
        self.quad = quad or QuadratureSettings()
        self.tip_mass = float(tip_mass)
        nodes, weights = gauss_nodes(self.quad.n_nodes)
        self.xs = np.append(nodes, 1.0)
        self.ws = weights.copy()
        par = np.zeros(kern.N_PAR)
        par[kern.P_L0] = geometry.L0
        par[kern.P_R] = geometry.r
        par[kern.P_M] = params.m
        par[kern.P_IXX] = params.I_xx
        par[kern.P_MTIP] = self.tip_mass
        par[kern.P_GX : kern.P_GZ + 1] = params.g_vec
        par[kern.P_H1] = self.quad.fd_step
        par[kern.P_H2] = self.quad.fd_step_inertia
        par[kern.P_KAPPA] = params.kappa_h
        par[kern.P_ALPHA] = params.alpha_h
        par[kern.P_BETA] = params.beta_h
        par[kern.P_GAMMA] = params.gamma_h
        self.par = par
        self.K = np.ascontiguousarray(params.K)
        self.D = np.ascontiguousarray(params.D)

    def _check(self, what, arr, q):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite {what} at q={q}", state=np.array(q))
        return arr

    def inertia_gravity(self, q):
        q = np.asarray(q, dtype=float)
        M = np.empty((3, 3))
        G = np.empty(3)
        J = np.empty((3, 3))
        kern.inertia_gravity(q, self.par, self.xs, self.ws, M, G, J)
        self._check("inertia/gravity", M, q)
        self._check("gravity", G, q)
        return M, G, J

    def inertia_derivative(self, q):
        q = np.asarray(q, dtype=float)
        dM = np.empty((3, 3, 3))
        kern.inertia_derivative(q, self.par, self.xs, self.ws, dM)
        return self._check("inertia derivative", dM, q)

    def coriolis(self, q, qd):
        C = np.empty((3, 3))
        kern.coriolis_from_derivative(self.inertia_derivative(q), np.asarray(qd, float), C)
        return C

    def matrices(self, q, qd=None) -> DynamicsMatrices:
        M, G, J = self.inertia_gravity(q)
        C = np.zeros((3, 3)) if qd is None else self.coriolis(q, qd)
        return DynamicsMatrices(M=M, C=C, G=G, Jv=J)

    def potential_energy(self, q) -> float:
        """Gravitational potential ``-m int g.P dxi`` (plus the tip mass)."""
        q = np.asarray(q, dtype=float)
        P = np.empty(3)
        R = np.empty((3, 3))
        g = self.params.g_vec
        acc = 0.0
        for x, w in zip(self.xs[:-1], self.ws):
            kern.pose(q[0], q[1], q[2], x, self.geometry.L0, self.geometry.r, P, R)
            acc += w * float(P @ g)
        kern.pose(q[0], q[1], q[2], 1.0, self.geometry.L0, self.geometry.r, P, R)
        return -self.params.m * acc - self.tip_mass * float(P @ g)

    def energy(self, state) -> float:
        """Kinetic + elastic + gravitational energy of ``[q, qd, ...]``."""
        state = np.asarray(state, dtype=float)
        q, qd = state[:3], state[3:6]
        M, _, _ = self.inertia_gravity(q)
        return 0.5 * qd @ M @ qd + 0.5 * q @ self.K @ q + self.potential_energy(q)

    def rhs(self, state, tau, f_ext=None) -> np.ndarray:
        out = np.empty(9)
        f = np.zeros(3) if f_ext is None else np.asarray(f_ext, dtype=float)
        kern.rhs(np.asarray(state, float), np.asarray(tau, float), f, self.par, self.K,
                 self.D, self.xs, self.ws, out)
        return out

    def rk4_step(self, state, tau, f_ext, dt) -> np.ndarray:
        out = np.empty(9)
        kern.rk4_step(np.asarray(state, float), np.asarray(tau, float),
                      np.asarray(f_ext, float), dt, self.par, self.K, self.D,
                      self.xs, self.ws, out)
        return out


def inertia_matrix(geometry, params, quad, l) -> np.ndarray:
    """Symmetric inertia matrix at elongations ``l``."""
    return Model(geometry, params, quad).inertia_gravity(l)[0]


def coriolis_matrix(geometry, params, quad, l, l_dot) -> np.ndarray:
    return Model(geometry, params, quad).coriolis(l, l_dot)


def gravity_vector(geometry, params, quad, l) -> np.ndarray:
    return Model(geometry, params, quad).inertia_gravity(l)[1]


def tip_jacobian(geometry, quad, l) -> np.ndarray:
    """Linear velocity Jacobian of the tip, ``dP(xi=1)/dq``."""
    return Model(geometry, DynamicParameters(), quad).inertia_gravity(l)[2]


def hysteresis_rate(params: DynamicParameters, l_dot, h) -> np.ndarray:
    """Bouc-Wen rate ``qd (alpha - (beta sgn(qd h) + gamma)|h|)``."""
    l_dot = np.asarray(l_dot, dtype=float)
    h = np.asarray(h, dtype=float)
    return l_dot * (params.alpha_h - (params.beta_h * np.sign(l_dot * h) + params.gamma_h) * np.abs(h))


def forward_dynamics(geometry, params, quad, state, tau, F_ext=None) -> np.ndarray:
    """Generalised accelerations for ``state = (l, l_dot, h)``."""
    l, l_dot, h = (np.asarray(v, dtype=float) for v in state)
    model = Model(geometry, params, quad)
    mats = model.matrices(l, l_dot)
    cond = np.linalg.cond(mats.M)
    if not cond < 1e12:
        raise NumericalError(f"inertia matrix ill-conditioned (cond={cond:.3g})", state=l)
    F = np.zeros(3) if F_ext is None else np.asarray(F_ext, dtype=float)
    rhs = (np.asarray(tau, dtype=float) + mats.Jv.T @ F - mats.C @ l_dot - params.D @ l_dot
           - params.K @ l - mats.G - params.kappa_h * h)
    factor = np.linalg.cholesky(mats.M)
    return np.linalg.solve(factor.T, np.linalg.solve(factor, rhs))
