"""Chirp-based identification of stiffness, damping and Bouc-Wen constants.

One actuator is driven with a linear chirp while the other two inputs stay
at zero; the full coupled model is simulated from its static equilibrium and
the bounded nonlinear least-squares problem

    min_theta  sum_k || l_sim(t_k; theta) - l_rec(t_k) ||^2

is solved over ``theta = (K, D, alpha_h, beta_h, gamma_h)`` with shared
diagonal ``K`` and ``D``. Mass, rotational inertia and the hysteresis force
scale are taken as known.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from . import _kernels as kern
from .dynamics import DynamicParameters, Model, QuadratureSettings
from .kinematics import RobotGeometry

PARAM_NAMES = ("K", "D", "alpha_h", "beta_h", "gamma_h")

#: identified hardware values, reported next to every fit
REFERENCE = {"K": 538.18, "D": 130.42, "m": 1.17, "alpha_h": 4.78, "beta_h": 17.67, "gamma_h": -68.95}

DEFAULT_BOUNDS = {
    "K": (50.0, 5000.0),
    "D": (5.0, 1000.0),
    "alpha_h": (0.0, 50.0),
    "beta_h": (-200.0, 200.0),
    "gamma_h": (-200.0, 200.0),
}


METHODS = ("trf", "nelder-mead")


class IdentificationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ChirpSpec:
    """Linear sine sweep from ``f0`` to ``f1`` Hz on one actuator."""

    f0: float = 0.05
    f1: float = 2.0
    amplitude: float = 40.0
    duration: float = 10.0
    actuator: int = 0
    dt: float = 1e-3

    def __post_init__(self):
        if not (0 < self.f0 < self.f1):
            raise ValueError(f"need 0 < f0 < f1, got f0={self.f0}, f1={self.f1}")
        if self.actuator not in (0, 1, 2):
            raise ValueError("actuator index must be 0, 1 or 2")
        if not (self.dt > 0 and self.duration > self.dt):
            raise ValueError("need dt > 0 and duration > dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def chirp_input(spec: ChirpSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sample times ``(N+1,)`` and held inputs ``(N, 3)``."""
    n = spec.n_steps
    t = np.arange(n + 1) * spec.dt
    tk = t[:-1]
    rate = (spec.f1 - spec.f0) / spec.duration
    u = spec.amplitude * np.sin(2.0 * np.pi * (spec.f0 * tk + 0.5 * rate * tk * tk))
    taus = np.zeros((n, 3))
    taus[:, spec.actuator] = u
    return t, taus


def static_equilibrium(model: Model, tol: float = 1e-14, max_iter: int = 200) -> np.ndarray:
    """Solve ``K q + G(q) = 0`` by fixed-point iteration (``G`` varies slowly)."""
    K = model.params.K
    q = np.zeros(3)
    for _ in range(max_iter):
        G = model.inertia_gravity(q)[1]
        q_new = np.linalg.solve(K, -G)
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    return q


def with_theta(base: DynamicParameters, theta) -> DynamicParameters:
    K, D, a, b, g = (float(v) for v in theta)
    return replace(base, K=np.eye(3) * K, D=np.eye(3) * D, alpha_h=a, beta_h=b, gamma_h=g)


def simulate_chirp(geometry: RobotGeometry, params: DynamicParameters, chirp: ChirpSpec,
                   quad: QuadratureSettings | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Elongation response ``(N+1, 3)`` to the chirp, starting at rest in equilibrium."""
    model = Model(geometry, params, quad)
    t, taus = chirp_input(chirp)
    x0 = np.zeros(9)
    x0[:3] = static_equilibrium(model)
    states = kern.simulate_open_loop(x0, taus, chirp.dt, 1, model.par, model.K, model.D,
                                     model.xs, model.ws)
    return t, states[:, :3]


@dataclass
class IdentificationResult:
    params: DynamicParameters
    theta: np.ndarray
    cost: float
    success: bool
    unidentifiable: list = field(default_factory=list)
    message: str = ""
    nfev: int = 0
    starts: list = field(default_factory=list)

    @property
    def warning(self) -> bool:
        return bool(self.unidentifiable) or not self.success

    def as_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, (float(v) for v in self.theta)))

    def relative_errors(self, truth: dict) -> dict:
        return {k: abs(v - truth[k]) / abs(truth[k]) for k, v in self.as_dict().items()}


def _bounds_arrays(bounds: dict | None):
    b = dict(DEFAULT_BOUNDS)
    if bounds:
        b.update(bounds)
    lo = np.array([b[k][0] for k in PARAM_NAMES], dtype=float)
    hi = np.array([b[k][1] for k in PARAM_NAMES], dtype=float)
    if np.any(lo >= hi):
        bad = [k for k, l_, h_ in zip(PARAM_NAMES, lo, hi) if l_ >= h_]
        raise ValueError(f"lower bound must be below upper bound for {bad}")
    return lo, hi


def _fd_jacobian(fun, z, h=1e-6):
    f0 = fun(z)
    J = np.empty((len(f0), len(z)))
    for j in range(len(z)):
        dz = np.zeros_like(z)
        dz[j] = h
        J[:, j] = (fun(z + dz) - f0) / h
    return J


def identify_parameters(
    chirp: ChirpSpec,
    recorded: np.ndarray,
    initial_guess,
    bounds: dict | None = None,
    geometry: RobotGeometry | None = None,
    base: DynamicParameters | None = None,
    quad: QuadratureSettings | None = None,
    starts: int = 1,
    seed: int = 0,
    max_nfev: int = 200,
    method: str = "trf",
    sensitivity_tol: float = 1e-8,
) -> IdentificationResult:
    """Fit ``(K, D, alpha_h, beta_h, gamma_h)`` to a recorded chirp response.

    Parameters
    ----------
    chirp : ChirpSpec
        Excitation that produced ``recorded``.
    recorded : ndarray, shape (N+1, 3)
        Measured elongations sampled at ``chirp.dt``.
    initial_guess : mapping or sequence
        Starting point in ``PARAM_NAMES`` order (or keyed by name).
    bounds : dict, optional
        ``name -> (low, high)`` overriding :data:`DEFAULT_BOUNDS`.
    starts : int
        Number of starting points. The first is ``initial_guess``; the rest
        are drawn uniformly inside the bounds from ``seed``.
    method : {"trf", "nelder-mead"}
        ``"trf"`` is bounded trust-region least squares with a
        finite-difference Jacobian. ``"nelder-mead"`` minimises the summed
        squared error with the bounded simplex; it needs far more model
        runs and ``max_nfev`` then caps simplex evaluations.

    Returns
    -------
    IdentificationResult
        Best fit over all starts. ``unidentifiable`` lists parameters whose
        residual sensitivity is negligible at the optimum; in that case (or
        if the optimiser did not converge) an :class:`IdentificationWarning`
        is emitted and ``result.warning`` is true.
    """
    geometry = geometry or RobotGeometry()
    base = base or DynamicParameters()
    recorded = np.asarray(recorded, dtype=float)
    if recorded.shape != (chirp.n_steps + 1, 3):
        raise ValueError(f"recorded must have shape {(chirp.n_steps + 1, 3)}, got {recorded.shape}")
    if isinstance(initial_guess, dict):
        x0 = np.array([initial_guess[k] for k in PARAM_NAMES], dtype=float)
    else:
        x0 = np.asarray(initial_guess, dtype=float)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    lo, hi = _bounds_arrays(bounds)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError(f"initial guess {x0} outside bounds [{lo}, {hi}]")

    scale = np.maximum(np.abs(x0), 1.0)

    def residuals(z):
        theta = z * scale
        _, sim = simulate_chirp(geometry, with_theta(base, theta), chirp, quad)
        res = (sim - recorded).ravel()
        return np.where(np.isfinite(res), res, 1.0)

    rng = np.random.default_rng(seed)
    candidates = [x0] + [rng.uniform(lo, hi) for _ in range(max(starts, 1) - 1)]
    best, best_cost = None, math.inf
    history = []
    nfev = 0
    for start in candidates:
        if method == "trf":
            sol = least_squares(residuals, start / scale, bounds=(lo / scale, hi / scale),
                                method="trf", x_scale=1.0, max_nfev=max_nfev,
                                xtol=1e-12, ftol=1e-12, gtol=1e-12)
            cost = float(2.0 * sol.cost)
        else:
            sol = minimize(lambda z: float(np.sum(residuals(z) ** 2)), start / scale,
                           method="Nelder-Mead", bounds=list(zip(lo / scale, hi / scale)),
                           options={"maxfev": max_nfev, "xatol": 1e-10, "fatol": 1e-20})
            cost = float(sol.fun)
        nfev += sol.nfev
        history.append({"start": start.tolist(), "theta": (sol.x * scale).tolist(), "cost": cost})
        if best is None or cost < best_cost:
            best, best_cost = sol, cost

    theta = best.x * scale
    jac = getattr(best, "jac", None)
    if jac is None or np.ndim(jac) != 2:
        jac = _fd_jacobian(residuals, best.x)
    col = np.linalg.norm(jac, axis=0)
    signal = np.linalg.norm(recorded - recorded[0])
    ref = max(signal, 1e-300)
    unidentifiable = [name for name, c in zip(PARAM_NAMES, col) if not c > sensitivity_tol * ref]
    success = bool(best.success)
    result = IdentificationResult(
        params=with_theta(base, theta),
        theta=theta,
        cost=best_cost,
        success=success,
        unidentifiable=unidentifiable,
        message=str(best.message),
        nfev=nfev,
        starts=history,
    )
    if result.warning:
        reason = (f"parameters not excited by the input: {unidentifiable}" if unidentifiable
                  else f"optimizer did not converge: {best.message}")
        warnings.warn(reason, IdentificationWarning, stacklevel=2)
    return result


def self_test(chirp: ChirpSpec | None = None, truth: DynamicParameters | None = None,
              perturbation: float = 0.2, geometry: RobotGeometry | None = None,
              quad: QuadratureSettings | None = None, **kwargs):
    """Generate a synthetic chirp response with ``truth`` and recover it.

    The start is ``truth`` with each parameter pushed by ``+-perturbation``
    (alternating signs). Returns ``(result, relative_errors, truth_dict)``.
    """
    chirp = chirp or ChirpSpec()
    truth = truth or DynamicParameters()
    geometry = geometry or RobotGeometry()
    true_theta = np.array([truth.K[0, 0], truth.D[0, 0], truth.alpha_h, truth.beta_h, truth.gamma_h])
    _, data = simulate_chirp(geometry, truth, chirp, quad)
    signs = np.array([1.0, -1.0, 1.0, -1.0, 1.0])
    guess = true_theta * (1.0 + signs * perturbation)
    result = identify_parameters(chirp, data, guess, geometry=geometry, base=truth, quad=quad, **kwargs)
    truth_dict = dict(zip(PARAM_NAMES, true_theta))
    return result, result.relative_errors(truth_dict), truth_dict


def excitation_energy(recorded: np.ndarray) -> float:
    return float(math.sqrt(np.mean((recorded - recorded[0]) ** 2)))
