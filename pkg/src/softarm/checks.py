"""Self-checks of the model's structural properties.

Each check returns a :class:`CheckResult` holding the measured value and the
threshold it was compared against. ``run_checks`` runs the whole suite for
one geometry, parameter set and numerical setting; a corrupted setting (for
instance a huge finite-difference step) shows up as failures here.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _kernels as kern
from .dynamics import DynamicParameters, Model, QuadratureSettings
from .kinematics import (
    ConfigurationArc,
    RobotGeometry,
    config_from_actuator,
    inverse_kinematics,
    pose_at,
    pulses_from_elongation,
    tip_position,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = bool(self.passed)
        d["value"] = float(self.value) if math.isfinite(self.value) else None
        d["threshold"] = float(self.threshold)
        return d


def random_states(geometry: RobotGeometry, n: int, rng, spread: float = 0.3) -> np.ndarray:
    """Elongations uniform in ``[-spread, spread] * L0`` per actuator."""
    return rng.uniform(-spread, spread, size=(n, 3)) * geometry.L0


def random_reachable_points(geometry: RobotGeometry, n: int, rng, phi_range=(0.05, 1.4)) -> np.ndarray:
    """Tip positions of arcs with ``phi`` in ``phi_range``, any ``theta``, length in [L0, 1.5 L0]."""
    phi = rng.uniform(*phi_range, size=n)
    theta = rng.uniform(-math.pi, math.pi, size=n)
    length = rng.uniform(1.0, 1.5, size=n) * geometry.L0
    lam = length / phi
    rho = lam * (1.0 - np.cos(phi))
    return np.stack([rho * np.cos(theta), rho * np.sin(theta), lam * np.sin(phi)], axis=1)


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - start
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_round_trip(geometry: RobotGeometry, n: int = 1000, seed: int = 0, tol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for P in random_reachable_points(geometry, n, rng):
        l = inverse_kinematics(geometry, P)
        worst = max(worst, float(np.linalg.norm(tip_position(geometry, l) - P)))
    return CheckResult("kinematic_round_trip", worst < tol, worst, tol, f"max |FK(IK(P)) - P| over {n} points [m]")


def straight_gap(geometry: RobotGeometry, s: float, mean: float = 0.0) -> tuple[float, float]:
    """Tip distance between the arc at bending measure ``s`` and the straight sentinel.

    Returns ``(gap, bound)`` where ``bound = L s / (3 r)`` is the first-order
    lateral deflection of an arc of length ``L`` at that ``s``; the exact gap
    never exceeds it.
    """
    l = np.array([mean, mean + s, mean])
    arc = config_from_actuator(geometry, l)
    bent = pose_at(geometry, arc, 1.0).translation
    straight = pose_at(geometry, ConfigurationArc.straight_arc(arc.length), 1.0).translation
    return float(np.linalg.norm(bent - straight)), arc.length * arc.s / (3.0 * geometry.r)


@_timed
def check_straight_limit(geometry: RobotGeometry, s: float = 1e-6) -> CheckResult:
    """The arc branch approaches the straight sentinel no slower than first order in ``s``."""
    gap, bound = straight_gap(geometry, s)
    limit = bound + 1e-12
    return CheckResult("straight_limit", gap <= limit, gap, limit,
                       f"tip gap at s={s:g} vs first-order bound L s/(3 r) [m]")


@_timed
def check_inertia(geometry, params, quad, n: int = 500, seed: int = 1, tol: float = 1e-6) -> CheckResult:
    """Symmetric positive definite ``M``; 16 -> 32 node refinement changes it < ``tol``."""
    rng = np.random.default_rng(seed)
    model = Model(geometry, params, quad)
    fine = Model(geometry, params, replace(quad, n_nodes=2 * quad.n_nodes))
    min_eig, asym, refine = math.inf, 0.0, 0.0
    for q in random_states(geometry, n, rng):
        M = model.inertia_gravity(q)[0]
        asym = max(asym, float(np.max(np.abs(M - M.T)) / np.max(np.abs(M))))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (M + M.T)).min()))
        M2 = fine.inertia_gravity(q)[0]
        refine = max(refine, float(np.max(np.abs(M2 - M)) / np.max(np.abs(M2))))
    ok = min_eig > 0 and asym < 1e-12 and refine < tol
    return CheckResult("inertia_spd", ok, refine, tol,
                       f"min eig {min_eig:.3g}, asymmetry {asym:.2g}, refinement change {refine:.2g}")


@_timed
def check_skew(geometry, params, quad, n: int = 100, seed: int = 2, tol: float = 1e-4,
               step: float = 1e-4) -> CheckResult:
    """``(Mdot - 2C) + (Mdot - 2C)^T`` vanishes relative to ``Mdot``."""
    rng = np.random.default_rng(seed)
    model = Model(geometry, params, quad)
    worst = 0.0
    for q in random_states(geometry, n, rng):
        qd = rng.uniform(-0.5, 0.5, 3)
        # Mdot from a directional difference of M, independent of the Christoffel path
        eps = step / np.linalg.norm(qd)
        Mdot = (model.inertia_gravity(q + eps * qd)[0] - model.inertia_gravity(q - eps * qd)[0]) / (2 * eps)
        C = model.coriolis(q, qd)
        S = Mdot - 2.0 * C
        worst = max(worst, float(np.linalg.norm(S + S.T) / np.linalg.norm(Mdot)))
    return CheckResult("passivity_skew", worst < tol, worst, tol, "max ||S + S^T||_F / ||Mdot||_F")


@_timed
def check_gravity(geometry, params, quad, n: int = 100, seed: int = 3, tol: float = 1e-5,
                  h: float = 1e-6) -> CheckResult:
    """``G`` against central differences of the gravitational potential."""
    rng = np.random.default_rng(seed)
    model = Model(geometry, params, quad)
    worst = 0.0
    for q in random_states(geometry, n, rng):
        G = model.inertia_gravity(q)[1]
        fd = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd[i] = (model.potential_energy(q + e) - model.potential_energy(q - e)) / (2.0 * h)
        worst = max(worst, float(np.linalg.norm(G - fd) / np.linalg.norm(fd)))
    return CheckResult("gravity_gradient", worst < tol, worst, tol, "max ||G - dV/dq|| / ||dV/dq||")


def _conservative(params: DynamicParameters) -> DynamicParameters:
    return replace(params, D=np.zeros((3, 3))).without_hysteresis()


def free_response(model: Model, x0, dt: float, t_end: float) -> np.ndarray:
    n = int(round(t_end / dt))
    taus = np.zeros((n, 3))
    return kern.simulate_open_loop(np.asarray(x0, float), taus, dt, 1, model.par, model.K,
                                   model.D, model.xs, model.ws)


DEFAULT_X0 = np.array([0.01, 0.02, 0.03, 0.1, -0.05, 0.02, 0.0, 0.0, 0.0])


@_timed
def check_energy(geometry, params, quad, dt: float = 1e-4, t_end: float = 1.0, x0=DEFAULT_X0,
                 tol: float = 1e-6) -> CheckResult:
    model = Model(geometry, _conservative(params), quad)
    states = free_response(model, x0, dt, t_end)
    if not np.all(np.isfinite(states)):
        return CheckResult("energy_conservation", False, math.inf, tol, "integration blew up")
    e0 = model.energy(states[0])
    drift = max(abs(model.energy(x) - e0) for x in states[:: max(1, len(states) // 200)])
    drift = max(drift, abs(model.energy(states[-1]) - e0))
    rel = drift / abs(e0)
    return CheckResult("energy_conservation", rel < tol, rel, tol,
                       f"max |E - E0| / |E0| over {t_end:g} s, E0 = {e0:.6g} J")


def richardson_ratio(model: Model, x0, dt: float, t_end: float) -> float:
    """``|x(dt) - x(dt/2)| / |x(dt/2) - x(dt/4)|`` at ``t_end``."""
    ends = [free_response(model, x0, dt / k, t_end)[-1, :6] for k in (1, 2, 4)]
    return float(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))


@_timed
def check_integrator_order(geometry, params, quad, dt: float = 1e-3, t_end: float = 0.5,
                           x0=DEFAULT_X0, band=(12.0, 20.0)) -> CheckResult:
    model = Model(geometry, _conservative(params), quad)
    ratio = richardson_ratio(model, x0, dt, t_end)
    ok = band[0] <= ratio <= band[1]
    return CheckResult("integrator_order", ok, ratio, band[1],
                       f"Richardson ratio, expected in [{band[0]:g}, {band[1]:g}] for 4th order")


@_timed
def check_fd_convergence(geometry, params, quad, n: int = 20, seed: int = 4, tol: float = 1e-6) -> CheckResult:
    """Shrinking the pose finite-difference step 10x leaves ``M`` and ``G`` unchanged."""
    rng = np.random.default_rng(seed)
    model = Model(geometry, params, quad)
    finer = Model(geometry, params, replace(quad, fd_step=quad.fd_step / 10.0))
    worst = 0.0
    for q in random_states(geometry, n, rng):
        M, G, _ = model.inertia_gravity(q)
        M2, G2, _ = finer.inertia_gravity(q)
        worst = max(worst, float(np.max(np.abs(M2 - M)) / np.max(np.abs(M2))),
                    float(np.linalg.norm(G2 - G) / np.linalg.norm(G2)))
    if not math.isfinite(worst):
        worst = math.inf
    return CheckResult("fd_convergence", worst < tol, worst, tol,
                       f"relative change of M, G when fd_step {quad.fd_step:g} -> {quad.fd_step / 10:g}")


@_timed
def check_encoder(geometry, n: int = 10000, seed: int = 5) -> CheckResult:
    step = geometry.encoder_step
    expected = 2.0 * math.pi * geometry.r_e / (4 * geometry.n_ppr)
    rng = np.random.default_rng(seed)
    l = rng.uniform(-0.5, 0.5, n) * geometry.L0
    measured = pulses_from_elongation(geometry, l) * step
    err = float(np.max(np.abs(measured - l)))
    ok = step == expected and err <= step
    return CheckResult("encoder_quantization", ok, err, step,
                       f"step {step:.6g} m (expected {expected:.6g}); max error over {n} samples")


def run_checks(geometry: RobotGeometry | None = None, params: DynamicParameters | None = None,
               quad: QuadratureSettings | None = None, quick: bool = False) -> list[CheckResult]:
    """Run the full property suite. ``quick`` cuts sample counts for smoke runs."""
    geometry = geometry or RobotGeometry()
    params = params or DynamicParameters()
    quad = quad or QuadratureSettings()
    k = 10 if quick else 1
    checks = [
        ("kinematic_round_trip", lambda: check_round_trip(geometry, n=1000 // k)),
        ("straight_limit", lambda: check_straight_limit(geometry)),
        ("inertia_spd", lambda: check_inertia(geometry, params, quad, n=500 // k)),
        ("passivity_skew", lambda: check_skew(geometry, params, quad, n=100 // k)),
        ("gravity_gradient", lambda: check_gravity(geometry, params, quad, n=100 // k)),
        ("fd_convergence", lambda: check_fd_convergence(geometry, params, quad)),
        ("energy_conservation", lambda: check_energy(geometry, params, quad, t_end=0.2 if quick else 1.0)),
        ("integrator_order", lambda: check_integrator_order(geometry, params, quad)),
        ("encoder_quantization", lambda: check_encoder(geometry)),
    ]
    out = []
    for name, fn in checks:
        try:
            out.append(fn())
        except Exception as exc:  # a corrupted setting may break a check outright
            out.append(CheckResult(name, False, math.nan, math.nan, f"{type(exc).__name__}: {exc}"))
    return out


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  {'value':>11}  {'limit':>11}  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL'}    "
                     f"{r.value:11.4g}  {r.threshold:11.4g}  {r.detail}")
    return "\n".join(lines)
