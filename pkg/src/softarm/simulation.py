"""Closed-loop simulation of the section.

The plant is integrated with classical RK4 at ``dt_plant``; the controller
runs every ``dt_control`` and its output is held constant in between. A
payload is a point mass at the tip that only the plant knows about, and the
"loosely attached" load is modelled as an extra band-limited random tip
force.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as kern
from .controllers import (
    AdaptivePassivityController,
    ApGains,
    PdflController,
    PdflGains,
    saturate,
)
from .dynamics import DynamicParameters, DynamicsMatrices, Model, NumericalError, QuadratureSettings
from .kinematics import RobotGeometry, pulses_from_elongation, tip_positions
from .trajectories import CircleSpec, ErrorReport, actuator_trajectory, error_report

SENSOR_MODES = ("ideal", "quantized")
INITIAL_MODES = ("rest", "trajectory")
CONTROLLERS = ("ap", "pdfl")

TRACE_HEADER = (
    ["t", "q1", "q2", "q3", "qd1", "qd2", "qd3", "qdot1", "qdot2", "qdot3",
     "h1", "h2", "h3", "tau1", "tau2", "tau3", "tip_x", "tip_y", "tip_z"]
    + [f"theta_hat{i}" for i in range(1, 7)]
)

#: a state component beyond this multiple of its physical scale counts as divergence
DIVERGENCE_FACTOR = 1e3


class DivergenceError(RuntimeError):
    def __init__(self, message, t):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class DisturbanceSpec:
    """First-order filtered Gaussian tip force, clipped to ``+-amplitude``.

    ``amplitude=None`` means half the payload weight.
    """

    amplitude: float | None = None
    bandwidth: float = 2.0
    seed: int = 0

    def resolved_amplitude(self, payload: float, g: float = 9.81) -> float:
        return 0.5 * payload * g if self.amplitude is None else float(self.amplitude)


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    geometry: RobotGeometry = field(default_factory=RobotGeometry)
    plant: DynamicParameters = field(default_factory=DynamicParameters)
    nominal: DynamicParameters = field(default_factory=DynamicParameters)
    quad: QuadratureSettings = field(default_factory=QuadratureSettings)
    controller: str = "ap"
    pdfl: PdflGains = field(default_factory=PdflGains)
    ap: ApGains = field(default_factory=ApGains)
    tau_max: float = 200.0
    theta_init: object = "nominal"
    projection: bool = False
    trajectory: CircleSpec = field(default_factory=CircleSpec)
    stats_window: object = "final_period"
    payload: float = 0.0
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    sensor: str = "ideal"
    dt_plant: float = 1e-3
    dt_control: float = 1e-3
    initial: str = "rest"

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.sensor not in SENSOR_MODES:
            raise ValueError(f"sensor must be one of {SENSOR_MODES}, got {self.sensor!r}")
        if self.initial not in INITIAL_MODES:
            raise ValueError(f"initial must be one of {INITIAL_MODES}, got {self.initial!r}")
        if self.payload < 0:
            raise ValueError(f"payload must be non-negative, got {self.payload}")
        if not (self.dt_plant > 0 and self.dt_control > 0):
            raise ValueError("time steps must be positive")
        ratio = self.dt_control / self.dt_plant
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_control must be an integer multiple of dt_plant")
        if not self.tau_max > 0:
            raise ValueError("tau_max must be positive")

    @property
    def duration(self) -> float:
        return self.trajectory.duration

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_plant))

    @property
    def window_seconds(self) -> float | None:
        if self.stats_window == "full":
            return None
        if self.stats_window == "final_period":
            period = self.trajectory.period
            return period if math.isfinite(period) else None
        return float(self.stats_window)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, disturbance=replace(self.disturbance, seed=int(seed)))


@dataclass
class SimulationTrace:
    t: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray
    h: np.ndarray
    q_d: np.ndarray
    tau_cmd: np.ndarray
    tau: np.ndarray
    f_ext: np.ndarray
    theta_hat: np.ndarray
    tip: np.ndarray
    stable: bool = True
    diverged_at: float | None = None

    def __len__(self):
        return len(self.t)

    def truncated(self, n: int) -> "SimulationTrace":
        kw = {k: v[:n] for k, v in vars(self).items() if isinstance(v, np.ndarray)}
        return SimulationTrace(**kw, stable=self.stable, diverged_at=self.diverged_at)


@dataclass
class ScenarioResult:
    scenario: Scenario
    trace: SimulationTrace
    report: ErrorReport
    wall_time: float

    @property
    def stable(self) -> bool:
        return self.trace.stable


# -- plant-side pieces ---------------------------------------------------------


def plant_model(scenario: Scenario) -> Model:
    return Model(scenario.geometry, scenario.plant, scenario.quad, tip_mass=scenario.payload)


def apply_payload(dyn: DynamicsMatrices, geometry: RobotGeometry, quad: QuadratureSettings,
                  m_p: float, l, l_dot, g_vec=(0.0, 0.0, -9.81)) -> DynamicsMatrices:
    """Add a tip point mass ``m_p`` to already-evaluated plant terms.

    ``M += m_p J^T J``, ``G -= m_p J^T g`` and the Coriolis matrix gains the
    Christoffel terms of ``m_p J^T J``.
    """
    if m_p < 0:
        raise ValueError("payload mass must be non-negative")
    if m_p == 0:
        return dyn
    l = np.asarray(l, dtype=float)
    l_dot = np.asarray(l_dot, dtype=float)
    bare = Model(geometry, DynamicParameters(), quad)

    def tip_inertia(q):
        J = bare.inertia_gravity(q)[2]
        return m_p * J.T @ J

    h = quad.fd_step_inertia
    dM = np.empty((3, 3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        dM[i] = (tip_inertia(l + e) - tip_inertia(l - e)) / (2.0 * h)
    C_p = np.empty((3, 3))
    kern.coriolis_from_derivative(dM, l_dot, C_p)
    J = dyn.Jv
    return DynamicsMatrices(
        M=dyn.M + m_p * J.T @ J,
        C=dyn.C + C_p,
        G=dyn.G - m_p * J.T @ np.asarray(g_vec, dtype=float),
        Jv=J,
    )


def step(scenario: Scenario, state, tau, f_ext=None, model: Model | None = None) -> np.ndarray:
    """Advance ``state = [q, qd, h]`` by one plant step with held ``tau``."""
    model = model or plant_model(scenario)
    f = np.zeros(3) if f_ext is None else f_ext
    nxt = model.rk4_step(state, tau, f, scenario.dt_plant)
    _check_divergence(scenario.geometry, nxt, None)
    return nxt


def _check_divergence(geometry: RobotGeometry, x, t):
    scale = np.array([geometry.L0] * 6 + [1.0] * 3)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_FACTOR * scale):
        raise DivergenceError(f"state diverged at t={t}: {x}", t)


def disturbance_sequence(spec: DisturbanceSpec, amplitude: float, n: int, dt: float) -> np.ndarray:
    """``(n, 3)`` band-limited random tip forces, deterministic per seed.

    Each axis is a discretised Ornstein-Uhlenbeck process with stationary
    standard deviation ``amplitude / 3`` and corner frequency
    ``spec.bandwidth``, clipped to ``+-amplitude``.
    """
    if amplitude == 0 or n == 0:
        return np.zeros((n, 3))
    rng = np.random.default_rng(spec.seed)
    sigma = amplitude / 3.0
    a = math.exp(-2.0 * math.pi * spec.bandwidth * dt)
    w = rng.standard_normal((n, 3))
    out = np.empty((n, 3))
    x = sigma * w[0]
    out[0] = x
    b = sigma * math.sqrt(1.0 - a * a)
    for k in range(1, n):
        x = a * x + b * w[k]
        out[k] = x
    return np.clip(out, -amplitude, amplitude)


def disturbance_variance(amplitude: float) -> float:
    """Stationary per-axis variance of :func:`disturbance_sequence` before clipping."""
    return (amplitude / 3.0) ** 2


def quantize(geometry: RobotGeometry, l) -> np.ndarray:
    """Round elongations toward zero onto the encoder lattice."""
    counts = np.asarray(pulses_from_elongation(geometry, l), dtype=float)
    return counts * geometry.encoder_step


class Sensor:
    """Elongation measurement; quantized mode differentiates positions for rate."""

    def __init__(self, geometry: RobotGeometry, mode: str = "ideal", dt: float = 1e-3):
        if mode not in SENSOR_MODES:
            raise ValueError(f"sensor mode must be one of {SENSOR_MODES}")
        self.geometry = geometry
        self.mode = mode
        self.dt = dt
        self._prev = None

    def __call__(self, q, q_dot):
        if self.mode == "ideal":
            return np.asarray(q, dtype=float), np.asarray(q_dot, dtype=float)
        qm = quantize(self.geometry, q)
        vel = np.zeros(3) if self._prev is None else (qm - self._prev) / self.dt
        self._prev = qm
        return qm, vel


def measure(state, geometry: RobotGeometry, mode: str = "ideal"):
    """Stateless single measurement of ``state = [q, qd, ...]`` (velocity passes through)."""
    state = np.asarray(state, dtype=float)
    q, qd = state[:3], state[3:6]
    if mode == "ideal":
        return q.copy(), qd.copy()
    if mode == "quantized":
        return quantize(geometry, q), qd.copy()
    raise ValueError(f"sensor mode must be one of {SENSOR_MODES}")


# -- closed loop ---------------------------------------------------------------


def make_controller(scenario: Scenario):
    model = Model(scenario.geometry, scenario.nominal, scenario.quad)
    if scenario.controller == "pdfl":
        return PdflController(scenario.pdfl, model, tau_max=scenario.tau_max)
    return AdaptivePassivityController(
        scenario.ap, model, theta_init=scenario.theta_init, tau_max=scenario.tau_max,
        projection=scenario.projection,
    )


def simulate(scenario: Scenario, traj=None) -> SimulationTrace:
    """Run the closed loop; on divergence return a truncated trace flagged unstable."""
    dt = scenario.dt_control
    if traj is None:
        traj = actuator_trajectory(scenario.geometry, replace(scenario.trajectory, dt=dt))
    n = len(traj)
    plant = plant_model(scenario)
    controller = make_controller(scenario)
    sensor = Sensor(scenario.geometry, scenario.sensor, dt)
    amplitude = scenario.disturbance.resolved_amplitude(
        scenario.payload, float(np.linalg.norm(scenario.plant.g_vec))
    )
    forces = disturbance_sequence(scenario.disturbance, amplitude, n, dt)

    x = np.zeros(9)
    if scenario.initial == "trajectory":
        x[:3] = traj.q[0]
        x[3:6] = traj.qd[0]

    t = traj.times
    rec_x = np.full((n, 9), np.nan)
    rec_tau_cmd = np.full((n, 3), np.nan)
    rec_tau = np.full((n, 3), np.nan)
    rec_theta = np.full((n, 6), np.nan)
    stable, diverged_at, count = True, None, n
    dt_p = scenario.dt_plant

    for k in range(n):
        rec_x[k] = x
        if controller.theta_hat is not None:
            rec_theta[k] = controller.theta_hat
        qm, qdm = sensor(x[:3], x[3:6])
        try:
            tau_cmd = controller(qm, qdm, traj.point(k), dt)
        except NumericalError:
            stable, diverged_at, count = False, float(t[k]), k
            break
        tau = saturate(tau_cmd, scenario.tau_max)
        rec_tau_cmd[k] = tau_cmd
        rec_tau[k] = tau
        if k == n - 1:
            break
        for _ in range(scenario.substeps):
            x = plant.rk4_step(x, tau, forces[k], dt_p)
        try:
            _check_divergence(scenario.geometry, x, float(t[k + 1]))
        except DivergenceError as exc:
            stable, diverged_at, count = False, exc.t, k + 1
            break

    q = rec_x[:count, :3]
    trace = SimulationTrace(
        t=t[:count].copy(),
        q=q.copy(),
        q_dot=rec_x[:count, 3:6].copy(),
        h=rec_x[:count, 6:9].copy(),
        q_d=traj.q[:count].copy(),
        tau_cmd=rec_tau_cmd[:count],
        tau=rec_tau[:count],
        f_ext=forces[:count].copy(),
        theta_hat=rec_theta[:count],
        tip=tip_positions(scenario.geometry, q) if count else np.empty((0, 3)),
        stable=stable,
        diverged_at=diverged_at,
    )
    return trace


def run_scenario(scenario: Scenario) -> ScenarioResult:
    start = time.perf_counter()
    trace = simulate(scenario)
    if len(trace):
        report = error_report(trace, scenario.geometry, scenario.window_seconds)
    else:
        report = None
    return ScenarioResult(scenario, trace, report, time.perf_counter() - start)


# -- output --------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".12g")


def trace_csv_text(trace: SimulationTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for k in range(len(trace)):
        row = [trace.t[k], *trace.q[k], *trace.q_d[k], *trace.q_dot[k], *trace.h[k],
               *trace.tau[k], *trace.tip[k], *trace.theta_hat[k]]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(trace: SimulationTrace, path) -> None:
    write_atomic(path, trace_csv_text(trace))


SUMMARY_FIELDS = [
    "scenario", "controller", "omega", "payload", "seed", "stable", "diverged_at",
    "task_mean", "task_std", "task_max", "task_q1", "task_median", "task_q3",
    "act_mean", "act_std", "act_max", "act_q1", "act_median", "act_q3",
    "task_mean_full", "act_mean_full",
]


def summary_row(result: ScenarioResult) -> dict:
    sc = result.scenario
    rep = result.report
    row = {
        "scenario": sc.name,
        "controller": sc.controller,
        "omega": _fmt(sc.trajectory.omega),
        "payload": _fmt(sc.payload),
        "seed": sc.disturbance.seed,
        "stable": int(result.stable),
        "diverged_at": "" if result.trace.diverged_at is None else _fmt(result.trace.diverged_at),
    }
    for prefix, stats in (("task", rep.task if rep else None), ("act", rep.actuator if rep else None)):
        for key in ("mean", "std", "max", "q1", "median", "q3"):
            row[f"{prefix}_{key}"] = _fmt(stats[key]) if stats else "nan"
    row["task_mean_full"] = _fmt(rep.task_full["mean"]) if rep else "nan"
    row["act_mean_full"] = _fmt(rep.actuator_full["mean"]) if rep else "nan"
    return row


def summary_csv_text(results) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    for res in results:
        w.writerow(summary_row(res))
    return buf.getvalue()
