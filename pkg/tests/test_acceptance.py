"""Acceptance criteria, one test each, at the stated tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import curve_fit

from softarm.checks import (
    check_encoder,
    check_energy,
    check_gravity,
    check_inertia,
    check_integrator_order,
    check_round_trip,
    check_skew,
    straight_gap,
)
from softarm.config import load_scenarios
from softarm.controllers import PdflGains
from softarm.dynamics import DynamicParameters, QuadratureSettings
from softarm.identification import ChirpSpec, self_test
from softarm.kinematics import RobotGeometry
from softarm.simulation import Scenario, measure, run_scenario, simulate, trace_csv_text
from softarm.trajectories import CircleSpec

GEO = RobotGeometry()
PAR = DynamicParameters()
QUAD = QuadratureSettings()
SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def grid():
    return {s.name: s for s in load_scenarios(["paper-grid"])}


def test_01_kinematic_round_trip(criterion):
    check_round_trip(GEO, n=10)  # compile outside the timed run
    res = check_round_trip(GEO, n=1000)
    ok = res.passed and res.seconds < 2.0
    criterion(1, "kinematic round trip", ok,
              f"max error {res.value:.3g} m (< 1e-9), {res.seconds:.2f} s (< 2 s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the true arc deflection at s = 1e-6 is 1.25e-6 m for L0 = 0.15, r = 0.04")
def test_02_straight_limit_literal(criterion):
    gap, bound = straight_gap(GEO, 1e-6)
    ok = gap < 1e-6
    criterion(2, "straight-limit continuity (literal 1e-6 m)", ok,
              f"gap {gap:.4g} m; the exact first-order deflection L s/(3 r) = {bound:.4g} m "
              f"exceeds 1e-6 m for any section longer than 0.12 m")
    assert ok


def test_02_straight_limit_is_first_order(criterion):
    # the gap shrinks linearly with s and matches the analytic deflection
    gaps = []
    for s in (1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
        gap, bound = straight_gap(GEO, s)
        assert gap == pytest.approx(bound, rel=1e-6)
        gaps.append(gap)
    ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
    np.testing.assert_allclose(ratios, 10.0, rtol=3e-3)  # length also grows by s/3
    gap, bound = straight_gap(GEO, 1e-6)
    print(f"     straight limit: gap {gap:.6g} m vs analytic {bound:.6g} m, linear in s")


def test_03_inertia_validity(criterion):
    res = check_inertia(GEO, PAR, QUAD, n=500)
    criterion(3, "inertia SPD and 16->32 node refinement", res.passed,
              f"{res.detail}; refinement < 1e-6")
    assert res.passed


def test_04_passivity_structure(criterion):
    res = check_skew(GEO, PAR, QUAD, n=100)
    criterion(4, "passivity skew symmetry", res.passed, f"worst ratio {res.value:.3g} (< 1e-4)")
    assert res.passed


def test_05_gravity_gradient(criterion):
    res = check_gravity(GEO, PAR, QUAD, n=100)
    criterion(5, "gravity as potential gradient", res.passed, f"worst relative error {res.value:.3g} (< 1e-5)")
    assert res.passed


def test_06_energy_conservation(criterion):
    res = check_energy(GEO, PAR, QUAD, dt=1e-4, t_end=1.0)
    criterion(6, "energy conservation", res.passed, f"relative drift {res.value:.3g} over 1 s at dt 1e-4 (< 1e-6)")
    assert res.passed


def test_07_integrator_order(criterion):
    res = check_integrator_order(GEO, PAR, QUAD)
    criterion(7, "integrator order", res.passed, f"Richardson ratio {res.value:.3f} (in [12, 20])")
    assert res.passed


@pytest.mark.slow
def test_08_identification_recovery(criterion):
    start = time.perf_counter()
    result, rel, _ = self_test(ChirpSpec(), perturbation=0.2)
    seconds = time.perf_counter() - start
    ok = (rel["K"] < 0.02 and rel["D"] < 0.02
          and max(rel["alpha_h"], rel["beta_h"], rel["gamma_h"]) < 0.10 and seconds < 300)
    worst = ", ".join(f"{k} {v:.2g}" for k, v in rel.items())
    criterion(8, "identification recovery", ok, f"relative errors {worst}; {seconds:.0f} s (< 300 s)")
    assert ok


def _decay(t, e0, rate):
    return e0 * (1 + rate * t) * np.exp(-rate * t)


def test_09_pdfl_exact_model(criterion):
    plant = PAR.without_hysteresis()
    gains = PdflGains()
    dt = 1e-4
    sc = Scenario(controller="pdfl", plant=plant, nominal=plant, pdfl=gains,
                  trajectory=CircleSpec(omega=0.0, duration=0.4, dt=dt), dt_plant=dt, dt_control=dt)
    tr = simulate(sc)
    e = tr.q - tr.q_d
    rates = []
    for i in range(3):
        (_, rate), _ = curve_fit(_decay, tr.t, e[:, i], p0=(e[0, i], 20.0))
        rates.append(rate)
    analytic = gains.kd / 2
    worst = max(abs(r - analytic) / analytic for r in rates)
    ok = gains.kd**2 == 4 * gains.kp and worst < 0.02
    criterion(9, "PDFL critically damped decay", ok,
              f"fitted rates {np.round(rates, 2).tolist()} vs {analytic:g} 1/s, worst {worst:.2%} (< 2%)")
    assert ok


def _mean(res):
    return res.report.task["mean"]


@pytest.mark.slow
def test_10_adaptive_beats_pdfl(criterion, grid):
    lines, ok = [], True
    for seed in SEEDS:
        ap1 = run_scenario(grid["ap-load200-w1"].with_seed(seed))
        pd1 = run_scenario(grid["pdfl-load200-w1"].with_seed(seed))
        ap3_sc = grid["ap-load500-w3"].with_seed(seed)
        ap3 = run_scenario(ap3_sc)
        pd3 = run_scenario(replace(ap3_sc, name="pdfl-load500-w3", controller="pdfl"))
        first = ap1.stable and pd1.stable and _mean(ap1) < _mean(pd1)
        second = ap3.stable and (not pd3.stable or _mean(pd3) > 3 * _mean(ap3))
        ok &= first and second
        pd3_text = f"{_mean(pd3) * 1e3:.2f} mm" if pd3.stable else f"diverged at {pd3.trace.diverged_at:.3g} s"
        lines.append(f"seed {seed}: w1/0.2 kg AP {_mean(ap1) * 1e3:.2f} < PDFL {_mean(pd1) * 1e3:.2f} mm; "
                     f"w3/0.5 kg AP {_mean(ap3) * 1e3:.2f} mm, PDFL {pd3_text}")
    criterion(10, "AP beats PDFL under +30% plant and payload", ok, " | ".join(lines))
    assert ok


@pytest.mark.slow
def test_11_speed_degrades_tracking(criterion, grid):
    slow = run_scenario(grid["ap-free-w1"])
    fast = run_scenario(grid["ap-free-w3"])
    ok = slow.stable and fast.stable and _mean(fast) > _mean(slow)
    criterion(11, "AP error grows with speed", ok,
              f"no load: w=1 {_mean(slow) * 1e3:.2f} mm < w=3 {_mean(fast) * 1e3:.2f} mm")
    assert ok


def test_12_determinism(criterion, grid):
    sc = replace(grid["ap-load200-w1"], trajectory=replace(grid["ap-load200-w1"].trajectory, duration=2.0),
                 sensor="quantized").with_seed(5)
    a = trace_csv_text(simulate(sc)).encode()
    b = trace_csv_text(simulate(sc)).encode()
    ok = a == b
    criterion(12, "byte-identical reruns", ok, f"{len(a)} bytes, identical={ok}")
    assert ok


def test_13_encoder_model(criterion):
    res = check_encoder(GEO)
    exact = GEO.encoder_step == 2 * np.pi * GEO.r_e / 2400 and GEO.n_ppr == 600
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(1000):
        x = np.r_[rng.uniform(-0.05, 0.05, 3), np.zeros(6)]
        q, _ = measure(x, GEO, "quantized")
        worst = max(worst, float(np.max(np.abs(q - x[:3]))))
    ok = res.passed and exact and worst <= GEO.encoder_step
    criterion(13, "encoder quantization", ok,
              f"step {GEO.encoder_step:.6g} m = 2 pi r_e / 2400, worst error {worst:.3g} m")
    assert ok


@pytest.mark.slow
def test_gamma_convention_report(grid):
    """Which reading of the adaptation gains gives the qualitative behaviour."""
    rows = {}
    for conv in ("inverse", "direct"):
        out = {}
        for name in ("ap-load200-w1", "ap-free-w1", "ap-free-w3"):
            sc = grid[name]
            res = run_scenario(replace(sc, ap=replace(sc.ap, gamma_convention=conv)))
            out[name] = res
        pdfl = run_scenario(grid["pdfl-load200-w1"])
        orderings = (_mean(out["ap-load200-w1"]) < _mean(pdfl)
                     and _mean(out["ap-free-w3"]) > _mean(out["ap-free-w1"]))
        k_hat = out["ap-free-w1"].trace.theta_hat[-1, :3].mean()
        adapts = abs(k_hat - 1.3 * 538.18) < abs(538.18 - 1.3 * 538.18) / 2
        rows[conv] = (orderings, adapts)
        print(f"     gamma convention {conv}: orderings hold={orderings}, "
              f"K_hat after 20 s {k_hat:.1f} N/m (plant {1.3 * 538.18:.1f}), adapts={adapts}")
    # inverse adapts towards the true plant; direct barely moves from nominal
    assert rows["inverse"] == (True, True)
