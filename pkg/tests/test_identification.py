import math
import warnings

import numpy as np
import pytest

from softarm.dynamics import DynamicParameters, Model
from softarm.identification import (
    PARAM_NAMES,
    REFERENCE,
    ChirpSpec,
    IdentificationWarning,
    chirp_input,
    excitation_energy,
    identify_parameters,
    self_test,
    simulate_chirp,
    static_equilibrium,
    with_theta,
)
from softarm.kinematics import RobotGeometry

GEO = RobotGeometry()
SHORT = ChirpSpec(duration=3.0)


def test_reference_values():
    p = DynamicParameters()
    assert p.K[0, 0] == REFERENCE["K"] and p.D[0, 0] == REFERENCE["D"]
    assert (p.alpha_h, p.beta_h, p.gamma_h) == (REFERENCE["alpha_h"], REFERENCE["beta_h"], REFERENCE["gamma_h"])


def test_chirp_input_shape_and_frequency_sweep():
    spec = ChirpSpec(f0=0.5, f1=2.0, amplitude=3.0, duration=4.0, actuator=1)
    t, taus = chirp_input(spec)
    assert t.shape == (4001,) and taus.shape == (4000, 3)
    assert np.all(taus[:, [0, 2]] == 0)
    assert np.max(np.abs(taus[:, 1])) <= 3.0
    # instantaneous frequency from zero crossings rises from f0 towards f1
    u = taus[:, 1]
    zc = t[:-1][np.nonzero(np.diff(np.signbit(u)))[0]]
    assert np.all(np.diff(np.diff(zc)) <= 1e-3 + 1e-12)
    with pytest.raises(ValueError):
        ChirpSpec(f0=2.0, f1=1.0)
    with pytest.raises(ValueError):
        ChirpSpec(actuator=3)


def test_static_equilibrium_balances_gravity():
    model = Model(GEO, DynamicParameters())
    q = static_equilibrium(model)
    np.testing.assert_allclose(model.params.K @ q + model.inertia_gravity(q)[1], 0, atol=1e-9)
    assert np.all(q < 0)  # gravity compresses the section


def test_zero_input_stays_in_equilibrium():
    _, l = simulate_chirp(GEO, DynamicParameters(), ChirpSpec(amplitude=0.0, duration=0.5))
    assert np.max(np.abs(l - l[0])) < 1e-12
    assert excitation_energy(l) < 1e-12


def test_with_theta_sets_diagonals():
    p = with_theta(DynamicParameters(), [1.0, 2.0, 3.0, 4.0, 5.0])
    np.testing.assert_array_equal(p.K, np.eye(3))
    np.testing.assert_array_equal(p.D, 2 * np.eye(3))
    assert (p.alpha_h, p.beta_h, p.gamma_h) == (3.0, 4.0, 5.0)


@pytest.mark.slow
def test_short_chirp_self_test_recovers_truth():
    result, rel, truth = self_test(SHORT)
    assert result.success and not result.warning
    assert rel["K"] < 0.02 and rel["D"] < 0.02
    assert max(rel["alpha_h"], rel["beta_h"], rel["gamma_h"]) < 0.10
    assert set(truth) == set(PARAM_NAMES)
    assert result.as_dict()["K"] == pytest.approx(truth["K"], rel=1e-6)


def test_unexcited_record_warns_and_names_parameters():
    spec = ChirpSpec(amplitude=0.0, duration=0.5)
    _, data = simulate_chirp(GEO, DynamicParameters(), spec)
    with pytest.warns(IdentificationWarning) as rec:
        res = identify_parameters(spec, data, [600, 100, 4, 15, -60], max_nfev=5)
    assert res.warning
    assert {"D", "alpha_h", "beta_h", "gamma_h"} <= set(res.unidentifiable)
    assert "D" in str(rec[0].message)


def test_input_validation():
    data = np.zeros((SHORT.n_steps + 1, 3))
    guess = [538.18, 130.42, 4.78, 17.67, -68.95]
    with pytest.raises(ValueError, match="shape"):
        identify_parameters(SHORT, data[:-1], guess)
    with pytest.raises(ValueError, match="outside bounds"):
        identify_parameters(SHORT, data, guess, bounds={"K": (600, 5000)})
    with pytest.raises(ValueError, match="lower bound"):
        identify_parameters(SHORT, data, guess, bounds={"D": (200, 100)})
    with pytest.raises(ValueError, match="method"):
        identify_parameters(SHORT, data, guess, method="bfgs")


def test_nelder_mead_option_reduces_the_cost():
    spec = ChirpSpec(duration=1.0, f1=3.0)
    truth = DynamicParameters()
    _, data = simulate_chirp(GEO, truth, spec)
    guess = [600.0, 120.0, 4.78, 17.67, -68.95]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IdentificationWarning)
        res = identify_parameters(spec, data, guess, method="nelder-mead", max_nfev=60)
    _, start = simulate_chirp(GEO, with_theta(truth, guess), spec)
    assert res.cost < float(np.sum((start - data) ** 2))
    assert res.nfev <= 62
    assert math.isfinite(res.cost)
