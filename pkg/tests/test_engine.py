import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlfreq import _backend
from nlfreq.engine import (DrivenSystem, IntegratorSettings, integrate, periodic_derivative,
                           settle_to_steady_state, with_settings)
from nlfreq.errors import IntegrationError, InvalidRecord, ModelError, NoConvergence
from nlfreq.library import builtin_model, cveticanin_generator, harmonic_generator
from nlfreq.model import GeneratorModel, ParamPoint, PlantModel


def _lti_exact(a1, varpi, a_u, t):
    H = 1 / (1j * varpi + a1)
    return a_u * abs(H) * np.sin(varpi * t + np.angle(H))


@pytest.mark.parametrize("varpi,a_u", [(0.05, 1.0), (1.0, 0.01), (30.0, 5.0)])
def test_lti_steady_state_matches_closed_form(varpi, a_u):
    plant, gen = builtin_model("lti", {"a1": 0.5})
    rec = settle_to_steady_state(plant, gen, ParamPoint(varpi, a_u))
    exact = _lti_exact(0.5, varpi, a_u, rec.t)
    err = np.max(np.abs(rec.y[:, 0] - exact)) / np.max(np.abs(exact))
    assert err < 1e-7
    assert rec.periodicity_error() < 1e-7
    assert rec.udot_source == "analytic"
    assert rec.u.shape == (1024, 1)


def test_backends_give_identical_records(monkeypatch):
    pytest.importorskip("nlfreq._kernels")
    plant, gen = builtin_model("example1", {"a1": 0.5, "a2": 1, "a3": 1, "b1": 1, "c1": 1})
    om = ParamPoint(1.0, 0.8)
    s = IntegratorSettings(samples_per_period=128)
    a = settle_to_steady_state(plant, gen, om, s)
    monkeypatch.setattr(_backend, "_compiled", None)
    b = settle_to_steady_state(plant, gen, om, s)
    assert a.periods_simulated == b.periods_simulated
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.x, b.x)


def test_integrate_trajectory_dense_sampling():
    plant, gen = builtin_model("lti", {"a1": 2.0})
    om = ParamPoint(3.0, 1.5)
    traj = integrate(plant, gen, om, x0=[1.0], horizon=4.0)
    t = np.linspace(0, 4, 57)
    H = 1 / (3j + 2)
    transient = (1.0 - 1.5 * abs(H) * math.sin(np.angle(H))) * np.exp(-2 * t)
    exact = _lti_exact(2.0, 3.0, 1.5, t) + transient
    assert np.max(np.abs(traj.x(t)[:, 0] - exact)) < 1e-8
    u, udot, y = traj.outputs(t)
    assert np.allclose(u[:, 0], 1.5 * np.sin(3 * t), atol=1e-8)
    assert np.allclose(udot[:, 0], 4.5 * np.cos(3 * t), atol=1e-8)


def test_integrate_requires_positive_horizon():
    plant, gen = builtin_model("lti", {"a1": 1.0})
    with pytest.raises(ValueError):
        integrate(plant, gen, ParamPoint(1, 1), horizon=0.0)


def test_numeric_input_derivative_when_generator_has_none():
    gen = GeneratorModel(2, 1, s=("varpi*z2", "-varpi*z1"), ell=("z1",), z0=("0", "a_u"),
                         period="2*pi/varpi")
    plant, _ = builtin_model("lti", {"a1": 1.0})
    rec = settle_to_steady_state(plant, gen, ParamPoint(2.0, 1.0))
    assert rec.udot_source == "numeric"
    assert np.max(np.abs(rec.udot[:, 0] - 2 * np.cos(2 * rec.t))) < 1e-7


def test_cveticanin_identity_plant_converges():
    plant = PlantModel(0, 1, 1, f=(), h=("u1",))
    gen = cveticanin_generator(30.0)
    rec = settle_to_steady_state(plant, gen, ParamPoint(10.0, 3.0))
    assert rec.periods_simulated <= 10
    assert np.max(np.abs(rec.y - rec.u)) == 0.0
    assert np.max(np.abs(rec.u)) == pytest.approx(3.0, rel=1e-6)


def test_subharmonic_response_reports_period_multiple():
    plant = PlantModel(2, 1, 1, f=("0.5*x2", "-0.5*x1"), h=("x1 + 0*u1",))
    gen = harmonic_generator("sine")
    s = IntegratorSettings(max_periods=12, samples_per_period=64, x_init=(1.0, 0.0))
    with pytest.raises(NoConvergence) as info:
        settle_to_steady_state(plant, gen, ParamPoint(1.0, 1.0), s)
    assert info.value.subharmonic == 2
    assert info.value.periods == 12


def test_unstable_plant_raises_integration_error():
    plant = PlantModel(1, 1, 1, f=("x1^2 + u1",), h=("x1",))
    gen = harmonic_generator("sine")
    with pytest.raises((IntegrationError, NoConvergence)):
        settle_to_steady_state(plant, gen, ParamPoint(0.1, 5.0),
                               IntegratorSettings(max_periods=20, samples_per_period=64))


def test_non_periodic_generator_is_rejected():
    gen = GeneratorModel(2, 1, s=("varpi*z2", "-varpi*z1"), ell=("z1",), z0=("0", "a_u"),
                         period="3/varpi", ell_dot=("varpi*z2",))
    plant, _ = builtin_model("lti", {"a1": 1.0})
    with pytest.raises(ModelError):
        settle_to_steady_state(plant, gen, ParamPoint(1.0, 1.0))


def test_zero_input_is_invalid():
    gen = GeneratorModel(2, 1, s=("varpi*z2", "-varpi*z1"), ell=("0*z1",), z0=("0", "a_u"),
                         period="2*pi/varpi", ell_dot=("0*z2",))
    plant, _ = builtin_model("lti", {"a1": 1.0})
    with pytest.raises(InvalidRecord):
        settle_to_steady_state(plant, gen, ParamPoint(1.0, 1.0))


def test_dimension_mismatch():
    plant = PlantModel(1, 2, 1, f=("-x1 + u1 + u2",), h=("x1",))
    with pytest.raises(ModelError):
        DrivenSystem.single(plant, harmonic_generator("sine"), ParamPoint(1, 1))


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(rtol=0.0)
    with pytest.raises(ValueError):
        IntegratorSettings(samples_per_period=4)
    with pytest.raises(ValueError):
        IntegratorSettings(quadrature="simpson", samples_per_period=101)
    with pytest.raises(ValueError):
        IntegratorSettings(max_periods=3, washout_periods=5)
    assert with_settings(None, rtol=1e-6).rtol == 1e-6


def test_periodic_derivative_fourth_order():
    errs = []
    for M in (64, 128):
        t = np.arange(M) * (2 * np.pi / M)
        d = periodic_derivative(np.sin(3 * t), 2 * np.pi)
        errs.append(np.max(np.abs(d - 3 * np.cos(3 * t))))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


@settings(max_examples=12, deadline=None)
@given(a1=st.floats(0.2, 5.0), varpi=st.floats(0.05, 20.0), a_u=st.floats(0.01, 10.0))
def test_lti_gain_independent_of_amplitude(a1, varpi, a_u):
    plant, gen = builtin_model("lti", {"a1": a1})
    rec = settle_to_steady_state(plant, gen, ParamPoint(varpi, a_u),
                                 IntegratorSettings(samples_per_period=256))
    gain = np.sqrt(np.sum(rec.y ** 2) / np.sum(rec.u ** 2))
    assert gain == pytest.approx(1 / math.hypot(a1, varpi), rel=1e-6)
