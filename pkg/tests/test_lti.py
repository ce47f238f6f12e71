import cmath

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlfreq.errors import ModelError, SingularSystemError
from nlfreq.lti import (lu_factor, lu_solve, lti_reference_response, oscillator_matrices,
                        sylvester_closed_form, sylvester_direct, sylvester_residual,
                        transfer_eval)
from nlfreq.model import LtiRealization, ParamPoint


def random_stable(rng, n):
    A = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 2.0)
    return A - shift * np.eye(n), rng.normal(size=(n, 1)), rng.normal(size=(1, n))


def test_lu_matches_numpy():
    rng = np.random.default_rng(0)
    for n in (1, 3, 8):
        a = rng.normal(size=(n, n))
        b = rng.normal(size=(n, 2))
        assert np.allclose(lu_solve(lu_factor(a), b), np.linalg.solve(a, b), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_closed_form_matches_kronecker_route(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    A, B, _ = random_stable(rng, n)
    varpi = float(rng.uniform(0.01, 50))
    S, L = oscillator_matrices(varpi)
    Phi = sylvester_closed_form(A, B, varpi)
    ref = sylvester_direct(A, S, B @ L)
    assert np.allclose(Phi, ref, rtol=1e-9, atol=1e-12)
    assert sylvester_residual(A, B, varpi, Phi) < 1e-9 * max(1.0, np.linalg.norm(A))


def test_transfer_first_order():
    H = transfer_eval([[-0.5]], [[1.0]], [[1.0]], 2.0)
    assert H == pytest.approx(1 / (2j + 0.5), abs=1e-15)


def test_transfer_against_numpy_resolvent():
    rng = np.random.default_rng(7)
    for _ in range(20):
        A, B, C = random_stable(rng, 4)
        w = float(rng.uniform(0.01, 100))
        ref = (C @ np.linalg.solve(1j * w * np.eye(4) - A, B))[0, 0]
        assert transfer_eval(A, B, C, w) == pytest.approx(ref, rel=1e-10)


def test_singular_sylvester():
    S, L = oscillator_matrices(1.0)
    with pytest.raises(SingularSystemError):
        sylvester_direct(S, S, np.eye(2))


def test_bad_inputs():
    with pytest.raises(ModelError):
        transfer_eval([[-1.0]], [[1.0]], [[1.0]], 0.0)
    with pytest.raises(ModelError):
        transfer_eval(-np.eye(2), np.eye(2), np.eye(2), 1.0)
    with pytest.raises(ModelError):
        LtiRealization([[1.0]], [[1.0]], [[1.0]])


def test_reference_response():
    real = LtiRealization([[-0.5]], [[1.0]], [[1.0]])
    s = lti_reference_response(real, ParamPoint(2.0, 7.0))
    H = 1 / (2j + 0.5)
    assert s.alpha == pytest.approx(abs(H))
    assert s.theta == pytest.approx(cmath.phase(H))
    assert s.radius == 1.0 and s.residual_sq == 0.0
    assert s.gamma == pytest.approx(H)
    assert s.lambda2 == pytest.approx(H.imag / 2.0)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.05, 20), w=st.floats(1e-3, 1e3))
def test_first_order_gain_phase(a, w):
    s = lti_reference_response(LtiRealization([[-a]], [[1.0]], [[1.0]]), ParamPoint(w, 1.0))
    assert s.alpha == pytest.approx(1 / np.hypot(a, w), rel=1e-12)
    assert s.theta == pytest.approx(-np.arctan2(w, a), abs=1e-12)
