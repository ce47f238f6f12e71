import math

import numpy as np
import pytest

from nlfreq.errors import IncommensurateFrequencies, ModelError
from nlfreq.library import builtin_model, harmonic_generator
from nlfreq.model import ParamPoint
from nlfreq.multitone import (MultiInputSpec, common_period, multi_steady_state,
                              superposition_report)


def spec(*tones):
    return MultiInputSpec.from_tones([dict(varpi=w, a_u=a, weight=k) for w, a, k in tones])


def test_common_period_rational():
    assert common_period(spec((1.0, 1.0, 1.0), (2.5, 1.0, 1.0))) == pytest.approx(4 * math.pi)
    assert common_period(spec((3.0, 1.0, 1.0), (2.0, 1.0, 1.0))) == pytest.approx(2 * math.pi)
    assert common_period(spec((1.0, 1.0, 1.0))) == pytest.approx(2 * math.pi)


def test_common_period_incommensurate():
    with pytest.raises(IncommensurateFrequencies):
        common_period(spec((1.0, 1.0, 1.0), (math.sqrt(2), 1.0, 1.0)))
    # denominator 67 exceeds the bound
    with pytest.raises(IncommensurateFrequencies):
        common_period(spec((1.0, 1.0, 1.0), (67 / 66, 1.0, 1.0)))


def test_two_tone_lti_is_superposition():
    plant, gen = builtin_model("lti", {"a1": 0.5})
    sp = spec((1.0, 1.0, 1.0), (2.5, 0.4, 2.0))
    rec = multi_steady_state(plant, gen, sp)
    y = np.zeros_like(rec.t)
    for om, w in sp.entries:
        H = 1 / (1j * om.varpi + 0.5)
        y += w * om.a_u * abs(H) * np.sin(om.varpi * rec.t + np.angle(H))
    assert np.max(np.abs(rec.y[:, 0] - y)) < 1e-8
    # the generator state is integrated, so u is exact only to solver tolerance
    u = np.sin(rec.t) + 0.8 * np.sin(2.5 * rec.t)
    assert np.max(np.abs(rec.u[:, 0] - u)) < 1e-8


def test_superposition_report_lti():
    plant, gen = builtin_model("lti", {"a1": 0.5})
    rep = superposition_report(plant, gen, spec((1.0, 1.0, 1.0), (2.5, 0.4, 2.0)))
    assert rep.period == pytest.approx(4 * math.pi)
    assert rep.alphas == pytest.approx([1 / math.hypot(0.5, w) for w in (1.0, 2.5)])
    assert rep.weight_norms == (1.0, 2.0)
    assert rep.y_norm <= rep.triangle_bound * (1 + 1e-9)
    assert math.isfinite(rep.b_star) and rep.b_star > 0
    for rc, rs, w in zip(rep.r_cos, rep.r_sin, (1.0, 2.5)):
        H = 1 / (1j * w + 0.5)
        assert rc == pytest.approx(H.real / abs(H), abs=1e-9)
        assert rs == pytest.approx(H.imag / abs(H), abs=1e-9)


def test_matrix_weight():
    plant, gen = builtin_model("lti", {"a1": 1.0})
    sp = MultiInputSpec([(ParamPoint(1.0, 1.0), [[2.0]]), (ParamPoint(2.0, 1.0), -1.0)])
    rep = superposition_report(plant, gen, sp)
    assert rep.weight_norms == (2.0, 1.0)


def test_zero_weights_rejected():
    plant, gen = builtin_model("lti", {"a1": 1.0})
    with pytest.raises(ModelError):
        multi_steady_state(plant, gen, spec((1.0, 1.0, 0.0), (2.0, 1.0, 0.0)))
    with pytest.raises(ModelError):
        MultiInputSpec([])
    with pytest.raises(ModelError):
        MultiInputSpec([(ParamPoint(1.0, 1.0), math.nan)])


def test_one_zero_weight_reduces_to_single_tone():
    plant, gen = builtin_model("lti", {"a1": 1.0})
    rep = superposition_report(plant, gen, spec((1.0, 1.0, 1.0), (2.0, 1.0, 0.0)))
    # |Y| = alpha |u| and |u| over 2 pi at unit amplitude is sqrt(pi)
    assert rep.b_star == pytest.approx(math.sqrt(math.pi), rel=1e-7)
    assert rep.y_norm == pytest.approx(rep.triangle_bound, rel=1e-7)
