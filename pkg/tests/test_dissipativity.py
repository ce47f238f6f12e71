import math

import pytest

from nlfreq.analysis import FrequencyResponseSample, frequency_response
from nlfreq.dissipativity import certify, frf_condition, supply_integral
from nlfreq.engine import settle_to_steady_state
from nlfreq.library import builtin_model, harmonic_generator
from nlfreq.model import ParamPoint, PlantModel, SupplyRate

SUPPLIES = [SupplyRate.l2_gain(1.0), SupplyRate.passivity(), SupplyRate.counterclockwise(),
            SupplyRate.output_strict(0.25), SupplyRate.input_strict(0.25),
            SupplyRate.very_strict(0.25, 0.25)]


def _lti(a1=1.0):
    return builtin_model("lti", {"a1": a1})


def _static(k):
    return PlantModel(0, 1, 1, f=(), h=(f"{k}*u1",)), harmonic_generator("sine")


def _settle(model, varpi, a_u):
    plant, gen = model
    rec = settle_to_steady_state(plant, gen, ParamPoint(varpi, a_u))
    return rec, frequency_response(rec)


def test_passivity_integral_value():
    rec, _ = _settle(_lti(), 1.0, 1.0)
    assert supply_integral(rec, SupplyRate.passivity()) == pytest.approx(math.pi / 2, abs=1e-8)


@pytest.mark.parametrize("varpi", [0.1, 1.0, 3.0])
@pytest.mark.parametrize("supply", SUPPLIES, ids=lambda s: s.kind)
def test_lti_integral_matches_closed_form(supply, varpi):
    rec, _ = _settle(_lti(), varpi, 2.0)
    c = supply_integral(rec, supply)
    H = 1 / (1j * varpi + 1)
    T = 2 * math.pi / varpi
    uu = 4.0 * T / 2
    expected = {
        "l2_gain": uu * (1 - abs(H) ** 2),
        "passivity": uu * H.real,
        # <u, y'> = -varpi Im(H) |u|^2 for a harmonic input
        "counterclockwise": -varpi * H.imag * uu,
        "output_strict": uu * (H.real - 0.25 * abs(H) ** 2),
        "input_strict": uu * (H.real - 0.25),
        "very_strict": uu * (H.real - 0.25 * abs(H) ** 2 - 0.25),
    }[supply.kind]
    assert c == pytest.approx(expected, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("supply", SUPPLIES, ids=lambda s: s.kind)
def test_routes_agree_on_lti_grid(supply):
    for varpi in (0.05, 0.3, 1.0, 1.7320508, 4.0, 20.0):
        for a_u in (0.1, 3.0):
            rec, s = _settle(_lti(), varpi, a_u)
            cert = certify(rec, s, supply)
            assert cert.consistent, (supply.kind, varpi, a_u, cert)
            assert cert.verdict != "inconsistent"


def test_input_strict_switches_with_frequency():
    # Re H = 1/(1 + w^2) >= 0.25 exactly when w <= sqrt(3)
    lo = certify(*_settle(_lti(), 1.0, 1.0), SupplyRate.input_strict(0.25))
    hi = certify(*_settle(_lti(), 3.0, 1.0), SupplyRate.input_strict(0.25))
    assert (lo.verdict, hi.verdict) == ("holds", "fails")


def test_static_gains():
    rec, s = _settle(_static(1.0), 1.0, 1.0)
    assert certify(rec, s, SupplyRate.passivity()).verdict == "holds"
    assert certify(rec, s, SupplyRate.input_strict(0.25)).verdict == "holds"
    # <u, u'> = 0: counterclockwise is exactly on the boundary
    assert certify(rec, s, SupplyRate.counterclockwise()).verdict == "indeterminate"
    rec, s = _settle(_static(-1.0), 1.0, 1.0)
    for sup in (SupplyRate.passivity(), SupplyRate.output_strict(0.25),
                SupplyRate.input_strict(0.25), SupplyRate.very_strict(0.25, 0.25)):
        cert = certify(rec, s, sup)
        assert cert.verdict == "fails" and cert.consistent
    assert certify(rec, s, SupplyRate.l2_gain(1.0)).verdict == "indeterminate"
    assert certify(rec, s, SupplyRate.l2_gain(2.0)).verdict == "holds"


def test_frf_condition_degenerate_branch():
    s = FrequencyResponseSample(None, 0.0, math.nan, math.nan, math.nan, math.nan, 0j,
                                math.nan, math.nan, math.nan, True)
    assert frf_condition(s, SupplyRate.passivity()) == (True, 0.0)
    assert frf_condition(s, SupplyRate.input_strict(0.5)) == (False, -0.5)
    assert frf_condition(s, SupplyRate.l2_gain(1.0)) == (True, 1.0)


def test_frf_condition_very_strict_interval():
    # alpha must lie between the roots of g1 a^2 - r cos(th) a + g2
    sup = SupplyRate.very_strict(0.25, 0.25)
    inside = FrequencyResponseSample.from_polar(None, 2.0, 0.0, 1.0)
    outside = FrequencyResponseSample.from_polar(None, 0.1, 0.0, 1.0)
    assert frf_condition(inside, sup)[0] and not frf_condition(outside, sup)[0]
    with pytest.raises(ValueError):
        frf_condition(inside, SupplyRate.custom("u1*y1"))


def test_custom_supply():
    rec, s = _settle(_lti(), 1.0, 1.0)
    cert = certify(rec, s, SupplyRate.custom("u1*y1 - 0.1*y1^2"))
    assert cert.holds_frf is None and math.isnan(cert.margin)
    assert cert.verdict == "holds"
    assert cert.c_omega == pytest.approx(math.pi * (0.5 - 0.1 * 0.5), rel=1e-6)
    ccw = supply_integral(rec, SupplyRate.custom("u1*ydot1"))
    assert ccw == pytest.approx(supply_integral(rec, SupplyRate.counterclockwise()), rel=1e-12)
