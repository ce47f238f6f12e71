import math

import numpy as np
import pytest

from nlfreq.errors import ExpressionError, ModelError
from nlfreq.model import (LtiRealization, ParamPoint, PlantModel, SpecSet, SupplyRate,
                          SweepGrid)


def test_param_point_validation():
    om = ParamPoint(1.0, 2.0, phi_u=0.3)
    assert om.as_dict() == {"varpi": 1.0, "a_u": 2.0, "phi_u": 0.3}
    for bad in [(0.0, 1.0), (1.0, -1.0), (math.nan, 1.0), (1.0, math.inf)]:
        with pytest.raises(ModelError):
            ParamPoint(*bad)
    with pytest.raises(ModelError):
        ParamPoint(1.0, 1.0, {"varpi": 2.0})
    assert hash(ParamPoint(1, 2)) == hash(ParamPoint(1.0, 2.0))


def test_plant_rejects_undeclared_names():
    with pytest.raises(ExpressionError) as info:
        PlantModel(1, 1, 1, f=("-k*x1",), h=("x1",), params={"a": 1.0})
    assert info.value.offset == 1
    with pytest.raises(ExpressionError):
        PlantModel(1, 1, 1, f=("-x1 + u2",), h=("x1",))
    with pytest.raises(ExpressionError):
        PlantModel(1, 1, 1, f=("-x1 + v1",), h=("x1 + v1",), n_v=1)
    with pytest.raises(ModelError):
        PlantModel(2, 1, 1, f=("-x1",), h=("x1",))


def test_plant_aux_and_params():
    p = PlantModel(1, 1, 1, f=("-k*w",), h=("w + u1",), params={"k": 2.0},
                   aux=(("w", "x1^2"),))
    assert p.eval_f([3.0], [0.0]) == pytest.approx([-18.0])
    assert p.eval_h([3.0], [1.0]) == pytest.approx([10.0])
    with pytest.raises(ModelError):
        PlantModel(1, 1, 1, f=("-x1",), h=("x1",), aux=(("x1", "1"),))


def test_memoryless_plant():
    p = PlantModel(0, 1, 1, f=(), h=("-u1",))
    assert p.eval_h([], [2.0]) == pytest.approx([-2.0])


def test_lti_realization():
    real = LtiRealization([[-1.0, 2.0], [0.0, -3.0]], [1.0, 1.0], [1.0, 0.0])
    assert (real.n, real.m, real.p) == (2, 1, 1)
    plant = real.to_plant()
    x, u = np.array([0.4, -1.1]), np.array([0.7])
    assert plant.eval_f(x, u) == pytest.approx(real.A @ x + real.B @ u)
    assert plant.eval_h(x, u) == pytest.approx(real.C @ x)
    with pytest.raises(ModelError):
        LtiRealization([[0.1]], [1.0], [1.0])


def test_supply_rates():
    u = np.array([[1.0], [2.0]])
    y = np.array([[3.0], [-1.0]])
    assert SupplyRate.l2_gain(2.0).evaluate(u, y) == pytest.approx([4 - 9, 16 - 1])
    assert SupplyRate.passivity().evaluate(u, y) == pytest.approx([3.0, -2.0])
    assert SupplyRate.very_strict(0.5, 0.25).evaluate(u, y) == pytest.approx(
        [3 - 4.5 - 0.25, -2 - 0.5 - 1.0])
    assert SupplyRate.custom("u1*y1 - y1^2").evaluate(u, y) == pytest.approx([-6.0, -3.0])
    assert SupplyRate.counterclockwise().needs_ydot
    with pytest.raises(ModelError):
        SupplyRate.l2_gain(0.0)
    with pytest.raises(ModelError):
        SupplyRate("bogus")


def test_spec_set_validation():
    s = SpecSet((0.0, 1.0))
    assert s.theta_range == (-math.pi, math.pi)
    with pytest.raises(ModelError):
        SpecSet((1.0, 0.0))
    with pytest.raises(ModelError):
        SpecSet((0.0, 1.0), radius_range=(0.5, 1.5))


def test_sweep_grid():
    g = SweepGrid.logspace(n_varpi=3, n_a_u=2)
    assert g.varpi_values[0] == pytest.approx(1e-2)
    assert g.varpi_values[-1] == pytest.approx(1e2)
    pts = g.points()
    assert len(pts) == 6
    assert [p.varpi for p in pts[:2]] == [g.varpi_values[0]] * 2
    with pytest.raises(ModelError):
        SweepGrid((1.0, 1.0), (1.0,))
    with pytest.raises(ModelError):
        SweepGrid((1.0,), (-1.0,))
