"""Run configuration: JSON schema 1, validated with JSON-path diagnostics.

Top-level keys: ``schema`` (must be 1), ``model``, ``generator``, ``grids``,
``integrator``, ``supply``, ``multi``, ``feedback`` and ``spec``. Unknown
keys are rejected at every level.
"""

import json
import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .engine import IntegratorSettings
from .errors import ConfigError, NlfreqError
from .library import (BUILTIN_NAMES, BUILTIN_SETTINGS, PAPER_PARAMS, builtin_model,
                      cveticanin_generator, harmonic_generator)
from .loopshaping import FEEDBACK_BUILDERS
from .model import GeneratorModel, LtiRealization, PlantModel, SpecSet, SupplyRate, SweepGrid
from .multitone import MultiInputSpec

__all__ = ["RunConfig", "load_config", "parse_config", "SCHEMA_VERSION", "DEFAULT_RANGE"]

SCHEMA_VERSION = 1
DEFAULT_RANGE = (1e-2, 1e2)
DEFAULT_POINTS = 20

_TOP = {"schema", "model", "generator", "grids", "integrator", "supply", "multi",
        "feedback", "spec"}


def _join(path, key):
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _obj(value, path, allowed, required=()):
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    for k in value:
        if k not in allowed:
            raise ConfigError(_join(path, k), "unknown key")
    for k in required:
        if k not in value:
            raise ConfigError(_join(path, k), "required key is missing")
    return value


def _num(value, path, positive=False, integer=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "expected a number")
    if integer and not isinstance(value, int):
        raise ConfigError(path, "expected an integer")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and value <= 0:
        raise ConfigError(path, "must be positive")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be at least {minimum}")
    return value


def _list(value, path, length=None):
    if not isinstance(value, list):
        raise ConfigError(path, "expected an array")
    if length is not None and len(value) != length:
        raise ConfigError(path, f"expected {length} entries")
    return value


def _str(value, path):
    if not isinstance(value, str):
        raise ConfigError(path, "expected a string")
    return value


def _exprs(value, path):
    out = []
    for i, e in enumerate(_list(value, path)):
        if isinstance(e, (int, float)) and not isinstance(e, bool):
            out.append(str(e))
        else:
            out.append(_str(e, _join(path, i)))
    return out


def _params(value, path):
    _obj(value, path, set(value) if isinstance(value, dict) else ())
    out = {}
    for k, v in value.items():
        if isinstance(v, list):
            out[k] = np.array(v, dtype=float) if _matrix(v, _join(path, k)) else v
        else:
            out[k] = _num(v, _join(path, k))
    return out


def _matrix(value, path):
    for i, row in enumerate(value):
        if isinstance(row, list):
            for j, v in enumerate(row):
                _num(v, _join(_join(path, i), j))
        else:
            _num(row, _join(path, i))
    return True


def _wrap(path, fn, *args, **kwargs):
    """Run a model constructor, reporting its failure at ``path``."""
    try:
        return fn(*args, **kwargs)
    except NlfreqError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _model(value):
    path = "model"
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    if "builtin" in value:
        _obj(value, path, {"builtin", "params"})
        name = _str(value["builtin"], "model.builtin")
        if name not in BUILTIN_NAMES:
            raise ConfigError("model.builtin",
                              f"unknown built-in model; expected one of {', '.join(BUILTIN_NAMES)}")
        params = _params(value["params"], "model.params") if "params" in value \
            else dict(PAPER_PARAMS.get(name, {}))
        plant, gen = _wrap(path, builtin_model, name, params)
        real = None
        if name == "lti":
            real = _lti_realization(params)
        return name, plant, gen, real
    _obj(value, path, {"n", "m", "p", "f", "h", "params", "aux", "n_v", "differentiable",
                       "name"}, required=("n", "m", "p", "f", "h"))
    dims = {k: _num(value[k], _join(path, k), integer=True, minimum=0) for k in ("n", "m", "p")}
    aux = []
    for i, item in enumerate(_list(value.get("aux", []), "model.aux")):
        p = _join("model.aux", i)
        _list(item, p, 2)
        aux.append((_str(item[0], _join(p, 0)), _str(item[1], _join(p, 1))))
    plant = _wrap(path, PlantModel, dims["n"], dims["m"], dims["p"],
                  f=_exprs(value["f"], "model.f"), h=_exprs(value["h"], "model.h"),
                  params=_params(value.get("params", {}), "model.params"), aux=aux,
                  n_v=_num(value.get("n_v", 0), "model.n_v", integer=True, minimum=0),
                  differentiable=bool(value.get("differentiable", True)),
                  name=_str(value.get("name", "custom"), "model.name"))
    return plant.name, plant, None, None


def _lti_realization(params):
    if {"A", "B", "C"} <= set(params):
        return LtiRealization(params["A"], params["B"], params["C"])
    a1, b1, c1 = params["a1"], params.get("b1", 1.0), params.get("c1", 1.0)
    return LtiRealization([[-a1]], [[b1]], [[c1]])


def _with_params(gen, params):
    merged = dict(gen.params)
    merged.update(params)
    return GeneratorModel(gen.r, gen.m, gen.s, gen.ell, gen.z0, gen.period,
                          ell_dot=gen.ell_dot, params=merged, name=gen.name)


def _generator(value, default):
    path = "generator"
    if value is None:
        if default is None:
            raise ConfigError(path, "required for models without a default generator")
        return default
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    if "builtin" in value:
        name = _str(value["builtin"], "generator.builtin")
        if name == "harmonic":
            _obj(value, path, {"builtin", "phase", "params"})
            phase = _str(value.get("phase", "sine"), "generator.phase")
            if phase not in ("sine", "cosine"):
                raise ConfigError("generator.phase", "expected 'sine' or 'cosine'")
            gen = harmonic_generator(phase)
        elif name == "cveticanin":
            _obj(value, path, {"builtin", "alpha", "params"}, required=("alpha",))
            gen = _wrap(path, cveticanin_generator,
                        _num(value["alpha"], "generator.alpha", positive=True))
        else:
            raise ConfigError("generator.builtin", "expected 'harmonic' or 'cveticanin'")
        if "params" in value:
            gen = _wrap(path, _with_params, gen, _params(value["params"], "generator.params"))
        return gen
    _obj(value, path, {"r", "m", "s", "ell", "ell_dot", "z0", "period", "params", "name"},
         required=("r", "m", "s", "ell", "z0", "period"))
    ell_dot = _exprs(value["ell_dot"], "generator.ell_dot") if "ell_dot" in value else None
    period = value["period"]
    period = str(period) if isinstance(period, (int, float)) else _str(period, "generator.period")
    return _wrap(path, GeneratorModel,
                 _num(value["r"], "generator.r", integer=True, minimum=1),
                 _num(value["m"], "generator.m", integer=True, minimum=1),
                 _exprs(value["s"], "generator.s"), _exprs(value["ell"], "generator.ell"),
                 _exprs(value["z0"], "generator.z0"), period, ell_dot=ell_dot,
                 params=_params(value.get("params", {}), "generator.params"),
                 name=_str(value.get("name", "custom"), "generator.name"))


def _axis(value, name):
    vals_key, range_key, n_key = f"{name}_values", f"{name}_range", f"n_{name}"
    if vals_key in value:
        if range_key in value or n_key in value:
            raise ConfigError(_join("grids", vals_key), f"conflicts with {range_key}/{n_key}")
        vals = _list(value[vals_key], _join("grids", vals_key))
        if not vals:
            raise ConfigError(_join("grids", vals_key), "must be nonempty")
        prev = None
        for i, v in enumerate(vals):
            p = _join(_join("grids", vals_key), i)
            _num(v, p, positive=True)
            if prev is not None and v <= prev:
                raise ConfigError(p, "values must be strictly increasing")
            prev = v
        return tuple(float(v) for v in vals)
    lo, hi = DEFAULT_RANGE
    if range_key in value:
        p = _join("grids", range_key)
        lo, hi = _list(value[range_key], p, 2)
        _num(lo, _join(p, 0), positive=True)
        _num(hi, _join(p, 1), positive=True)
        if hi < lo:
            raise ConfigError(p, "upper bound below lower bound")
    n = _num(value.get(n_key, DEFAULT_POINTS), _join("grids", n_key), integer=True, minimum=1)
    if n == 1 or lo == hi:
        return (float(lo),)
    return tuple(float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n))


def _grids(value):
    value = _obj(value if value is not None else {}, "grids",
                 {"varpi_values", "a_u_values", "varpi_range", "a_u_range", "n_varpi", "n_a_u"})
    return SweepGrid(_axis(value, "varpi"), _axis(value, "a_u"))


_SETTINGS = {f.name for f in fields(IntegratorSettings)}


def _integrator(value, model_name=None):
    value = _obj(value if value is not None else {}, "integrator", _SETTINGS)
    kw = dict(BUILTIN_SETTINGS.get(model_name, {}))
    for k, v in value.items():
        p = _join("integrator", k)
        if k == "quadrature":
            kw[k] = _str(v, p)
        elif k == "x_init":
            kw[k] = tuple(_num(x, _join(p, i)) for i, x in enumerate(_list(v, p)))
        elif k in ("samples_per_period", "washout_periods", "max_periods", "max_steps"):
            kw[k] = _num(v, p, integer=True, minimum=0)
        else:
            kw[k] = _num(v, p, minimum=0)
    return _wrap("integrator", IntegratorSettings, **kw)


def _supply(value):
    if value is None:
        return None
    _obj(value, "supply", {"kind", "gamma", "gamma1", "gamma2", "expr"}, required=("kind",))
    kw = {"kind": _str(value["kind"], "supply.kind")}
    for k in ("gamma", "gamma1", "gamma2"):
        if k in value:
            kw[k] = float(_num(value[k], _join("supply", k)))
    if "expr" in value:
        kw["expr"] = _str(value["expr"], "supply.expr")
    return _wrap("supply", SupplyRate, **kw)


def _multi(value):
    if value is None:
        return None
    _obj(value, "multi", {"tones"}, required=("tones",))
    tones = _list(value["tones"], "multi.tones")
    if not tones:
        raise ConfigError("multi.tones", "must be nonempty")
    checked = []
    for i, tone in enumerate(tones):
        p = _join("multi.tones", i)
        if not isinstance(tone, dict):
            raise ConfigError(p, "expected an object")
        _obj(tone, p, set(tone), required=("varpi", "a_u"))
        t = {}
        for k, v in tone.items():
            if k == "weight" and isinstance(v, list):
                _matrix(v, _join(p, k))
                t[k] = np.array(v, dtype=float)
            else:
                t[k] = _num(v, _join(p, k), positive=k in ("varpi", "a_u"))
        checked.append(t)
    return _wrap("multi", MultiInputSpec.from_tones, checked)


@dataclass(frozen=True)
class FeedbackConfig:
    kappa: tuple
    f_p: tuple
    params: dict
    horizon: float = 200.0
    name: str = "custom"


def _feedback(value):
    if value is None:
        return None
    path = "feedback"
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    horizon = float(_num(value.get("horizon", 200.0), "feedback.horizon", positive=True))
    if "builtin" in value:
        _obj(value, path, {"builtin", "K", "horizon"}, required=("K",))
        name = _str(value["builtin"], "feedback.builtin")
        if name not in FEEDBACK_BUILDERS:
            raise ConfigError("feedback.builtin",
                              f"expected one of {', '.join(sorted(FEEDBACK_BUILDERS))}")
        kappa, f_p, params = FEEDBACK_BUILDERS[name](_num(value["K"], "feedback.K"))
        return FeedbackConfig(kappa, f_p, params, horizon, name)
    _obj(value, path, {"kappa", "f_p", "params", "horizon"}, required=("kappa",))
    return FeedbackConfig(tuple(_exprs(value["kappa"], "feedback.kappa")),
                          tuple(_exprs(value.get("f_p", []), "feedback.f_p")),
                          _params(value.get("params", {}), "feedback.params"), horizon)


def _spec(value):
    if value is None:
        return None
    _obj(value, "spec", {"alpha_range", "theta_range", "radius_range"}, required=("alpha_range",))
    kw = {}
    for k in ("alpha_range", "theta_range", "radius_range"):
        if k in value:
            p = _join("spec", k)
            pair = _list(value[k], p, 2)
            kw[k] = tuple(float(_num(v, _join(p, i))) for i, v in enumerate(pair))
    return _wrap("spec", SpecSet, **kw)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    raw: dict
    model_name: str
    plant: PlantModel
    generator: GeneratorModel
    realization: Optional[LtiRealization]
    grid: SweepGrid
    settings: IntegratorSettings
    supply: Optional[SupplyRate]
    multi: Optional[MultiInputSpec]
    feedback: Optional[FeedbackConfig]
    spec: Optional[SpecSet]


def parse_config(raw):
    """Validate a decoded JSON document.

    Raises
    ------
    ConfigError
        With ``path`` set to the offending JSON location, e.g.
        ``grids.a_u_values[0]``.
    """
    _obj(raw, "", _TOP, required=("schema", "model"))
    if raw["schema"] != SCHEMA_VERSION or isinstance(raw["schema"], bool):
        raise ConfigError("schema", f"unsupported schema version {raw['schema']!r}")
    name, plant, default_gen, real = _model(raw["model"])
    generator = _generator(raw.get("generator"), default_gen)
    return RunConfig(
        raw=raw, model_name=name, plant=plant, generator=generator, realization=real,
        grid=_grids(raw.get("grids")), settings=_integrator(raw.get("integrator"), name if "builtin" in raw["model"] else None),
        supply=_supply(raw.get("supply")), multi=_multi(raw.get("multi")),
        feedback=_feedback(raw.get("feedback")), spec=_spec(raw.get("spec")))


def load_config(path):
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)
