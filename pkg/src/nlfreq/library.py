"""Built-in plants and signal generators, plus the special functions they need."""

import math

from .errors import ModelError
from .model import GeneratorModel, LtiRealization, PlantModel

__all__ = [
    "builtin_model", "euler_beta", "cveticanin_k_alpha", "harmonic_generator",
    "cveticanin_generator", "gene_equilibrium", "BUILTIN_NAMES", "PAPER_PARAMS", "BUILTIN_SETTINGS",
]


def euler_beta(a, b):
    """Euler beta function ``B(a, b)`` evaluated through log-gamma.

    Parameters
    ----------
    a, b : float
        Strictly positive arguments.

    Returns
    -------
    float
    """
    a = float(a)
    b = float(b)
    if not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"euler_beta requires positive finite arguments, got ({a}, {b})")
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def cveticanin_k_alpha(alpha):
    """Frequency normalisation ``4/sqrt(2(alpha+1)) * B(1/(alpha+1), 1/2)``.

    With this constant the oscillator ``z1'' = -(varpi k/(2 pi))^2 z1 |z1/a|^(alpha-1)``
    has period ``2 pi / varpi`` for every amplitude ``a``.
    """
    alpha = float(alpha)
    if not (alpha > 0) or not math.isfinite(alpha):
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return 4.0 / math.sqrt(2.0 * (alpha + 1.0)) * euler_beta(1.0 / (alpha + 1.0), 0.5)


def harmonic_generator(phase="sine", m=1):
    """Harmonic oscillator ``z' = S(varpi) z``, ``u = z1``.

    ``phase="sine"`` starts at ``z0 = (a_u sin phi_u, a_u cos phi_u)`` so that
    ``u(t) = a_u sin(varpi t + phi_u)`` (``phi_u`` defaults to 0);
    ``phase="cosine"`` starts at ``z0 = (a_u, 0)``, i.e. ``u = a_u cos(varpi t)``.
    """
    if m != 1:
        raise ModelError("harmonic generator is single-output")
    if phase == "sine":
        z0 = ("a_u*sin(phi_u)", "a_u*cos(phi_u)")
    elif phase == "cosine":
        z0 = ("a_u", "0")
    else:
        raise ModelError(f"unknown phase convention {phase!r}")
    return GeneratorModel(
        r=2, m=1,
        s=("varpi*z2", "-varpi*z1"),
        ell=("z1",),
        ell_dot=("varpi*z2",),
        z0=z0,
        period="2*pi/varpi",
        params={"phi_u": 0.0},
        name=f"harmonic_{phase}",
    )


def cveticanin_generator(alpha):
    """Nonsmooth oscillator with amplitude-independent period ``2 pi/varpi``."""
    k = cveticanin_k_alpha(alpha)
    return GeneratorModel(
        r=2, m=1,
        s=("z2", "-(varpi*k_alpha/(2*pi))^2*z1*abs(z1/a_u)^(alpha - 1)"),
        ell=("z1",),
        ell_dot=("z2",),
        z0=("a_u", "0"),
        period="2*pi/varpi",
        params={"alpha": float(alpha), "k_alpha": k},
        name="cveticanin",
    )


def _require(params, names, model):
    out = {}
    for name in names:
        if name not in params:
            raise ModelError(f"{model}: missing parameter {name!r}")
        v = float(params[name])
        if not math.isfinite(v):
            raise ModelError(f"{model}: parameter {name!r} must be finite")
        out[name] = v
    extra = set(params) - set(names)
    if extra:
        raise ModelError(f"{model}: unexpected parameter(s) {sorted(extra)}")
    return out


def _example1(params):
    p = _require(params, ("a1", "a2", "a3", "b1", "c1"), "example1")
    plant = PlantModel(
        2, 1, 1,
        f=("-a1*x1 + u1", "-a2*x1^2 - a3*x2 + b1*x1*u1"),
        h=("x1 + c1*x1*x2",),
        params=p, name="example1",
    )
    return plant, harmonic_generator("cosine")


def _lti(params):
    params = dict(params)
    if {"A", "B", "C"} <= set(params):
        real = LtiRealization(params["A"], params["B"], params["C"])
        return real.to_plant(), harmonic_generator("sine")
    allowed = {"a1", "b1", "c1"}
    if "a1" not in params:
        raise ModelError("lti: missing parameter 'a1' (or matrices A, B, C)")
    extra = set(params) - allowed
    if extra:
        raise ModelError(f"lti: unexpected parameter(s) {sorted(extra)}")
    p = {"a1": float(params["a1"]), "b1": float(params.get("b1", 1.0)),
         "c1": float(params.get("c1", 1.0))}
    if not p["a1"] > 0:
        raise ModelError("lti: a1 must be positive for a stable pole at -a1")
    plant = PlantModel(1, 1, 1, f=("-a1*x1 + b1*u1",), h=("c1*x1",), params=p, name="lti")
    return plant, harmonic_generator("sine")


def _cveticanin(params):
    p = _require(params, ("alpha",), "cveticanin_gen")
    if p["alpha"] <= 0:
        raise ModelError("cveticanin_gen: alpha must be positive")
    plant = PlantModel(
        2, 1, 1,
        f=("-0.1*x1 + u1", "-10*abs(sin(x1)) - 3*x2 + 2*x1"),
        h=("5*x1 + 3*x1*x2",),
        differentiable=False, name="cveticanin_plant",
    )
    return plant, cveticanin_generator(p["alpha"])


def gene_equilibrium(gamma, k_on, k_off, p_tot, u_bar, K, K_u):
    """Equilibrium ``(x1*, x2*)`` of the saturated gene regulatory model."""
    den = gamma * (K_u + u_bar) - u_bar
    if not den > 0:
        raise ModelError("gene_regulatory: gamma*(K_u + u_bar) - u_bar must be positive")
    x1 = K * u_bar / den
    x2 = k_on * p_tot * x1 / (k_off + k_on * x1)
    return x1, x2


def _gene(params):
    names = ("gamma", "k_on", "k_off", "p_tot", "u_bar", "K", "K_u")
    p = _require(params, names, "gene_regulatory")
    for name in names:
        if p[name] <= 0:
            raise ModelError(f"gene_regulatory: {name} must be positive, got {p[name]!r}")
    x1s, x2s = gene_equilibrium(**p)
    p.update(x1s=x1s, x2s=x2s)
    # Written as differences against the equilibrium so that f(0, 0) == 0
    # holds exactly in floating point.
    aux = (
        ("X1", "x1 + x1s"),
        ("X2", "x2 + x2s"),
        ("dw", "(k_off*X2 - k_on*(p_tot - X2)*X1) - (k_off*x2s - k_on*(p_tot - x2s)*x1s)"),
        ("ddeg", "gamma*X1/(K + X1) - gamma*x1s/(K + x1s)"),
        ("dprod", "(u_bar + u1)/(K_u + u_bar + u1) - u_bar/(K_u + u_bar)"),
    )
    plant = PlantModel(
        2, 1, 1,
        f=("dw - ddeg + dprod", "-dw"),
        h=("x1",),
        params=p, aux=aux, name="gene_regulatory",
    )
    return plant, harmonic_generator("sine")


def _example5(params):
    _require(params, (), "example5_plant")
    plant = PlantModel(
        2, 1, 1,
        f=("x1 + u1 + v1", "-x2 + x1*u1 + v2"),
        h=("x1 + tanh(x1 + x2)",),
        n_v=2, name="example5_plant",
    )
    # z0 = (0, a_u): the sine convention
    return plant, harmonic_generator("sine")


def _harmonic(params):
    params = dict(params)
    phase = params.pop("cosine", 0.0)
    _require(params, (), "harmonic_gen")
    plant = PlantModel(0, 1, 1, f=(), h=("u1",), name="identity")
    return plant, harmonic_generator("cosine" if phase else "sine")


_BUILDERS = {
    "example1": _example1,
    "lti": _lti,
    "cveticanin_gen": _cveticanin,
    "gene_regulatory": _gene,
    "example5_plant": _example5,
    "harmonic_gen": _harmonic,
}

BUILTIN_NAMES = tuple(_BUILDERS)

PAPER_PARAMS = {
    "example1": {"a1": 0.5, "a2": 1.0, "a3": 1.0, "b1": 1.0, "c1": 1.0},
    "lti": {"a1": 0.5},
    "cveticanin_gen": {"alpha": 30.0},
    "gene_regulatory": {"gamma": 5.0, "k_on": 1.0, "k_off": 0.5, "p_tot": 20.0,
                        "u_bar": 100.5, "K": 0.05, "K_u": 0.1},
    "example5_plant": {},
    "harmonic_gen": {},
}

# Integrator defaults that differ from IntegratorSettings. The gene model's
# output sensitivity is about 1e-5, so at small amplitudes its states sit far
# below the generic atol and the settling residual would stall on solver noise.
BUILTIN_SETTINGS = {
    "gene_regulatory": {"atol": 1e-20},
}


def builtin_model(name, params=None):
    """Return ``(PlantModel, GeneratorModel)`` for a built-in model.

    Parameters
    ----------
    name : str
        One of ``example1``, ``lti``, ``cveticanin_gen``, ``gene_regulatory``,
        ``example5_plant``, ``harmonic_gen``.
    params : dict
        Model coefficients; see ``PAPER_PARAMS`` for the reference values.

    Notes
    -----
    ``gene_regulatory`` is returned in shifted coordinates: input
    ``u - u_bar`` and output ``x1 - x1*``. ``example5_plant`` is the open
    plant with feedback channels ``v1, v2``; close the loop with
    :func:`nlfreq.loopshaping.compose_closed_loop`. ``harmonic_gen`` pairs the
    oscillator with the identity plant ``y = u``.
    """
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ModelError(f"unknown built-in model {name!r}; expected one of "
                         f"{', '.join(BUILTIN_NAMES)}") from None
    return builder(dict(params or {}))
