"""Compare the compiled and pure-Python kernels.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each case is
timed on both backends and the results are checked to be bitwise equal.
"""

import argparse
import time

import numpy as np

from nlfreq import _backend, _pykernels, dsl
from nlfreq.engine import IntegratorSettings, settle_to_steady_state
from nlfreq.library import PAPER_PARAMS, builtin_model
from nlfreq.model import ParamPoint
from nlfreq.program import ProgramBuilder


def van_der_pol(mu=2.0):
    b = ProgramBuilder(2)
    env = {"mu": mu, "t": b.time_slot, "x1": b.state_slot(0), "x2": b.state_slot(1)}
    for k, e in enumerate(("x2", "mu*(1 - x1^2)*x2 - x1")):
        b.output(k, dsl.as_expression(e, set(env)), env)
    return b.build()


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def integrate_case(kernels):
    prog = van_der_pol()
    times = np.linspace(0.0, 50.0, 2001)[1:]
    return lambda: kernels.dopri5(prog, 0.0, np.array([2.0, 0.0]), 50.0, times, 1e-10, 1e-12)[0]


def eval_case(kernels):
    prog = van_der_pol()
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 1, 20000)
    x = rng.normal(size=(20000, 2))
    return lambda: kernels.eval_program(prog, t, x)


def settle_case(kernels):
    plant, gen = builtin_model("example1", PAPER_PARAMS["example1"])
    settings = IntegratorSettings(samples_per_period=256)

    def run():
        saved = _backend._compiled
        _backend._compiled = kernels if kernels is not _pykernels else None
        try:
            return settle_to_steady_state(plant, gen, ParamPoint(1.0, 0.8), settings).y
        finally:
            _backend._compiled = saved
    return run


CASES = {
    "dopri5 van der Pol, 50 s": integrate_case,
    "program eval, 20000 points": eval_case,
    "steady state, example 1": settle_case,
}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    try:
        from nlfreq import _kernels
    except ImportError:
        print("compiled extension not built; only the Python kernels are available")
        _kernels = None
    print(f"{'case':<30}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}  equal")
    for name, make in CASES.items():
        tp, yp = best_of(make(_pykernels), args.repeat)
        if _kernels is None:
            print(f"{name:<30}{tp:>12.4f}{'-':>14}{'-':>10}  -")
            continue
        tc, yc = best_of(make(_kernels), args.repeat)
        print(f"{name:<30}{tp:>12.4f}{tc:>14.4f}{tp / tc:>9.1f}x  {np.array_equal(yp, yc)}")


if __name__ == "__main__":
    main()
