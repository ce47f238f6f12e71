"""Kernel selection.

The compiled extension is used when importable; setting the environment
variable ``NLFREQ_BACKEND=python`` forces the pure-Python kernels.
"""

import os

from . import _pykernels

BACKEND = "python"
_compiled = None

if os.environ.get("NLFREQ_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _compiled = None


def dopri5(system, *args, **kwargs):
    """Dispatch to the compiled kernel for programs, else the Python kernel."""
    if _compiled is not None and hasattr(system, "code"):
        return _compiled.dopri5(system, *args, **kwargs)
    return _pykernels.dopri5(system, *args, **kwargs)


def eval_program(prog, t_values, states):
    if _compiled is not None and hasattr(prog, "code"):
        return _compiled.eval_program(prog, t_values, states)
    return _pykernels.eval_program(prog, t_values, states)
