"""Backend selection for the iteration loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``IRSRM_PURE_PYTHON=1`` is set, the numpy twin is
used. ``BACKEND`` names the active choice.
"""
import os

from . import _pykernels

CONVERGED = _pykernels.CONVERGED
MAX_ITER = _pykernels.MAX_ITER
INFEASIBLE = _pykernels.INFEASIBLE
NONFINITE = _pykernels.NONFINITE

STATUS_NAMES = {CONVERGED: "converged", MAX_ITER: "max_iter",
                INFEASIBLE: "infeasible", NONFINITE: "nonfinite"}

_compiled = None
if os.environ.get("IRSRM_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` ('compiled', 'python' or None
    for the active default)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def admm_run(*args, backend=None):
    return get_backend(backend).admm_run(*args)


def phase_run(*args, backend=None):
    return get_backend(backend).phase_run(*args)
