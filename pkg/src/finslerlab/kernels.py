"""Backend selection for the compiled kernels (eikonal sweeps, ball packing).

The compiled extension is used when it imports; otherwise the pure-Python
twin.  Set ``FINSLERLAB_BACKEND=python`` to force the fallback.
"""
import os

from . import _sweep_py

try:
    from . import _sweep as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _sweep_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _BACKENDS["python" if os.environ.get("FINSLERLAB_BACKEND") == "python" or _compiled is None else "compiled"]


def available():
    return sorted(_BACKENDS)


def backend():
    """Name of the active backend."""
    return "compiled" if _active is _compiled else "python"


def use_backend(name):
    """Switch the active backend; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available()}")
    prev = backend()
    _active = _BACKENDS[name]
    return prev


def sweep_semi_lagrangian(*args):
    return _active.sweep_semi_lagrangian(*args)


def sweep_lax_friedrichs(*args):
    return _active.sweep_lax_friedrichs(*args)


def greedy_pack(*args):
    return _active.greedy_pack(*args)
