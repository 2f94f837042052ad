"""Hot kernels with a compiled core and a pure-Python fallback.

The extension module ``_core`` is preferred.  Setting ``SOLITONLAB_PURE=1``
in the environment forces the fallback, as does a missing build.
"""

import os

from . import _fallback

try:
    if os.environ.get("SOLITONLAB_PURE"):
        raise ImportError("pure kernels requested")
    from . import _core
except ImportError:
    _core = None

BACKEND = "compiled" if _core is not None else "python"
_impl = _core if _core is not None else _fallback

transport_simplex = _impl.transport_simplex
heat_cn_periodic = _impl.heat_cn_periodic


def backends():
    """Map backend name to module for every backend importable here."""
    found = {"python": _fallback}
    if _core is not None:
        found["compiled"] = _core
    return found


__all__ = ["BACKEND", "backends", "heat_cn_periodic", "transport_simplex"]
