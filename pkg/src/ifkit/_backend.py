"""Kernel backend selection.

The compiled extension is preferred; set ``IFK_PURE_PYTHON=1`` to force the
pure-Python implementation (or when the extension was not built).
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _ckernels is not None and not os.environ.get("IFK_PURE_PYTHON"):
    kernels = _ckernels
    NAME = "compiled"
else:
    kernels = _pykernels
    NAME = "python"

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels


def get(name=None):
    """Return a kernel module by name, or the active one."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
