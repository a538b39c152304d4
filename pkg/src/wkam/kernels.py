"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``WKAM_BACKEND=python`` is set, the numpy versions are used.
"""

import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

_requested = os.environ.get("WKAM_BACKEND", "").strip().lower()
if _requested == "python" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def get(name=None):
    """Kernel module for ``name`` (default: the active backend)."""
    name = name or BACKEND
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} is not available (have {sorted(BACKENDS)})")
    return BACKENDS[name]
