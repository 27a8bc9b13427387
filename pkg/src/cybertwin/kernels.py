"""Kernel backend selection.

The compiled extension is used when importable; otherwise the pure-Python
implementation. Set ``CYBERTWIN_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("CYBERTWIN_PURE"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

NO_PATH = -1

mix64 = _impl.mix64
draw_u64 = _impl.draw_u64
fill_u64 = _impl.fill_u64
fill_uniform = _impl.fill_uniform
association_changes = _impl.association_changes
all_pairs_paths = _impl.all_pairs_paths


def fnv1a64(data: bytes) -> int:
    return _impl.fnv1a64(bytes(data))


def backends():
    """Every importable backend by name, for cross-checks and benchmarks."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
