"""Kernel backend selection: compiled extension when available, NumPy otherwise.

Set ``QUASARBELL_PURE=1`` to force the NumPy implementation (used by the
equivalence tests and the benchmark).
"""

import os

from . import _kernels_py

if os.environ.get("QUASARBELL_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
match_pairs = _impl.match_pairs
delta_histogram = _impl.delta_histogram


def implementations():
    """Both kernel modules, for cross-checking; compiled may be absent."""
    impls = {"numpy": _kernels_py}
    try:
        from . import _kernels
        impls["cython"] = _kernels
    except ImportError:
        pass
    return impls
