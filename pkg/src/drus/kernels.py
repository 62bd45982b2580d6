"""Backend selection for the hot assembly and apply loops.

The compiled extension is used when it imports; set ``DRUS_PURE_PYTHON=1``
to force the numpy fallback. Both backends return bit-identical results.
"""

import os

from . import _kernels_py

if os.environ.get("DRUS_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

assemble_echo_columns = _impl.assemble_echo_columns
assemble_das_rows = _impl.assemble_das_rows
csc_matvec = _impl.csc_matvec
dense_matvec = _impl.dense_matvec


def backends():
    """Mapping of every importable backend name to its module."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        found["cython"] = _kernels
    return found
