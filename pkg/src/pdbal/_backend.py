"""Select the compiled kernels when available, else the numpy fallback.

Set ``PDBAL_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py as python_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and not os.environ.get("PDBAL_PURE_PYTHON"):
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = python_kernels
    BACKEND = "python"


def prepare(*arrays, index_dtype=np.int64):
    """C-contiguous float64 / int64 copies as the kernels expect."""
    out = []
    for a in arrays:
        a = np.asarray(a)
        dtype = index_dtype if np.issubdtype(a.dtype, np.integer) else np.float64
        out.append(np.ascontiguousarray(a, dtype=dtype))
    return out
