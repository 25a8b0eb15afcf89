"""Stencil kernel dispatch.

The compiled extension is used when it imported cleanly; otherwise, or when
``INV2INV_PURE_PYTHON=1`` is set, the numpy versions are used.  ``BACKEND``
names the active implementation.
"""

import os

from . import _kernels_py

if os.environ.get("INV2INV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "numpy"

sobel = _impl.sobel
sobel_adjoint = _impl.sobel_adjoint
conv3x3 = _impl.conv3x3
conv3x3_adjoint = _impl.conv3x3_adjoint


def available_backends():
    """Map of backend name to kernel module, for tests and benchmarks."""
    out = {"numpy": _kernels_py}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
