"""Kernel backend selection.

The compiled extension is preferred; set ``MTLSHARE_PURE_PYTHON=1`` to
force the numpy fallback.
"""

import os

if os.environ.get("MTLSHARE_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "python"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward

__all__ = ["BACKEND", "conv2d_forward", "conv2d_backward", "maxpool2d_forward", "maxpool2d_backward"]
