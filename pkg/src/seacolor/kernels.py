"""Hot-loop kernels: compiled extension when built, numpy fallback otherwise.

Set ``SEACOLOR_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("SEACOLOR_PURE_PYTHON"):
    from . import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl
        BACKEND = "python"

im2col = _impl.im2col
col2im = _impl.col2im


def out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1
