"""Backend selection for the covariance sweep kernels.

The compiled extension is used when available.  Set PMUPLACE_BACKEND=numpy
to force the pure-numpy path, or PMUPLACE_BACKEND=cython to require the
extension (raises if it was not built).
"""

import os

from . import numpy_backend

_choice = os.environ.get("PMUPLACE_BACKEND", "").strip().lower()

if _choice == "numpy":
    _impl = numpy_backend
    BACKEND = "numpy"
elif _choice == "cython":
    from . import _core as _impl  # noqa: F401

    BACKEND = "cython"
elif _choice == "":
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"
else:
    raise ValueError(
        "PMUPLACE_BACKEND must be 'numpy' or 'cython', got %r" % _choice
    )

quadforms = _impl.quadforms
rank_one_downdate = _impl.rank_one_downdate

__all__ = ["BACKEND", "quadforms", "rank_one_downdate"]
