"""Backend selection for the hot integration kernels.

Set ``PXPC_BACKEND=numpy`` to force the pure-numpy path; the default uses
numba when it can be imported.
"""

import logging
import os

logger = logging.getLogger(__name__)

_requested = os.environ.get("PXPC_BACKEND", "numba").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

if _requested not in ("numba", "numpy"):
    raise ValueError(f"PXPC_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba" and not HAVE_NUMBA:  # pragma: no cover
    logger.warning("numba not importable, falling back to the numpy kernels")

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)

    def wrap(func):
        if HAVE_NUMBA:
            return numba.njit(**kwargs)(func)
        return func

    if len(args) == 1 and callable(args[0]):
        return wrap(args[0])
    return wrap
