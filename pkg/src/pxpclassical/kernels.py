"""Dispatch to the numba or numpy kernel implementation (see ``_accel``)."""

from . import kernels_nb, kernels_np
from ._accel import BACKEND
from .kernels_nb import (  # noqa: F401
    KIND_CHAIN, KIND_TANGENT, KIND_THETA,
    STATUS_MAX_STEPS, STATUS_NONFINITE, STATUS_OK, STATUS_STEP_UNDERFLOW,
)

_impl = kernels_nb if BACKEND == "numba" else kernels_np

solve = _impl.solve
rhs = _impl.rhs


def get_backend(name=None):
    """Kernel module for ``name`` (``'numba'``/``'numpy'``), default the active one."""
    if name is None:
        return _impl
    return {"numba": kernels_nb, "numpy": kernels_np}[name]
