"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded.  Set ``TASKBAL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("TASKBAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

segment_sums = _impl.segment_sums
softmax_xent = _impl.softmax_xent
head_forward = _impl.head_forward
head_backward = _impl.head_backward


def backend_module(name: str):
    """Kernel module for ``name`` in {"python", "cython"}; raises ImportError if unbuilt."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def set_backend(name: str) -> str:
    """Rebind the module-level kernels to ``name``; returns the previous backend.

    Callers that looked up the kernels through this module (``kernels.f``)
    see the switch; names imported directly keep the old binding.
    """
    global BACKEND, _impl, segment_sums, softmax_xent, head_forward, head_backward
    previous = BACKEND
    _impl = backend_module(name)
    BACKEND = name
    segment_sums = _impl.segment_sums
    softmax_xent = _impl.softmax_xent
    head_forward = _impl.head_forward
    head_backward = _impl.head_backward
    return previous
