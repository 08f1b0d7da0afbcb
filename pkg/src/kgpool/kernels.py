"""Backend selection for the LSTM recurrence kernels.

The compiled extension is used when it imports; set ``KGPOOL_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from kgpool import _lstm_py

BACKEND = "python"
_impl = _lstm_py

if not os.environ.get("KGPOOL_PURE_PYTHON"):
    try:
        from kgpool import _lstm_ext
    except ImportError:
        _lstm_ext = None
    else:
        _impl = _lstm_ext
        BACKEND = "cython"
else:
    _lstm_ext = None


def available_backends():
    names = ["python"]
    if _lstm_ext is not None:
        names.append("cython")
    return names


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _lstm_py
    if name == "cython":
        if _lstm_ext is None:
            raise ImportError("compiled LSTM extension is not built")
        return _lstm_ext
    raise ValueError(f"unknown backend {name!r}")


lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def use_backend(name):
    """Switch the module-level kernels; returns the previously active name."""
    global lstm_forward, lstm_backward, BACKEND, _impl
    prev = BACKEND
    _impl = get_backend(name)
    BACKEND = name
    lstm_forward = _impl.lstm_forward
    lstm_backward = _impl.lstm_backward
    return prev
