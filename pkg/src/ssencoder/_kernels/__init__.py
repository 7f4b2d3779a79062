"""Kernel backend selection.

The compiled Cython core is used when it was built; otherwise the numpy
fallback is selected. Override with the SSENCODER_BACKEND environment
variable ("compiled", "numpy", "auto") or set_backend() at runtime.
"""

import os

from . import numpy_backend

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

HAVE_COMPILED = _core is not None

_backend = None


def _resolve(choice: str):
    if choice == "numpy":
        return numpy_backend
    if choice == "compiled":
        if _core is None:
            raise RuntimeError(
                "compiled kernels requested but the extension is not built; "
                "reinstall without SSENCODER_PURE or use the numpy backend"
            )
        return _core
    if choice == "auto":
        return _core if _core is not None else numpy_backend
    raise ValueError(f"unknown backend {choice!r}, expected compiled|numpy|auto")


def set_backend(choice: str) -> None:
    global _backend
    _backend = _resolve(choice)


def get_backend():
    global _backend
    if _backend is None:
        _backend = _resolve(os.environ.get("SSENCODER_BACKEND", "auto"))
    return _backend
