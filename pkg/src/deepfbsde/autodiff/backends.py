"""Kernel backend selection.

The compiled Cython module is preferred when importable; otherwise the numpy
reference kernels are used. DEEPFBSDE_BACKEND forces the choice:

    DEEPFBSDE_BACKEND=cython   require the extension (ImportError if missing)
    DEEPFBSDE_BACKEND=numpy    force the fallback
    DEEPFBSDE_BACKEND=auto     default behaviour

Both backends expose the same functions; within one backend results are
bit-reproducible. `get_backend(name)` returns a module explicitly, which the
equivalence tests and the benchmark use.
"""

from __future__ import annotations

import os

from . import _kernels_np


def _load_cython():
    from . import _fastkernels  # noqa: PLC0415

    return _fastkernels


def _select():
    choice = os.environ.get("DEEPFBSDE_BACKEND", "auto").lower()
    if choice == "numpy":
        return _kernels_np
    if choice == "cython":
        return _load_cython()
    if choice != "auto":
        raise ValueError(f"DEEPFBSDE_BACKEND must be auto|cython|numpy, got {choice!r}")
    try:
        return _load_cython()
    except ImportError:
        return _kernels_np


kernels = _select()


def backend_name() -> str:
    return kernels.NAME


def get_backend(name: str):
    """Return a specific kernel module by name ('cython' or 'numpy')."""
    if name == "numpy":
        return _kernels_np
    if name == "cython":
        return _load_cython()
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        _load_cython()
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
