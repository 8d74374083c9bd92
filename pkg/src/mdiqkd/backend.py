"""Kernel backend chosen at import.

The compiled extension is used when it imports; ``MDIQKD_BACKEND=python``
forces the numpy fallback. ``MDIQKD_THREADS`` caps worker threads.
"""

from __future__ import annotations

import os

from . import _pykernels

kernels = _pykernels
if os.environ.get("MDIQKD_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _pykernels

BACKEND: str = kernels.BACKEND


def get(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def thread_count() -> int:
    env = os.environ.get("MDIQKD_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("MDIQKD_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1
