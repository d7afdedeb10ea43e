"""Kernel backend selection: compiled Cython core with pure-numpy fallback.

Set RELIGHTFIELD_BACKEND=python|cython to force a backend; default prefers
the compiled extension and falls back silently if it is not importable.
"""

import os

from . import kernels_py

_FORCED = os.environ.get("RELIGHTFIELD_BACKEND", "auto").lower()

if _FORCED == "python":
    kernels = kernels_py
elif _FORCED == "cython":
    from . import _kernels_cy as kernels  # noqa: F401  (raises if not built)
else:
    try:
        from . import _kernels_cy as kernels
    except ImportError:
        kernels = kernels_py


def backend_name() -> str:
    return kernels.BACKEND_NAME


def get_backend(name: str):
    """Return a specific kernel module (for parity tests and benchmarks)."""
    if name == "python":
        return kernels_py
    if name == "cython":
        from . import _kernels_cy

        return _kernels_cy
    raise ValueError(f"unknown backend {name!r}")
