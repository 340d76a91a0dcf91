"""Selects the stepping kernel: compiled extension when built, pure Python otherwise.

Both backends expose the same module-level API (``run_path``, ``record_state``,
``shell_scale``, the ``STATUS_*`` codes and ``BACKEND_NAME``) and follow the
same floating-point operation order, so a given seed produces the same path
either way.
"""
from __future__ import annotations

from . import _kernel_py

try:
    from . import _kernel as _compiled
except ImportError:
    _compiled = None


def available_backends() -> tuple[str, ...]:
    if _compiled is None:
        return ("python",)
    return ("c", "python")


def default_backend_name() -> str:
    return "python" if _compiled is None else "c"


def get_backend(name: str | None = None):
    """Return the kernel module for `name` ("c", "python", or None for best)."""
    if name is None:
        return _kernel_py if _compiled is None else _compiled
    key = name.strip().lower()
    if key in ("c", "compiled", "cython"):
        if _compiled is None:
            raise ValueError("compiled kernel is not built; reinstall with a C compiler")
        return _compiled
    if key in ("py", "python", "pure"):
        return _kernel_py
    raise ValueError(f"unknown backend {name!r}; expected 'c' or 'python'")
