"""Backend selection for the event loop.

The compiled ``_kmc`` extension is used when it imports; otherwise the
pure-Python ``_kmc_py`` fallback. Set ``GASKET_ZRP_BACKEND=python`` to force
the fallback, or ``=cython`` to make a missing extension an error.
"""

import os
from types import ModuleType

from . import _kmc_py

__all__ = ["BACKEND", "advance", "get_backend", "available_backends"]


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kmc
    except ImportError:
        return None
    return _kmc


_compiled = _load_compiled()
_choice = os.environ.get("GASKET_ZRP_BACKEND", "").strip().lower()
if _choice == "cython" and _compiled is None:
    raise ImportError("GASKET_ZRP_BACKEND=cython but the compiled extension is not built")
if _choice not in ("", "python", "cython"):
    raise ImportError(f"GASKET_ZRP_BACKEND must be 'python' or 'cython', got {_choice!r}")

if _compiled is not None and _choice != "python":
    BACKEND = "cython"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _kmc_py

advance = _impl.advance


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name: str | None = None):
    """Return the ``advance`` function for ``name`` (default: the selected backend)."""
    if name is None:
        return advance
    if name == "python":
        return _kmc_py.advance
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled extension is not built")
        return _compiled.advance
    raise ValueError(f"unknown backend {name!r}")
