"""Kernel backend selection.

The compiled extension is preferred when importable; set IBLDPC_KERNELS to
"python" or "compiled" to force a backend (forcing "compiled" raises if the
extension is missing).
"""

import os
import warnings

from . import purepy

_choice = os.environ.get("IBLDPC_KERNELS", "auto").lower()

if _choice not in ("auto", "compiled", "python"):
    raise ValueError(f"IBLDPC_KERNELS must be auto|compiled|python, not {_choice!r}")

backend = purepy
if _choice in ("auto", "compiled"):
    try:
        from . import _core
        backend = _core
    except ImportError:
        if _choice == "compiled":
            raise
        warnings.warn(
            "compiled decoder kernels unavailable; using the pure-Python "
            "fallback (build the extension with `pip install -e .`)",
            stacklevel=2,
        )

backend_name = backend.BACKEND


def get_backend(name=None):
    """Return a kernels module by name ("python", "compiled" or None=current)."""
    if name is None:
        return backend
    if name == "python":
        return purepy
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
