"""Propagation kernel selection.

The compiled Cython kernel is preferred when its extension module built;
otherwise the pure-numpy implementation is used. Set EXCITRAN_KERNEL to
"python" or "compiled" to force a backend (the default "auto" falls back
silently).
"""

import os

from . import _pykernel

_requested = os.environ.get("EXCITRAN_KERNEL", "auto")

if _requested == "python":
    _impl = _pykernel
    BACKEND = "python"
elif _requested in ("auto", "compiled"):
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _pykernel
        BACKEND = "python"
else:
    raise ValueError(f"unknown EXCITRAN_KERNEL value {_requested!r}")

integrate_rho = _impl.integrate_rho


def available_backends():
    """Names of importable kernel backends ("compiled" first if present)."""
    out = []
    try:
        from . import _core  # noqa: F401

        out.append("compiled")
    except ImportError:
        pass
    out.append("python")
    return out


def get_kernel(name):
    """Return a backend's integrate_rho by name ("python" or "compiled")."""
    if name == "python":
        return _pykernel.integrate_rho
    if name == "compiled":
        from . import _core

        return _core.integrate_rho
    raise ValueError(f"unknown kernel backend {name!r}")
