"""Backend selection for the numerical kernels.

The compiled Cython extension is preferred.  Setting ``INVCRB_PURE_PYTHON=1``
forces the numpy fallback, which is also used when the extension has not been
built.  ``BACKEND`` names the active implementation.
"""

import os

from . import _kernels_py

if os.environ.get("INVCRB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

jn_scaled = _impl.jn_scaled
hn_scaled = _impl.hn_scaled
legendre_table = _impl.legendre_table
project_plane_waves = _impl.project_plane_waves


def available_backends():
    """Map backend name to kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
