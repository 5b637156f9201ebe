"""Backend selection for the MLP training kernels.

The compiled extension is used when it was built; otherwise the numpy
kernels. ``XFERBENCH_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os

from xferbench import _mlp as python_backend

try:
    from xferbench import _mlp_ext as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

BACKENDS = {"python": python_backend}
if compiled_backend is not None:
    BACKENDS["cython"] = compiled_backend


def _select():
    want = os.environ.get("XFERBENCH_BACKEND", "").strip().lower()
    if want:
        if want not in BACKENDS:
            raise ImportError(f"XFERBENCH_BACKEND={want!r} is not available; have {sorted(BACKENDS)}")
        return want
    return "cython" if "cython" in BACKENDS else "python"


BACKEND = _select()
impl = BACKENDS[BACKEND]


def get(name: str | None = None):
    """Kernel module by name (default: the selected backend)."""
    return impl if name is None else BACKENDS[name]
