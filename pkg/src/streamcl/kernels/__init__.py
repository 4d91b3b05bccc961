"""Backend selection for the 3D convolution primitives.

The compiled Cython extension is preferred when it imported cleanly; the
pure-NumPy module is the fallback and the reference for agreement tests.
Set STREAMCL_FORCE_NUMPY=1 to skip the extension (used by the benchmark
and by backend-agreement tests).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import numpy_backend

_impl: ModuleType = numpy_backend
if not os.environ.get("STREAMCL_FORCE_NUMPY"):
    try:
        from . import _conv3d as _compiled

        _impl = _compiled
    except ImportError:
        _impl = numpy_backend

corr3d = _impl.corr3d
scatter3d = _impl.scatter3d
wgrad3d = _impl.wgrad3d


def backend_name() -> str:
    """Name of the active backend: 'cython' or 'numpy'."""
    return _impl.BACKEND


def get_backend(name: str) -> ModuleType:
    """Fetch a specific backend module by name, for benchmarks and tests."""
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        from . import _conv3d

        return _conv3d
    raise ValueError(f"unknown kernel backend {name!r}")
