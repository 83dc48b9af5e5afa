"""Select the compiled kernels when available, else the pure-Python ones.

Set ``GCHAINS_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load() -> ModuleType:
    if os.environ.get("GCHAINS_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py
    try:
        from . import _ckernels
    except ImportError:
        return _kernels_py
    return _ckernels


kernels: ModuleType = _load()


def available() -> dict[str, ModuleType]:
    """All importable backends keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out


def get(name: str | None = None) -> ModuleType:
    if name is None:
        return kernels
    backends = available()
    if name not in backends:
        raise ValueError(f"backend {name!r} is not available (have {sorted(backends)})")
    return backends[name]
