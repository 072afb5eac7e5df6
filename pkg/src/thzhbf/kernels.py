"""Backend selection for the hot loops.

The compiled extension is used when it has been built; otherwise the
numpy reference implementation is used. Set ``THZHBF_BACKEND=python`` to
force the reference path.
"""
from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None):
    """Kernel module by name; ``None`` returns the active backend."""
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None


def use(name: str) -> None:
    global _active, BACKEND
    _active = get(name)
    BACKEND = name


BACKEND = os.environ.get("THZHBF_BACKEND") or ("compiled" if _compiled is not None else "python")
_active = get(BACKEND)
