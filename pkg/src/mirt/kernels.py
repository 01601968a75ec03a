"""Backend selection for the hot loops.

The compiled extension ``mirt._ckernels`` is used when it imports; the pure
numpy module is the fallback. Set ``MIRT_BACKEND=python`` to force the
fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None):
    """Kernel module by name; ``None`` picks the default."""
    if name is None:
        name = os.environ.get("MIRT_BACKEND") or ("cython" if _ckernels is not None else "python")
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available()}") from None


def default_name() -> str:
    return get().BACKEND
