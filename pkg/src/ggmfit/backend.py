"""Kernel backend selection.

The hot per-cycle loops exist twice: a compiled Cython extension
(ggmfit._kernels) and a pure-NumPy fallback (ggmfit._kernels_py) with
identical signatures.  "auto" prefers the compiled module when it
imported successfully; the GGMFIT_BACKEND environment variable
("compiled" or "python") overrides the default, and each fit config can
override it per call.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels  # compiled extension; optional
except ImportError:
    _kernels = None

_BY_NAME = {"python": _kernels_py}
if _kernels is not None:
    _BY_NAME["compiled"] = _kernels


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BY_NAME))


def resolve(name: str = "auto"):
    """Return the kernel module for a backend name."""
    if name == "auto":
        name = os.environ.get("GGMFIT_BACKEND", "").strip() or (
            "compiled" if _kernels is not None else "python")
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {available_backends()}"
        ) from None


def default_name() -> str:
    return resolve("auto").BACKEND_NAME
