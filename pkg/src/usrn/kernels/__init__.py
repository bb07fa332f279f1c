"""Interpolation kernels with a compiled core and a pure-numpy fallback.

Importing this package picks the compiled extension when it is available
and silently falls back to the numpy reference otherwise.  Set the
environment variable ``USRN_PURE_PYTHON=1`` to force the fallback (useful
for benchmarking and for debugging suspected kernel issues).  ``BACKEND``
names the selection ("compiled" or "reference").
"""

from __future__ import annotations

import os

from . import reference
from .reference import DOMAIN_EPS, HASH_PRIME_Y, HASH_PRIME_Z

if os.environ.get("USRN_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from . import _fastcore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = reference
        BACKEND = "reference"

trilinear_corners = _impl.trilinear_corners
hash_corners = _impl.hash_corners
weighted_gather = _impl.weighted_gather
weighted_scatter_add = _impl.weighted_scatter_add

__all__ = [
    "BACKEND",
    "DOMAIN_EPS",
    "HASH_PRIME_Y",
    "HASH_PRIME_Z",
    "hash_corners",
    "reference",
    "trilinear_corners",
    "weighted_gather",
    "weighted_scatter_add",
]
