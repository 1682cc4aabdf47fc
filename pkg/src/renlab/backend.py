"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is bit-identical
and selected automatically when the extension is missing, or explicitly
via ``RENLAB_BACKEND=python``.
"""

from __future__ import annotations

import os

if os.environ.get("RENLAB_BACKEND", "").lower() in ("python", "py", "numpy"):
    from . import _pathcore_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _pathcore as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _pathcore_py as _impl

        BACKEND = "python"

process_chunk = _impl.process_chunk
