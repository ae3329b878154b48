"""Select the compiled kernels when available, else the numpy fallback.

Set ``RDGLOBAL_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

if os.environ.get("RDGLOBAL_BACKEND", "").lower() == "python":
    from . import _core_python as core

    BACKEND = "python"
else:
    try:
        from . import _core as core

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - exercised when the build is absent
        from . import _core_python as core

        BACKEND = "python"

__all__ = ["core", "BACKEND"]
