"""Kernel selection: compiled extension if available, pure Python otherwise.

Set ``ROBRADIUS_PURE=1`` in the environment to force the pure-Python kernel
even when the compiled one is importable.
"""

from __future__ import annotations

import os

from . import _qppure

if os.environ.get("ROBRADIUS_PURE"):
    _impl = _qppure
    BACKEND = "pure"
else:
    try:
        from . import _qpcore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _qppure
        BACKEND = "pure"

solve_box_qp = _impl.solve_box_qp
QpError = _qppure.QpError
