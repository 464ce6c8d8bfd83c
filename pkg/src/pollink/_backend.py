"""Kernel backend selection.

The compiled extension is preferred when present; set POLLINK_PURE_PYTHON=1
to force the numpy fallback (useful for benchmarking and debugging).
"""

import os

if os.environ.get("POLLINK_PURE_PYTHON"):
    from . import _kernels_py as K
else:
    try:
        from . import _kernels_cy as K  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as K  # type: ignore[no-redef]


def backend_name() -> str:
    return K.BACKEND_NAME
