"""Pick the simulation kernels once, at import.

Set ``GBDP_PURE_PYTHON=1`` to force the pure-Python fallback.
"""

import os

from . import _pykernels

if os.environ.get("GBDP_PURE_PYTHON", "") in ("1", "true", "yes"):
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:  # extension not built
        kernels = _pykernels

BACKEND = kernels.BACKEND
