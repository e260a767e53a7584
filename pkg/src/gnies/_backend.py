"""Pick the compiled kernels when available, else the pure-Python fallback.

Set ``GNIES_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("GNIES_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        from . import _fallback as kernels
        BACKEND = "python"

meek_closure_inplace = kernels.meek_closure_inplace
alternating_mle = kernels.alternating_mle
solve_spd = kernels.solve_spd
