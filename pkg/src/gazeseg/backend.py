"""Kernel backend selection.

Hot numeric kernels (Gaussian splatting, dense-CRF kernel construction,
local pixel propagation, 3x3 convolutions) exist twice: a numba
``@njit`` implementation and a vectorized pure-numpy implementation.
The active set is chosen once at import time:

* ``GAZESEG_BACKEND=numba`` forces numba (ImportError if unavailable),
* ``GAZESEG_BACKEND=numpy`` forces the pure-numpy fallback,
* unset: numba when importable, numpy otherwise.

``benchmarks/bench_backends.py`` times both sets side by side.
"""

import os

_ENV_VAR = "GAZESEG_BACKEND"
_choice = os.environ.get(_ENV_VAR, "").strip().lower()

if _choice not in ("", "numba", "numpy"):
    raise RuntimeError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {_choice!r}")

if _choice == "numpy":
    USING_NUMBA = False
else:
    try:
        import numba  # noqa: F401

        USING_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise
        USING_NUMBA = False

BACKEND = "numba" if USING_NUMBA else "numpy"
