"""Suite-wide test setup.

The backend is pinned to the pure-numpy kernels unless the caller chose
one explicitly: on a single-core box the BLAS-backed conv path trains
several times faster than the serial numba loops, which keeps the
end-to-end acceptance experiment inside its time budget. The numba
kernels are covered head-to-head in test_backends.py, which imports both
kernel modules directly and bypasses this default.
"""

import os

os.environ.setdefault("GAZESEG_BACKEND", "numpy")
