"""Active kernel set, bound according to :mod:`gazeseg.backend`."""

from . import backend

if backend.USING_NUMBA:
    from ._kernels_numba import (  # noqa: F401
        conv3x3_backward_data,
        conv3x3_backward_weights,
        conv3x3_forward,
        crf_build_kernel,
        lpp_backward,
        lpp_forward,
        splat_add,
    )
else:
    from ._kernels_numpy import (  # noqa: F401
        conv3x3_backward_data,
        conv3x3_backward_weights,
        conv3x3_forward,
        crf_build_kernel,
        lpp_backward,
        lpp_forward,
        splat_add,
    )
