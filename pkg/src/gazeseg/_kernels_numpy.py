"""Pure-numpy implementations of the hot kernels.

Vectorized fallbacks with the same call signatures as
``_kernels_numba``; selected via ``GAZESEG_BACKEND=numpy`` (or
automatically when numba is unavailable).
"""

import numpy as np


def splat_add(heat, xs, ys, ws, inv_two_sigma2, radius):
    """Accumulate truncated isotropic Gaussians into `heat` (in place).

    One kernel per fixation k, centered at (xs[k], ys[k]) with weight
    ws[k]; contributions beyond `radius` pixels are dropped.
    """
    height, width = heat.shape
    r2 = float(radius) * float(radius)
    for k in range(xs.shape[0]):
        x, y, w = float(xs[k]), float(ys[k]), float(ws[k])
        i0 = max(0, int(np.ceil(y - radius)))
        i1 = min(height - 1, int(np.floor(y + radius)))
        j0 = max(0, int(np.ceil(x - radius)))
        j1 = min(width - 1, int(np.floor(x + radius)))
        if i0 > i1 or j0 > j1:
            continue
        ii = np.arange(i0, i1 + 1, dtype=heat.dtype)
        jj = np.arange(j0, j1 + 1, dtype=heat.dtype)
        d2 = (ii[:, None] - y) ** 2 + (jj[None, :] - x) ** 2
        contrib = w * np.exp(-d2 * inv_two_sigma2)
        contrib[d2 > r2] = 0.0
        heat[i0 : i1 + 1, j0 : j1 + 1] += contrib


def crf_build_kernel(intensity, height, width, inv2_alpha, inv2_beta,
                     inv2_gamma, w_app, w_smooth):
    """Dense pairwise kernel matrix for exact mean-field message passing.

    Returns the (N, N) combination of the appearance and smoothness
    Gaussian kernels, each symmetrically normalized by its own per-pixel
    degree (zero diagonal, so a pixel never messages itself).
    """
    n = height * width
    ii = (np.arange(n) // width).astype(np.float64)
    jj = (np.arange(n) % width).astype(np.float64)
    inten = np.asarray(intensity, dtype=np.float64).reshape(n)

    block = 2048
    z_app = np.zeros(n)
    z_smooth = np.zeros(n)

    def _blocks(a, b):
        d2 = (ii[a:b, None] - ii[None, :]) ** 2 + (jj[a:b, None] - jj[None, :]) ** 2
        di2 = (inten[a:b, None] - inten[None, :]) ** 2
        k_app = np.exp(-d2 * inv2_alpha - di2 * inv2_beta)
        k_smooth = np.exp(-d2 * inv2_gamma)
        rows = np.arange(a, b)
        k_app[rows - a, rows] = 0.0
        k_smooth[rows - a, rows] = 0.0
        return k_app, k_smooth

    for a in range(0, n, block):
        b = min(a + block, n)
        k_app, k_smooth = _blocks(a, b)
        z_app[a:b] = k_app.sum(axis=1)
        z_smooth[a:b] = k_smooth.sum(axis=1)

    s_app = np.where(z_app > 0, 1.0 / np.sqrt(np.maximum(z_app, 1e-300)), 0.0)
    s_smooth = np.where(z_smooth > 0, 1.0 / np.sqrt(np.maximum(z_smooth, 1e-300)), 0.0)

    out = np.empty((n, n), dtype=np.float64)
    for a in range(0, n, block):
        b = min(a + block, n)
        k_app, k_smooth = _blocks(a, b)
        out[a:b] = w_app * (s_app[a:b, None] * k_app * s_app[None, :]) \
            + w_smooth * (s_smooth[a:b, None] * k_smooth * s_smooth[None, :])
    return out


def _safe_inverse_norms(phi):
    """1/||phi_p|| with exact zeros for zero vectors (cos(0, .) := 0)."""
    norms = np.sqrt((phi * phi).sum(axis=2))
    zero = norms == 0
    norms[zero] = 1.0
    invn = (1.0 / norms).astype(phi.dtype)
    invn[zero] = 0.0
    return invn


def _tap_slices(dy, dx, height, width):
    """Center-region slices for tap offset (dy, dx) plus shifted region.

    (None, None) when the offset pushes every pixel out of bounds.
    """
    y0, y1 = max(0, -dy), height - max(0, dy)
    x0, x1 = max(0, -dx), width - max(0, dx)
    if y0 >= y1 or x0 >= x1:
        return None, None
    center = (slice(y0, y1), slice(x0, x1))
    shifted = (slice(y0 + dy, y1 + dy), slice(x0 + dx, x1 + dx))
    return center, shifted


def lpp_forward(phi, offsets):
    """Cosine-gated local propagation of a (H, W, D) feature map.

    Returns (out, alpha, sim): the propagated map, the (T, H, W) softmax
    weights (0 for out-of-bounds taps) and the raw cosine similarities.
    """
    height, width, _ = phi.shape
    n_taps = offsets.shape[0]
    invn = _safe_inverse_norms(phi)

    sim = np.zeros((n_taps, height, width), dtype=phi.dtype)
    scores = np.full((n_taps, height, width), -np.inf, dtype=phi.dtype)
    for t in range(n_taps):
        center, shifted = _tap_slices(int(offsets[t, 0]), int(offsets[t, 1]), height, width)
        if center is None:
            continue
        dot = (phi[center] * phi[shifted]).sum(axis=2)
        s = dot * invn[center] * invn[shifted]
        sim[t][center] = s
        scores[t][center] = np.maximum(s, 0.0)

    expo = np.exp(scores)  # exp(-inf) -> 0 marks invalid taps
    alpha = expo / expo.sum(axis=0)

    out = np.zeros_like(phi)
    for t in range(n_taps):
        center, shifted = _tap_slices(int(offsets[t, 0]), int(offsets[t, 1]), height, width)
        if center is None:
            continue
        out[center] += alpha[t][center][..., None] * phi[shifted]
    return out, alpha, sim


def lpp_backward(phi, grad_out, alpha, sim, offsets):
    """Gradient of `lpp_forward` output w.r.t. the input features."""
    height, width, _ = phi.shape
    n_taps = offsets.shape[0]
    invn = _safe_inverse_norms(phi)
    invn2 = invn * invn

    # softmax backward over taps: d(score_t) = alpha_t * (c_t - sum_t alpha_t c_t)
    c = np.zeros((n_taps, height, width), dtype=phi.dtype)
    for t in range(n_taps):
        center, shifted = _tap_slices(int(offsets[t, 0]), int(offsets[t, 1]), height, width)
        if center is None:
            continue
        c[t][center] = (grad_out[center] * phi[shifted]).sum(axis=2)
    cbar = (alpha * c).sum(axis=0)
    dscore = alpha * (c - cbar[None])
    ds = np.where(sim > 0, dscore, 0.0)  # relu gate on the clamped cosine

    dphi = np.zeros_like(phi)
    for t in range(n_taps):
        dy, dx = int(offsets[t, 0]), int(offsets[t, 1])
        center, shifted = _tap_slices(dy, dx, height, width)
        if center is None:
            continue
        ipq = invn[center] * invn[shifted]
        # center side of the cosine gradient
        dphi[center] += ds[t][center][..., None] * (
            phi[shifted] * ipq[..., None]
            - sim[t][center][..., None] * phi[center] * invn2[center][..., None]
        )
        # neighbor side (direct convex term + cosine gradient), scattered to q = p + delta
        contrib = alpha[t][center][..., None] * grad_out[center] \
            + (ds[t][center] * ipq)[..., None] * phi[center]
        dphi[shifted] += contrib \
            - (ds[t][center] * sim[t][center])[..., None] * phi[shifted] * invn2[shifted][..., None]
    return dphi


def conv3x3_forward(xp, w, b):
    """3x3 same-padding convolution on channels-last input.

    `xp` is the already-padded (B, H+2, W+2, Ci) batch; `w` has shape
    (3, 3, Ci, Co). Implemented as nine tap matmuls so BLAS does the work.
    """
    batch, hp, wp, _ = xp.shape
    height, width = hp - 2, wp - 2
    out = np.empty((batch, height, width, w.shape[3]), dtype=xp.dtype)
    out[:] = b
    for u in range(3):
        for v in range(3):
            out += xp[:, u : u + height, v : v + width, :] @ w[u, v]
    return out


def conv3x3_backward_data(dy, w):
    batch, height, width, _ = dy.shape
    ci = w.shape[2]
    dxp = np.zeros((batch, height + 2, width + 2, ci), dtype=dy.dtype)
    for u in range(3):
        for v in range(3):
            dxp[:, u : u + height, v : v + width, :] += dy @ w[u, v].T
    return dxp[:, 1 : height + 1, 1 : width + 1, :]


def conv3x3_backward_weights(xp, dy):
    batch, height, width, co = dy.shape
    ci = xp.shape[3]
    dw = np.empty((3, 3, ci, co), dtype=dy.dtype)
    for u in range(3):
        for v in range(3):
            dw[u, v] = np.tensordot(
                xp[:, u : u + height, v : v + width, :], dy, axes=([0, 1, 2], [0, 1, 2])
            )
    db = dy.sum(axis=(0, 1, 2))
    return dw, db
