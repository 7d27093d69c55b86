"""Numba implementations of the hot kernels.

Same signatures and semantics as ``_kernels_numpy``; see that module
for the contract docstrings. Loops are serial (the toolkit does not
rely on threading for determinism) and compiled with ``cache=True``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def splat_add(heat, xs, ys, ws, inv_two_sigma2, radius):
    height, width = heat.shape
    r2 = radius * radius
    for k in range(xs.shape[0]):
        x = xs[k]
        y = ys[k]
        wt = ws[k]
        i0 = max(0, int(math.ceil(y - radius)))
        i1 = min(height - 1, int(math.floor(y + radius)))
        j0 = max(0, int(math.ceil(x - radius)))
        j1 = min(width - 1, int(math.floor(x + radius)))
        for i in range(i0, i1 + 1):
            dy2 = (i - y) * (i - y)
            for j in range(j0, j1 + 1):
                d2 = dy2 + (j - x) * (j - x)
                if d2 <= r2:
                    heat[i, j] += wt * math.exp(-d2 * inv_two_sigma2)


@njit(cache=True)
def crf_build_kernel(intensity, height, width, inv2_alpha, inv2_beta,
                     inv2_gamma, w_app, w_smooth):
    n = height * width
    z_app = np.zeros(n, dtype=np.float64)
    z_smooth = np.zeros(n, dtype=np.float64)
    for p in range(n):
        pi = p // width
        pj = p % width
        za = 0.0
        zs = 0.0
        for q in range(n):
            if q == p:
                continue
            qi = q // width
            qj = q % width
            d2 = (pi - qi) * (pi - qi) + (pj - qj) * (pj - qj)
            di = intensity[p] - intensity[q]
            za += math.exp(-d2 * inv2_alpha - di * di * inv2_beta)
            zs += math.exp(-d2 * inv2_gamma)
        z_app[p] = za
        z_smooth[p] = zs

    s_app = np.zeros(n, dtype=np.float64)
    s_smooth = np.zeros(n, dtype=np.float64)
    for p in range(n):
        if z_app[p] > 0:
            s_app[p] = 1.0 / math.sqrt(z_app[p])
        if z_smooth[p] > 0:
            s_smooth[p] = 1.0 / math.sqrt(z_smooth[p])

    out = np.empty((n, n), dtype=np.float64)
    for p in range(n):
        pi = p // width
        pj = p % width
        for q in range(n):
            if q == p:
                out[p, q] = 0.0
                continue
            qi = q // width
            qj = q % width
            d2 = (pi - qi) * (pi - qi) + (pj - qj) * (pj - qj)
            di = intensity[p] - intensity[q]
            k_app = math.exp(-d2 * inv2_alpha - di * di * inv2_beta)
            k_smooth = math.exp(-d2 * inv2_gamma)
            out[p, q] = w_app * (s_app[p] * k_app * s_app[q]) \
                + w_smooth * (s_smooth[p] * k_smooth * s_smooth[q])
    return out


@njit(cache=True)
def lpp_forward(phi, offsets):
    height, width, dim = phi.shape
    n_taps = offsets.shape[0]

    invn = np.zeros((height, width), dtype=phi.dtype)
    for i in range(height):
        for j in range(width):
            acc = 0.0
            for d in range(dim):
                acc += phi[i, j, d] * phi[i, j, d]
            if acc > 0:
                invn[i, j] = 1.0 / math.sqrt(acc)

    out = np.zeros((height, width, dim), dtype=phi.dtype)
    alpha = np.zeros((n_taps, height, width), dtype=phi.dtype)
    sim = np.zeros((n_taps, height, width), dtype=phi.dtype)

    for i in range(height):
        for j in range(width):
            denom = 0.0
            for t in range(n_taps):
                qi = i + offsets[t, 0]
                qj = j + offsets[t, 1]
                if qi < 0 or qi >= height or qj < 0 or qj >= width:
                    continue
                dot = 0.0
                for d in range(dim):
                    dot += phi[i, j, d] * phi[qi, qj, d]
                s = dot * invn[i, j] * invn[qi, qj]
                sim[t, i, j] = s
                a = s if s > 0 else 0.0
                e = math.exp(a)
                alpha[t, i, j] = e
                denom += e
            for t in range(n_taps):
                qi = i + offsets[t, 0]
                qj = j + offsets[t, 1]
                if qi < 0 or qi >= height or qj < 0 or qj >= width:
                    continue
                a = alpha[t, i, j] / denom
                alpha[t, i, j] = a
                for d in range(dim):
                    out[i, j, d] += a * phi[qi, qj, d]
    return out, alpha, sim


@njit(cache=True)
def lpp_backward(phi, grad_out, alpha, sim, offsets):
    height, width, dim = phi.shape
    n_taps = offsets.shape[0]

    invn = np.zeros((height, width), dtype=phi.dtype)
    for i in range(height):
        for j in range(width):
            acc = 0.0
            for d in range(dim):
                acc += phi[i, j, d] * phi[i, j, d]
            if acc > 0:
                invn[i, j] = 1.0 / math.sqrt(acc)

    dphi = np.zeros((height, width, dim), dtype=phi.dtype)
    c = np.zeros(n_taps, dtype=phi.dtype)
    for i in range(height):
        for j in range(width):
            cbar = 0.0
            for t in range(n_taps):
                qi = i + offsets[t, 0]
                qj = j + offsets[t, 1]
                if qi < 0 or qi >= height or qj < 0 or qj >= width:
                    c[t] = 0.0
                    continue
                dot = 0.0
                for d in range(dim):
                    dot += grad_out[i, j, d] * phi[qi, qj, d]
                c[t] = dot
                cbar += alpha[t, i, j] * dot
            for t in range(n_taps):
                qi = i + offsets[t, 0]
                qj = j + offsets[t, 1]
                if qi < 0 or qi >= height or qj < 0 or qj >= width:
                    continue
                a = alpha[t, i, j]
                s = sim[t, i, j]
                ds = a * (c[t] - cbar) if s > 0 else 0.0
                ipq = invn[i, j] * invn[qi, qj]
                ipp = invn[i, j] * invn[i, j]
                iqq = invn[qi, qj] * invn[qi, qj]
                for d in range(dim):
                    # direct convex-combination term
                    dphi[qi, qj, d] += a * grad_out[i, j, d]
                    if ds != 0.0:
                        # cosine gradient, center and neighbor sides
                        dphi[i, j, d] += ds * (phi[qi, qj, d] * ipq - s * phi[i, j, d] * ipp)
                        dphi[qi, qj, d] += ds * (phi[i, j, d] * ipq - s * phi[qi, qj, d] * iqq)
    return dphi


@njit(cache=True, fastmath=True)
def conv3x3_forward(xp, w, b):
    batch, hp, wp, ci = xp.shape
    height = hp - 2
    width = wp - 2
    co = w.shape[3]
    out = np.empty((batch, height, width, co), dtype=xp.dtype)
    for bi in range(batch):
        for i in range(height):
            for j in range(width):
                row = out[bi, i, j]
                for k in range(co):
                    row[k] = b[k]
                for u in range(3):
                    for v in range(3):
                        xv = xp[bi, i + u, j + v]
                        for cin in range(ci):
                            s = xv[cin]
                            wrow = w[u, v, cin]
                            for k in range(co):
                                row[k] += s * wrow[k]
    return out


@njit(cache=True, fastmath=True)
def conv3x3_backward_data(dy, w):
    batch, height, width, co = dy.shape
    ci = w.shape[2]
    dyp = np.zeros((batch, height + 2, width + 2, co), dtype=dy.dtype)
    dyp[:, 1 : height + 1, 1 : width + 1, :] = dy
    dx = np.zeros((batch, height, width, ci), dtype=dy.dtype)
    for bi in range(batch):
        for i in range(height):
            for j in range(width):
                drow = dx[bi, i, j]
                for u in range(3):
                    for v in range(3):
                        grow = dyp[bi, i + 2 - u, j + 2 - v]
                        for cin in range(ci):
                            acc = 0.0
                            wrow = w[u, v, cin]
                            for k in range(co):
                                acc += grow[k] * wrow[k]
                            drow[cin] += acc
    return dx


@njit(cache=True, fastmath=True)
def conv3x3_backward_weights(xp, dy):
    batch, height, width, co = dy.shape
    ci = xp.shape[3]
    dw = np.zeros((3, 3, ci, co), dtype=dy.dtype)
    db = np.zeros(co, dtype=dy.dtype)
    for bi in range(batch):
        for i in range(height):
            for j in range(width):
                grow = dy[bi, i, j]
                for k in range(co):
                    db[k] += grow[k]
                for u in range(3):
                    for v in range(3):
                        xv = xp[bi, i + u, j + v]
                        for cin in range(ci):
                            s = xv[cin]
                            wrow = dw[u, v, cin]
                            for k in range(co):
                                wrow[k] += s * grow[k]
    return dw, db
