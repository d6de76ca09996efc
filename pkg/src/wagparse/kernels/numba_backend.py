"""Numba-jitted implementations of the hot kernels.

Same signatures as :mod:`wagparse.kernels.numpy_backend`. Loops are written
out explicitly; no ``parallel=True`` so results are bit-reproducible on a
fixed machine. ``cache=True`` keeps warm-up cost to the first run only.
"""

import math

import numpy as np
from numba import njit

LN_EPS = 1e-12
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True)
def layer_norm_fwd(x):
    n, d = x.shape
    y = np.empty((n, d))
    rstd = np.empty(n)
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            t = x[i, j] - mu
            var += t * t
        var /= d
        r = 1.0 / math.sqrt(var + LN_EPS)
        rstd[i] = r
        for j in range(d):
            y[i, j] = (x[i, j] - mu) * r
    return y, rstd


@njit(cache=True)
def layer_norm_bwd(dy, y, rstd):
    n, d = dy.shape
    dx = np.empty((n, d))
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            m1 += dy[i, j]
            m2 += dy[i, j] * y[i, j]
        m1 /= d
        m2 /= d
        r = rstd[i]
        for j in range(d):
            dx[i, j] = r * (dy[i, j] - m1 - y[i, j] * m2)
    return dx


@njit(cache=True)
def softmax_fwd(x):
    n, d = x.shape
    y = np.empty((n, d))
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, d):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(d):
            e = math.exp(x[i, j] - mx)
            y[i, j] = e
            s += e
        inv = 1.0 / s
        for j in range(d):
            y[i, j] *= inv
    return y


@njit(cache=True)
def softmax_bwd(dy, y):
    n, d = dy.shape
    dx = np.empty((n, d))
    for i in range(n):
        dot = 0.0
        for j in range(d):
            dot += dy[i, j] * y[i, j]
        for j in range(d):
            dx[i, j] = y[i, j] * (dy[i, j] - dot)
    return dx


@njit(cache=True)
def log_softmax_fwd(x):
    n, d = x.shape
    y = np.empty((n, d))
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, d):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(d):
            s += math.exp(x[i, j] - mx)
        lse = mx + math.log(s)
        for j in range(d):
            y[i, j] = x[i, j] - lse
    return y


@njit(cache=True)
def log_softmax_bwd(dy, y):
    n, d = dy.shape
    dx = np.empty((n, d))
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += dy[i, j]
        for j in range(d):
            dx[i, j] = dy[i, j] - math.exp(y[i, j]) * s
    return dx


@njit(cache=True)
def gelu_fwd(x):
    flat = x.ravel()
    out = np.empty(flat.shape[0])
    for i in range(flat.shape[0]):
        v = flat[i]
        out[i] = 0.5 * v * (1.0 + math.erf(v * _INV_SQRT2))
    return out.reshape(x.shape)


@njit(cache=True)
def gelu_bwd(dy, x):
    fdy = dy.ravel()
    fx = x.ravel()
    out = np.empty(fx.shape[0])
    for i in range(fx.shape[0]):
        v = fx[i]
        cdf = 0.5 * (1.0 + math.erf(v * _INV_SQRT2))
        pdf = _INV_SQRT2PI * math.exp(-0.5 * v * v)
        out[i] = fdy[i] * (cdf + v * pdf)
    return out.reshape(x.shape)


@njit(cache=True)
def nll_fwd(logprobs, targets, weights):
    total = 0.0
    for i in range(logprobs.shape[0]):
        total += logprobs[i, targets[i]] * weights[i]
    return -total


@njit(cache=True)
def _nll_bwd(n, d, dloss, targets, weights):
    g = np.zeros((n, d))
    for i in range(n):
        g[i, targets[i]] = -dloss * weights[i]
    return g


def nll_bwd(dloss, shape, targets, weights):
    return _nll_bwd(shape[0], shape[1], dloss, targets, weights)


@njit(cache=True)
def kl_fwd(lp_s, lp_t, weights, tau):
    n, d = lp_s.shape
    la = np.empty((n, d))
    lb = np.empty((n, d))
    rowkl = np.empty(n)
    loss = 0.0
    for i in range(n):
        mxa = lp_s[i, 0]
        mxb = lp_t[i, 0]
        for j in range(1, d):
            if lp_s[i, j] > mxa:
                mxa = lp_s[i, j]
            if lp_t[i, j] > mxb:
                mxb = lp_t[i, j]
        mxa /= tau
        mxb /= tau
        sa = 0.0
        sb = 0.0
        for j in range(d):
            sa += math.exp(lp_s[i, j] / tau - mxa)
            sb += math.exp(lp_t[i, j] / tau - mxb)
        lsea = mxa + math.log(sa)
        lseb = mxb + math.log(sb)
        acc = 0.0
        for j in range(d):
            a = lp_s[i, j] / tau - lsea
            b = lp_t[i, j] / tau - lseb
            la[i, j] = a
            lb[i, j] = b
            acc += math.exp(a) * (a - b)
        rowkl[i] = acc
        loss += acc * weights[i]
    return tau * tau * loss, la, lb, rowkl


@njit(cache=True)
def kl_bwd(dloss, la, lb, rowkl, weights, tau):
    n, d = la.shape
    d_s = np.empty((n, d))
    d_t = np.empty((n, d))
    for i in range(n):
        scale = dloss * tau * weights[i]
        for j in range(d):
            p = math.exp(la[i, j])
            q = math.exp(lb[i, j])
            d_s[i, j] = scale * p * ((la[i, j] - lb[i, j]) - rowkl[i])
            d_t[i, j] = scale * (q - p)
    return d_s, d_t


@njit(cache=True)
def graph_scatter(x, src, dst, coef, n_out):
    d = x.shape[1]
    out = np.zeros((n_out, d))
    for k in range(src.shape[0]):
        s = src[k]
        t = dst[k]
        c = coef[k]
        for j in range(d):
            out[t, j] += c * x[s, j]
    return out


@njit(cache=True)
def row_scatter_add(out, idx, rows):
    d = out.shape[1]
    for k in range(idx.shape[0]):
        t = idx[k]
        for j in range(d):
            out[t, j] += rows[k, j]


@njit(cache=True)
def adam_update(p, g, m, v, step, lr, beta1, beta2, eps, weight_decay):
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for i in range(p.shape[0]):
        gi = g[i]
        if weight_decay != 0.0:
            gi += weight_decay * p[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] -= lr * mhat / (math.sqrt(vhat) + eps)
