"""Pure-numpy implementations of the hot numeric kernels.

This is the fallback backend (``WAGPARSE_BACKEND=numpy``) and the reference
the numba twins are tested against. All arrays are float64, row-major.
"""

import numpy as np
from scipy.special import erf

LN_EPS = 1e-12
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def layer_norm_fwd(x):
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    y = (x - mu) * rstd
    return y, rstd[:, 0]


def layer_norm_bwd(dy, y, rstd):
    mean_dy = dy.mean(axis=1, keepdims=True)
    mean_dyy = (dy * y).mean(axis=1, keepdims=True)
    return rstd[:, None] * (dy - mean_dy - y * mean_dyy)


def softmax_fwd(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(dy, y):
    dot = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - dot)


def log_softmax_fwd(x):
    z = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    return z - lse


def log_softmax_bwd(dy, y):
    s = dy.sum(axis=1, keepdims=True)
    return dy - np.exp(y) * s


def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_bwd(dy, x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def nll_fwd(logprobs, targets, weights):
    rows = np.arange(logprobs.shape[0])
    return float(-(logprobs[rows, targets] * weights).sum())


def nll_bwd(dloss, shape, targets, weights):
    g = np.zeros(shape)
    rows = np.arange(shape[0])
    g[rows, targets] = -dloss * weights
    return g


def kl_fwd(lp_s, lp_t, weights, tau):
    """KL(student, teacher) over full class support, tempered by tau.

    Inputs are log-probability rows; tempering renormalizes exp(lp/tau).
    Returns (loss, la, lb, rowkl) where la/lb are the tempered log-probs
    (cached for the backward pass) and loss carries the tau^2 scale.
    """
    la = log_softmax_fwd(lp_s / tau)
    lb = log_softmax_fwd(lp_t / tau)
    p = np.exp(la)
    rowkl = (p * (la - lb)).sum(axis=1)
    loss = float(tau * tau * (rowkl * weights).sum())
    return loss, la, lb, rowkl


def kl_bwd(dloss, la, lb, rowkl, weights, tau):
    p = np.exp(la)
    q = np.exp(lb)
    scale = dloss * tau * weights[:, None]
    d_s = scale * p * ((la - lb) - rowkl[:, None])
    d_t = scale * (q - p)
    return d_s, d_t


def graph_scatter(x, src, dst, coef, n_out):
    out = np.zeros((n_out, x.shape[1]))
    np.add.at(out, dst, coef[:, None] * x[src])
    return out


def row_scatter_add(out, idx, rows):
    np.add.at(out, idx, rows)


def adam_update(p, g, m, v, step, lr, beta1, beta2, eps, weight_decay):
    if weight_decay != 0.0:
        g = g + weight_decay * p
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
