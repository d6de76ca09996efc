"""Differentiable operations over :class:`~wagparse.nn.tensor.Tensor`.

Forward math runs through the selected kernel backend; each op installs a
closure that maps the output gradient back onto its parents.
"""

import numpy as np

from .. import kernels
from ..errors import StructuralError
from .tensor import Tensor

__all__ = [
    "add",
    "mul",
    "scale",
    "matmul",
    "reshape",
    "transpose",
    "gather_rows",
    "scatter_set",
    "rows_slice",
    "concat0",
    "embedding",
    "linear",
    "layer_norm",
    "softmax",
    "log_softmax",
    "gelu",
    "dropout",
    "multi_head_attention",
    "graph_conv_mix",
    "nll_from_logprobs",
    "kl_from_logprobs",
    "cross_entropy",
    "sum_all",
]


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def backward(dy):
        return _unbroadcast(dy, a.data.shape), _unbroadcast(dy, b.data.shape)

    return Tensor._from_op(out, (a, b), backward, "add")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def backward(dy):
        return (
            _unbroadcast(dy * b.data, a.data.shape),
            _unbroadcast(dy * a.data, b.data.shape),
        )

    return Tensor._from_op(out, (a, b), backward, "mul")


def scale(a, s):
    s = float(s)

    def backward(dy):
        return (dy * s,)

    return Tensor._from_op(a.data * s, (a,), backward, "scale")


def matmul(a, b):
    ad, bd = a.data, b.data
    out = np.matmul(ad, bd)

    def backward(dy):
        if ad.ndim == 2 and bd.ndim == 2:
            return dy @ bd.T, ad.T @ dy
        if ad.ndim >= 3 and bd.ndim == 2:
            da = np.matmul(dy, bd.T)
            db = ad.reshape(-1, ad.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
            return da, db
        if ad.ndim == bd.ndim:
            da = np.matmul(dy, np.swapaxes(bd, -1, -2))
            db = np.matmul(np.swapaxes(ad, -1, -2), dy)
            return da, db
        raise StructuralError(f"unsupported matmul shapes {ad.shape} @ {bd.shape}")

    return Tensor._from_op(out, (a, b), backward, "matmul")


def reshape(a, shape):
    prev = a.data.shape

    def backward(dy):
        return (dy.reshape(prev),)

    return Tensor._from_op(a.data.reshape(shape), (a,), backward, "reshape")


def transpose(a, axes):
    inv = np.argsort(axes)

    def backward(dy):
        return (dy.transpose(inv),)

    return Tensor._from_op(a.data.transpose(axes), (a,), backward, "transpose")


def gather_rows(a, idx):
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2:
        raise StructuralError("gather_rows expects a 2-D tensor")
    out = a.data[idx]

    def backward(dy):
        g = np.zeros_like(a.data)
        kernels.row_scatter_add(g, idx, np.ascontiguousarray(dy))
        return (g,)

    return Tensor._from_op(out, (a,), backward, "gather_rows")


def scatter_set(base, idx, rows):
    """Copy of ``base`` with ``rows`` written at row indices ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    out = base.data.copy()
    out[idx] = rows.data

    def backward(dy):
        dbase = dy.copy()
        dbase[idx] = 0.0
        return dbase, dy[idx]

    return Tensor._from_op(out, (base, rows), backward, "scatter_set")


def rows_slice(a, start, stop):
    n = a.data.shape[0]

    def backward(dy):
        g = np.zeros_like(a.data)
        g[start:stop] = dy
        return (g,)

    if not (0 <= start <= stop <= n):
        raise StructuralError("rows_slice out of range")
    return Tensor._from_op(a.data[start:stop].copy(), (a,), backward, "rows_slice")


def concat0(a, b):
    na = a.data.shape[0]

    def backward(dy):
        return dy[:na], dy[na:]

    return Tensor._from_op(np.concatenate([a.data, b.data], axis=0), (a, b), backward, "concat0")


def embedding(ids, table):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.min(initial=0) < 0 or ids.max(initial=0) >= table.data.shape[0]:
        raise StructuralError("embedding id out of range")
    out = table.data[ids]

    def backward(dy):
        g = np.zeros_like(table.data)
        kernels.row_scatter_add(
            g, ids.ravel(), np.ascontiguousarray(dy.reshape(-1, table.data.shape[1]))
        )
        return (g,)

    return Tensor._from_op(out, (table,), backward, "embedding")


def linear(x, w, b=None):
    """x @ w (+ b). ``w`` is stored [in, out]."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise StructuralError(f"linear shape mismatch {x.data.shape} @ {w.data.shape}")
    y = matmul(x, w)
    return add(y, b) if b is not None else y


def _rows(x):
    d = x.shape[-1]
    return np.ascontiguousarray(x.reshape(-1, d))


def layer_norm(x):
    shape = x.data.shape
    y2, rstd = kernels.layer_norm_fwd(_rows(x.data))

    def backward(dy):
        dx = kernels.layer_norm_bwd(_rows(dy), y2, rstd)
        return (dx.reshape(shape),)

    return Tensor._from_op(y2.reshape(shape), (x,), backward, "layer_norm")


def softmax(x, axis=-1):
    if axis not in (-1, x.data.ndim - 1):
        raise StructuralError("softmax supports the last axis only")
    shape = x.data.shape
    y2 = kernels.softmax_fwd(_rows(x.data))

    def backward(dy):
        dx = kernels.softmax_bwd(_rows(dy), y2)
        return (dx.reshape(shape),)

    return Tensor._from_op(y2.reshape(shape), (x,), backward, "softmax")


def log_softmax(x):
    shape = x.data.shape
    y2 = kernels.log_softmax_fwd(_rows(x.data))

    def backward(dy):
        dx = kernels.log_softmax_bwd(_rows(dy), y2)
        return (dx.reshape(shape),)

    return Tensor._from_op(y2.reshape(shape), (x,), backward, "log_softmax")


def gelu(x):
    xc = np.ascontiguousarray(x.data)
    y = kernels.gelu_fwd(xc)

    def backward(dy):
        return (kernels.gelu_bwd(np.ascontiguousarray(dy), xc),)

    return Tensor._from_op(y, (x,), backward, "gelu")


def dropout(x, rate, rng, training=True):
    """Inverted dropout. Rate 0 or eval mode returns ``x`` unchanged."""
    if not training or rate == 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.data.shape) >= rate) / keep

    def backward(dy):
        return (dy * mask,)

    return Tensor._from_op(x.data * mask, (x,), backward, "dropout")


def multi_head_attention(q, k, v, mask_bias, heads):
    """Scaled dot-product attention over pre-projected q/k/v [B, T, D].

    ``mask_bias`` is an additive constant broadcastable to [B, heads, Tq, Tk];
    masked positions carry a large negative value so their weight is exactly
    zero after softmax.
    """
    bsz, tq, dim = q.data.shape
    if dim % heads:
        raise StructuralError("hidden size not divisible by heads")
    dh = dim // heads
    tk = k.data.shape[1]

    def split(x, t):
        return transpose(reshape(x, (bsz, t, heads, dh)), (0, 2, 1, 3))

    qh = split(q, tq)
    kh = split(k, tk)
    vh = split(v, tk)
    scores = scale(matmul(qh, transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    if mask_bias is not None:
        scores = add(scores, Tensor(mask_bias))
    attn = softmax(scores)
    ctx = matmul(attn, vh)
    return reshape(transpose(ctx, (0, 2, 1, 3)), (bsz, tq, dim))


def graph_conv_mix(x, src, dst, coef, n_out):
    """out[dst] += coef * x[src] — the message-passing mix of a graph conv."""
    xc = np.ascontiguousarray(x.data)
    out = kernels.graph_scatter(xc, src, dst, coef, n_out)

    def backward(dy):
        return (kernels.graph_scatter(np.ascontiguousarray(dy), dst, src, coef, xc.shape[0]),)

    return Tensor._from_op(out, (x,), backward, "graph_conv_mix")


def nll_from_logprobs(logprobs, targets, row_weights):
    """Weighted negative log-likelihood; weights fold in pad-masking and
    the batch-mean reduction."""
    shape = logprobs.data.shape
    lp2 = _rows(logprobs.data)
    tg = np.ascontiguousarray(np.asarray(targets, dtype=np.int64).ravel())
    w = np.ascontiguousarray(np.asarray(row_weights, dtype=np.float64).ravel())
    loss = kernels.nll_fwd(lp2, tg, w)

    def backward(dy):
        g = kernels.nll_bwd(float(dy), lp2.shape, tg, w)
        return (g.reshape(shape),)

    return Tensor._from_op(loss, (logprobs,), backward, "nll")


def kl_from_logprobs(lp_student, lp_teacher, row_weights, tau=1.0):
    """KL(student, teacher) summed over all classes, tempered by ``tau``.

    The student distribution is the first argument, as the loss is written;
    swapping arguments changes the value. Scaled by tau^2 so the gradient
    magnitude stays comparable across temperatures.
    """
    shape = lp_student.data.shape
    s2 = _rows(lp_student.data)
    t2 = _rows(lp_teacher.data)
    w = np.ascontiguousarray(np.asarray(row_weights, dtype=np.float64).ravel())
    loss, la, lb, rowkl = kernels.kl_fwd(s2, t2, w, float(tau))

    def backward(dy):
        d_s, d_t = kernels.kl_bwd(float(dy), la, lb, rowkl, w, float(tau))
        return d_s.reshape(shape), d_t.reshape(shape)

    return Tensor._from_op(loss, (lp_student, lp_teacher), backward, "kl")


def cross_entropy(logits, targets, pad_mask, normalizer=None):
    """Token-level cross entropy; pad positions carry zero weight.

    ``normalizer`` divides the summed loss (defaults to the number of
    unmasked tokens, i.e. a per-token mean).
    """
    mask = np.asarray(pad_mask, dtype=np.float64).ravel()
    if normalizer is None:
        normalizer = max(mask.sum(), 1.0)
    return nll_from_logprobs(log_softmax(logits), targets, mask / float(normalizer))


def sum_all(x):
    shape = x.data.shape

    def backward(dy):
        return (np.full(shape, float(dy)),)

    return Tensor._from_op(x.data.sum(), (x,), backward, "sum_all")
