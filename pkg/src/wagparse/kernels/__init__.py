"""Hot numeric kernels with selectable backend.

``WAGPARSE_BACKEND=numba`` (default when numba imports) routes the inner
loops through jitted kernels; ``WAGPARSE_BACKEND=numpy`` forces the pure
numpy fallback. Both expose identical signatures; ``benchmarks/`` compares
them head to head.
"""

import os

from . import numpy_backend

_KERNEL_NAMES = [
    "layer_norm_fwd",
    "layer_norm_bwd",
    "softmax_fwd",
    "softmax_bwd",
    "log_softmax_fwd",
    "log_softmax_bwd",
    "gelu_fwd",
    "gelu_bwd",
    "nll_fwd",
    "nll_bwd",
    "kl_fwd",
    "kl_bwd",
    "graph_scatter",
    "row_scatter_add",
    "adam_update",
]

LN_EPS = numpy_backend.LN_EPS


def get_backend(name):
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        from . import numba_backend

        return numba_backend
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    requested = os.environ.get("WAGPARSE_BACKEND", "").strip().lower()
    if requested:
        return get_backend(requested), requested
    try:
        return get_backend("numba"), "numba"
    except ImportError:
        return numpy_backend, "numpy"


_impl, BACKEND = _select()

layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
log_softmax_fwd = _impl.log_softmax_fwd
log_softmax_bwd = _impl.log_softmax_bwd
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
nll_fwd = _impl.nll_fwd
nll_bwd = _impl.nll_bwd
kl_fwd = _impl.kl_fwd
kl_bwd = _impl.kl_bwd
graph_scatter = _impl.graph_scatter
row_scatter_add = _impl.row_scatter_add
adam_update = _impl.adam_update

__all__ = _KERNEL_NAMES + ["BACKEND", "LN_EPS", "get_backend"]
