"""Backend selection for the convolution hot loop.

The compiled Cython module is used when it was built; otherwise the numpy
implementation in ``_pykernels`` takes over.  Set ``SPECTRADET_PURE=1`` to
force the fallback (the benchmark and the equivalence tests do this per call
via :func:`get_backend`).
"""
import os

from spectradet import _pykernels

try:
    from spectradet import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if os.environ.get("SPECTRADET_PURE") == "1" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_impl = BACKENDS[BACKEND]


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(BACKENDS)}") from None


def im2col(x, kh, kw, stride, pad):
    return _impl.im2col(x, kh, kw, stride, pad)


def col2im(cols, C, H, W, kh, kw, stride, pad):
    return _impl.col2im(cols, C, H, W, kh, kw, stride, pad)
