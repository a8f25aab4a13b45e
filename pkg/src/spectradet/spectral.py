"""2D DCT machinery: basis, transforms, and the low-frequency split.

The forward transform is deliberately unnormalised::

    f[h, w] = sum_ij x[i, j] * cos(pi*h*(i+1/2)/H) * cos(pi*w*(j+1/2)/W)

so that ``f[0, 0] == mean(x) * H * W`` holds exactly.  The inverse carries
the DCT-III scale factors (1/N for k = 0, 2/N otherwise) and is an exact
inverse of the forward map.
"""
from functools import lru_cache

import numpy as np

from spectradet import tensor as T


class FixedIndexSet(tuple):
    """Ordered, duplicate-free tuple of (h, w) frequency indices."""

    def __new__(cls, indices):
        items = tuple((int(h), int(w)) for h, w in indices)
        if len(set(items)) != len(items):
            raise ValueError(f"duplicate frequency indices in {items}")
        return super().__new__(cls, items)

    def check(self, H, W):
        for h, w in self:
            if not (0 <= h < H and 0 <= w < W):
                raise ValueError(f"frequency index {(h, w)} out of range for {H}x{W}")
        return self


def dct_basis(h, w, i, j, H, W):
    """Value of the (h, w) cosine basis function at spatial position (i, j)."""
    if not (0 <= h < H and 0 <= i < H and 0 <= w < W and 0 <= j < W):
        raise ValueError(f"index out of range: h={h} w={w} i={i} j={j} for {H}x{W}")
    return np.cos(np.pi * h * (i + 0.5) / H) * np.cos(np.pi * w * (j + 0.5) / W)


@lru_cache(maxsize=None)
def cosine_matrix(N):
    """``M[k, i] = cos(pi * k * (i + 1/2) / N)``; read-only, cached per N."""
    k = np.arange(N)[:, None]
    i = np.arange(N)[None, :]
    m = np.cos(np.pi * k * (i + 0.5) / N)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def inverse_scale(N):
    a = np.full(N, 2.0 / N)
    a[0] = 1.0 / N
    a.setflags(write=False)
    return a


def basis_norm_sq(h, w, H, W):
    """Squared norm of basis (h, w) as a length-H*W vector."""
    return H * W * (1.0 if h == 0 else 0.5) * (1.0 if w == 0 else 0.5)


class SpectralBasis:
    """Precomputed table ``table[h, w, i, j]`` of basis values for an H x W grid."""

    def __init__(self, H, W):
        if H < 1 or W < 1:
            raise ValueError(f"extents must be >= 1, got {H}x{W}")
        self.H, self.W = H, W
        self.rows = cosine_matrix(H)
        self.cols = cosine_matrix(W)
        table = np.einsum("hi,wj->hwij", self.rows, self.cols)
        table.setflags(write=False)
        self.table = table

    def __getitem__(self, hw):
        return self.table[hw]

    def gram(self):
        flat = self.table.reshape(self.H * self.W, self.H * self.W)
        return flat @ flat.T


@lru_cache(maxsize=64)
def spectral_basis(H, W):
    return SpectralBasis(H, W)


def _check_patch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3) or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise ValueError(f"expected an (H,W) patch or (C,H,W) stack, got shape {x.shape}")
    return x


def dct2_forward(patch, method="separable"):
    """Unnormalised 2D DCT of an (H, W) patch or per channel of a (C, H, W) stack.

    ``method="direct"`` sums against the full basis table, O(H^2 W^2); the
    default separable path computes ``M_H @ x @ M_W.T``.
    """
    x = _check_patch(patch)
    H, W = x.shape[-2:]
    if method == "direct":
        return np.tensordot(x, spectral_basis(H, W).table, axes=([-2, -1], [2, 3]))
    if method != "separable":
        raise ValueError(f"unknown method {method!r}")
    return cosine_matrix(H) @ x @ cosine_matrix(W).T


def dct2_inverse(spectrum, method="separable"):
    """Exact inverse of :func:`dct2_forward`."""
    f = _check_patch(spectrum)
    H, W = f.shape[-2:]
    scaled = f * inverse_scale(H)[:, None] * inverse_scale(W)[None, :]
    if method == "direct":
        return np.tensordot(scaled, spectral_basis(H, W).table, axes=([-2, -1], [0, 1]))
    if method != "separable":
        raise ValueError(f"unknown method {method!r}")
    return cosine_matrix(H).T @ scaled @ cosine_matrix(W)


def dct2(x):
    """Differentiable per-channel forward DCT of a Tensor."""
    H, W = x.shape[-2:]
    return T.separable_transform(x, cosine_matrix(H), cosine_matrix(W))


def idct2(f):
    """Differentiable inverse of :func:`dct2`."""
    H, W = f.shape[-2:]
    rows = cosine_matrix(H).T * inverse_scale(H)[None, :]
    cols = cosine_matrix(W).T * inverse_scale(W)[None, :]
    return T.separable_transform(f, rows, cols)


def keep_mask(keep, H, W):
    keep = FixedIndexSet(keep).check(H, W)
    if not keep:
        raise ValueError("keep set must be non-empty")
    mask = np.zeros((H, W))
    for h, w in keep:
        mask[h, w] = 1.0
    return mask


def lowfreq_reconstruction(patch, keep=((0, 0),)):
    """Split ``patch`` into the part rebuilt from ``keep`` frequencies and the rest.

    With ``keep = {(0, 0)}`` the utilised part is the constant patch at the
    spatial mean, i.e. everything a GAP descriptor sees.
    """
    x = _check_patch(patch)
    H, W = x.shape[-2:]
    mask = keep_mask(keep, H, W)
    utilized = dct2_inverse(dct2_forward(x) * mask)
    return utilized, x - utilized


def radial_band_index(H, W, bands):
    """Band id of every (h, w) coefficient under equal-width radial binning.

    Radius is ``sqrt((h/H)^2 + (w/W)^2)``, bands cover [0, max radius] with
    inclusive lower / exclusive upper edges and an inclusive final band.
    """
    if bands < 1:
        raise ValueError("bands must be >= 1")
    r = np.hypot(np.arange(H)[:, None] / H, np.arange(W)[None, :] / W)
    rmax = r.max()
    if rmax == 0:
        return np.zeros((H, W), dtype=int)
    idx = np.floor(r / (rmax / bands)).astype(int)
    return np.minimum(idx, bands - 1)


def spectral_energy(spectrum, bands):
    """Sum of squared coefficients per radial band (channels summed for 3-D input)."""
    f = _check_patch(spectrum)
    H, W = f.shape[-2:]
    idx = radial_band_index(H, W, bands)
    sq = f ** 2
    if sq.ndim == 3:
        sq = sq.sum(axis=0)
    return np.bincount(idx.ravel(), weights=sq.ravel(), minlength=bands)
