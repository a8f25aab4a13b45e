"""Pure-numpy im2col/col2im, used when the compiled kernels are unavailable."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride, pad):
    C, H, W = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    OH, OW = win.shape[1], win.shape[2]
    # (C, OH, OW, kh, kw) -> (C, kh, kw, OH, OW)
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(C * kh * kw, OH * OW)


def col2im(cols, C, H, W, kh, kw, stride, pad):
    OH = (H + 2 * pad - kh) // stride + 1
    OW = (W + 2 * pad - kw) // stride + 1
    padded = np.zeros((C, H + 2 * pad, W + 2 * pad))
    cols = cols.reshape(C, kh, kw, OH, OW)
    for di in range(kh):
        for dj in range(kw):
            padded[:, di:di + stride * OH:stride, dj:dj + stride * OW:stride] += cols[:, di, dj]
    if pad:
        return padded[:, pad:pad + H, pad:pad + W].copy()
    return padded
