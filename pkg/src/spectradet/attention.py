"""Multi-spectrum channel attention.

Channels are split into ``n`` equal segments; each segment is summarised by
its projection onto one assigned DCT basis function, the partial vectors are
concatenated and fed through a sigmoid-gated bottleneck.  With a single
segment and the (0, 0) frequency this reduces to squeeze-and-excitation on a
GAP descriptor scaled by H*W.
"""
from dataclasses import dataclass

import numpy as np

from spectradet import tensor as T
from spectradet.spectral import FixedIndexSet, spectral_basis


class ConfigError(ValueError):
    """Block configuration is inconsistent with the feature map."""


def zigzag_indices(H, W):
    """All (h, w) pairs of an H x W grid in JPEG zigzag order."""
    out = []
    for s in range(H + W - 1):
        diag = [(h, s - h) for h in range(H) if 0 <= s - h < W]
        # even anti-diagonals run bottom-left to top-right
        out.extend(diag if s % 2 else diag[::-1])
    return out


def default_assignment(n, H, W):
    """First ``n`` frequencies in zigzag order."""
    if n < 1 or n > H * W:
        raise ConfigError(f"cannot assign {n} frequencies on a {H}x{W} grid")
    return FixedIndexSet(zigzag_indices(H, W)[:n])


@dataclass(frozen=True)
class MspConfig:
    n: int
    assignment: FixedIndexSet
    H: int
    W: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", FixedIndexSet(self.assignment))
        if len(self.assignment) != self.n:
            raise ConfigError(f"assignment has {len(self.assignment)} entries for n={self.n}")
        try:
            self.assignment.check(self.H, self.W)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def default(cls, n, H, W):
        return cls(n, default_assignment(n, H, W), H, W)

    def validate(self, X):
        C, H, W = X.shape
        if (H, W) != (self.H, self.W):
            raise ConfigError(f"config expects {self.H}x{self.W} maps, got {H}x{W}")
        if C % self.n:
            raise ConfigError(f"{self.n} segments do not divide {C} channels")


class FcParams:
    """Two-layer bottleneck ``w2 @ relu(w1 @ v + b1) + b2`` with reduction ``r``."""

    def __init__(self, w1, b1, w2, b2, r):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.r = r

    @classmethod
    def init(cls, C, r=4, rng=None, prefix="fc"):
        if r < 1 or C % r:
            raise ConfigError(f"reduction ratio {r} must divide channel count {C}")
        rng = np.random.default_rng() if rng is None else rng
        hidden = C // r
        return cls(
            T.parameter(rng.normal(0.0, np.sqrt(2.0 / C), (hidden, C)), f"{prefix}.w1"),
            T.parameter(np.zeros(hidden), f"{prefix}.b1"),
            T.parameter(rng.normal(0.0, np.sqrt(1.0 / hidden), (C, hidden)), f"{prefix}.w2"),
            T.parameter(np.zeros(C), f"{prefix}.b2"),
            r,
        )

    @classmethod
    def zeros(cls, C, r=4, prefix="fc"):
        if r < 1 or C % r:
            raise ConfigError(f"reduction ratio {r} must divide channel count {C}")
        hidden = C // r
        return cls(
            T.parameter(np.zeros((hidden, C)), f"{prefix}.w1"),
            T.parameter(np.zeros(hidden), f"{prefix}.b1"),
            T.parameter(np.zeros((C, hidden)), f"{prefix}.w2"),
            T.parameter(np.zeros(C), f"{prefix}.b2"),
            r,
        )

    @property
    def channels(self):
        return self.w1.shape[1]

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]


def split_channels(X, n):
    X = T.as_tensor(X)
    C = X.shape[0]
    if n < 1 or C % n:
        raise ConfigError(f"{n} segments do not divide {C} channels")
    if n == 1:
        return [X]
    step = C // n
    return [X[i * step:(i + 1) * step] for i in range(n)]


def msp_project(segment, index):
    """Projection of every channel of ``segment`` onto basis ``index``."""
    segment = T.as_tensor(segment)
    _, H, W = segment.shape
    u, v = FixedIndexSet([index]).check(H, W)[0]
    return T.spatial_dot(segment, spectral_basis(H, W).table[u, v])


def msp_concat(parts, C=None):
    parts = [T.as_tensor(p) for p in parts]
    total = int(np.sum([p.shape[0] for p in parts]))
    if C is not None and total != C:
        raise T.ShapeError(f"parts sum to {total} entries, expected {C}")
    return parts[0] if len(parts) == 1 else T.concat(parts, axis=0)


def msp_vector(X, cfg, standardize=True):
    """Concatenated multi-spectrum descriptor of ``X``; divided by H*W when standardising."""
    X = T.as_tensor(X)
    cfg.validate(X)
    parts = [msp_project(seg, idx) for seg, idx in zip(split_channels(X, cfg.n), cfg.assignment)]
    freq = msp_concat(parts, X.shape[0])
    if standardize:
        freq = T.scale(freq, 1.0 / (cfg.H * cfg.W))
    return freq


def channel_attention(freq, params):
    """``sigmoid(w2 @ relu(w1 @ freq + b1) + b2)``."""
    freq = T.as_tensor(freq)
    if freq.shape != (params.channels,):
        raise T.ShapeError(f"descriptor of shape {freq.shape} for Fc expecting ({params.channels},)")
    hidden = T.relu(T.linear(freq, params.w1, params.b1))
    return T.sigmoid(T.linear(hidden, params.w2, params.b2))


def apply_attention(X, att):
    return T.channel_scale(X, att)


def msp_attention(X, cfg, params, standardize=True):
    """Static multi-spectrum attention block; returns the re-weighted map."""
    return apply_attention(X, channel_attention(msp_vector(X, cfg, standardize), params))
