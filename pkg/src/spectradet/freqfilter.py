"""Learnable binary frequency switches trained with Gumbel-Softmax.

Every DCT coefficient of every segment gets a two-way logit pair
(keep, drop).  In training the forward pass uses the hard Gumbel-max
decision while gradients flow through the relaxed softmax (straight-through);
in evaluation the decision is the deterministic argmax.  Retained
coefficients are summed into the per-channel descriptor that feeds the
channel attention, and ``ln(max(#kept, 1))`` regularises the selection.
"""
from dataclasses import dataclass, field

import numpy as np

from spectradet import tensor as T
from spectradet.attention import (
    ConfigError,
    FcParams,
    MspConfig,
    apply_attention,
    channel_attention,
    msp_concat,
    msp_vector,
    split_channels,
)
from spectradet.spectral import dct2

KEEP, DROP = 0, 1
MODES = ("static", "train", "eval", "eval-stochastic")
GRANULARITIES = ("channel", "segment")
_U_EPS = 1e-12


@dataclass(frozen=True)
class GumbelConfig:
    tau: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")


@dataclass
class SwitchMap:
    """Switch decisions for one segment.

    ``value`` is the tensor multiplied into the spectrum: hard {0, 1} values
    (straight-through in training) or relaxed values when straight-through is
    disabled.  ``soft`` is the keep-probability softmax(logits)[keep].
    """

    value: T.Tensor
    soft: np.ndarray
    hard: np.ndarray
    mode: str
    relaxed: np.ndarray | None = None

    @property
    def active(self):
        return int(self.hard.sum())


class SwitchLogitParams:
    """Projection from spectral coefficients to (keep, drop) logits.

    ``granularity="channel"``: per-channel affine pair, logits C x H x W x 2.
    ``granularity="segment"``: a 1x1 convolution with two kernels per segment,
    logits H x W x 2 shared by the segment's channels.
    """

    def __init__(self, weight, bias, granularity, n):
        self.weight, self.bias = weight, bias
        self.granularity = granularity
        self.n = n

    @classmethod
    def init(cls, C, n=1, granularity="channel", keep_bias=0.0, weight_scale=0.0, rng=None,
             prefix="logits"):
        if granularity not in GRANULARITIES:
            raise ConfigError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
        rng = np.random.default_rng() if rng is None else rng
        if granularity == "channel":
            wshape, bshape = (2, C), (2, C)
        else:
            if C % n:
                raise ConfigError(f"{n} segments do not divide {C} channels")
            wshape, bshape = (n, 2, C // n), (n, 2)
        weight = rng.normal(0.0, weight_scale, wshape) if weight_scale else np.zeros(wshape)
        bias = np.zeros(bshape)
        if granularity == "channel":
            bias[KEEP] = keep_bias
        else:
            bias[:, KEEP] = keep_bias
        return cls(T.parameter(weight, f"{prefix}.weight"), T.parameter(bias, f"{prefix}.bias"),
                   granularity, n)

    def parameters(self):
        return [self.weight, self.bias]


def freq_logits(spectrum, params):
    """Logit pairs for a (C, H, W) spectral map.

    Channel granularity returns one C x H x W x 2 tensor; segment granularity
    returns a list of n tensors of shape H x W x 2.
    """
    spectrum = T.as_tensor(spectrum)
    if spectrum.ndim != 3:
        raise T.ShapeError(f"freq_logits expects a (C,H,W) spectrum, got {spectrum.shape}")
    C = spectrum.shape[0]
    if params.granularity == "channel":
        if params.weight.shape != (2, C):
            raise T.ShapeError(f"logit params sized for {params.weight.shape[1]} channels, spectrum has {C}")
        pair = [T.channel_shift(T.channel_scale(spectrum, params.weight[k]), params.bias[k])
                for k in (KEEP, DROP)]
        return T.stack(pair, axis=-1)
    n = params.n
    if params.weight.shape[0] != n or params.weight.shape[2] * n != C:
        raise T.ShapeError(f"logit params {params.weight.shape} do not fit {C} channels")
    out = []
    for i, seg in enumerate(split_channels(spectrum, n)):
        pair = []
        for k in (KEEP, DROP):
            plane = T.sum(T.channel_scale(seg, params.weight[i, k]), axis=0)
            pair.append(T.add(plane, params.bias[i, k]))
        out.append(T.stack(pair, axis=-1))
    return out


def keep_probability(logits):
    """softmax over the last axis, keep component (plain array)."""
    l = logits.data if isinstance(logits, T.Tensor) else np.asarray(logits)
    return 0.5 * (1.0 + np.tanh(0.5 * (l[..., KEEP] - l[..., DROP])))


def sample_gumbel(shape, rng):
    u = np.clip(rng.random(shape), _U_EPS, 1.0 - _U_EPS)
    return -np.log(-np.log(u))


def gumbel_softmax_sample(logits, tau, rng, straight_through=True):
    """Train-mode switches: hard Gumbel-max forward, relaxed-softmax gradient."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    logits = T.as_tensor(logits)
    noise = sample_gumbel(logits.shape, rng)
    relaxed = T.softmax(T.scale(T.add(logits, T.Tensor._wrap(noise)), 1.0 / tau), axis=-1)
    relaxed_keep = relaxed[..., KEEP]
    # ties go to keep
    hard = (relaxed.data[..., KEEP] >= relaxed.data[..., DROP]).astype(np.float64)
    value = T.straight_through(hard, relaxed_keep) if straight_through else relaxed_keep
    return SwitchMap(value, keep_probability(logits), hard, "train", relaxed_keep.data.copy())


def switches(logits, mode, rng=None, tau=1.0, straight_through=True):
    """Switch map for ``mode`` in {train, eval, eval-stochastic}."""
    logits = T.as_tensor(logits)
    if mode == "train":
        return gumbel_softmax_sample(logits, tau, rng, straight_through)
    p = keep_probability(logits)
    if mode == "eval":
        hard = (logits.data[..., KEEP] >= logits.data[..., DROP]).astype(np.float64)
    elif mode == "eval-stochastic":
        if rng is None:
            raise ValueError("eval-stochastic mode needs an rng")
        hard = (rng.random(p.shape) < p).astype(np.float64)
    else:
        raise ValueError(f"unknown switch mode {mode!r}")
    return SwitchMap(T.Tensor._wrap(hard.copy()), p, hard, mode)


def apply_switches(spectrum, switch):
    """Point-wise product of a (C', H, W) spectrum with switch values.

    Switch values may be per channel (C', H, W) or shared (H, W).
    """
    spectrum = T.as_tensor(spectrum)
    value = switch.value if isinstance(switch, SwitchMap) else T.as_tensor(switch)
    if value.ndim == 2:
        value = T.expand_channels(value, spectrum.shape[0])
    if value.shape != spectrum.shape:
        raise T.ShapeError(f"switches {value.shape} do not match spectrum {spectrum.shape}")
    return T.mul(spectrum, value)


def aggregate_segment(filtered):
    """Sum of retained coefficients per channel."""
    return T.sum(T.as_tensor(filtered), axis=(1, 2))


def freq_loss(switch_maps):
    """``ln(max(total switch sum, 1))`` over all given switch maps."""
    values = [s.value if isinstance(s, SwitchMap) else T.as_tensor(s) for s in switch_maps]
    if not values:
        return T.Tensor(0.0)
    total = T.sum(values[0])
    for v in values[1:]:
        total = T.add(total, T.sum(v))
    return T.log(T.maximum_scalar(total, 1.0))


@dataclass
class DspBlockParams:
    """Learnable state and configuration of one dynamic spectral attention block."""

    cfg: MspConfig
    fc: FcParams
    logits: SwitchLogitParams
    tau: float = 1.0
    standardize: bool = True

    @classmethod
    def init(cls, C, H, W, n=4, r=4, granularity="channel", tau=1.0, keep_bias=0.0,
             logit_weight_scale=0.0, standardize=True, rng=None, prefix="dsp"):
        rng = np.random.default_rng() if rng is None else rng
        cfg = MspConfig.default(n, H, W)
        if C % n:
            raise ConfigError(f"{n} segments do not divide {C} channels")
        return cls(
            cfg,
            FcParams.init(C, r, rng, prefix=f"{prefix}.fc"),
            SwitchLogitParams.init(C, n, granularity, keep_bias, logit_weight_scale, rng,
                                   prefix=f"{prefix}.logits"),
            tau,
            standardize,
        )

    def parameters(self):
        return self.fc.parameters() + self.logits.parameters()


@dataclass
class DspResult:
    output: T.Tensor
    freq_loss: T.Tensor
    switch_maps: list = field(default_factory=list)
    descriptor: T.Tensor | None = None

    @property
    def active_switches(self):
        return int(np.sum([s.active for s in self.switch_maps]))

    @property
    def keep_mass(self):
        """Expected number of kept coefficients, the sum of keep probabilities."""
        return float(np.sum([s.soft.sum() for s in self.switch_maps]))


def dynamic_spectral_attention(X, block, mode="eval", rng=None, straight_through=True):
    """Full perceive-select block.

    ``mode="static"`` uses the fixed MSP frequency assignment (no switches,
    zero frequency loss).  Other modes compute the full spectrum of every
    segment, select coefficients with switches, aggregate and attend.
    """
    X = T.as_tensor(X)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    cfg = block.cfg
    cfg.validate(X)
    if mode == "static":
        desc = msp_vector(X, cfg, block.standardize)
        out = apply_attention(X, channel_attention(desc, block.fc))
        return DspResult(out, T.Tensor(0.0), [], desc)

    H, W = cfg.H, cfg.W
    spec = dct2(X)
    logit_in = T.scale(spec, 1.0 / (H * W)) if block.standardize else spec
    logits = freq_logits(logit_in, block.logits)
    n = cfg.n
    seg_specs = split_channels(spec, n)
    if block.logits.granularity == "channel":
        seg_logits = split_channels(logits, n)
    else:
        seg_logits = logits
    maps, parts = [], []
    for seg, lg in zip(seg_specs, seg_logits):
        sw = switches(lg, mode, rng, block.tau, straight_through)
        maps.append(sw)
        parts.append(aggregate_segment(apply_switches(seg, sw)))
    desc = msp_concat(parts, X.shape[0])
    if block.standardize:
        desc = T.scale(desc, 1.0 / (H * W))
    out = apply_attention(X, channel_attention(desc, block.fc))
    return DspResult(out, freq_loss(maps), maps, desc)
