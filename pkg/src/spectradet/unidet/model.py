"""Desk-scale dual-branch detect + restore network.

Three encoders read the degraded image.  The degradation encoder produces a
spatial map and a pooled embedding; the embedding modulates the detection
and restoration encoders through per-channel scale and shift.  The detection
encoder carries two dynamic spectral attention blocks, one after each
stride-2 stage.  The three encoder outputs are concatenated and mixed by a
1x1 convolution; the fused map feeds a 3x3 grid detection head and a
two-stage upsampling restoration decoder.

Encoders see the image standardised per sample (zero mean, unit spread);
the decoder's skip connection gets the raw image.  Switch logits start with
a keep bias so every frequency is initially retained and the switches learn
to drop coefficients rather than to recover them.
"""
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from spectradet import tensor as T
from spectradet.freqfilter import DspBlockParams, dynamic_spectral_attention

N_CLASSES = 3
HEAD_CHANNELS = 1 + N_CLASSES + 4


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    widths: tuple = (16, 32, 32)
    deg_widths: tuple = (8, 16, 16)
    embed_dim: int = 16
    segments: int = 4
    reduction: int = 4
    spectral: str = "dynamic"  # or "static": fixed frequency assignment, no switches
    granularity: str = "channel"
    tau: float = 1.0
    keep_bias: float = 3.0
    logit_weight_scale: float = 0.1
    standardize: bool = True
    objectness_prior: float = 0.03  # initial sigmoid of the objectness logit

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        object.__setattr__(self, "deg_widths", tuple(self.deg_widths))
        if self.image_size % 8:
            raise ValueError(f"image size must be a multiple of 8, got {self.image_size}")
        if self.spectral not in ("dynamic", "static"):
            raise ValueError(f"spectral must be 'dynamic' or 'static', got {self.spectral!r}")

    @property
    def grid(self):
        return self.image_size // 4

    def as_dict(self):
        return asdict(self)


def _conv_param(rng, cout, cin, k, name):
    std = np.sqrt(2.0 / (cin * k * k))
    return T.parameter(rng.normal(0.0, std, (cout, cin, k, k)), name)


def _zeros(shape, name):
    return T.parameter(np.zeros(shape), name)


class ToyModel:
    """Parameter tree plus configuration; see :func:`forward`."""

    def __init__(self, config, params, blocks):
        self.config = config
        self.params = params
        self.blocks = blocks

    @classmethod
    def init(cls, config=ModelConfig(), rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        c1, c2, c3 = config.widths
        d1, d2, d3 = config.deg_widths
        p = OrderedDict()

        def conv(name, cout, cin, k):
            p[f"{name}.w"] = _conv_param(rng, cout, cin, k, f"{name}.w")
            p[f"{name}.b"] = _zeros((cout,), f"{name}.b")

        conv("deg.conv1", d1, 3, 3)
        conv("deg.conv2", d2, d1, 3)
        conv("deg.conv3", d3, d2, 3)
        p["deg.embed.w"] = T.parameter(rng.normal(0.0, np.sqrt(1.0 / d3), (config.embed_dim, d3)), "deg.embed.w")
        p["deg.embed.b"] = _zeros((config.embed_dim,), "deg.embed.b")
        for branch in ("det", "res"):
            conv(f"{branch}.conv1", c1, 3, 3)
            conv(f"{branch}.conv2", c2, c1, 3)
            conv(f"{branch}.conv3", c3, c2, 3)
            # feature-wise scale/shift predicted from the degradation embedding
            p[f"{branch}.film.w"] = T.parameter(
                rng.normal(0.0, 0.1 / np.sqrt(config.embed_dim), (2 * c3, config.embed_dim)), f"{branch}.film.w")
            p[f"{branch}.film.b"] = _zeros((2 * c3,), f"{branch}.film.b")
        conv("fuse", c3, c3 + c3 + d3, 1)
        p["head.w"] = _zeros((HEAD_CHANNELS, c3, 3, 3), "head.w")
        head_b = np.zeros(HEAD_CHANNELS)
        head_b[0] = np.log(config.objectness_prior / (1.0 - config.objectness_prior))
        p["head.b"] = T.parameter(head_b, "head.b")
        conv("dec.conv1", c1, c3, 3)
        p["dec.conv2.w"] = _zeros((3, c1 + 3, 3, 3), "dec.conv2.w")
        p["dec.conv2.b"] = _zeros((3,), "dec.conv2.b")

        size = config.image_size
        blocks = []
        for k, (ch, hw) in enumerate(((c2, size // 2), (c3, size // 4))):
            blk = DspBlockParams.init(
                ch, hw, hw, n=config.segments, r=config.reduction, granularity=config.granularity,
                tau=config.tau, keep_bias=config.keep_bias, logit_weight_scale=config.logit_weight_scale,
                standardize=config.standardize, rng=rng, prefix=f"dsp{k + 1}")
            blocks.append(blk)
            for prm in blk.parameters():
                p[prm.name] = prm
        return cls(config, p, blocks)

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def __getitem__(self, name):
        return self.params[name]

    def clone(self):
        snap = {k: v.data.copy() for k, v in self.params.items()}
        other = ToyModel.init(self.config)
        other.load_state(snap)
        return other

    def state(self):
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def load_state(self, state):
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)}")
        for k, prm in self.params.items():
            prm.assign(state[k])

    def set_tau(self, tau):
        for blk in self.blocks:
            blk.tau = tau


@dataclass
class ForwardOutput:
    raw: T.Tensor  # (8, G, G): objectness, 3 class logits, 4 box logits
    restored: T.Tensor  # (3, H, W) in (0, 1)
    embedding: T.Tensor  # (embed_dim,)
    freq_loss: T.Tensor
    active_switches: int
    keep_mass: float = 0.0


def _conv(p, name, x, stride=1, padding=1):
    return T.conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride, padding=padding)


def _film(p, branch, x, emb):
    C = x.shape[0]
    gb = T.linear(emb, p[f"{branch}.film.w"], p[f"{branch}.film.b"])
    gamma = T.add_scalar(gb[:C], 1.0)
    return T.channel_shift(T.channel_scale(x, gamma), gb[C:])


def forward(model, img, mode="eval", rng=None, straight_through=True):
    """Run the network on one (3, H, W) image.

    ``mode`` selects the switch behaviour of the spectral blocks: ``train``
    (Gumbel straight-through, needs ``rng``), ``eval`` (deterministic argmax)
    or ``eval-stochastic``.  Models configured with ``spectral="static"``
    ignore it and use the fixed frequency assignment.
    """
    cfg = model.config
    img = T.as_tensor(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise T.ShapeError(f"expected a (3,H,W) image, got {img.shape}")
    if img.shape[1:] != (cfg.image_size, cfg.image_size):
        raise T.ShapeError(f"model expects {cfg.image_size}x{cfg.image_size} images, got {img.shape[1:]}")
    p = model.params
    raw_img = img
    img = T.Tensor((img.data - img.data.mean()) / (img.data.std() + 1e-3))
    block_mode = "static" if cfg.spectral == "static" else mode

    d = T.relu(_conv(p, "deg.conv1", img))
    d = T.relu(_conv(p, "deg.conv2", d, stride=2))
    d = T.relu(_conv(p, "deg.conv3", d, stride=2))
    emb = T.linear(T.gap(d), p["deg.embed.w"], p["deg.embed.b"])

    x = T.relu(_conv(p, "det.conv1", img))
    x = T.relu(_conv(p, "det.conv2", x, stride=2))
    r1 = dynamic_spectral_attention(x, model.blocks[0], block_mode, rng, straight_through)
    x = T.relu(_conv(p, "det.conv3", r1.output, stride=2))
    r2 = dynamic_spectral_attention(x, model.blocks[1], block_mode, rng, straight_through)
    det = _film(p, "det", r2.output, emb)

    y = T.relu(_conv(p, "res.conv1", img))
    y = T.relu(_conv(p, "res.conv2", y, stride=2))
    y = T.relu(_conv(p, "res.conv3", y, stride=2))
    res = _film(p, "res", y, emb)

    fused = T.relu(_conv(p, "fuse", T.concat([det, res, d], axis=0), padding=0))
    raw = T.conv2d(fused, p["head.w"], p["head.b"], padding=1)

    u = T.relu(_conv(p, "dec.conv1", T.upsample_nearest(fused, 2)))
    u = T.concat([T.upsample_nearest(u, 2), raw_img], axis=0)
    restored = T.sigmoid(_conv(p, "dec.conv2", u))

    l_fre = T.add(r1.freq_loss, r2.freq_loss)
    return ForwardOutput(raw, restored, emb, l_fre, r1.active_switches + r2.active_switches,
                         r1.keep_mass + r2.keep_mass)
