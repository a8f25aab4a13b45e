"""Registry of finite-difference gradient checks, grouped by module.

Every check rebuilds its random inputs from the seed, and stochastic
functions draw their Gumbel noise from a generator re-created on every call,
so repeated probes see identical noise.  Switches use the relaxed forward
(``straight_through=False``) because the hard forward is piecewise constant.
"""
from dataclasses import dataclass

import numpy as np

from spectradet import tensor as T
from spectradet.attention import FcParams, MspConfig, channel_attention, msp_attention, msp_vector
from spectradet.freqfilter import (
    DspBlockParams,
    SwitchLogitParams,
    dynamic_spectral_attention,
    freq_logits,
    freq_loss,
    gumbel_softmax_sample,
)
from spectradet.spectral import dct2, idct2

SCOPES = ("tensor-core", "spectral", "attention", "freq-filter", "unidet-toy")


@dataclass(frozen=True)
class Check:
    scope: str
    name: str
    build: object  # rng -> (fn, params, max_coords)


REGISTRY = []


def register(scope, name, max_coords=None):
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}")

    def deco(builder):
        def build(rng):
            fn, params = builder(rng)
            return fn, params, max_coords
        REGISTRY.append(Check(scope, name, build))
        return builder
    return deco


def _p(rng, *shape, low=None, high=None, name=None):
    data = rng.uniform(low, high, shape) if low is not None else rng.normal(size=shape)
    return T.parameter(data, name)


def _weighted(out, rng):
    """Reduce ``out`` with fixed random weights so every entry matters."""
    w = T.Tensor(rng.normal(size=out.shape))
    return T.sum(T.mul(out, w))


def _unary(scope, name, op, low=None, high=None, shape=(3, 4)):
    @register(scope, name)
    def builder(rng):
        x = _p(rng, *shape, low=low, high=high, name="x")
        w = rng.normal(size=op(x).shape)
        return (lambda x: T.sum(T.mul(op(x), T.Tensor(w)))), [x]


for _name, _op, _lo, _hi in [
    ("sigmoid", T.sigmoid, None, None),
    ("relu", T.relu, None, None),
    ("absolute", T.absolute, None, None),
    ("power(2.5)", lambda x: T.power(x, 2.5), 0.2, 2.0),
    ("power(-0.5)", lambda x: T.power(x, -0.5), 0.2, 2.0),
    ("log", T.log, 0.2, 3.0),
    ("exp", T.exp, None, None),
    ("softplus", T.softplus, None, None),
    ("maximum_scalar", lambda x: T.maximum_scalar(x, 0.1), None, None),
    ("scale", lambda x: T.scale(x, -1.7), None, None),
    ("add_scalar", lambda x: T.add_scalar(x, 0.3), None, None),
    ("softmax", lambda x: T.softmax(x, axis=-1), None, None),
    ("log_softmax", lambda x: T.log_softmax(x, axis=0), None, None),
    ("transpose", T.transpose, None, None),
    ("reshape", lambda x: T.reshape(x, (2, 6)), None, None),
    ("index", lambda x: x[1:, ::2], None, None),
]:
    _unary("tensor-core", _name, _op, _lo, _hi)


def _binary(name, op, shapes=((3, 4), (3, 4))):
    @register("tensor-core", name)
    def builder(rng):
        a = _p(rng, *shapes[0], name="a")
        b = _p(rng, *shapes[1], name="b")
        w = rng.normal(size=op(a, b).shape)
        return (lambda a, b: T.sum(T.mul(op(a, b), T.Tensor(w)))), [a, b]


_binary("add", T.add)
_binary("sub", T.sub)
_binary("mul", T.mul)
_binary("mul(scalar)", T.mul, ((3, 4), ()))
_binary("matmul", T.matmul, ((3, 4), (4, 2)))
_binary("concat", lambda a, b: T.concat([a, b], axis=1), ((3, 4), (3, 2)))
_binary("stack", lambda a, b: T.stack([a, b], axis=0))


@register("tensor-core", "sum/mean")
def _reductions(rng):
    x = _p(rng, 2, 3, 4, name="x")
    return (lambda x: T.add(T.sum(T.mul(T.sum(x, axis=1), T.sum(x, axis=1))),
                            T.mean(T.mul(x, x)))), [x]


@register("tensor-core", "linear")
def _linear(rng):
    x, w, b = _p(rng, 5, name="x"), _p(rng, 3, 5, name="w"), _p(rng, 3, name="b")
    return (lambda x, w, b: _weighted(T.linear(x, w, b), np.random.default_rng(1))), [x, w, b]


def _conv(name, stride, padding, k):
    @register("tensor-core", name)
    def builder(rng):
        x = _p(rng, 2, 6, 6, name="x")
        w = _p(rng, 3, 2, k, k, name="w")
        b = _p(rng, 3, name="b")
        return (lambda x, w, b: _weighted(T.conv2d(x, w, b, stride, padding),
                                          np.random.default_rng(2))), [x, w, b]


_conv("conv2d(3x3,s1,p1)", 1, 1, 3)
_conv("conv2d(3x3,s2,p1)", 2, 1, 3)
_conv("conv2d(1x1)", 1, 0, 1)


@register("tensor-core", "feature-map ops")
def _feature_ops(rng):
    x = _p(rng, 2, 4, 4, name="x")
    s = _p(rng, 2, name="s")
    m = _p(rng, 4, 4, name="m")
    wd = rng.normal(size=(4, 4))

    def fn(x, s, m):
        y = T.channel_shift(T.channel_scale(x, s), s)
        y = T.add(y, T.expand_channels(m, 2))
        r = np.random.default_rng(3)
        out = _weighted(T.upsample_nearest(y, 2), r)
        out = T.add(out, _weighted(T.avg_pool(y, 2), r))
        out = T.add(out, _weighted(T.gap(y), r))
        return T.add(out, _weighted(T.spatial_dot(y, wd), r))
    return fn, [x, s, m]


@register("tensor-core", "separable_transform")
def _separable(rng):
    x = _p(rng, 2, 3, 4, name="x")
    rows, cols = rng.normal(size=(5, 3)), rng.normal(size=(2, 4))
    return (lambda x: _weighted(T.separable_transform(x, rows, cols), np.random.default_rng(4))), [x]


@register("spectral", "dct2/idct2")
def _dct(rng):
    x = _p(rng, 2, 4, 6, name="x")
    return (lambda x: T.add(_weighted(dct2(x), np.random.default_rng(5)),
                            _weighted(idct2(x), np.random.default_rng(6)))), [x]


def _fc(rng, C):
    fc = FcParams.init(C, r=2, rng=rng)
    # shift b1 so few hidden units sit at the relu kink
    fc.b1.assign(fc.b1.data + 0.3)
    return fc


@register("attention", "msp_vector")
def _msp(rng):
    x = _p(rng, 4, 4, 4, name="x")
    cfg = MspConfig.default(2, 4, 4)
    return (lambda x: _weighted(msp_vector(x, cfg), np.random.default_rng(7))), [x]


@register("attention", "channel_attention")
def _cattn(rng):
    fc = _fc(rng, 4)
    v = _p(rng, 4, name="v")
    return (lambda v, *ps: _weighted(channel_attention(v, fc), np.random.default_rng(8))), \
        [v] + fc.parameters()


@register("attention", "msp_attention")
def _mspattn(rng):
    fc = _fc(rng, 4)
    x = _p(rng, 4, 4, 4, name="x")
    cfg = MspConfig.default(2, 4, 4)
    return (lambda x, *ps: _weighted(msp_attention(x, cfg, fc), np.random.default_rng(9))), \
        [x] + fc.parameters()


def _logit_check(granularity):
    @register("freq-filter", f"freq_logits({granularity})")
    def builder(rng):
        prm = SwitchLogitParams.init(4, n=2, granularity=granularity, weight_scale=0.5, rng=rng)
        prm.bias.assign(rng.normal(size=prm.bias.shape))
        f = _p(rng, 4, 3, 3, name="spectrum")

        def fn(f, *ps):
            out = freq_logits(f, prm)
            if isinstance(out, list):
                out = T.stack(out, axis=0)
            return _weighted(out, np.random.default_rng(10))
        return fn, [f] + prm.parameters()


_logit_check("channel")
_logit_check("segment")


@register("freq-filter", "gumbel_softmax(relaxed)")
def _gumbel(rng):
    logits = _p(rng, 3, 3, 2, name="logits")
    return (lambda lg: _weighted(gumbel_softmax_sample(lg, 0.7, np.random.default_rng(11),
                                                       straight_through=False).value,
                                 np.random.default_rng(12))), [logits]


@register("freq-filter", "freq_loss(relaxed)")
def _fl(rng):
    logits = _p(rng, 2, 3, 3, 2, name="logits")

    def fn(lg):
        maps = [gumbel_softmax_sample(lg[i], 1.0, np.random.default_rng(13 + i), straight_through=False)
                for i in range(2)]
        return freq_loss(maps)
    return fn, [logits]


def _dsp_check(granularity):
    @register("freq-filter", f"dynamic_spectral_attention({granularity})")
    def builder(rng):
        blk = DspBlockParams.init(8, 4, 4, n=2, r=2, granularity=granularity, tau=0.8,
                                  logit_weight_scale=0.5, rng=rng)
        blk.fc.b1.assign(blk.fc.b1.data + 0.3)
        x = _p(rng, 8, 4, 4, name="x")
        wout = rng.normal(size=(8, 4, 4))

        def fn(x, *ps):
            res = dynamic_spectral_attention(x, blk, "train", np.random.default_rng(14),
                                             straight_through=False)
            return T.add(T.sum(T.mul(res.output, T.Tensor(wout))), res.freq_loss)
        return fn, [x] + blk.parameters()


_dsp_check("channel")
_dsp_check("segment")


def _loss_checks():
    from spectradet.degrade import Box, SceneAnnotation, SceneSpec, gen_toy_scene
    from spectradet.unidet.losses import contrastive_loss, detection_loss, restoration_loss

    @register("unidet-toy", "detection_loss")
    def _det(rng):
        _, ann = gen_toy_scene(np.random.default_rng(15), SceneSpec(size=32))
        raw = _p(rng, 8, 8, 8, name="raw")
        return (lambda r: detection_loss(r, ann)), [raw]

    @register("unidet-toy", "restoration_loss")
    def _res(rng):
        out = _p(rng, 3, 4, 4, name="restored")
        clean = rng.uniform(size=(3, 4, 4))
        return (lambda r: restoration_loss(r, clean)), [out]

    @register("unidet-toy", "contrastive_loss")
    def _cls(rng):
        embs = [_p(rng, 5, name=f"e{i}") for i in range(4)]
        kinds = ["fog", "fog", "rain", "rain"]
        return (lambda *es: contrastive_loss(list(es), kinds, 0.5)), embs

    @register("unidet-toy", "L_Total(full model)", max_coords=4)
    def _total(rng):
        from spectradet.unidet.losses import LossWeights
        from spectradet.unidet.model import ModelConfig, ToyModel
        from spectradet.unidet.train import Sample, batch_losses

        cfg = ModelConfig(image_size=16, widths=(4, 8, 8), deg_widths=(4, 4, 4), embed_dim=4,
                          segments=2, reduction=2, logit_weight_scale=0.5)
        model = ToyModel.init(cfg, rng)
        # give the zero-initialised output layers a signal
        for name in ("head.w", "dec.conv2.w"):
            model[name].assign(rng.normal(0.0, 0.3, model[name].shape))
        batch = []
        for i, kind in enumerate(("fog", "fog", "rain")):
            clean = rng.uniform(0.2, 0.8, (3, 16, 16))
            x0, y0 = 2 + 3 * i, 4 + i
            clean[:, y0:y0 + 6, x0:x0 + 6] = 0.9
            ann = SceneAnnotation([Box(i % 3, x0, y0, x0 + 6, y0 + 6)], 16, 16)
            batch.append(Sample(clean, np.clip(clean * 0.7 + 0.2, 0, 1), ann, kind))

        def fn(*ps):
            report, _ = batch_losses(model, batch, LossWeights(), "train", np.random.default_rng(19),
                                     contrastive_temperature=0.5, straight_through=False)
            return report.total
        return fn, model.parameters()


_loss_checks()


@dataclass
class CheckResult:
    check: Check
    report: T.GradReport

    @property
    def passed(self):
        return self.report.passed


def select(scope="all"):
    if scope != "all" and scope not in SCOPES:
        raise ValueError(f"scope must be 'all' or one of {SCOPES}, got {scope!r}")
    return [c for c in REGISTRY if scope == "all" or c.scope == scope]


def run_checks(scope="all", seed=0, step=1e-5, tol=1e-4):
    results = []
    for k, check in enumerate(select(scope)):
        rng = np.random.default_rng([seed, k])
        fn, params, max_coords = check.build(rng)
        report = T.gradcheck(fn, params, step=step, tol=tol, max_coords=max_coords, seed=seed)
        results.append(CheckResult(check, report))
    return results


def format_table(results):
    lines = [f"{'scope':<12} {'check':<40} {'max rel err':>12} {'coords':>7}  status"]
    for r in results:
        rep = r.report
        lines.append(f"{r.check.scope:<12} {r.check.name:<40} {rep.max_error:>12.3e} "
                     f"{sum(rep.checked.values()):>7d}  {'ok' if r.passed else 'FAIL'}")
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed} of {len(results)} checks passed")
    return "\n".join(lines)
