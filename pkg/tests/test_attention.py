import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectradet import tensor as T
from spectradet.attention import (
    ConfigError,
    FcParams,
    MspConfig,
    apply_attention,
    channel_attention,
    default_assignment,
    msp_attention,
    msp_concat,
    msp_project,
    msp_vector,
    split_channels,
)
from spectradet.spectral import basis_norm_sq, spectral_basis


def test_split_examples(rng):
    X = rng.normal(size=(4, 3, 3))
    (only,) = split_channels(X, 1)
    np.testing.assert_array_equal(only.data, X)
    a, b = split_channels(X, 2)
    np.testing.assert_array_equal(a.data, X[:2])
    np.testing.assert_array_equal(b.data, X[2:])
    with pytest.raises(ConfigError):
        split_channels(np.zeros((6, 2, 2)), 4)


@given(st.sampled_from([(1, 1), (2, 1), (2, 2), (6, 3), (8, 4), (8, 8), (12, 6)]), st.integers(0, 2**31))
def test_split_concat_round_trip(Cn, seed):
    C, n = Cn
    X = np.random.default_rng(seed).normal(size=(C, 3, 2))
    back = msp_concat(split_channels(X, n), C) if n == 1 else T.concat(split_channels(X, n), axis=0)
    np.testing.assert_array_equal(back.data, X)


def test_project_dc_is_scaled_gap(rng):
    seg = rng.normal(size=(3, 5, 4))
    np.testing.assert_allclose(msp_project(seg, (0, 0)).data, seg.mean(axis=(1, 2)) * 20, atol=1e-12)


def test_project_basis_gives_norm():
    seg = np.stack([spectral_basis(4, 6)[1, 2]] * 2)
    np.testing.assert_allclose(msp_project(seg, (1, 2)).data, basis_norm_sq(1, 2, 4, 6), atol=1e-12)


def test_project_matches_loop(rng):
    seg = rng.normal(size=(2, 4, 4))
    ref = np.zeros(2)
    for c in range(2):
        for h in range(4):
            for w in range(4):
                ref[c] += seg[c, h, w] * np.cos(np.pi * 1 * (h + 0.5) / 4) * np.cos(np.pi * 2 * (w + 0.5) / 4)
    np.testing.assert_allclose(msp_project(seg, (1, 2)).data, ref, atol=1e-12)


def test_concat_examples():
    a = np.array([1.0, 2.0])
    np.testing.assert_array_equal(msp_concat([a]).data, a)
    np.testing.assert_array_equal(msp_concat([[1.0, 2.0], [3.0, 4.0]]).data, [1, 2, 3, 4])
    with pytest.raises(T.ShapeError):
        msp_concat([[1.0, 2.0], [3.0]], C=4)


@given(st.integers(1, 6), st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31))
def test_n1_dc_pipeline_is_gap(C, H, W, seed):
    X = np.random.default_rng(seed).normal(size=(C, H, W))
    cfg = MspConfig(1, [(0, 0)], H, W)
    raw = msp_vector(X, cfg, standardize=False).data
    np.testing.assert_allclose(raw, T.gap(X).data * H * W, atol=1e-12 * H * W)
    np.testing.assert_allclose(msp_vector(X, cfg).data, T.gap(X).data, atol=1e-12)


def test_default_assignment():
    assert default_assignment(1, 8, 8) == ((0, 0),)
    assert default_assignment(3, 8, 8) == ((0, 0), (0, 1), (1, 0))
    assert default_assignment(6, 8, 8) == ((0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2))
    with pytest.raises(ConfigError):
        default_assignment(17, 4, 4)


@given(st.integers(1, 7), st.integers(1, 7))
def test_zigzag_is_a_deterministic_permutation(H, W):
    order = default_assignment(H * W, H, W)
    assert sorted(order) == [(h, w) for h in range(H) for w in range(W)]
    assert [h + w for h, w in order] == sorted(h + w for h, w in order)
    assert order == default_assignment(H * W, H, W)


def test_config_errors():
    with pytest.raises(ConfigError):
        MspConfig(2, [(0, 0)], 4, 4)
    with pytest.raises(ConfigError):
        MspConfig(1, [(4, 0)], 4, 4)
    with pytest.raises(ConfigError):
        MspConfig.default(3, 4, 4).validate(np.zeros((4, 4, 4)))
    with pytest.raises(ConfigError):
        MspConfig.default(1, 4, 4).validate(np.zeros((4, 5, 4)))
    with pytest.raises(ConfigError):
        FcParams.init(6, r=4)


def test_zero_fc_gives_half():
    att = channel_attention(np.random.default_rng(0).normal(size=8), FcParams.zeros(8, 2))
    np.testing.assert_array_equal(att.data, 0.5)


def test_identity_fc_on_zero_descriptor():
    eye = np.eye(3)
    fc = FcParams(T.Tensor(eye), T.Tensor(np.zeros(3)), T.Tensor(eye), T.Tensor(np.zeros(3)), 1)
    np.testing.assert_array_equal(channel_attention(np.zeros(3), fc).data, 0.5)
    with pytest.raises(T.ShapeError):
        channel_attention(np.zeros(4), fc)


@given(st.integers(0, 2**31))
def test_attention_in_open_unit_interval(seed):
    r = np.random.default_rng(seed)
    att = channel_attention(r.normal(size=8), FcParams.init(8, 2, r)).data
    assert np.all((att > 0) & (att < 1))


def test_apply_attention_examples(rng):
    X = rng.normal(size=(2, 3, 3))
    np.testing.assert_array_equal(apply_attention(X, np.ones(2)).data, X)
    np.testing.assert_array_equal(apply_attention(X, np.zeros(2)).data, 0)
    out = apply_attention(X, np.array([0.5, 2.0])).data
    np.testing.assert_allclose(out[0], X[0] / 2)
    np.testing.assert_allclose(out[1], X[1] * 2)


@given(st.integers(0, 2**31), st.floats(0.01, 10))
def test_apply_attention_sign_and_homogeneity(seed, k):
    r = np.random.default_rng(seed)
    X = r.normal(size=(3, 4, 4))
    att = r.uniform(0.01, 1, size=3)
    out = apply_attention(X, att).data
    np.testing.assert_array_equal(np.sign(out), np.sign(X))
    np.testing.assert_allclose(apply_attention(X, k * att).data, k * out, rtol=1e-14)


def test_fc_gradcheck(rng):
    fc = FcParams.init(8, 2, rng)
    fc.b1.assign(rng.normal(size=4))
    freq = rng.normal(size=8)
    w = rng.normal(size=8)
    rep = T.gradcheck(lambda *p: T.sum(T.mul(channel_attention(freq, FcParams(*p, 2)), w)), fc.parameters())
    assert rep.passed, str(rep)


@pytest.mark.parametrize("standardize", [True, False])
def test_block_gradcheck(rng, standardize):
    cfg = MspConfig.default(2, 4, 4)
    fc = FcParams.init(4, 2, rng)
    fc.b1.assign(rng.normal(size=2))
    if not standardize:
        fc.w1.assign(fc.w1.data / 16)
    X = T.parameter(rng.normal(size=(4, 4, 4)))
    w = rng.normal(size=(4, 4, 4))
    rep = T.gradcheck(lambda X, *p: T.sum(T.mul(msp_attention(X, cfg, FcParams(*p, 2), standardize), w)),
                      [X] + fc.parameters())
    assert rep.passed, str(rep)
