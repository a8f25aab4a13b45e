import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectradet import gradchecks
from spectradet import tensor as T
from spectradet.degrade import Box, SceneAnnotation
from spectradet.unidet import (
    LossWeights,
    ModelConfig,
    ToyModel,
    TrainConfig,
    TrainingAbort,
    contrastive_loss,
    cosine_lr,
    decode,
    detection_loss,
    evaluate_ap,
    forward,
    make_dataset,
    nms,
    restoration_loss,
    total_loss,
    train,
)
from spectradet.unidet.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from spectradet.unidet.losses import grid_targets
from spectradet.unidet.metrics import Detection, average_precision, iou, mean_average_precision
from spectradet.unidet.train import TrainingDiverged, batch_losses, predict

SMALL = ModelConfig(image_size=32, widths=(4, 8, 8), deg_widths=(4, 4, 4), embed_dim=4, segments=2, reduction=2)


@pytest.fixture(scope="module")
def tiny_data():
    return make_dataset(6, kinds=("fog", "rain"), seed=3)


def test_default_lambdas():
    assert LossWeights().as_tuple() == (0.2, 0.8, 0.1, 0.1)


def test_total_loss_examples():
    assert total_loss(1, 1, 1, 1).l_total == pytest.approx(1.2, abs=1e-15)
    assert total_loss(0, 0, 0, 0).l_total == 0.0
    assert total_loss(0.37, 5, 5, 5, LossWeights(1, 0, 0, 0)).l_total == 0.37
    with pytest.raises(TrainingAbort):
        total_loss(1, float("nan"), 0, 0)
    with pytest.raises(ValueError):
        LossWeights(-1, 0, 0, 0)


@given(st.lists(st.floats(0, 50), min_size=4, max_size=4), st.lists(st.floats(0, 2), min_size=4, max_size=4))
def test_total_loss_identity(parts, lam):
    rep = total_loss(*parts, LossWeights(*lam))
    expect = sum(a * b for a, b in zip(lam, parts))
    assert abs(rep.l_total - expect) <= 1e-12 * max(1.0, abs(expect))
    assert rep.total.item() == pytest.approx(rep.l_total, abs=1e-12)


def loop_detection_loss(raw, ann, size):
    G = raw.shape[1]
    tg = grid_targets(ann, G, size)
    bce = 0.0
    for gy in range(G):
        for gx in range(G):
            z, t = raw[0, gy, gx], tg.objectness[gy, gx]
            p = 1 / (1 + math.exp(-z))
            bce += -(t * math.log(p) + (1 - t) * math.log(1 - p))
    loss = bce / (G * G)
    if tg.positives == 0:
        return loss
    ce = l1 = 0.0
    for gy in range(G):
        for gx in range(G):
            if not tg.objectness[gy, gx]:
                continue
            logits = raw[1:4, gy, gx]
            lse = math.log(sum(math.exp(v) for v in logits))
            ce += lse - logits[int(np.argmax(tg.classes[:, gy, gx]))]
            for k in range(4):
                l1 += abs(1 / (1 + math.exp(-raw[4 + k, gy, gx])) - tg.boxes[k, gy, gx])
    return loss + ce / tg.positives + l1 / (4 * tg.positives)


def test_detection_loss_matches_loop(rng):
    ann = SceneAnnotation([Box(0, 2, 3, 10, 12), Box(2, 18, 16, 30, 29)], 32, 32)
    raw = rng.normal(size=(8, 8, 8))
    assert detection_loss(raw, ann).item() == pytest.approx(loop_detection_loss(raw, ann, 32), abs=1e-12)
    empty = SceneAnnotation([], 32, 32)
    assert detection_loss(raw, empty).item() == pytest.approx(loop_detection_loss(raw, empty, 32), abs=1e-12)


def test_detection_loss_saturated():
    ann = SceneAnnotation([Box(1, 4, 4, 12, 12)], 32, 32)
    tg = grid_targets(ann, 8, 32)
    raw = np.zeros((8, 8, 8))
    raw[0] = np.where(tg.objectness > 0, 30.0, -30.0)
    raw[1:4] = np.where(tg.classes > 0, 30.0, -30.0)
    raw[4:] = np.log(np.clip(tg.boxes, 1e-9, 1 - 1e-9) / (1 - np.clip(tg.boxes, 1e-9, 1 - 1e-9)))
    assert detection_loss(raw, ann).item() < 0.01
    assert detection_loss(np.full((8, 8, 8), -20.0), SceneAnnotation([], 32, 32)).item() < 1e-6


def test_restoration_loss(rng):
    a = rng.uniform(size=(3, 4, 5))
    assert restoration_loss(a, a).item() == 0.0
    assert restoration_loss(np.clip(a, 0, 0.8) + 0.1, np.clip(a, 0, 0.8)).item() == pytest.approx(0.1, abs=1e-12)
    b = rng.uniform(size=(3, 4, 5))
    ref = sum(abs(a[i, j, k] - b[i, j, k]) for i in range(3) for j in range(4) for k in range(5)) / 60
    assert restoration_loss(a, b).item() == pytest.approx(ref, abs=1e-12)
    with pytest.raises(T.ShapeError):
        restoration_loss(a, b[:, :2])


def test_contrastive_examples():
    e = [np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    assert contrastive_loss(e, ["fog", "fog", "rain"], 0.1).item() < 0.01


@pytest.mark.parametrize("kinds", [["fog", "fog", "rain", "rain", "rain"], ["a", "a", "a", "b"], ["x", "y", "x"]])
def test_contrastive_symmetric_closed_form(kinds):
    B = len(kinds)
    same = [sum(k == o for o in kinds) - 1 for k in kinds]
    expect = np.mean([math.log(B - 1) - math.log(p) for p in same if p > 0])
    got = contrastive_loss([np.ones(4)] * B, kinds, 0.1).item()
    assert got == pytest.approx(expect, abs=1e-12)


@given(st.integers(0, 2**31))
def test_contrastive_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    kinds = ["fog", "rain", "fog", "snow", "rain", "fog"]
    emb = [r.normal(size=5) for _ in kinds]
    perm = r.permutation(len(kinds))
    a = contrastive_loss(emb, kinds).item()
    b = contrastive_loss([emb[i] for i in perm], [kinds[i] for i in perm]).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_contrastive_without_positive(caplog):
    assert contrastive_loss([np.ones(2), np.zeros(2) + 1], ["fog", "rain"]).item() == 0.0
    assert "no positive pair" in caplog.text


def test_ap_hand_case():
    # TP, FP, TP at descending confidence, two ground-truth boxes
    assert average_precision([1, 0, 1], 2) == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3), abs=1e-15)
    assert average_precision([], 3) == 0.0
    assert math.isnan(average_precision([1], 0))


def test_map_perfect_and_empty():
    anns = [SceneAnnotation([Box(0, 1, 1, 9, 9), Box(2, 12, 12, 20, 22)], 32, 32)]
    preds = [[Detection(b.cls, 1.0, (b.x_min, b.y_min, b.x_max, b.y_max)) for b in anns[0].objects]]
    res = mean_average_precision(preds, anns)
    assert res.per_class["circle"] == 1.0 and res.per_class["triangle"] == 1.0
    assert math.isnan(res.per_class["square"]) and res.mean_ap == 1.0
    assert mean_average_precision([[]], anns).mean_ap == 0.0
    with pytest.raises(ValueError):
        mean_average_precision(preds, anns, 1.0)


def test_nms_and_iou():
    assert iou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(1 / 7)
    dets = [Detection(0, 0.9, (0, 0, 10, 10)), Detection(0, 0.8, (1, 1, 10, 10)), Detection(1, 0.7, (1, 1, 10, 10))]
    assert nms(dets) == [dets[0], dets[2]]


def test_decode_box_geometry():
    raw = np.full((8, 8, 8), -30.0)
    raw[0, 2, 5] = 30.0  # objectness at row 2, column 5
    raw[3, 2, 5] = 30.0  # class 2
    raw[4:, 2, 5] = 0.0  # offsets 0.5, size 0.5 * image
    (d,) = decode(raw, 32)
    assert d.cls == 2 and d.confidence == pytest.approx(1.0)
    np.testing.assert_allclose(d.box, (22 - 8, 10 - 8, 22 + 8, 10 + 8))


def test_zero_heads_symmetry(tiny_data):
    model = ToyModel.init(SMALL, np.random.default_rng(0))
    out = forward(model, tiny_data[0].degraded)
    np.testing.assert_array_equal(out.restored.data, 0.5)
    assert np.all(out.raw.data[0] == out.raw.data[0, 0, 0])


def test_forward_shape_errors():
    model = ToyModel.init(SMALL)
    with pytest.raises(T.ShapeError):
        forward(model, np.zeros((3, 16, 16)))
    with pytest.raises(ValueError):
        ModelConfig(image_size=30)


def test_eval_is_pure(tiny_data):
    model = ToyModel.init(SMALL, np.random.default_rng(1))
    model["head.w"].assign(np.random.default_rng(2).normal(0, 0.3, model["head.w"].shape))
    a = forward(model, tiny_data[0].degraded)
    b = forward(model, tiny_data[0].degraded)
    assert a.raw.data.tobytes() == b.raw.data.tobytes()
    assert evaluate_ap(model, tiny_data) == evaluate_ap(model, tiny_data, threads=3)


def test_dataset_determinism():
    a = make_dataset(5, ("fog", "snow"), seed=4)
    b = make_dataset(7, ("fog", "snow"), seed=4, threads=3)
    for x, y in zip(a, b):
        assert x.degraded.tobytes() == y.degraded.tobytes() and x.annotation == y.annotation
    assert [s.kind for s in a] == ["fog", "snow", "fog", "snow", "fog"]


def test_cosine_lr():
    assert cosine_lr(0, 100, 0.01) == 0.01
    assert cosine_lr(50, 100, 0.01) == 0.005
    assert cosine_lr(100, 100, 0.01) == 0.0


def test_training_is_deterministic(tiny_data):
    cfg = TrainConfig(epochs=2, batch=3, lr=0.05, seed=5, model=SMALL)
    h1, h2 = train(cfg, tiny_data).history, train(cfg, tiny_data).history
    assert repr(h1) == repr(h2)  # bitwise, nan-safe
    assert [r["epoch"] for r in h1] == [1, 2]
    for row in h1:
        lam = LossWeights().as_tuple()
        parts = (row["l_det"], row["l_res"], row["l_fre"], row["l_cls"])
        assert row["l_total"] == pytest.approx(sum(a * b for a, b in zip(lam, parts)), abs=1e-12)


def test_divergence_returns_last_good(tiny_data):
    bad = list(tiny_data[:2])
    bad[1] = replace(bad[1], degraded=np.full_like(bad[1].degraded, np.nan))
    cfg = TrainConfig(epochs=1, batch=2, seed=0, model=SMALL)
    with pytest.raises(TrainingDiverged) as info:
        train(cfg, bad)
    assert all(np.all(np.isfinite(v)) for v in info.value.state.values())


def test_checkpoint_round_trip(tmp_path, tiny_data):
    model = ToyModel.init(SMALL, np.random.default_rng(7))
    model["head.w"].assign(np.random.default_rng(8).normal(size=model["head.w"].shape))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, {"epoch": 3})
    loaded, extra = load_checkpoint(path)
    assert extra == {"epoch": 3} and loaded.config == model.config
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), loaded.named_parameters()):
        assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()
    raw = path.read_bytes()
    assert raw[:8] == b"SPDTCKPT"
    (tmp_path / "bad.ckpt").write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")
    (tmp_path / "short.ckpt").write_bytes(raw[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short.ckpt")


def test_predictions_stochastic_mode_needs_rng(tiny_data):
    model = ToyModel.init(SMALL)
    with pytest.raises(ValueError):
        predict(model, tiny_data[:1], mode="eval-stochastic")


def test_static_variant_has_no_switches(tiny_data):
    res = train(TrainConfig(epochs=1, batch=3, seed=0, model=replace(SMALL, spectral="static")), tiny_data)
    assert res.history[0]["l_fre"] == 0.0 and res.history[0]["active_switches"] == 0.0


def test_full_model_gradcheck():
    (res,) = [r for r in gradchecks.run_checks("unidet-toy") if r.check.name == "L_Total(full model)"]
    assert res.passed, str(res.report)
