"""Seeded toy datasets, SGD training with cosine annealing, and evaluation."""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from spectradet import tensor as T
from spectradet.degrade import SceneSpec, apply_degradation, gen_toy_scene, sample_spec
from spectradet.unidet.losses import (
    LossWeights,
    TrainingAbort,
    contrastive_loss,
    detection_loss,
    restoration_loss,
    total_loss,
)
from spectradet.unidet.metrics import decode, mean_average_precision, nms
from spectradet.unidet.model import ModelConfig, ToyModel, forward

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "l_det", "l_res", "l_fre", "l_cls", "l_total", "lr", "active_switches", "map")


@dataclass
class Sample:
    clean: np.ndarray
    degraded: np.ndarray
    annotation: object
    kind: str


def _ordered_map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def make_dataset(n, kinds=("fog",), seed=0, scene=SceneSpec(), threads=1):
    """``n`` toy scenes, each degraded by a kind cycled from ``kinds``.

    Every sample draws from its own child generator, so a dataset prefix does
    not depend on ``n`` and the result does not depend on ``threads``.
    """
    children = np.random.SeedSequence(seed).spawn(n)

    def one(item):
        i, ss = item
        rng = np.random.default_rng(ss)
        clean, ann = gen_toy_scene(rng, scene)
        kind = kinds[i % len(kinds)]
        degraded = apply_degradation(clean, sample_spec(kind, rng), rng)
        return Sample(clean, degraded, ann, kind)

    return _ordered_map(one, list(enumerate(children)), threads)


def cosine_lr(step, total_steps, lr0):
    """``lr0 * (1 + cos(pi * step / total_steps)) / 2``."""
    return lr0 * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


@dataclass
class TrainConfig:
    epochs: int = 15
    batch: int = 8
    lr: float = 1e-2
    momentum: float = 0.0
    weights: LossWeights = field(default_factory=LossWeights)
    tau: float = 1.0
    tau_final: float | None = None  # linear anneal of the Gumbel temperature
    contrastive_temperature: float = 0.1
    seed: int = 0
    max_steps: int | None = None
    probe_size: int = 8
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


class TrainingDiverged(TrainingAbort):
    """Raised with the last finite parameters and the partial history."""

    def __init__(self, message, state, history, steps):
        super().__init__(message)
        self.state = state
        self.history = history
        self.steps = steps


@dataclass
class TrainResult:
    model: ToyModel
    history: list  # one dict per epoch, keys HISTORY_FIELDS
    steps: list  # LossReport per optimisation step (without tensors)


def batch_losses(model, batch, weights, mode, rng, contrastive_temperature=0.1, straight_through=True):
    """Forward a batch and return (LossReport, mean active switches).  Call under a tape."""
    det, res, fre, embs = [], [], [], []
    active = 0
    for s in batch:
        out = forward(model, s.degraded, mode, rng, straight_through)
        det.append(detection_loss(out.raw, s.annotation, model.config.image_size))
        res.append(restoration_loss(out.restored, s.clean))
        fre.append(out.freq_loss)
        embs.append(out.embedding)
        active += out.active_switches
    n = len(batch)

    def avg(ts):
        return T.scale(T.sum(T.stack(ts)), 1.0 / n)

    l_cls = contrastive_loss(embs, [s.kind for s in batch], contrastive_temperature)
    report = total_loss(avg(det), avg(res), avg(fre), l_cls, weights)
    return report, active / n


def evaluate_losses(model, samples, weights=LossWeights(), contrastive_temperature=0.1):
    """Loss report of the deterministic (eval-mode) model on ``samples``."""
    with T.Tape():
        report, _ = batch_losses(model, samples, weights, "eval", None, contrastive_temperature)
    report.total = None
    return report


def count_active_switches(model, samples):
    """Mean number of kept frequencies per image under deterministic evaluation."""
    if model.config.spectral == "static" or not samples:
        return 0.0
    return float(np.mean([forward(model, s.degraded, "eval").active_switches for s in samples]))


def expected_active_switches(model, samples):
    """Mean sum of keep probabilities per image; the smooth counterpart of the count above."""
    if model.config.spectral == "static" or not samples:
        return 0.0
    return float(np.mean([forward(model, s.degraded, "eval").keep_mass for s in samples]))


def predict(model, samples, mode="eval", rng=None, min_confidence=0.01, threads=1):
    size = model.config.image_size
    if mode != "eval":
        threads = 1  # a shared generator must be consumed in order

    def one(s):
        return nms(decode(forward(model, s.degraded, mode, rng).raw, size, min_confidence))

    return _ordered_map(one, samples, threads)


def evaluate_ap(model, dataset, iou_threshold=0.5, threads=1):
    """Per-class AP and mAP under deterministic evaluation."""
    preds = predict(model, dataset, threads=threads)
    return mean_average_precision(preds, [s.annotation for s in dataset], iou_threshold)


def train(config, dataset, model=None, eval_dataset=None, on_epoch=None):
    """Plain SGD with per-step cosine-annealed learning rate.

    Deterministic for a given ``config.seed``.  Raises
    :class:`TrainingDiverged` if a loss becomes non-finite.
    """
    if not dataset:
        raise ValueError("empty dataset")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng, shuffle_rng, noise_rng = (np.random.default_rng(s) for s in seeds)
    if model is None:
        model = ToyModel.init(config.model, init_rng)
    params = model.parameters()
    velocity = [np.zeros_like(p.data) for p in params]
    steps_per_epoch = math.ceil(len(dataset) / config.batch)
    total = steps_per_epoch * config.epochs
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    probe = dataset[:config.probe_size]
    history, steps = [], []
    step = 0
    last_good = model.state()
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(dataset))
        sums = np.zeros(5)
        n_steps = 0
        lr = config.lr
        for b in range(steps_per_epoch):
            if step >= total:
                break
            batch = [dataset[i] for i in order[b * config.batch:(b + 1) * config.batch]]
            if config.tau_final is not None:
                model.set_tau(config.tau + (config.tau_final - config.tau) * step / max(total - 1, 1))
            else:
                model.set_tau(config.tau)
            lr = cosine_lr(step, total, config.lr)
            T.zero_grad(params)
            try:
                with T.Tape() as tape:
                    report, _ = batch_losses(model, batch, config.weights, "train", noise_rng,
                                             config.contrastive_temperature)
                T.backward(tape, report.total, params)
                grads_ok = all(np.all(np.isfinite(p.grad)) for p in params)
            except (TrainingAbort, FloatingPointError) as exc:
                raise TrainingDiverged(str(exc), last_good, history, steps) from exc
            if not grads_ok:
                raise TrainingDiverged(f"non-finite gradient at step {step}", last_good, history, steps)
            last_good = model.state()
            for k, p in enumerate(params):
                velocity[k] = config.momentum * velocity[k] + p.grad
                p.assign(p.data - lr * velocity[k])
            report.total = None
            steps.append(report)
            sums += [report.l_det, report.l_res, report.l_fre, report.l_cls, report.l_total]
            n_steps += 1
            step += 1
        if n_steps == 0:
            break
        means = sums / n_steps
        row = dict(zip(HISTORY_FIELDS[1:6], means.tolist()))
        row["epoch"] = epoch + 1
        row["lr"] = lr
        row["active_switches"] = count_active_switches(model, probe)
        row["map"] = evaluate_ap(model, eval_dataset).mean_ap if eval_dataset else float("nan")
        history.append({k: row[k] for k in HISTORY_FIELDS})
        log.info("epoch %d: %s", epoch + 1, {k: round(v, 4) for k, v in row.items()})
        if on_epoch is not None:
            on_epoch(model, history)
    return TrainResult(model, history, steps)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(float(row[k])) if k != "epoch" else int(row[k])) for k in HISTORY_FIELDS})
