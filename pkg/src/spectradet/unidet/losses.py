"""Detection, restoration, contrastive and total losses."""
import logging
import math
from dataclasses import dataclass

import numpy as np

from spectradet import tensor as T
from spectradet.unidet.model import N_CLASSES

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.2, 0.8, 0.1, 0.1)


class TrainingAbort(ArithmeticError):
    """A loss term became non-finite."""


@dataclass(frozen=True)
class LossWeights:
    det: float = DEFAULT_LAMBDAS[0]
    res: float = DEFAULT_LAMBDAS[1]
    fre: float = DEFAULT_LAMBDAS[2]
    cls: float = DEFAULT_LAMBDAS[3]

    def __post_init__(self):
        if min(self.det, self.res, self.fre, self.cls) < 0:
            raise ValueError(f"loss weights must be non-negative: {self}")

    def as_tuple(self):
        return (self.det, self.res, self.fre, self.cls)


@dataclass
class LossReport:
    l_det: float
    l_res: float
    l_fre: float
    l_cls: float
    l_total: float
    total: T.Tensor | None = None

    def as_dict(self):
        return {k: getattr(self, k) for k in ("l_det", "l_res", "l_fre", "l_cls", "l_total")}


@dataclass
class GridTargets:
    """Per-cell training targets derived from an annotation."""

    objectness: np.ndarray  # (G, G) in {0, 1}
    classes: np.ndarray  # (3, G, G) one-hot at positive cells
    boxes: np.ndarray  # (4, G, G): cell offsets x, y and width, height / image size
    positives: int


def grid_targets(annotation, grid, image_size):
    stride = image_size / grid
    obj = np.zeros((grid, grid))
    cls = np.zeros((N_CLASSES, grid, grid))
    box = np.zeros((4, grid, grid))
    for b in annotation.objects:
        cx, cy = b.center
        gx = min(int(cx // stride), grid - 1)
        gy = min(int(cy // stride), grid - 1)
        obj[gy, gx] = 1.0
        cls[:, gy, gx] = 0.0
        cls[b.cls, gy, gx] = 1.0
        box[:, gy, gx] = (cx / stride - gx, cy / stride - gy,
                          (b.x_max - b.x_min) / image_size, (b.y_max - b.y_min) / image_size)
    return GridTargets(obj, cls, box, int(obj.sum()))


def detection_loss(raw, annotation, image_size=None):
    """Objectness BCE (all cells) + class CE and box L1 (positive cells).

    ``raw`` is the (8, G, G) head output: objectness logit, three class
    logits, four box logits (passed through a sigmoid).  Each term is a mean
    over its cells; the three means are summed.
    """
    raw = T.as_tensor(raw)
    G = raw.shape[1]
    image_size = annotation.width if image_size is None else image_size
    tg = grid_targets(annotation, G, image_size)
    z = raw[0]
    # BCE with logits: softplus(z) - t * z
    bce = T.sub(T.softplus(z), T.mul(z, T.Tensor._wrap(tg.objectness)))
    loss = T.mean(bce)
    if tg.positives == 0:
        return loss
    logp = T.log_softmax(raw[1:1 + N_CLASSES], axis=0)
    ce = T.scale(T.sum(T.mul(logp, T.Tensor._wrap(tg.classes))), -1.0 / tg.positives)
    pred = T.sigmoid(raw[1 + N_CLASSES:])
    err = T.absolute(T.sub(pred, T.Tensor._wrap(tg.boxes)))
    mask = np.broadcast_to(tg.objectness, (4, G, G))
    l1 = T.scale(T.sum(T.mul(err, T.Tensor._wrap(mask.copy()))), 1.0 / (4 * tg.positives))
    return T.add(T.add(loss, ce), l1)


def restoration_loss(restored, clean):
    restored, clean = T.as_tensor(restored), T.as_tensor(clean)
    if restored.shape != clean.shape:
        raise T.ShapeError(f"restored {restored.shape} vs clean {clean.shape}")
    return T.mean(T.absolute(T.sub(restored, clean)))


def has_positive_pair(kinds):
    kinds = list(kinds)
    return len(set(kinds)) < len(kinds)


def contrastive_loss(embeddings, kinds, temperature=0.1):
    """Multi-positive InfoNCE over L2-normalised embeddings.

    For anchor i with positives P(i) (same degradation kind, j != i)::

        l_i = -log( sum_{p in P(i)} exp(s_ip / t) / sum_{a != i} exp(s_ia / t) )

    averaged over anchors that have at least one positive.  Returns 0 (and
    logs a warning) when the batch contains no positive pair.
    """
    kinds = list(kinds)
    B = len(embeddings)
    if B != len(kinds):
        raise ValueError(f"{B} embeddings but {len(kinds)} kinds")
    if B < 2 or not has_positive_pair(kinds):
        log.warning("contrastive loss: batch has no positive pair; using 0")
        return T.Tensor(0.0)
    Z = T.stack(list(embeddings), axis=0)
    inv_norm = T.power(T.add_scalar(T.sum(T.mul(Z, Z), axis=1), 1e-12), -0.5)
    Zn = T.channel_scale(Z, inv_norm)
    sim = T.scale(T.matmul(Zn, T.transpose(Zn)), 1.0 / temperature)
    # shift by the (constant) maximum possible similarity for stability
    e = T.exp(T.add_scalar(sim, -1.0 / temperature))
    same = np.array([[a == b for b in kinds] for a in kinds], dtype=np.float64)
    off_diag = 1.0 - np.eye(B)
    pos_mask = same * off_diag
    valid = pos_mask.sum(axis=1) > 0
    num = T.sum(T.mul(e, T.Tensor._wrap(pos_mask)), axis=1)
    den = T.sum(T.mul(e, T.Tensor._wrap(off_diag)), axis=1)
    # anchors without positives get a dummy ratio of 1 and weight 0
    num = T.add(num, T.Tensor._wrap((~valid).astype(np.float64)))
    den = T.add(den, T.Tensor._wrap((~valid).astype(np.float64)))
    per_anchor = T.sub(T.log(den), T.log(num))
    w = valid.astype(np.float64) / valid.sum()
    return T.sum(T.mul(per_anchor, T.Tensor._wrap(w)))


def total_loss(l_det, l_res, l_fre, l_cls, weights=LossWeights()):
    """Weighted sum of the four terms; raises :class:`TrainingAbort` on non-finite parts."""
    parts = [T.as_tensor(v) for v in (l_det, l_res, l_fre, l_cls)]
    values = [p.item() for p in parts]
    for name, v in zip(("L_Det", "L_Res", "L_Fre", "L_Cls"), values):
        if not math.isfinite(v):
            raise TrainingAbort(f"{name} is not finite ({v})")
    lam = weights.as_tuple()
    total = T.scale(parts[0], lam[0])
    for p, w in zip(parts[1:], lam[1:]):
        total = T.add(total, T.scale(p, w))
    value = sum(w * v for w, v in zip(lam, values))
    return LossReport(*values, l_total=value, total=total)
