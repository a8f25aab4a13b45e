"""Grid decoding, greedy NMS and all-point interpolated average precision."""
from dataclasses import dataclass

import numpy as np

from spectradet.degrade import CLASSES
from spectradet.unidet.model import N_CLASSES


@dataclass(frozen=True)
class Detection:
    cls: int
    confidence: float
    box: tuple  # x_min, y_min, x_max, y_max (pixels, float)


def iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def decode(raw, image_size, min_confidence=0.01):
    """Turn an (8, G, G) head output into detections (before NMS)."""
    raw = np.asarray(raw.data if hasattr(raw, "data") else raw)
    G = raw.shape[1]
    stride = image_size / G
    obj = _sigmoid(raw[0])
    logits = raw[1:1 + N_CLASSES]
    probs = np.exp(logits - logits.max(axis=0))
    probs /= probs.sum(axis=0)
    box = _sigmoid(raw[1 + N_CLASSES:])
    out = []
    for gy in range(G):
        for gx in range(G):
            c = int(np.argmax(probs[:, gy, gx]))
            conf = float(obj[gy, gx] * probs[c, gy, gx])
            if conf < min_confidence:
                continue
            cx = (gx + box[0, gy, gx]) * stride
            cy = (gy + box[1, gy, gx]) * stride
            w = box[2, gy, gx] * image_size
            h = box[3, gy, gx] * image_size
            x0, y0 = max(cx - w / 2, 0.0), max(cy - h / 2, 0.0)
            x1, y1 = min(cx + w / 2, float(image_size)), min(cy + h / 2, float(image_size))
            if x1 > x0 and y1 > y0:
                out.append(Detection(c, conf, (x0, y0, x1, y1)))
    return out


def nms(dets, threshold=0.5):
    """Greedy per-class non-maximum suppression."""
    keep = []
    for d in sorted(dets, key=lambda d: -d.confidence):
        if all(k.cls != d.cls or iou(k.box, d.box) < threshold for k in keep):
            keep.append(d)
    return keep


def average_precision(tp_flags, n_gt):
    """All-point interpolated AP from TP/FP flags sorted by descending confidence."""
    if n_gt == 0:
        return float("nan")
    tp = np.asarray(tp_flags, dtype=np.float64)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_gt
    precision = ctp / (ctp + cfp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


@dataclass
class APResult:
    per_class: dict  # class name -> AP (nan when absent from ground truth)
    mean_ap: float


def match_detections(predictions, annotations, iou_threshold=0.5):
    """Per class: (TP flags in descending confidence order, number of GT boxes)."""
    result = {}
    for c in range(N_CLASSES):
        scored = []
        n_gt = 0
        for img_id, (dets, ann) in enumerate(zip(predictions, annotations)):
            n_gt += sum(1 for b in ann.objects if b.cls == c)
            for d in dets:
                if d.cls == c:
                    scored.append((d.confidence, img_id, d.box))
        scored.sort(key=lambda s: -s[0])
        used = set()
        flags = []
        for _, img_id, box in scored:
            best, best_j = 0.0, None
            for j, b in enumerate(annotations[img_id].objects):
                if b.cls != c or (img_id, j) in used:
                    continue
                ov = iou(box, (b.x_min, b.y_min, b.x_max, b.y_max))
                if ov > best:
                    best, best_j = ov, j
            if best_j is not None and best >= iou_threshold:
                used.add((img_id, best_j))
                flags.append(1)
            else:
                flags.append(0)
        result[c] = (flags, n_gt)
    return result


def mean_average_precision(predictions, annotations, iou_threshold=0.5):
    if not 0 < iou_threshold < 1:
        raise ValueError(f"IoU threshold must lie in (0, 1), got {iou_threshold}")
    per_class = {}
    for c, (flags, n_gt) in match_detections(predictions, annotations, iou_threshold).items():
        per_class[CLASSES[c]] = average_precision(flags, n_gt)
    present = [v for v in per_class.values() if not np.isnan(v)]
    return APResult(per_class, float(np.mean(present)) if present else float("nan"))
