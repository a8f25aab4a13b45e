"""Binary P6 pixmaps, annotation text files and key=value sidecars."""
import os

import numpy as np

from spectradet.degrade import CLASSES, Box, SceneAnnotation


class FormatError(IOError):
    """A file exists but does not hold the expected format."""


def _tokens(buf, start, count, path):
    out, pos = [], start
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        begin = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if begin == pos:
            raise FormatError(f"{path}: truncated PPM header")
        out.append(buf[begin:pos])
    return out, pos


def read_ppm(path):
    """Read an 8-bit P6 file as a float (3, H, W) array in [0, 1]."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if buf[:2] != b"P6":
        raise FormatError(f"{path}: not a binary P6 pixmap")
    try:
        (w, h, maxval), pos = _tokens(buf, 2, 3, path)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PPM header") from exc
    if maxval != 255 or w < 1 or h < 1:
        raise FormatError(f"{path}: only 8-bit P6 images are supported (maxval={maxval})")
    pos += 1  # single whitespace after maxval
    data = buf[pos:pos + 3 * w * h]
    if len(data) != 3 * w * h:
        raise FormatError(f"{path}: pixel data truncated ({len(data)} of {3 * w * h} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def to_bytes(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a (3,H,W) image, got {img.shape}")
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def write_ppm(path, img):
    pix = to_bytes(img)
    h, w = pix.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def write_annotation(path, ann):
    with open(path, "w") as fh:
        for b in ann.objects:
            fh.write(f"{CLASSES[b.cls]} {b.x_min} {b.y_min} {b.x_max} {b.y_max}\n")


def read_annotation(path, width, height):
    boxes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 'class x_min y_min x_max y_max'")
            name = parts[0]
            cls = CLASSES.index(name) if name in CLASSES else int(name)
            boxes.append(Box(cls, *(int(v) for v in parts[1:])))
    return SceneAnnotation(boxes, width, height)


def read_keyvalue(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def write_keyvalue(path, mapping):
    with open(path, "w") as fh:
        for k, v in mapping.items():
            fh.write(f"{k} = {v}\n")
