"""Synthetic adverse-weather degradations and procedural toy scenes.

Images are float arrays of shape (3, H, W) with values in [0, 1].  Every
generator clamps its output to that range and is deterministic given its
parameters and ``numpy.random.Generator``.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

CLASSES = ("circle", "square", "triangle")
KINDS = ("clean", "fog", "rain", "snow", "lowlight", "sand", "rainfog")
SAND_AIRLIGHT = (0.8, 0.7, 0.5)

# sampling ranges used by sample_spec
LOWLIGHT_R = (1.5, 5.0)
SNOW_W = (0.5, 1.0)
FOG_A = (0.7, 1.0)
FOG_BETA = (1.0, 3.0)
RAIN_COUNT = (8, 30)
RAIN_LENGTH = (4, 10)
RAIN_ANGLE = (-25.0, 25.0)
RAIN_INTENSITY = (0.2, 0.5)


class ParameterError(ValueError):
    """A degradation parameter lies outside its documented range."""


def _check_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a (3,H,W) image, got shape {img.shape}")
    return img


def lowlight(img, r):
    """Gamma darkening ``img ** r``."""
    if not r > 0:
        raise ParameterError(f"lowlight exponent must be > 0, got {r}")
    return np.clip(_check_image(img) ** r, 0.0, 1.0)


def vertical_depth(H, W):
    """Normalised depth map: 1 at the top row (far), 0 at the bottom."""
    d = np.linspace(1.0, 0.0, H) if H > 1 else np.zeros(1)
    return np.repeat(d[:, None], W, axis=1)


def fog(img, A, beta, depth_map=None):
    """Atmospheric scattering ``img * t + A * (1 - t)``, ``t = exp(-beta * depth)``."""
    img = _check_image(img)
    if not beta > 0:
        raise ParameterError(f"fog extinction beta must be > 0, got {beta}")
    if depth_map is None:
        depth_map = vertical_depth(*img.shape[1:])
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if depth_map.shape != img.shape[1:]:
        raise ValueError(f"depth map {depth_map.shape} does not match image {img.shape[1:]}")
    if np.any(depth_map < 0):
        raise ParameterError("depth map must be non-negative")
    A = np.broadcast_to(np.asarray(A, dtype=np.float64), (3,))
    if np.any(A < 0) or np.any(A > 1):
        raise ParameterError(f"airlight must lie in [0, 1], got {A}")
    t = np.exp(-beta * depth_map)[None]
    return np.clip(img * t + A[:, None, None] * (1.0 - t), 0.0, 1.0)


def snow(img, mask, w):
    """Screen-style blend of a white snow mask at weight ``w``."""
    img = _check_image(img)
    if not SNOW_W[0] <= w <= SNOW_W[1]:
        raise ParameterError(f"snow weight must lie in [{SNOW_W[0]}, {SNOW_W[1]}], got {w}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != img.shape[1:]:
        raise ValueError(f"snow mask {mask.shape} does not match image {img.shape[1:]}")
    if np.any(mask < 0) or np.any(mask > 1):
        raise ParameterError("snow mask values must lie in [0, 1]")
    wm = w * mask[None]
    return np.clip(img * (1.0 - wm) + wm, 0.0, 1.0)


def snow_mask(H, W, rng, density=0.04, flake_max=2):
    """Random flakes: small bright squares of radius 0..flake_max, softened by a 3x3 box."""
    mask = np.zeros((H, W))
    n = rng.binomial(H * W, density)
    ys = rng.integers(0, H, n)
    xs = rng.integers(0, W, n)
    rs = rng.integers(0, flake_max + 1, n)
    vals = rng.uniform(0.6, 1.0, n)
    for y, x, r, v in zip(ys, xs, rs, vals):
        sl = (slice(max(y - r, 0), y + r + 1), slice(max(x - r, 0), x + r + 1))
        mask[sl] = np.maximum(mask[sl], v)
    padded = np.pad(mask, 1, mode="edge")
    soft = sum(padded[i:i + H, j:j + W] for i in range(3) for j in range(3)) / 9.0
    return np.clip(np.maximum(mask * 0.7, soft), 0.0, 1.0)


@dataclass(frozen=True)
class RainSpec:
    count: int = 20
    length: int = 6
    angle: float = 10.0
    intensity: float = 0.3

    def __post_init__(self):
        if self.count < 0:
            raise ParameterError(f"streak count must be >= 0, got {self.count}")
        if self.length < 1:
            raise ParameterError(f"streak length must be >= 1, got {self.length}")
        if not 0 < self.intensity <= 1:
            raise ParameterError(f"streak intensity must lie in (0, 1], got {self.intensity}")


def rain(img, spec, rng):
    """Additive motion-blurred line streaks at seeded random positions."""
    img = _check_image(img)
    if spec.count == 0:
        return img.copy()
    H, W = img.shape[1:]
    theta = np.deg2rad(spec.angle)
    # angle measured from vertical; streaks fall downwards
    dy, dx = np.cos(theta), np.sin(theta)
    layer = np.zeros((H, W))
    steps = np.arange(0.0, spec.length, 0.5)
    for _ in range(spec.count):
        y0 = rng.uniform(-spec.length, H)
        x0 = rng.uniform(0, W)
        ys = np.round(y0 + steps * dy).astype(int)
        xs = np.round(x0 + steps * dx).astype(int)
        keep = (ys >= 0) & (ys < H) & (xs >= 0) & (xs < W)
        pix = np.unique(np.stack([ys[keep], xs[keep]], axis=1), axis=0)
        if len(pix):
            layer[pix[:, 0], pix[:, 1]] += spec.intensity
    sy, sx = int(round(dy)), int(round(dx))
    padded = np.pad(layer, 1)
    shifted = [padded[1 + k * sy:1 + k * sy + H, 1 + k * sx:1 + k * sx + W] for k in (-1, 0, 1)]
    blurred = (shifted[0] + shifted[1] + shifted[2]) / 3.0
    return np.clip(img + blurred[None], 0.0, 1.0)


@dataclass
class DegradationSpec:
    kind: str = "clean"
    airlight: tuple = (0.85, 0.85, 0.85)
    beta: float = 2.0
    r: float = 2.5
    w: float = 0.75
    rain: RainSpec = field(default_factory=RainSpec)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.airlight = tuple(float(a) for a in np.broadcast_to(self.airlight, (3,)))
        if self.kind in ("fog", "sand", "rainfog") and not self.beta > 0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        if self.kind == "lowlight" and not self.r > 0:
            raise ParameterError(f"r must be > 0, got {self.r}")
        if self.kind == "snow" and not SNOW_W[0] <= self.w <= SNOW_W[1]:
            raise ParameterError(f"w must lie in [{SNOW_W[0]}, {SNOW_W[1]}], got {self.w}")

    def as_dict(self):
        """Flat key/value view of the parameters relevant to ``kind``."""
        out = {"kind": self.kind}
        if self.kind in ("fog", "rainfog"):
            out["airlight"] = ",".join(f"{a:g}" for a in self.airlight)
        if self.kind in ("fog", "sand", "rainfog"):
            out["beta"] = f"{self.beta:g}"
        if self.kind == "lowlight":
            out["r"] = f"{self.r:g}"
        if self.kind == "snow":
            out["w"] = f"{self.w:g}"
        if self.kind in ("rain", "rainfog"):
            out.update({f"rain_{k}": f"{v:g}" for k, v in asdict(self.rain).items()})
        return out


def sample_spec(kind, rng):
    """Draw a DegradationSpec of ``kind`` from the default parameter ranges."""
    gray = rng.uniform(*FOG_A)
    rain_spec = RainSpec(
        count=int(rng.integers(RAIN_COUNT[0], RAIN_COUNT[1] + 1)),
        length=int(rng.integers(RAIN_LENGTH[0], RAIN_LENGTH[1] + 1)),
        angle=float(rng.uniform(*RAIN_ANGLE)),
        intensity=float(rng.uniform(*RAIN_INTENSITY)),
    )
    return DegradationSpec(
        kind=kind,
        airlight=SAND_AIRLIGHT if kind == "sand" else (gray, gray, gray),
        beta=float(rng.uniform(*FOG_BETA)),
        r=float(rng.uniform(*LOWLIGHT_R)),
        w=float(rng.uniform(*SNOW_W)),
        rain=rain_spec,
    )


def apply_degradation(img, spec, rng, depth_map=None):
    img = _check_image(img)
    kind = spec.kind
    if kind == "clean":
        return img.copy()
    if kind == "fog":
        return fog(img, spec.airlight, spec.beta, depth_map)
    if kind == "sand":
        return fog(img, SAND_AIRLIGHT, spec.beta, depth_map)
    if kind == "lowlight":
        return lowlight(img, spec.r)
    if kind == "snow":
        return snow(img, snow_mask(*img.shape[1:], rng), spec.w)
    if kind == "rain":
        return rain(img, spec.rain, rng)
    if kind == "rainfog":
        return fog(rain(img, spec.rain, rng), spec.airlight, spec.beta, depth_map)
    raise ParameterError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# toy scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    cls: int
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def center(self):
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0


@dataclass
class SceneAnnotation:
    """Objects in pixel-edge coordinates: a box covers columns [x_min, x_max)."""

    objects: list
    width: int
    height: int

    def __post_init__(self):
        for b in self.objects:
            if not (0 <= b.x_min < b.x_max <= self.width and 0 <= b.y_min < b.y_max <= self.height):
                raise ValueError(f"box {b} outside a {self.width}x{self.height} image or degenerate")
            if not 0 <= b.cls < len(CLASSES):
                raise ValueError(f"unknown class id {b.cls}")


@dataclass(frozen=True)
class SceneSpec:
    size: int = 32
    min_objects: int = 1
    max_objects: int = 3
    min_extent: int = 7
    max_extent: int = 13
    grid_stride: int = 4


def _shape_mask(cls, size, x0, y0, ext):
    yy, xx = np.mgrid[0:size, 0:size]
    if cls == 0:
        r = ext / 2.0
        cy, cx = y0 + r, x0 + r
        return (yy + 0.5 - cy) ** 2 + (xx + 0.5 - cx) ** 2 <= r * r
    if cls == 1:
        return (yy >= y0) & (yy < y0 + ext) & (xx >= x0) & (xx < x0 + ext)
    # isosceles triangle, apex up
    frac = (yy + 0.5 - y0) / ext
    half = frac * ext / 2.0
    cx = x0 + ext / 2.0
    return (frac >= 0) & (frac <= 1) & (np.abs(xx + 0.5 - cx) <= half)


def gen_toy_scene(rng, spec=SceneSpec()):
    """Random smooth background with 1..max_objects coloured shapes and exact boxes."""
    size = spec.size
    if size < 32:
        raise ValueError("toy scenes need size >= 32")
    if not 1 <= spec.min_objects <= spec.max_objects <= 5:
        raise ValueError("object count must lie in 1..5")
    base = rng.uniform(0.25, 0.6, 3)
    tilt = rng.uniform(-0.15, 0.15, 3)
    ramp = np.linspace(-1.0, 1.0, size)
    img = base[:, None, None] + tilt[:, None, None] * ramp[None, :, None]
    img = np.broadcast_to(img, (3, size, size)) + rng.normal(0.0, 0.02, (3, size, size))

    n_obj = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    boxes, cells = [], set()
    occupied = np.zeros((size, size), dtype=bool)
    attempts = 0
    while len(boxes) < n_obj and attempts < 200:
        attempts += 1
        cls = int(rng.integers(0, len(CLASSES)))
        ext = int(rng.integers(spec.min_extent, spec.max_extent + 1))
        x0 = int(rng.integers(1, size - ext))
        y0 = int(rng.integers(1, size - ext))
        mask = _shape_mask(cls, size, x0, y0, ext)
        if not mask.any():
            continue
        ys, xs = np.nonzero(mask)
        box = Box(cls, int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
        grown = np.zeros_like(occupied)
        grown[max(box.y_min - 1, 0):box.y_max + 1, max(box.x_min - 1, 0):box.x_max + 1] = True
        cell = (int(box.center[1] // spec.grid_stride), int(box.center[0] // spec.grid_stride))
        if (grown & occupied).any() or cell in cells:
            continue
        # saturated colour, far from the background
        color = rng.uniform(0.0, 1.0, 3)
        color[rng.integers(0, 3)] = rng.choice([0.05, 0.95])
        if np.abs(color - base).max() < 0.35:
            color = np.where(base > 0.5, 0.05, 0.95)
        img[:, mask] = color[:, None]
        occupied |= mask
        cells.add(cell)
        boxes.append(box)
    img = np.clip(img, 0.0, 1.0)
    return img, SceneAnnotation(boxes, size, size)
