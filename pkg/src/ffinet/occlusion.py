"""Free-form occlusion masks bounded by closed cubic Bezier contours."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DimensionError, GenerationError

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class MaskSpec:
    """Sampling ranges for one mask.

    Radii are fractions of ``min(H, W)``; ``margin`` keeps the contour centre
    that fraction of the frame away from each border.
    """

    n_min: int = 4
    n_max: int = 10
    r_min: float = 0.1
    r_max: float = 0.3
    margin: float = 0.1
    fill_value: float = 0.0
    area_min: float = 0.01
    area_max: float = 0.35
    max_retries: int = 200

    def __post_init__(self):
        if not 3 <= self.n_min <= self.n_max:
            raise ConfigError(f"need 3 <= n_min <= n_max, got {self.n_min}, {self.n_max}")
        if not 0 < self.r_min <= self.r_max <= 0.5:
            raise ConfigError(f"need 0 < r_min <= r_max <= 0.5, got {self.r_min}, {self.r_max}")
        if not 0 <= self.margin < 0.5:
            raise ConfigError("margin must lie in [0, 0.5)")
        if not np.isfinite(self.fill_value):
            raise ConfigError("fill_value must be finite")
        if not 0 <= self.area_min <= self.area_max <= 1:
            raise ConfigError("area bounds must satisfy 0 <= min <= max <= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MaskSet:
    """Binary masks shaped ``(B, T, 1, H, W)``; 1 marks an occluded pixel."""

    masks: np.ndarray

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=np.uint8)
        if self.masks.ndim != 5 or self.masks.shape[2] != 1:
            raise DimensionError(f"masks must be (B, T, 1, H, W), got {self.masks.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.masks.shape

    def __getitem__(self, idx) -> MaskSet:
        return MaskSet(self.masks[idx])


def bezier_contour(points: np.ndarray, handles: str = "catmull", samples: int = 24) -> np.ndarray:
    """Closed piecewise-cubic curve through ``points`` (shape ``(n, 2)``, x/y).

    ``handles="catmull"`` places each handle a third of the neighbouring
    chord along the Catmull-Rom tangent; ``"straight"`` puts them on the
    segment itself so each piece is a line.
    """
    p = np.asarray(points, dtype=np.float64)
    prev, nxt, nxt2 = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0), np.roll(p, -2, axis=0)
    if handles == "catmull":
        c1 = p + (nxt - prev) / 6.0
        c2 = nxt - (nxt2 - p) / 6.0
    elif handles == "straight":
        c1 = p + (nxt - p) / 3.0
        c2 = p + 2.0 * (nxt - p) / 3.0
    else:
        raise ValueError(f"unknown handle mode {handles!r}")
    t = np.linspace(0.0, 1.0, samples, endpoint=False)[:, None, None]
    u = 1.0 - t
    curve = u ** 3 * p + 3 * u ** 2 * t * c1 + 3 * u * t ** 2 * c2 + t ** 3 * nxt
    # (samples, n, 2) -> segment-major polyline
    return curve.transpose(1, 0, 2).reshape(-1, 2)


def fill_polygon(poly: np.ndarray, height: int, width: int) -> np.ndarray:
    """Scanline fill of a closed polyline at pixel centres (non-zero winding)."""
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    yc = (np.arange(height) + 0.5)[:, None]
    xs = np.arange(width) + 0.5
    up = (y0 <= yc) & (y1 > yc)
    down = (y1 <= yc) & (y0 > yc)
    direction = up.astype(np.float32) - down.astype(np.float32)  # (H, edges)
    dy = np.where(y1 == y0, 1.0, y1 - y0)
    xcross = x0 + (yc - y0) / dy * (x1 - x0)
    # winding number at a pixel centre = signed count of crossings to its left
    left = xcross[:, None, :] < xs[None, :, None]
    winding = np.matmul(left.astype(np.float32), direction[:, :, None])[:, :, 0]
    return (np.abs(winding) > 0.5).astype(np.uint8)


def contour_mask(points: np.ndarray, height: int, width: int, handles: str = "catmull") -> np.ndarray:
    """Rasterised, hole-free interior of the closed Bezier contour through ``points``."""
    filled = fill_polygon(bezier_contour(points, handles), height, width)
    return ndimage.binary_fill_holes(filled).astype(np.uint8)


def _valid(mask: np.ndarray, spec: MaskSpec) -> bool:
    frac = mask.mean()
    if not spec.area_min <= frac <= spec.area_max:
        return False
    _, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    return n == 1


def generate_mask(height: int, width: int, rng: np.random.Generator, spec: MaskSpec | None = None) -> np.ndarray:
    """Sample one ``(1, H, W)`` uint8 mask; regenerate until the area and connectivity checks pass."""
    spec = spec or MaskSpec()
    side = min(height, width)
    for _ in range(spec.max_retries):
        n = int(rng.integers(spec.n_min, spec.n_max + 1))
        angles = np.sort(rng.uniform(0.0, 2 * np.pi, size=n))
        radii = rng.uniform(spec.r_min, spec.r_max, size=n) * side
        cx = rng.uniform(spec.margin * width, (1 - spec.margin) * width)
        cy = rng.uniform(spec.margin * height, (1 - spec.margin) * height)
        pts = np.stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1)
        mask = contour_mask(pts, height, width)
        if _valid(mask, spec):
            return mask[None]
    raise GenerationError(f"no valid mask after {spec.max_retries} attempts for {height}x{width}")


def generate_masks(batch: int, frames: int, height: int, width: int, rng: np.random.Generator,
                   spec: MaskSpec | None = None, per_frame: bool = True) -> MaskSet:
    out = np.empty((batch, frames, 1, height, width), dtype=np.uint8)
    for b in range(batch):
        for t in range(frames):
            if per_frame or t == 0:
                out[b, t] = generate_mask(height, width, rng, spec)
            else:
                out[b, t] = out[b, 0]
    return MaskSet(out)


def apply_masks(frames: np.ndarray, masks: MaskSet | np.ndarray, fill_value: float = 0.0) -> np.ndarray:
    """Replace occluded pixels by ``fill_value``; unmasked pixels are copied bit-exactly.

    Equivalent to ``frames * (1 - mask) + fill_value * mask`` for binary masks.
    """
    m = masks.masks if isinstance(masks, MaskSet) else np.asarray(masks)
    frames = np.asarray(frames)
    if frames.ndim != 5 or m.ndim != 5 or m.shape[2] != 1 or frames.shape[:2] + frames.shape[3:] != m.shape[:2] + m.shape[3:]:
        raise DimensionError(f"mask {m.shape} does not align with frames {frames.shape}")
    return np.where(m.astype(bool), frames.dtype.type(fill_value), frames)


class MaskPolicy:
    """Mask stream for training or evaluation.

    In ``train`` mode every call to :meth:`draw` consumes the policy's RNG and
    returns fresh masks. In ``eval`` mode the mask of sequence ``i``, frame
    ``t`` depends only on ``(seed, i, t)``, so every model sees the same
    occlusions regardless of batching order.
    """

    def __init__(self, mode: str, seed: int, spec: MaskSpec | None = None, per_frame: bool = True):
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        self.mode = mode
        self.seed = int(seed)
        self.spec = spec or MaskSpec()
        self.per_frame = per_frame
        self.rng = np.random.default_rng(seed)

    def draw(self, batch: int, frames: int, height: int, width: int) -> MaskSet:
        if self.mode != "train":
            raise ValueError("draw() is for train mode; use for_sequences() in eval mode")
        return generate_masks(batch, frames, height, width, self.rng, self.spec, self.per_frame)

    def for_sequences(self, indices, frames: int, height: int, width: int) -> MaskSet:
        out = np.empty((len(indices), frames, 1, height, width), dtype=np.uint8)
        for row, i in enumerate(indices):
            for t in range(frames):
                key = t if self.per_frame else 0
                rng = np.random.default_rng([self.seed, int(i), key])
                out[row, t] = generate_mask(height, width, rng, self.spec)
        return MaskSet(out)

    def get_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state


def make_mask_policy(mode: str, seed: int, spec: MaskSpec | None = None, per_frame: bool = True) -> MaskPolicy:
    return MaskPolicy(mode, seed, spec, per_frame)
