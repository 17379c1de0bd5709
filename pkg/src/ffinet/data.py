"""Synthetic bouncing-digit clips and dataset persistence."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .container import DatasetContainer, read_container, write_container
from .errors import ConfigError

GLYPH_SIZE = 12

# seven-segment layout: a=top, b=top-right, c=bottom-right, d=bottom,
# e=bottom-left, f=top-left, g=middle
_SEGMENTS = {
    0: "abcdef", 1: "bc", 2: "abged", 3: "abgcd", 4: "fgbc",
    5: "afgcd", 6: "afgedc", 7: "abc", 8: "abcdefg", 9: "abcdfg",
}


def digit_glyph(digit: int) -> np.ndarray:
    """12x12 float32 bitmap of ``digit`` drawn with 2-px seven-segment strokes."""
    g = np.zeros((GLYPH_SIZE, GLYPH_SIZE), dtype=np.float32)
    rows = {"a": slice(0, 2), "g": slice(5, 7), "d": slice(10, 12)}
    left, right = slice(2, 4), slice(8, 10)
    for seg in _SEGMENTS[digit]:
        if seg in rows:
            g[rows[seg], 2:10] = 1.0
        elif seg == "b":
            g[0:7, right] = 1.0
        elif seg == "c":
            g[5:12, right] = 1.0
        elif seg == "e":
            g[5:12, left] = 1.0
        elif seg == "f":
            g[0:7, left] = 1.0
    return g


DIGIT_GLYPHS = np.stack([digit_glyph(d) for d in range(10)])


@dataclass
class SequenceSpec:
    """Clip geometry and motion ranges.

    ``sprites`` optionally supplies external grayscale sprites (e.g. 28x28
    MNIST digits in [0, 1]) shaped ``(K, h, w)``; otherwise the procedural
    digit glyphs are used.
    """

    frames: int = 8
    height: int = 32
    width: int = 32
    channels: int = 1
    num_sprites: int = 2
    speed_min: float = 1.0
    speed_max: float = 3.0
    sprites: np.ndarray | None = field(default=None, repr=False)

    def glyphs(self) -> np.ndarray:
        return DIGIT_GLYPHS if self.sprites is None else np.asarray(self.sprites, dtype=np.float32)

    def validate(self) -> None:
        if self.frames < 1 or self.channels < 1:
            raise ConfigError("frames and channels must be >= 1")
        if self.num_sprites < 1:
            raise ConfigError("num_sprites must be >= 1")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ConfigError("need 0 <= speed_min <= speed_max")
        g = self.glyphs()
        if g.ndim != 3 or g.shape[1] > self.height or g.shape[2] > self.width:
            raise ConfigError(f"sprites {g.shape[1:]} do not fit a {self.height}x{self.width} canvas")
        if g.min() < 0 or g.max() > 1:
            raise ConfigError("sprite values must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("sprites")
        d["external_sprites"] = self.sprites is not None
        return d


def bounce_trajectory(start: tuple[float, float], velocity: tuple[float, float], frames: int,
                      limits: tuple[float, float]) -> np.ndarray:
    """Positions ``(frames, 2)`` as ``(x, y)`` moving linearly inside ``[0, limit]`` with elastic reflection."""
    pos = np.array(start, dtype=np.float64)
    vel = np.array(velocity, dtype=np.float64)
    lim = np.array(limits, dtype=np.float64)
    out = np.empty((frames, 2))
    for t in range(frames):
        out[t] = pos
        pos = pos + vel
        for k in range(2):
            # loop handles speeds larger than the free range
            while pos[k] < 0 or pos[k] > lim[k]:
                if lim[k] == 0:
                    pos[k] = 0.0
                    break
                if pos[k] < 0:
                    pos[k] = -pos[k]
                else:
                    pos[k] = 2 * lim[k] - pos[k]
                vel[k] = -vel[k]
    return out


def render(glyphs: list[np.ndarray], trajectories: list[np.ndarray], height: int, width: int,
           channels: int = 1) -> np.ndarray:
    """Composite sprites at rounded positions by per-pixel max; returns ``(T, C, H, W)``.

    Grayscale sprites are replicated across channels.
    """
    frames = trajectories[0].shape[0]
    out = np.zeros((frames, channels, height, width), dtype=np.float32)
    for glyph, traj in zip(glyphs, trajectories):
        gh, gw = glyph.shape
        for t in range(frames):
            x, y = (int(v) for v in np.rint(traj[t]))
            region = out[t, :, y:y + gh, x:x + gw]
            np.maximum(region, glyph, out=region)
    return out


def generate_sequence(spec: SequenceSpec, seed: int | np.random.Generator) -> np.ndarray:
    """One clip ``(T_total, C, H, W)`` in [0, 1]; constant speed per sprite, bouncing off the borders."""
    spec.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bank = spec.glyphs()
    glyphs, trajs = [], []
    for _ in range(spec.num_sprites):
        glyph = bank[rng.integers(len(bank))]
        lim = (spec.width - glyph.shape[1], spec.height - glyph.shape[0])
        start = (rng.uniform(0, lim[0]), rng.uniform(0, lim[1]))
        theta = rng.uniform(0, 2 * np.pi)
        speed = rng.uniform(spec.speed_min, spec.speed_max)
        vel = (speed * np.cos(theta), speed * np.sin(theta))
        glyphs.append(glyph)
        trajs.append(bounce_trajectory(start, vel, spec.frames, lim))
    return render(glyphs, trajs, spec.height, spec.width, spec.channels)


def build_dataset(n_sequences: int, spec: SequenceSpec, split_seed: int) -> DatasetContainer:
    """Container with ``frames`` ``(N, T_total, C, H, W)`` float32 and a ``meta/spec`` record."""
    if n_sequences < 1:
        raise ConfigError("n_sequences must be >= 1")
    spec.validate()
    seeds = np.random.SeedSequence(split_seed).spawn(n_sequences)
    frames = np.stack([generate_sequence(spec, np.random.default_rng(s)) for s in seeds])
    out = DatasetContainer()
    out["frames"] = frames
    out.put_json("meta/spec", {"spec": spec.to_dict(), "split_seed": int(split_seed)})
    return out


def write_dataset(container: DatasetContainer, path: str | Path) -> None:
    write_container(container, path)


def read_dataset(path: str | Path) -> DatasetContainer:
    return read_container(path)


def payload_digest(container: DatasetContainer) -> str:
    return hashlib.sha256(container.to_bytes()).hexdigest()
