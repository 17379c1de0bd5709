"""Named configurations: the five benchmark geometries plus desk-scale variants."""

from __future__ import annotations

from .errors import ConfigError

_GEOMETRY = ("height", "width", "channels", "t_in", "t_out", "enc_channels", "hid_channels",
             "enc_layers", "trans_blocks", "fourier_units", "lam")


def _row(*values) -> dict:
    return dict(zip(_GEOMETRY, values))


# (H, W, C, T, T', C~, C^, N~, N^, M, lambda)
FULL = {
    "mmnist": _row(64, 64, 1, 10, 10, 64, 512, 4, 6, 3, 0.5),
    "taxibj": _row(32, 32, 2, 4, 4, 64, 256, 3, 4, 2, 1.0),
    "human36m": _row(128, 128, 3, 4, 4, 64, 64, 1, 10, 2, 1.0),
    "kitti-caltech": _row(128, 160, 3, 10, 1, 64, 128, 1, 6, 2, 1.0),
    "kth": _row(128, 128, 1, 10, 20, 32, 128, 3, 8, 1, 1.0),
}

TINY = {
    "mmnist-tiny": _row(32, 32, 1, 4, 4, 16, 64, 2, 2, 1, 0.5),
    "taxibj-tiny": _row(16, 16, 2, 4, 4, 8, 32, 3, 2, 2, 1.0),
    "human36m-tiny": _row(16, 16, 3, 4, 4, 8, 16, 1, 2, 2, 1.0),
    "kitti-caltech-tiny": _row(16, 20, 3, 4, 1, 8, 32, 1, 2, 2, 1.0),
    "kth-tiny": _row(16, 16, 1, 4, 8, 8, 32, 3, 2, 1, 1.0),
}

_FULL_TRAIN = {"batch": 16, "steps": 1000, "n_sequences": 256}
_TINY_TRAIN = {"batch": 8, "steps": 200, "n_sequences": 64}

PRESETS = {name: {**row, **_FULL_TRAIN} for name, row in FULL.items()}
PRESETS.update({name: {**row, **_TINY_TRAIN} for name, row in TINY.items()})


def preset(name: str) -> dict:
    """Flat ``key -> value`` settings for ``name`` (a fresh copy)."""
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
