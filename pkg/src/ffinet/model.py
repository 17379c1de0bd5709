"""Encoder / inpainter / translator / decoder assembly."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .errors import ConfigError, DimensionError
from .layers import Conv, ConvBlock, ParamFactory, count_parameters, named_parameters
from .spectral import FFCParams, InceptionParams, ffc, fft_inception, init_ffc, init_inception
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``t_in``/``t_out`` are the input and predicted frame counts, ``enc_channels``
    the per-frame encoder width, ``hid_channels`` the translator width,
    ``enc_layers`` the encoder/decoder depth, ``trans_blocks`` the number of
    FFT-Inception blocks and ``fourier_units`` the Fourier Units per block.
    """

    t_in: int = 10
    t_out: int = 10
    channels: int = 1
    height: int = 64
    width: int = 64
    enc_channels: int = 64
    hid_channels: int = 512
    enc_layers: int = 4
    trans_blocks: int = 6
    fourier_units: int = 3
    lam: float = 0.5
    leaky_slope: float = 0.2
    gn_groups: int = 2
    inception_groups: int = 8
    use_inpainter: bool = True
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def downsample(self) -> int:
        return 2 ** (self.enc_layers // 2)

    @property
    def feature_size(self) -> tuple[int, int]:
        return self.height // self.downsample, self.width // self.downsample

    def validate(self) -> None:
        positive = ("t_in", "t_out", "channels", "height", "width", "enc_channels", "hid_channels",
                    "enc_layers", "trans_blocks", "fourier_units", "gn_groups", "inception_groups")
        for name in positive:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.height % self.downsample or self.width % self.downsample:
            raise ConfigError(f"frame {self.height}x{self.width} not divisible by {self.downsample}")
        if self.hid_channels % 2 or (self.hid_channels // 2) % self.inception_groups:
            raise ConfigError(f"hid_channels/2 must be divisible by {self.inception_groups}")
        if (self.t_in * self.enc_channels) % 2:
            raise ConfigError("t_in * enc_channels must be even to split into local/global halves")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if not 0 < self.leaky_slope < 1:
            raise ConfigError("leaky_slope must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        names = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for k, v in d.items():
            if k not in names:
                continue
            default = getattr(cls, k)
            kwargs[k] = type(default)(v) if not isinstance(default, bool) else _as_bool(v)
        return cls(**kwargs)

    def replace(self, **changes) -> ModelConfig:
        return dataclasses.replace(self, **changes)


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


@dataclass
class ModelParams:
    encoder: list[ConvBlock]
    inpainter: list[FFCParams]
    translator: list[InceptionParams]
    decoder: list[ConvBlock]
    head: Conv
    meta: dict = field(default_factory=dict, compare=False)

    def named(self) -> dict[str, Tensor]:
        return dict(named_parameters(self))

    def recovery_parameters(self) -> dict[str, Tensor]:
        """Parameters on the recovery path (everything except the translator)."""
        return {k: v for k, v in self.named().items() if not k.startswith("translator.")}

    def num_parameters(self) -> int:
        return count_parameters(self)


def _is_down(block: int) -> bool:
    # 1-indexed encoder block; every second block halves the resolution
    return block % 2 == 0


def init_params(config: ModelConfig, seed: int | None = None, dtype=np.float32) -> ModelParams:
    """Build all parameters deterministically from ``seed`` (defaults to ``config.seed``)."""
    config.validate()
    f = ParamFactory(config.seed if seed is None else seed, dtype, config.gn_groups, config.leaky_slope)
    ce, ch = config.enc_channels, config.hid_channels
    encoder = [
        f.block(config.channels if i == 1 else ce, ce, 3, stride=2 if _is_down(i) else 1)
        for i in range(1, config.enc_layers + 1)
    ]
    half = config.t_in * ce // 2
    inpainter = [init_ffc(f, half), init_ffc(f, half)]
    nb = config.trans_blocks
    translator = []
    for j in range(nb):
        c_in = config.t_in * ce if j == 0 else ch
        c_out = config.t_out * ce if j == nb - 1 else ch
        translator.append(init_inception(f, c_in, ch, c_out, config.fourier_units, config.inception_groups))
    decoder = []
    for j in range(1, config.enc_layers + 1):
        up = _is_down(config.enc_layers + 1 - j)
        decoder.append(f.block(ce, ce, 3, stride=2 if up else 1, transposed=True,
                               output_padding=1 if up else 0))
    head = f.conv(ce, config.channels, 1)
    return ModelParams(encoder, inpainter, translator, decoder, head)


def _check_frames(frames: Tensor, config: ModelConfig, count: int) -> None:
    want = (count, config.channels, config.height, config.width)
    if frames.ndim != 5 or frames.shape[1:] != want:
        raise DimensionError(f"expected frames (B, {', '.join(map(str, want))}), got {frames.shape}")


def encode(frames: Tensor, params: ModelParams, config: ModelConfig) -> Tensor:
    """(B, T, C, H, W) -> (B, T*C~, H', W') with per-frame shared conv blocks."""
    _check_frames(frames, config, config.t_in)
    b, t = frames.shape[:2]
    z = frames.reshape(b * t, config.channels, config.height, config.width)
    for block in params.encoder:
        z = block(z)
    return z.reshape(b, t * z.shape[1], z.shape[2], z.shape[3])


def inpaint(features: Tensor, params: ModelParams) -> Tensor:
    c = features.shape[1]
    if c % 2:
        raise DimensionError(f"inpainter needs an even channel count, got {c}")
    z_local, z_global = tc.split(features, [c // 2, c // 2], axis=1)
    for block in params.inpainter:
        z_local, z_global = ffc(z_local, z_global, block)
    return tc.concat([z_local, z_global], axis=1)


def translate(features: Tensor, params: ModelParams) -> Tensor:
    z = features
    for block in params.translator:
        z = fft_inception(z, block)
    return z


def decode(features: Tensor, frame_count: int, params: ModelParams, config: ModelConfig) -> Tensor:
    """(B, K*C~, H', W') -> (B, K, C, H, W); the same parameters serve any K."""
    b, c, h, w = features.shape
    ce = config.enc_channels
    if c != frame_count * ce:
        raise DimensionError(f"decoder expects {frame_count}*{ce} channels, got {c}")
    z = features.reshape(b * frame_count, ce, h, w)
    for block in params.decoder:
        z = block(z)
    z = params.head(z)
    return z.reshape(b, frame_count, config.channels, z.shape[2], z.shape[3])


def forward(occluded: Tensor, params: ModelParams, config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Return ``(predicted, recovered)`` frames for an occluded input clip."""
    e = encode(occluded, params, config)
    z = inpaint(e, params) if config.use_inpainter else e
    predicted = decode(translate(z, params), config.t_out, params, config)
    recovered = decode(z, config.t_in, params, config)
    return predicted, recovered
