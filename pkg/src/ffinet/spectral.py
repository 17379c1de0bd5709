"""Fourier Unit, Fast Fourier Convolution and FFT-Inception blocks."""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as tc
from .errors import ConfigError, DimensionError
from .layers import Conv, ConvBlock, GroupNorm, ParamFactory, activate
from .tensor import ComplexSpectrum, Tensor


@dataclass
class FourierUnitParams:
    pre: ConvBlock   # 1x1, c -> c
    freq: ConvBlock  # 1x1 over stacked real/imag, 2c -> 2c
    post: ConvBlock  # 1x1, c -> c

    @property
    def channels(self) -> int:
        return self.pre.conv.weight.shape[0]


def init_fourier_unit(factory: ParamFactory, channels: int) -> FourierUnitParams:
    return FourierUnitParams(
        pre=factory.block(channels, channels, 1),
        freq=factory.block(2 * channels, 2 * channels, 1),
        post=factory.block(channels, channels, 1),
    )


def fourier_unit(u: Tensor, p: FourierUnitParams) -> Tensor:
    """Global-receptive-field unit; output has the same shape as ``u``.

    The spatial feature is moved to the half spectrum, real and imaginary
    parts are stacked as ``2c`` channels for a pointwise conv, brought back
    with the inverse transform and merged residually before the last conv.
    """
    if u.ndim != 4:
        raise DimensionError(f"fourier_unit expects (B, C, H, W), got {u.shape}")
    c, width = u.shape[1], u.shape[3]
    s = p.pre(u)
    spec = tc.rfft2(s)
    f = p.freq(tc.concat([spec.real, spec.imag], axis=1))
    re, im = tc.split(f, [c, c], axis=1)
    back = tc.irfft2(ComplexSpectrum(re, im, width), width)
    return p.post(back + s)


@dataclass
class FFCParams:
    local_local: Conv    # 3x3, local -> local
    global_local: Conv   # 3x3, global -> local
    local_global: Conv   # 3x3, local -> global
    fu: FourierUnitParams
    norm_local: GroupNorm
    norm_global: GroupNorm
    slope: float


def init_ffc(factory: ParamFactory, half: int) -> FFCParams:
    return FFCParams(
        local_local=factory.conv(half, half, 3),
        global_local=factory.conv(half, half, 3),
        local_global=factory.conv(half, half, 3),
        fu=init_fourier_unit(factory, half),
        norm_local=factory.norm(half),
        norm_global=factory.norm(half),
        slope=factory.slope,
    )


def ffc(z_local: Tensor, z_global: Tensor, p: FFCParams) -> tuple[Tensor, Tensor]:
    """One two-branch fast Fourier convolution; both halves keep their shape."""
    if z_local.shape != z_global.shape:
        raise DimensionError(f"local {z_local.shape} and global {z_global.shape} halves differ")
    new_local = activate(p.norm_local, p.local_local(z_local) + p.global_local(z_global), p.slope)
    new_global = activate(p.norm_global, p.local_global(z_local) + fourier_unit(z_global, p.fu), p.slope)
    return new_local, new_global


@dataclass
class InceptionParams:
    reduce: ConvBlock    # 1x1, c_in -> hid/2
    branch3: ConvBlock   # 3x3 grouped
    branch5: ConvBlock   # 5x5 grouped
    fourier: list[FourierUnitParams]
    fuse: ConvBlock      # 1x1, 3*hid/2 -> c_out


def init_inception(factory: ParamFactory, c_in: int, hid: int, c_out: int, fourier_units: int,
                   groups: int = 8) -> InceptionParams:
    half = hid // 2
    if hid % 2 or half % groups:
        raise ConfigError(f"hidden width {hid}: half width must be divisible by {groups} groups")
    if fourier_units < 1:
        raise ConfigError("an FFT-Inception block needs at least one Fourier Unit")
    return InceptionParams(
        reduce=factory.block(c_in, half, 1),
        branch3=factory.block(half, half, 3, groups=groups),
        branch5=factory.block(half, half, 5, groups=groups),
        fourier=[init_fourier_unit(factory, half) for _ in range(fourier_units)],
        fuse=factory.block(3 * half, c_out, 1),
    )


def fft_inception(z: Tensor, p: InceptionParams) -> Tensor:
    r = p.reduce(z)
    g = r
    for unit in p.fourier:
        g = fourier_unit(g, unit)
    return p.fuse(tc.concat([p.branch3(r), p.branch5(r), g], axis=1))
