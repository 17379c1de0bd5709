"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable op appends a record carrying a global sequence number
and a closure that maps output gradients to input gradients. ``backward``
collects the records reachable from a scalar loss and replays them in
strictly decreasing sequence order, which is exactly reverse execution
order, so each record sees the fully accumulated gradient of its outputs.

Two scalar precisions are used: ``float32`` ("std") for training and
``float64`` ("high") for gradient checks and FFT oracles. Ops keep the
dtype of their first tensor argument.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError, DimensionError, NonFiniteError

PRECISIONS = {"std": np.float32, "high": np.float64}

_seq = itertools.count()
_local = threading.local()


def _state():
    st = _local.__dict__
    if "grad_enabled" not in st:
        st["grad_enabled"] = True
        st["debug"] = False
        st["counters"] = []
    return _local


def dtype_for(precision: str) -> np.dtype:
    try:
        return np.dtype(PRECISIONS[precision])
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}; expected 'std' or 'high'") from None


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block."""
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def is_grad_enabled() -> bool:
    return _state().grad_enabled


def set_debug(flag: bool) -> None:
    """Check every op output for NaN/Inf and raise ``NonFiniteError``."""
    _state().debug = bool(flag)


@contextlib.contextmanager
def count_ops() -> Iterator[Counter]:
    """Count forward op invocations by name within the block.

    >>> with count_ops() as c:
    ...     _ = rfft2(Tensor(np.ones((4, 4))))
    >>> c["rfft2"]
    1
    """
    counter: Counter = Counter()
    st = _state()
    st.counters.append(counter)
    try:
        yield counter
    finally:
        st.counters.remove(counter)


class _Record:
    __slots__ = ("seq", "inputs", "n_out", "backward", "name")

    def __init__(self, name, inputs, n_out, backward):
        self.seq = next(_seq)
        self.name = name
        self.inputs = inputs
        self.n_out = n_out
        self.backward = backward


class Tensor:
    """N-dimensional real array that may participate in the gradient tape."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._record: _Record | None = None
        self._out_index = 0

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def backward(self) -> None:
        backward(self)

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def sum(self) -> Tensor:
        return sum_all(self)

    def mean(self) -> Tensor:
        return mean_all(self)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _make(name: str, outputs: Sequence[np.ndarray], inputs: Sequence[Tensor], backward_fn) -> list[Tensor]:
    """Wrap op outputs and, when needed, append a tape record."""
    st = _state()
    for counter in st.counters:
        counter[name] += 1
    if st.debug:
        for arr in outputs:
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"non-finite value produced by {name}")
    needs = st.grad_enabled and any(t.requires_grad for t in inputs)
    outs = [Tensor(a) for a in outputs]
    if needs:
        rec = _Record(name, tuple(inputs), len(outs), backward_fn)
        for i, t in enumerate(outs):
            t.requires_grad = True
            t._record = rec
            t._out_index = i
    return outs


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._record is None:
        if loss.requires_grad:
            _accumulate_leaf(loss, np.ones_like(loss.data))
        return

    records: dict[int, _Record] = {}
    stack = [loss._record]
    while stack:
        rec = stack.pop()
        if id(rec) in records:
            continue
        records[id(rec)] = rec
        for t in rec.inputs:
            if t._record is not None and id(t._record) not in records:
                stack.append(t._record)

    pending: dict[int, list] = {id(loss._record): [None] * loss._record.n_out}
    pending[id(loss._record)][loss._out_index] = np.ones_like(loss.data)

    for rec in sorted(records.values(), key=lambda r: r.seq, reverse=True):
        out_grads = pending.pop(id(rec), None)
        if out_grads is None:
            continue
        in_grads = rec.backward(out_grads)
        for t, g in zip(rec.inputs, in_grads):
            if g is None or not t.requires_grad:
                continue
            if t._record is None:
                _accumulate_leaf(t, g)
            else:
                slot = pending.setdefault(id(t._record), [None] * t._record.n_out)
                i = t._out_index
                slot[i] = g if slot[i] is None else slot[i] + g


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.dtype).reshape(t.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _zeros_if_none(grads, arrays):
    return [np.zeros_like(a) if g is None else g for g, a in zip(grads, arrays)]


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g[0], sa), _unbroadcast(g[0], sb)

    return _make("add", [a.data + b.data], [a, b], bw)[0]


def sub(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g[0], sa), _unbroadcast(-g[0], sb)

    return _make("sub", [a.data - b.data], [a, b], bw)[0]


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = np.asarray(b, dtype=a.dtype)

        def bw_const(g):
            return (g[0] * c,)

        return _make("mul", [a.data * c], [a], bw_const)[0]
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g[0] * bd, ad.shape), _unbroadcast(g[0] * ad, bd.shape)

    return _make("mul", [ad * bd], [a, b], bw)[0]


def square(x: Tensor) -> Tensor:
    xd = x.data

    def bw(g):
        return (2.0 * xd * g[0],)

    return _make("square", [xd * xd], [x], bw)[0]


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape

    def bw(g):
        return (np.broadcast_to(g[0], shape).copy(),)

    return _make("sum", [np.asarray(x.data.sum(), dtype=x.dtype)], [x], bw)[0]


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size

    def bw(g):
        return (np.full(shape, g[0] / n, dtype=g[0].dtype),)

    return _make("mean", [np.asarray(x.data.mean(), dtype=x.dtype)], [x], bw)[0]


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {src} to {shape}") from exc

    def bw(g):
        return (g[0].reshape(src),)

    return _make("reshape", [out], [x], bw)[0]


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != ax):
            raise DimensionError(f"concat shape mismatch {t.shape} vs {ref} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.take(g[0], np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return _make("concat", [np.concatenate([t.data for t in tensors], axis=ax)], list(tensors), bw)[0]


def split(x: Tensor, sizes: Sequence[int], axis: int = 1) -> list[Tensor]:
    """Split along ``axis`` into consecutive chunks of the given sizes."""
    ax = axis % x.ndim
    if sum(sizes) != x.shape[ax]:
        raise DimensionError(f"split sizes {list(sizes)} do not cover axis of extent {x.shape[ax]}")
    bounds = np.cumsum([0] + list(sizes))
    parts = [
        np.ascontiguousarray(np.take(x.data, np.arange(bounds[i], bounds[i + 1]), axis=ax))
        for i in range(len(sizes))
    ]

    def bw(g):
        return (np.concatenate(_zeros_if_none(g, parts), axis=ax),)

    return _make("split", parts, [x], bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """``x`` for ``x >= 0``, ``slope * x`` otherwise (derivative 1 at 0)."""
    pos = x.data >= 0
    out = np.where(pos, x.data, x.data * x.dtype.type(slope))

    def bw(g):
        return (np.where(pos, g[0], g[0] * g[0].dtype.type(slope)),)

    return _make("leaky_relu", [out], [x], bw)[0]


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    b, c = xp.shape[:2]
    s = xp.strides
    return as_strided(xp, (b, c, kh, kw, ho, wo), (s[0], s[1], s[2], s[3], s[2] * stride, s[3] * stride),
                      writeable=False)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int, groups: int):
    """Return columns shaped ``(groups, Cg*kh*kw, B*Ho*Wo)`` plus ``(Ho, Wo)``."""
    b, c, h, w = x.shape
    ho, wo = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        cols = x.reshape(b, groups, c // groups, h * w).transpose(1, 2, 0, 3)
        return np.ascontiguousarray(cols).reshape(groups, c // groups, b * h * w), (ho, wo)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _windows(np.ascontiguousarray(xp), kh, kw, stride, ho, wo)
    win = win.reshape(b, groups, c // groups, kh, kw, ho, wo).transpose(1, 2, 3, 4, 0, 5, 6)
    cols = np.ascontiguousarray(win).reshape(groups, (c // groups) * kh * kw, b * ho * wo)
    return cols, (ho, wo)


def _col2im(cols: np.ndarray, xshape, kh: int, kw: int, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of ``_im2col``: scatter-add columns back to an input-shaped array."""
    b, c, h, w = xshape
    groups = cols.shape[0]
    cols = cols.reshape(groups, c // groups, kh, kw, b, ho, wo)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        return np.ascontiguousarray(cols.reshape(c, b, h, w).transpose(1, 0, 2, 3))
    cols = cols.transpose(4, 0, 1, 2, 3, 5, 6).reshape(b, c, kh, kw, ho, wo)
    hp, wp = h + 2 * pad, w + 2 * pad
    xp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    if pad:
        xp = xp[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(xp)


def _conv_check(x_shape, w_shape, groups: int, stride: int, pad: int, transposed: bool):
    if len(x_shape) != 4 or len(w_shape) != 4:
        raise DimensionError(f"expected 4-D input and weight, got {x_shape} and {w_shape}")
    if groups < 1 or stride < 1 or pad < 0:
        raise DimensionError(f"invalid groups={groups}, stride={stride}, padding={pad}")
    cin = x_shape[1]
    if transposed:
        if w_shape[0] != cin:
            raise DimensionError(f"weight expects {w_shape[0]} input channels, input has {cin}")
        cout = w_shape[1] * groups
        if cin % groups:
            raise DimensionError(f"channels {cin} not divisible by groups {groups}")
    else:
        cout = w_shape[0]
        if cin % groups or cout % groups:
            raise DimensionError(f"channels ({cin}, {cout}) not divisible by groups {groups}")
        if w_shape[1] * groups != cin:
            raise DimensionError(f"weight expects {w_shape[1] * groups} input channels, input has {cin}")
    return cout


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0,
           groups: int = 1) -> Tensor:
    """2-D cross-correlation with zero padding over ``(B, Cin, H, W)`` input."""
    cout = _conv_check(x.shape, weight.shape, groups, stride, padding, transposed=False)
    b, cin, h, w = x.shape
    _, cg, kh, kw = weight.shape
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})")
    og = cout // groups
    cols, (ho, wo) = _im2col(x.data, kh, kw, stride, padding, groups)
    wmat = weight.data.reshape(groups, og, cg * kh * kw)
    out = np.matmul(wmat, cols).reshape(groups * og, b, ho, wo).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)
    if bias is not None:
        if bias.shape != (cout,):
            raise DimensionError(f"bias shape {bias.shape} != ({cout},)")
        out += bias.data.reshape(1, -1, 1, 1)
    xshape, wshape = x.shape, weight.shape
    need_x, need_w = x.requires_grad, weight.requires_grad

    def bw(g):
        gy = g[0]
        gmat = np.ascontiguousarray(gy.transpose(1, 0, 2, 3)).reshape(groups, og, b * ho * wo)
        gx = gw = gb = None
        if need_x:
            gx = _col2im(np.matmul(wmat.transpose(0, 2, 1), gmat), xshape, kh, kw, stride, padding, ho, wo)
        if need_w:
            gw = np.matmul(gmat, cols.transpose(0, 2, 1)).reshape(wshape)
        if bias is not None:
            gb = gy.sum(axis=(0, 2, 3))
        return gx, gw, gb

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return _make("conv2d", [out], inputs, bw)[0]


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0, output_padding: int = 0, groups: int = 1) -> Tensor:
    """Transposed convolution; weight is ``(Cin, Cout/groups, kh, kw)``.

    Output extent is ``(H - 1) * stride - 2 * padding + kh + output_padding``.
    The forward map is the input-gradient of ``conv2d`` with the same weight.
    """
    cout = _conv_check(x.shape, weight.shape, groups, stride, padding, transposed=True)
    if not 0 <= output_padding < stride:
        raise DimensionError(f"output_padding {output_padding} must be smaller than stride {stride}")
    b, cin, h, w = x.shape
    _, og, kh, kw = weight.shape
    cg = cin // groups
    hout = (h - 1) * stride - 2 * padding + kh + output_padding
    wout = (w - 1) * stride - 2 * padding + kw + output_padding
    if hout < 1 or wout < 1:
        raise DimensionError(f"transposed conv output would be {hout}x{wout}")
    # conv2d view of the adjoint: input (B, cout, hout, wout) -> (B, cin, h, w)
    wmat = weight.data.reshape(groups, cg, og * kh * kw)
    xmat = np.ascontiguousarray(x.data.transpose(1, 0, 2, 3)).reshape(groups, cg, b * h * w)
    cols = np.matmul(wmat.transpose(0, 2, 1), xmat)
    out = _scatter_windows(cols, (b, cout, hout, wout), kh, kw, stride, padding, h, w)
    if bias is not None:
        if bias.shape != (cout,):
            raise DimensionError(f"bias shape {bias.shape} != ({cout},)")
        out += bias.data.reshape(1, -1, 1, 1)
    wshape = weight.shape
    need_x, need_w = x.requires_grad, weight.requires_grad

    def bw(g):
        gy = g[0]
        gx = gw = gb = None
        if need_x or need_w:
            gcols, _ = _im2col(gy, kh, kw, stride, padding, groups)
        if need_x:
            gx = np.matmul(wmat, gcols).reshape(cin, b, h, w).transpose(1, 0, 2, 3)
            gx = np.ascontiguousarray(gx)
        if need_w:
            gw = np.matmul(xmat, gcols.transpose(0, 2, 1)).reshape(wshape)
        if bias is not None:
            gb = gy.sum(axis=(0, 2, 3))
        return gx, gw, gb

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return _make("conv_transpose2d", [out], inputs, bw)[0]


def _scatter_windows(cols, shape, kh, kw, stride, pad, ho, wo):
    # Like _col2im, but the canvas may be shorter than the windows reach
    # (output_padding adds rows no window touches, padding crops others).
    b, c, h, w = shape
    groups = cols.shape[0]
    cols = cols.reshape(groups, c // groups, kh, kw, b, ho, wo)
    cols = cols.transpose(4, 0, 1, 2, 3, 5, 6).reshape(b, c, kh, kw, ho, wo)
    hp = max(h + 2 * pad, (ho - 1) * stride + kh)
    wp = max(w + 2 * pad, (wo - 1) * stride + kw)
    xp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------

def group_norm(x: Tensor, num_groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each (sample, channel group) over its channels and pixels, then apply an affine map."""
    if x.ndim != 4:
        raise DimensionError(f"group_norm expects (B, C, H, W), got {x.shape}")
    b, c, h, w = x.shape
    if num_groups < 1 or c % num_groups:
        raise DimensionError(f"channels {c} not divisible by {num_groups} groups")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"gamma/beta must have shape ({c},)")
    if eps <= 0:
        raise ContractError("group_norm eps must be positive")
    xg = x.data.reshape(b, num_groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=2, keepdims=True)
    rstd = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = (xc * rstd).reshape(b, c, h, w)
    gam = gamma.data.reshape(1, c, 1, 1)
    out = xhat * gam + beta.data.reshape(1, c, 1, 1)
    n = xg.shape[2]

    def bw(g):
        gy = g[0]
        ggamma = (gy * xhat).sum(axis=(0, 2, 3))
        gbeta = gy.sum(axis=(0, 2, 3))
        gx = None
        if x.requires_grad:
            dxhat = (gy * gam).reshape(b, num_groups, n)
            xh = xhat.reshape(b, num_groups, n)
            gx = rstd * (dxhat - dxhat.mean(axis=2, keepdims=True)
                         - xh * (dxhat * xh).mean(axis=2, keepdims=True))
            gx = gx.reshape(b, c, h, w)
        return gx, ggamma, gbeta

    return _make("group_norm", [out], [x, gamma, beta], bw)[0]


# ---------------------------------------------------------------------------
# Real 2-D FFT
# ---------------------------------------------------------------------------

@dataclass
class ComplexSpectrum:
    """Half spectrum of a real signal carried as paired real tensors."""

    real: Tensor
    imag: Tensor
    width: int

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise DimensionError(f"real {self.real.shape} and imag {self.imag.shape} differ")
        if self.real.shape[-1] != self.width // 2 + 1:
            raise DimensionError(
                f"last axis {self.real.shape[-1]} inconsistent with source width {self.width}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.real.shape


def _column_weights(width: int, dtype) -> np.ndarray:
    """Multiplicity of each half-spectrum column in the full spectrum."""
    wts = np.full(width // 2 + 1, 2.0, dtype=dtype)
    wts[0] = 1.0
    if width % 2 == 0:
        wts[-1] = 1.0
    return wts


def rfft2(x: Tensor) -> ComplexSpectrum:
    """Unnormalised forward DFT over the last two axes keeping ``W//2 + 1`` columns."""
    if x.ndim < 2:
        raise DimensionError("rfft2 needs at least two axes")
    h, w = x.shape[-2:]
    spec = np.fft.rfft2(x.data, axes=(-2, -1))
    re = np.ascontiguousarray(spec.real, dtype=x.dtype)
    im = np.ascontiguousarray(spec.imag, dtype=x.dtype)
    half = _column_weights(w, x.dtype)

    def bw(g):
        gr, gi = _zeros_if_none(g, [re, im])
        # Adjoint of the half-spectrum DFT: Re(A^H G) expressed through irfft2.
        gc = (gr + 1j * gi) / half
        return (np.fft.irfft2(gc, s=(h, w), axes=(-2, -1)).astype(x.dtype) * (h * w),)

    r, i = _make("rfft2", [re, im], [x], bw)
    return ComplexSpectrum(r, i, w)


def irfft2(spec: ComplexSpectrum, out_width: int | None = None) -> Tensor:
    """Inverse of ``rfft2`` scaled by ``1 / (H * W)``; output is real."""
    w = spec.width if out_width is None else int(out_width)
    re, im = spec.real, spec.imag
    if re.shape[-1] != w // 2 + 1:
        raise DimensionError(f"spectrum width {re.shape[-1]} inconsistent with output width {w}")
    h = re.shape[-2]
    out = np.fft.irfft2(re.data + 1j * im.data, s=(h, w), axes=(-2, -1)).astype(re.dtype)
    wts = _column_weights(w, re.dtype) / (h * w)

    def bw(g):
        f = np.fft.rfft2(g[0], axes=(-2, -1)) * wts
        return f.real.astype(re.dtype), f.imag.astype(re.dtype)

    return _make("irfft2", [out], [re, im], bw)[0]


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-6,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Compare tape gradients against central differences.

    ``fn`` recomputes a scalar from ``tensors`` (typically a closure). Returns
    ``max |analytic - numeric| / max(1, |numeric|)`` over the probed
    coordinates. When ``max_coords`` is set, at most that many coordinates per
    tensor are sampled uniformly (seeded) instead of probing all of them.
    """
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    loss = fn()
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for t, ga in zip(tensors, analytic):
            t.data = np.ascontiguousarray(t.data)
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                idx = rng.choice(flat.size, size=max_coords, replace=False)
            for k in idx:
                orig = flat[k]
                flat[k] = orig + eps
                fp = fn().item()
                flat[k] = orig - eps
                fm = fn().item()
                flat[k] = orig
                num = (fp - fm) / (2 * eps)
                err = abs(ga.reshape(-1)[k] - num) / max(1.0, abs(num))
                worst = max(worst, float(err))
    for t in tensors:
        t.grad = None
    return worst
