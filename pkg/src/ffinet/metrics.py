"""Frame-quality metrics (MSE, MAE, SSIM, PSNR) and the evaluation driver."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc
from .errors import DimensionError
from .model import ModelConfig, ModelParams, forward
from .occlusion import MaskPolicy, MaskSet, apply_masks
from .tensor import Tensor

SSIM_K1, SSIM_K2 = 0.01, 0.03
PSNR_CAP = 100.0
METRICS = ("mse", "mae", "ssim", "psnr")


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(pred, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"prediction {a.shape} and target {b.shape} differ")
    if a.ndim < 3:
        raise DimensionError("frames must have at least (C, H, W) axes")
    return a, b


def frame_mse(pred, target) -> float:
    """Sum of squared error over each frame's (C, H, W) pixels, averaged over all frames."""
    a, b = _pair(pred, target)
    return float(((a - b) ** 2).sum(axis=(-3, -2, -1)).mean())


def frame_mae(pred, target) -> float:
    a, b = _pair(pred, target)
    return float(np.abs(a - b).sum(axis=(-3, -2, -1)).mean())


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation along the last two axes
    k = len(win)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=-2) @ win
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=-1) @ win


def ssim(pred_frame, target_frame, window: int = 11, sigma: float = 1.5, data_range: float = 1.0) -> float:
    """Gaussian-window SSIM over valid window positions, averaged over channels.

    Accepts ``(H, W)`` or ``(C, H, W)``. Frames smaller than the window use a
    window as large as the smaller side.
    """
    a = np.asarray(pred_frame, dtype=np.float64)
    b = np.asarray(target_frame, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"frames {a.shape} and {b.shape} differ")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3 or min(a.shape[-2:]) < 1:
        raise DimensionError(f"ssim expects (H, W) or (C, H, W) frames, got {a.shape}")
    size = min(window, *a.shape[-2:])
    win = gaussian_window(size, sigma)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu1, mu2 = _filter_valid(a, win), _filter_valid(b, win)
    s11 = _filter_valid(a * a, win) - mu1 * mu1
    s22 = _filter_valid(b * b, win) - mu2 * mu2
    s12 = _filter_valid(a * b, win) - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float((num / den).mean())


def psnr(pred_frame, target_frame, cap: float = PSNR_CAP) -> float:
    """``10 log10(1 / mean squared error)`` in dB; identical frames report ``cap``."""
    a, b = np.asarray(pred_frame, dtype=np.float64), np.asarray(target_frame, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"frames {a.shape} and {b.shape} differ")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return cap
    return 10.0 * np.log10(1.0 / mse)


@dataclass
class EvalReport:
    """Aggregated metrics; ``per_sequence[m]`` has shape ``(N, T_out)``."""

    per_sequence: dict[str, np.ndarray]
    display_scale: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def n_sequences(self) -> int:
        return self.per_sequence["mse"].shape[0]

    def value(self, metric: str) -> float:
        return float(self.per_sequence[metric].mean())

    @property
    def mse(self) -> float:
        return self.value("mse")

    @property
    def mae(self) -> float:
        return self.value("mae")

    @property
    def ssim(self) -> float:
        return self.value("ssim")

    @property
    def psnr(self) -> float:
        return self.value("psnr")

    def per_horizon(self, metric: str) -> np.ndarray:
        return self.per_sequence[metric].mean(axis=0)

    def rows(self) -> list[tuple[str, str, float]]:
        out = []
        for m in METRICS:
            out.append((m, "all", self.value(m)))
            out.extend((m, str(t + 1), float(v)) for t, v in enumerate(self.per_horizon(m)))
        return out

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "horizon", "value"])
            for m, h, v in self.rows():
                w.writerow([m, h, repr(v)])

    def table(self) -> str:
        lines = [f"sequences: {self.n_sequences}", f"{'metric':<8}{'value':>14}"]
        for m in METRICS:
            lines.append(f"{m:<8}{self.value(m):>14.6f}")
        horizons = self.per_sequence["mse"].shape[1]
        lines.append("")
        lines.append("t   " + "".join(f"{m:>12}" for m in METRICS))
        for t in range(horizons):
            lines.append(f"{t + 1:<4}" + "".join(f"{self.per_horizon(m)[t]:>12.4f}" for m in METRICS))
        return "\n".join(lines)


def evaluate_predictions(pred: np.ndarray, target: np.ndarray, display_scale: float = 1.0) -> EvalReport:
    """Score clamped predictions ``(N, T_out, C, H, W)`` against targets frame by frame."""
    p, t = _pair(np.clip(pred, 0.0, 1.0), target)
    if p.ndim != 5:
        raise DimensionError(f"expected (N, T, C, H, W), got {p.shape}")
    n, k = p.shape[:2]
    per = {m: np.empty((n, k)) for m in METRICS}
    per["mse"] = ((p - t) ** 2).sum(axis=(2, 3, 4))
    per["mae"] = np.abs(p - t).sum(axis=(2, 3, 4))
    for i in range(n):
        for j in range(k):
            per["ssim"][i, j] = ssim(p[i, j], t[i, j])
            per["psnr"][i, j] = psnr(p[i, j], t[i, j])
    return EvalReport(per, display_scale)


def predict(params: ModelParams, config: ModelConfig, inputs: np.ndarray, batch_size: int = 8):
    """Run the model without taping; returns ``(predicted, recovered)`` arrays."""
    dtype = next(iter(params.named().values())).dtype
    preds, recs = [], []
    with tc.no_grad():
        for s in range(0, len(inputs), batch_size):
            p, r = forward(Tensor(inputs[s:s + batch_size].astype(dtype)), params, config)
            preds.append(p.data)
            recs.append(r.data)
    return np.concatenate(preds), np.concatenate(recs)


def evaluate(params: ModelParams, config: ModelConfig, dataset, mask_policy: MaskPolicy | MaskSet | None = None,
             batch_size: int = 8, fill_value: float = 0.0) -> EvalReport:
    """Forward the whole test set (optionally occluded by fixed masks) and score the predictions.

    ``mask_policy`` may be an eval-mode :class:`MaskPolicy` or a precomputed
    :class:`MaskSet` aligned with the dataset's sequences.
    """
    frames = dataset["frames"] if not isinstance(dataset, np.ndarray) else dataset
    t_in, t_out = config.t_in, config.t_out
    if frames.ndim != 5 or frames.shape[1] < t_in + t_out or frames.shape[2:] != (config.channels, config.height, config.width):
        raise DimensionError(f"dataset frames {frames.shape} do not match model geometry")
    inputs, target = frames[:, :t_in], frames[:, t_in:t_in + t_out]
    if mask_policy is not None:
        if isinstance(mask_policy, MaskPolicy):
            masks = mask_policy.for_sequences(range(len(frames)), t_in, config.height, config.width)
        else:
            masks = mask_policy
        if masks.shape[0] != len(frames) or masks.shape[1] < t_in:
            raise DimensionError(f"masks {masks.shape} do not cover {len(frames)} sequences of {t_in} frames")
        inputs = apply_masks(inputs, masks.masks[:, :t_in], fill_value)
    pred, _ = predict(params, config, inputs, batch_size)
    return evaluate_predictions(pred, target)
