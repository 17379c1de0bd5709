"""Comparison runs: inpainter on/off under occlusion and the recovery-weight sweep."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .metrics import EvalReport, evaluate
from .model import ModelConfig
from .occlusion import MaskPolicy, MaskSet
from .train import TrainConfig, train

LAMBDA_GRID = (0.0, 0.25, 0.5, 1.0, 2.0)
SWEEP_FIELDS = ("lam", "use_inpainter", "final_loss_pre", "mse", "mae", "ssim", "psnr")


def _count(frames) -> int:
    return len(frames if isinstance(frames, np.ndarray) else frames["frames"])


def eval_masks(n_sequences: int, config: ModelConfig, seed: int, train_config: TrainConfig) -> MaskSet:
    """Fixed evaluation masks for sequences ``0 .. n_sequences-1``."""
    policy = MaskPolicy("eval", seed, train_config.mask_spec, train_config.per_frame_masks)
    return policy.for_sequences(range(n_sequences), config.t_in, config.height, config.width)


def run_variant(config: ModelConfig, train_config: TrainConfig, train_frames, test_frames,
                masks: MaskSet | None) -> tuple[EvalReport, list[dict]]:
    result = train(config, train_config, train_frames)
    report = evaluate(result.params, config, test_frames, masks, fill_value=train_config.mask_spec.fill_value)
    return report, result.log


def occlusion_trend(config: ModelConfig, train_config: TrainConfig, train_frames, test_frames,
                    mask_seed: int) -> dict[str, EvalReport]:
    """Train with inpainter + lam=1 and without inpainter + lam=0 on identical data, seeds and masks."""
    masks = eval_masks(_count(test_frames), config, mask_seed, train_config)
    variants = {
        "with_inpainter": config.replace(use_inpainter=True, lam=1.0),
        "without_inpainter": config.replace(use_inpainter=False, lam=0.0),
    }
    return {name: run_variant(cfg, train_config, train_frames, test_frames, masks)[0]
            for name, cfg in variants.items()}


def lambda_sweep(config: ModelConfig, train_config: TrainConfig, train_frames, test_frames, mask_seed: int,
                 lams=LAMBDA_GRID) -> list[dict]:
    """One training + evaluation per recovery weight; returns one row per lambda."""
    masks = eval_masks(_count(test_frames), config, mask_seed, train_config) if train_config.occlude else None
    rows = []
    for lam in lams:
        cfg = config.replace(lam=float(lam))
        report, log = run_variant(cfg, train_config, train_frames, test_frames, masks)
        rows.append({
            "lam": float(lam), "use_inpainter": cfg.use_inpainter, "final_loss_pre": log[-1]["loss_pre"],
            "mse": report.mse, "mae": report.mae, "ssim": report.ssim, "psnr": report.psnr,
        })
    return rows


def write_sweep_csv(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in SWEEP_FIELDS})
