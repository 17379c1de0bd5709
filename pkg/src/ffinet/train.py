"""Objective, optimiser, schedule, training loop and checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc
from .container import DatasetContainer, read_container, write_container
from .errors import DimensionError, FormatError, TrainingError
from .model import ModelConfig, ModelParams, forward, init_params
from .occlusion import MaskPolicy, MaskSpec, apply_masks
from .tensor import Tensor

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOG_FIELDS = ("step", "lr", "loss_pre", "loss_rec", "loss_total")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _mse(pred: Tensor, target) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    return tc.square(pred - target).mean()


def prediction_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error between predicted and ground-truth future frames."""
    return _mse(pred, target)


def recovery_loss(recovered: Tensor, clean_inputs) -> Tensor:
    """Mean squared error between recovered and clean (pre-occlusion) input frames."""
    return _mse(recovered, clean_inputs)


def total_loss(l_pre: Tensor, l_rec: Tensor, lam: float) -> Tensor:
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if lam == 0:
        return l_pre
    return l_pre + l_rec * lam


# ---------------------------------------------------------------------------
# Optimiser and schedule
# ---------------------------------------------------------------------------

def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], m: dict[str, np.ndarray],
              v: dict[str, np.ndarray], step: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """Bias-corrected Adam update applied in place; ``step`` counts from 1."""
    b1, b2 = betas
    bc1 = 1.0 - b1 ** step
    bc2 = 1.0 - b2 ** step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        mn, vn = m[name], v[name]
        mn *= b1
        mn += (1.0 - b1) * g
        vn *= b2
        vn += (1.0 - b2) * g * g
        denom = np.sqrt(vn) / math.sqrt(bc2) + eps
        p -= (lr / bc1) * mn / denom


def onecycle_lr(step: int, total_steps: int, max_lr: float, pct_start: float = 0.3,
                div_start: float = 25.0, div_final: float = 1e4) -> float:
    """Cosine warm-up from ``max_lr/div_start`` to ``max_lr``, then cosine decay to ``max_lr/div_final``."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if not 0 < pct_start < 1:
        raise ValueError("pct_start must lie in (0, 1)")
    start, end = max_lr / div_start, max_lr / div_final
    peak = pct_start * total_steps
    if step <= peak:
        frac = step / peak if peak > 0 else 1.0
        return max_lr + (start - max_lr) * (1 + math.cos(math.pi * frac)) / 2
    frac = (step - peak) / (total_steps - peak)
    return end + (max_lr - end) * (1 + math.cos(math.pi * frac)) / 2


class Adam:
    """Adam state over a fixed set of named parameters."""

    def __init__(self, named: dict[str, Tensor], betas=(0.9, 0.999), eps: float = 1e-8):
        self.named = named
        self.betas = tuple(betas)
        self.eps = eps
        self.m = {k: np.zeros_like(t.data) for k, t in named.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in named.items()}
        self.step_count = 0

    def step(self, lr: float) -> None:
        self.step_count += 1
        params = {k: t.data for k, t in self.named.items()}
        grads = {k: t.grad for k, t in self.named.items() if t.grad is not None}
        adam_step(params, grads, self.m, self.v, self.step_count, lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for t in self.named.values():
            t.grad = None


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    steps: int = 200
    batch: int = 8
    max_lr: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    pct_start: float = 0.3
    div_start: float = 25.0
    div_final: float = 1e4
    seed: int = 0
    occlude: bool = True
    per_frame_masks: bool = True
    mask_spec: MaskSpec = field(default_factory=MaskSpec)
    precision: str = "std"
    checkpoint_every: int = 0
    checkpoint_path: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.max_lr <= 0:
            raise ValueError("max_lr must be positive")
        if not 0 < self.pct_start < 1:
            raise ValueError("pct_start must lie in (0, 1)")
        if self.steps < 1 or self.batch < 1:
            raise ValueError("steps and batch must be >= 1")
        self.betas = tuple(self.betas)
        if isinstance(self.mask_spec, dict):
            self.mask_spec = MaskSpec(**self.mask_spec)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int
    rng: dict

    def model_params(self) -> ModelParams:
        dtype = next(iter(self.params.values())).dtype
        p = init_params(self.model_config, dtype=dtype)
        for name, t in p.named().items():
            t.data = self.params[name].copy()
        return p


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[dict]
    params: ModelParams


def _frames_of(dataset) -> np.ndarray:
    if isinstance(dataset, DatasetContainer):
        return dataset["frames"]
    return np.asarray(dataset)


def _snapshot(mc, tcfg, named, opt, step, data_rng, policy) -> Checkpoint:
    return Checkpoint(
        model_config=mc, train_config=tcfg,
        params={k: t.data.copy() for k, t in named.items()},
        adam_m={k: a.copy() for k, a in opt.m.items()},
        adam_v={k: a.copy() for k, a in opt.v.items()},
        step=step,
        rng={"data": data_rng.bit_generator.state, "mask": policy.get_state()},
    )


def train(model_config: ModelConfig, train_config: TrainConfig, dataset,
          resume: Checkpoint | None = None, until: int | None = None) -> TrainResult:
    """Optimise ``L_pre + lam * L_rec`` with Adam under a OneCycle schedule.

    ``dataset`` is a container with a ``frames`` record or an array shaped
    ``(N, T_total, C, H, W)`` with ``T_total >= t_in + t_out``. Passing
    ``resume`` continues from a checkpoint and reproduces the uninterrupted
    trajectory exactly. ``until`` stops after that many total steps while
    keeping the schedule of the full run (an interruption).
    """
    mc, tcfg = model_config, train_config
    frames = _frames_of(dataset)
    t_in, t_out = mc.t_in, mc.t_out
    if frames.ndim != 5 or frames.shape[1] < t_in + t_out or frames.shape[2:] != (mc.channels, mc.height, mc.width):
        raise DimensionError(f"dataset frames {frames.shape} do not match model geometry")
    dtype = tc.dtype_for(tcfg.precision)
    frames = frames.astype(dtype, copy=False)

    data_rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 0]))
    policy = MaskPolicy("train", np.random.SeedSequence([tcfg.seed, 1]).generate_state(1)[0],
                        tcfg.mask_spec, tcfg.per_frame_masks)
    if resume is not None:
        params = resume.model_params()
        step = resume.step
        data_rng.bit_generator.state = resume.rng["data"]
        policy.set_state(resume.rng["mask"])
    else:
        params = init_params(mc, dtype=dtype)
        step = 0
    named = params.named()
    opt = Adam(named, tcfg.betas, tcfg.eps)
    if resume is not None:
        opt.m = {k: a.astype(dtype, copy=True) for k, a in resume.adam_m.items()}
        opt.v = {k: a.astype(dtype, copy=True) for k, a in resume.adam_v.items()}
        opt.step_count = step

    rows: list[dict] = []
    n = frames.shape[0]
    stop = tcfg.steps if until is None else min(int(until), tcfg.steps)
    while step < stop:
        lr = onecycle_lr(step, tcfg.steps, tcfg.max_lr, tcfg.pct_start, tcfg.div_start, tcfg.div_final)
        idx = data_rng.integers(0, n, size=tcfg.batch)
        clip = frames[idx]
        inputs, target = clip[:, :t_in], clip[:, t_in:t_in + t_out]
        if tcfg.occlude:
            masks = policy.draw(tcfg.batch, t_in, mc.height, mc.width)
            seen = apply_masks(inputs, masks, tcfg.mask_spec.fill_value)
        else:
            seen = inputs
        pred, rec = forward(Tensor(seen), params, mc)
        l_pre = prediction_loss(pred, target)
        l_rec = recovery_loss(rec, inputs)
        loss = total_loss(l_pre, l_rec, mc.lam)
        vals = (l_pre.item(), l_rec.item(), loss.item())
        if not all(math.isfinite(v) for v in vals):
            raise TrainingError(f"non-finite loss at step {step + 1}: pre={vals[0]}, rec={vals[1]}, lr={lr}")
        opt.zero_grad()
        loss.backward()
        opt.step(lr)
        step += 1
        rows.append({"step": step, "lr": lr, "loss_pre": vals[0], "loss_rec": vals[1], "loss_total": vals[2]})
        if step % 50 == 0 or step == tcfg.steps:
            log.info("step %d lr %.5f pre %.5f rec %.5f", step, lr, vals[0], vals[1])
        if tcfg.checkpoint_every and tcfg.checkpoint_path and step % tcfg.checkpoint_every == 0:
            save_checkpoint(_snapshot(mc, tcfg, named, opt, step, data_rng, policy), tcfg.checkpoint_path)

    ckpt = _snapshot(mc, tcfg, named, opt, step, data_rng, policy)
    if tcfg.checkpoint_path:
        save_checkpoint(ckpt, tcfg.checkpoint_path)
    if tcfg.log_path:
        write_log(rows, tcfg.log_path, append=resume is not None)
    return TrainResult(ckpt, rows, params)


def write_log(rows: list[dict], path: str | Path, append: bool = False) -> None:
    path = Path(path)
    new = not append or not path.exists()
    with path.open("a" if not new else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        if new:
            w.writeheader()
        for r in rows:
            w.writerow({k: repr(r[k]) if isinstance(r[k], float) else r[k] for k in LOG_FIELDS})


def read_log(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in r.items()} for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def checkpoint_to_container(ckpt: Checkpoint) -> DatasetContainer:
    c = DatasetContainer()
    for name, arr in ckpt.params.items():
        c[f"param/{name}"] = arr
    for name, arr in ckpt.adam_m.items():
        c[f"adam_m/{name}"] = arr
    for name, arr in ckpt.adam_v.items():
        c[f"adam_v/{name}"] = arr
    c.put_json("meta/config", {
        "checkpoint_version": CHECKPOINT_VERSION,
        "model": ckpt.model_config.to_dict(),
        # output locations are run plumbing, not training state
        "train": {k: v for k, v in ckpt.train_config.to_dict().items() if k not in ("checkpoint_path", "log_path")},
    })
    c["meta/step"] = np.frombuffer(struct.pack("<Q", ckpt.step), dtype=np.uint8)
    c.put_json("meta/rng", ckpt.rng)
    return c


def checkpoint_from_container(c: DatasetContainer) -> Checkpoint:
    meta = c.get_json("meta/config")
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {meta.get('checkpoint_version')!r}")

    def group(prefix: str) -> dict[str, np.ndarray]:
        return {k[len(prefix):]: c[k] for k in c if k.startswith(prefix)}

    return Checkpoint(
        model_config=ModelConfig.from_dict(meta["model"]),
        train_config=TrainConfig.from_dict(meta["train"]),
        params=group("param/"), adam_m=group("adam_m/"), adam_v=group("adam_v/"),
        step=struct.unpack("<Q", c["meta/step"].tobytes())[0],
        rng=c.get_json("meta/rng"),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    write_container(checkpoint_to_container(ckpt), path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    return checkpoint_from_container(read_container(path))
