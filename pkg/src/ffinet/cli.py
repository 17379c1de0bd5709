"""Command-line harness: data and mask generation, training, evaluation, export.

Settings resolve as flags > ``--config`` file > ``--preset``. Every command
writes its outputs plus ``manifest.json`` into ``--out``; ``replay`` reruns a
command from such a manifest.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import LAMBDA_GRID, eval_masks, lambda_sweep, write_sweep_csv
from .container import DatasetContainer, read_container, write_container
from .data import SequenceSpec, build_dataset, read_dataset, write_dataset
from .errors import ConfigError, FFINetError
from .metrics import evaluate, evaluate_predictions, predict
from .model import ModelConfig
from .occlusion import MaskSet, MaskSpec, apply_masks
from .presets import preset
from .train import TrainConfig, load_checkpoint, train

log = logging.getLogger("ffinet")

DATA_DEFAULTS = {"n_sequences": 64, "n_test": 16, "num_sprites": 2, "speed_min": 1.0, "speed_max": 3.0}
MASK_KEYS = {"mask_n_min": "n_min", "mask_n_max": "n_max", "mask_r_min": "r_min", "mask_r_max": "r_max",
             "mask_margin": "margin", "fill_value": "fill_value"}


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------

def parse_value(text: str):
    low = text.strip().lower()
    if low in ("true", "on", "yes"):
        return True
    if low in ("false", "off", "no"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip()


def read_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def resolve_settings(args) -> dict:
    settings = {"seed": 0, **DATA_DEFAULTS}
    settings.update(preset(args.preset))
    if args.config:
        settings.update(read_config_file(args.config))
    flags = {
        "seed": args.seed, "steps": args.steps, "batch": args.batch, "lam": args.lam,
        "precision": args.precision,
    }
    settings.update({k: v for k, v in flags.items() if v is not None})
    if args.occlude is not None:
        settings["occlude"] = args.occlude == "on"
    if args.no_inpainter:
        settings["use_inpainter"] = False
    return settings


def _coerce(value, default):
    if isinstance(default, bool):
        return value if isinstance(value, bool) else parse_value(str(value)) is True
    if isinstance(default, (int, float)) and not isinstance(value, bool):
        return type(default)(value)
    return value


def model_config(s: dict) -> ModelConfig:
    return ModelConfig.from_dict(s)


def mask_spec(s: dict) -> MaskSpec:
    base = MaskSpec()
    kw = {field: _coerce(s[key], getattr(base, field)) for key, field in MASK_KEYS.items() if key in s}
    return MaskSpec(**kw)


def train_config(s: dict, out: Path | None = None) -> TrainConfig:
    base = TrainConfig()
    kw = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name in s and f.name not in ("mask_spec", "betas"):
            kw[f.name] = _coerce(s[f.name], getattr(base, f.name))
    kw["mask_spec"] = mask_spec(s)
    if out is not None:
        kw["checkpoint_path"] = str(out / "checkpoint.ffin")
        kw["log_path"] = str(out / "train_log.csv")
    return TrainConfig(**kw)


def sequence_spec(s: dict) -> SequenceSpec:
    mc = model_config(s)
    return SequenceSpec(
        frames=int(s.get("frames_total", mc.t_in + mc.t_out)), height=mc.height, width=mc.width,
        channels=mc.channels, num_sprites=int(s["num_sprites"]),
        speed_min=float(s["speed_min"]), speed_max=float(s["speed_max"]),
    )


def _dataset(args, s: dict, split: str) -> DatasetContainer:
    if args.data:
        return read_dataset(args.data)
    n = int(s["n_sequences"] if split == "train" else s["n_test"])
    offset = 0 if split == "train" else 1_000_003
    return build_dataset(n, sequence_spec(s), int(s.get("data_seed", s["seed"])) + offset)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, argv: list[str], settings: dict, artifacts: dict) -> None:
    manifest = {
        "tool": "ffinet", "version": __version__, "command": command, "argv": argv,
        "settings": settings, "seeds": {k: settings[k] for k in settings if "seed" in k},
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))


def _to_bytes(frame: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(frame, 0.0, 1.0) * 255).astype(np.uint8)


def write_strip(frames: np.ndarray, path: Path) -> Path:
    """Write ``(K, C, H, W)`` frames side by side as binary PGM (C=1) or PPM."""
    k, c, h, w = frames.shape
    strip = np.concatenate(list(frames), axis=-1)  # (C, H, K*W)
    if c == 1:
        path = path.with_suffix(".pgm")
        header, body = f"P5\n{k * w} {h}\n255\n", _to_bytes(strip[0])
    else:
        rgb = np.zeros((3, h, k * w), dtype=strip.dtype)
        rgb[:min(c, 3)] = strip[:3]
        path = path.with_suffix(".ppm")
        header, body = f"P6\n{k * w} {h}\n255\n", _to_bytes(rgb.transpose(1, 2, 0))
    path.write_bytes(header.encode("ascii") + body.tobytes())
    return path


def read_pnm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    kind = parts[0]
    w, h = map(int, parts[1].split())
    body = np.frombuffer(parts[3], dtype=np.uint8)
    return body.reshape(h, w) if kind == b"P5" else body.reshape(h, w, 3)


def _load_masks(path: str) -> MaskSet:
    return MaskSet(read_container(path)["masks"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args, argv) -> int:
    s = resolve_settings(args)
    out = _out_dir(args)
    spec = sequence_spec(s)
    seed = int(s.get("data_seed", s["seed"]))
    paths = {}
    for split, n, offset in (("train", s["n_sequences"], 0), ("test", s["n_test"], 1_000_003)):
        ds = build_dataset(int(n), spec, seed + offset)
        paths[split] = str(out / f"{split}.ffin")
        write_dataset(ds, paths[split])
    write_manifest(out, "gen-data", argv, s, paths)
    print(f"wrote {paths['train']} and {paths['test']}")
    return 0


def cmd_gen_masks(args, argv) -> int:
    s = resolve_settings(args)
    out = _out_dir(args)
    mc = model_config(s)
    if args.data:
        n = read_dataset(args.data)["frames"].shape[0]
    else:
        n = int(s["n_test"])
    tcfg = train_config(s)
    seed = int(s.get("mask_seed", s["seed"]))
    masks = eval_masks(n, mc, seed, tcfg)
    c = DatasetContainer({"masks": masks.masks})
    c.put_json("meta/mask", {"seed": seed, "spec": tcfg.mask_spec.to_dict(), "per_frame": tcfg.per_frame_masks})
    path = out / "masks.ffin"
    write_container(c, path)
    write_manifest(out, "gen-masks", argv, s, {"masks": str(path)})
    print(f"wrote {path} with {n} sequences")
    return 0


def cmd_train(args, argv) -> int:
    s = resolve_settings(args)
    out = _out_dir(args)
    mc = model_config(s)
    tcfg = train_config(s, out)
    ds = _dataset(args, s, "train")
    resume = load_checkpoint(args.ckpt) if args.ckpt else None
    result = train(mc, tcfg, ds, resume=resume)
    last = result.log[-1] if result.log else {}
    write_manifest(out, "train", argv, s, {"checkpoint": tcfg.checkpoint_path, "log": tcfg.log_path})
    print(f"final step {result.checkpoint.step} loss_pre {last.get('loss_pre', float('nan')):.6f} "
          f"loss_rec {last.get('loss_rec', float('nan')):.6f}")
    return 0


def cmd_eval(args, argv) -> int:
    s = resolve_settings(args)
    out = _out_dir(args)
    ds = _dataset(args, s, "test")
    masks = _load_masks(args.masks) if args.masks else None
    if args.ground_truth:
        mc = model_config(s)
        target = ds["frames"][:, mc.t_in:mc.t_in + mc.t_out]
        report = evaluate_predictions(target, target)
    else:
        if not args.ckpt:
            raise ConfigError("eval needs --ckpt (or --ground-truth)")
        ckpt = load_checkpoint(args.ckpt)
        mc = ckpt.model_config
        fill = ckpt.train_config.mask_spec.fill_value
        report = evaluate(ckpt.model_params(), mc, ds, masks, fill_value=fill)
    path = out / "report.csv"
    report.write_csv(path)
    print(report.table())
    write_manifest(out, "eval", argv, s, {"report": str(path)})
    return 0


def cmd_predict(args, argv) -> int:
    s = resolve_settings(args)
    out = _out_dir(args)
    if not args.ckpt:
        raise ConfigError("predict needs --ckpt")
    ckpt = load_checkpoint(args.ckpt)
    mc = ckpt.model_config
    ds = _dataset(args, s, "test")
    i = int(args.index)
    frames = ds["frames"]
    if not 0 <= i < len(frames):
        raise ConfigError(f"--index {i} outside dataset of {len(frames)} sequences")
    clip = frames[i:i + 1]
    inputs, target = clip[:, :mc.t_in], clip[:, mc.t_in:mc.t_in + mc.t_out]
    if args.masks:
        m = _load_masks(args.masks)
        occluded = apply_masks(inputs, m[i:i + 1].masks[:, :mc.t_in], ckpt.train_config.mask_spec.fill_value)
    else:
        occluded = inputs
    pred, rec = predict(ckpt.model_params(), mc, occluded, batch_size=1)
    strips = out / "strips"
    strips.mkdir(exist_ok=True)
    written = {}
    for name, arr in (("input", inputs), ("occluded", occluded), ("recovered", rec),
                      ("predicted", pred), ("target", target)):
        written[name] = str(write_strip(arr[0], strips / name))
    write_manifest(out, "predict", argv, s, written)
    print(f"wrote {len(written)} strips to {strips}")
    return 0


def cmd_ablate(args, argv) -> int:
    s = resolve_settings(args)
    out = _out_dir(args)
    mc = model_config(s)
    tcfg = train_config(s)
    train_ds = _dataset(args, s, "train")
    test_ds = build_dataset(int(s["n_test"]), sequence_spec(s), int(s.get("data_seed", s["seed"])) + 1_000_003)
    lams = [float(x) for x in args.lambdas.split(",")] if args.lambdas else LAMBDA_GRID
    rows = lambda_sweep(mc, tcfg, train_ds, test_ds, int(s.get("mask_seed", s["seed"])), lams)
    path = out / "lambda_ablation.csv"
    write_sweep_csv(rows, path)
    for r in rows:
        print(f"lam={r['lam']:<5} mse={r['mse']:.4f} ssim={r['ssim']:.4f} psnr={r['psnr']:.2f}")
    write_manifest(out, "ablate", argv, s, {"csv": str(path)})
    return 0


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    replay_argv = list(manifest["argv"])
    if args.out:
        if "--out" in replay_argv:
            replay_argv[replay_argv.index("--out") + 1] = args.out
        else:
            replay_argv += ["--out", args.out]
    return main(replay_argv)


COMMANDS = {
    "gen-data": cmd_gen_data, "gen-masks": cmd_gen_masks, "train": cmd_train, "eval": cmd_eval,
    "predict": cmd_predict, "ablate": cmd_ablate, "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffinet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ffinet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "replay":
            p.add_argument("--manifest", required=True)
            p.add_argument("--out")
            continue
        p.add_argument("--preset", default="mmnist-tiny")
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--occlude", choices=("on", "off"))
        p.add_argument("--no-inpainter", action="store_true")
        p.add_argument("--ckpt")
        p.add_argument("--data")
        p.add_argument("--masks")
        p.add_argument("--out")
        p.add_argument("--precision", choices=("std", "high"))
        p.add_argument("--deterministic", action="store_true")
        if name == "eval":
            p.add_argument("--ground-truth", action="store_true",
                           help="score the ground truth against itself (stub model)")
        if name == "predict":
            p.add_argument("--index", type=int, default=0)
        if name == "ablate":
            p.add_argument("--lambdas", help="comma-separated recovery weights")
    return parser


def _thread_limit(deterministic: bool):
    limit = 1 if deterministic else os.environ.get("FFINET_THREADS")
    if limit is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(limit))


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(getattr(args, "deterministic", False)):
            return COMMANDS[args.command](args, argv)
    except (FFINetError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
