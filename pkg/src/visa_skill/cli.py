"""Command-line entry point: synth, train, eval, render, gradcheck.

Exit codes: 0 success, 1 precondition failure (bad config, missing files,
checkpoint mismatch), 2 numeric failure (non-finite values, undefined
correlation, failed gradient check).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import synthdata
from .config import ConfigError, RunConfig, load_config, with_seed
from .diffcore import NonFiniteError, checkpoint, no_grad
from .evalkit import UndefinedCorrelationError, format_report
from .fem import EVAL
from .gradsuite import run_audit
from .model import NonFiniteLossError, SkillModel
from .sgm import hard_assignment
from .training import Predictor, VideoBatcher, cross_validate, train

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERIC = 0, 1, 2

# group colors in index order; the first three are pure red, green, blue
PALETTE = np.array([
    (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0),
    (255, 0, 255), (0, 255, 255), (255, 128, 0), (128, 0, 255),
], dtype=np.uint8)


class PreconditionError(RuntimeError):
    pass


def _say(out, text: str) -> None:
    out = sys.stdout if out is None else out
    out.write(text if text.endswith("\n") else text + "\n")


# -- commands -------------------------------------------------------------------

def cmd_synth(config: RunConfig, out_dir, out=None) -> int:
    sec = config.synth
    if sec.n_users < 2:
        raise PreconditionError("synth needs n_users >= 2 (leave-one-user-out is impossible otherwise)")
    if sec.trials_per_user < 2:
        raise PreconditionError("synth needs trials_per_user >= 2")
    min_frames = config.model.T * config.model.snippet_len
    if sec.synth.frame_count < min_frames:
        raise PreconditionError(f"frame_count {sec.synth.frame_count} < T*snippet_len = {min_frames}")
    episodes, names = synthdata.generate_dataset(sec.synth, sec.n_users, sec.trials_per_user)
    synthdata.write_dataset(episodes, names, out_dir)
    _say(out, f"episodes={len(episodes)}")
    return EXIT_OK


def _load_episodes(data_dir):
    root = Path(data_dir)
    if not (root / "manifest.txt").is_file():
        raise PreconditionError(f"no dataset at {root} (manifest.txt missing)")
    episodes, _ = synthdata.load_dataset(root)
    if not episodes:
        raise PreconditionError(f"dataset at {root} is empty")
    return episodes


def cmd_train(config: RunConfig, data_dir, checkpoint_out, out=None) -> int:
    episodes = _load_episodes(data_dir)
    seed = config.data.seed
    model = SkillModel(config.model, seed=seed)
    log_path = Path(str(checkpoint_out) + ".log")
    lines = []

    def on_epoch(entry):
        lines.append(entry.line())
        _say(out, entry.line())

    try:
        train(model, episodes, config.sgd, config.weights, seed=seed, on_epoch=on_epoch)
    finally:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text("".join(l + "\n" for l in lines))
    checkpoint.save(checkpoint_out, model.state())
    _say(out, f"checkpoint={checkpoint_out}")
    return EXIT_OK


def _model_from_checkpoint(config: RunConfig, path) -> SkillModel:
    if not Path(path).is_file():
        raise PreconditionError(f"checkpoint {path} not found")
    state = checkpoint.load(path)
    model = SkillModel(config.model, seed=config.data.seed)
    try:
        model.load_state(state, strict=True)
    except (KeyError, ValueError) as exc:
        raise PreconditionError(f"checkpoint does not match the configured model: {exc}") from exc
    return model


def cmd_eval(config: RunConfig, checkpoint_path, data_dir, scheme: str | None = None,
             report_out=None, out=None, predictor: Predictor | None = None) -> int:
    """Per-fold training from the checkpoint's parameters, then the fold report.

    ``predictor`` replaces training (a test hook for oracle or constant stubs).
    """
    episodes = _load_episodes(data_dir)
    init_state = None
    if predictor is None:
        init_state = _model_from_checkpoint(config, checkpoint_path).state()
    results = cross_validate(episodes, scheme or config.data.scheme, config.model, config.sgd,
                             config.weights, seed=config.data.seed, init_state=init_state,
                             predictor=predictor)
    report = format_report([(r.corr, r.mae) for r in results])
    if report_out is not None:
        Path(report_out).write_text(report)
    _say(out, report)
    return EXIT_OK


def overlay(frame: np.ndarray, labels: np.ndarray, palette: np.ndarray = PALETTE) -> np.ndarray:
    """RGB image: ``labels`` upsampled by nearest neighbor and blended 50/50 over ``frame``."""
    H, W = frame.shape
    h, w = labels.shape
    rows = (np.arange(H) * h) // H
    cols = (np.arange(W) * w) // W
    big = labels[rows[:, None], cols[None, :]]
    if big.max(initial=0) >= len(palette):
        raise ValueError(f"palette has {len(palette)} colors, labels go up to {big.max()}")
    color = palette[big].astype(np.float64)
    gray = np.repeat(frame.astype(np.float64)[..., None], 3, axis=-1)
    return np.clip(np.rint(0.5 * gray + 0.5 * color), 0, 255).astype(np.uint8)


def write_ppm(path, rgb: np.ndarray) -> None:
    H, W, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{W} {H}\n255\n".encode("ascii") + np.ascontiguousarray(rgb).tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    W, H, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    return np.frombuffer(parts[4], dtype=np.uint8, count=H * W * 3).reshape(H, W, 3)


def cmd_render(config: RunConfig, checkpoint_path, episode_dir, out_dir, out=None) -> int:
    model = _model_from_checkpoint(config, checkpoint_path)
    if model.codebook is None:
        raise PreconditionError("render needs the visa variant (the pooled baseline has no groups)")
    if not (Path(episode_dir) / "meta.txt").is_file():
        raise PreconditionError(f"no episode at {episode_dir}")
    ep = synthdata.read_episode(episode_dir)
    batcher = VideoBatcher([ep], config.model)
    plan = batcher.plan(0, EVAL)
    x = batcher.snippets(0, plan)
    with no_grad():
        labels = hard_assignment(model(x).P)
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    mid = (plan.snippet_len - 1) // 2
    for t, start in enumerate(plan.starts):
        write_ppm(target / f"t{t:03d}.ppm", overlay(ep.frames[start + mid], labels[t]))
    _say(out, f"images={len(plan.starts)} dir={target}")
    return EXIT_OK


def cmd_gradcheck(seed: int = 0, out=None) -> int:
    result = run_audit(seed)
    _say(out, result.report())
    return EXIT_OK if result.passed else EXIT_NUMERIC


# -- argument handling ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="visa-skill", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, out=False, ckpt=False, scheme=False):
        p.add_argument("--config", help="run configuration file (section.key = value lines)")
        p.add_argument("--seed", type=int, help="override data.seed")
        if data:
            p.add_argument("--data", help="dataset (or episode) directory; defaults to data.dataset")
        if out:
            p.add_argument("--out", required=True)
        if ckpt:
            p.add_argument("--checkpoint", required=True)
        if scheme:
            p.add_argument("--scheme", help="loso, louo or kfold:<k>")

    common(sub.add_parser("synth", help="generate a synthetic dataset"), out=True)
    common(sub.add_parser("train", help="train one model, write checkpoint and log"), data=True, out=True)
    p = sub.add_parser("eval", help="cross-validate from a checkpoint's initialization")
    common(p, data=True, ckpt=True, scheme=True)
    p.add_argument("--out", help="also write the report here")
    common(sub.add_parser("render", help="assignment-map overlays for one episode"),
           data=True, out=True, ckpt=True)
    common(sub.add_parser("gradcheck", help="finite-difference audit on a tiny model"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    err = sys.stderr
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = with_seed(config, args.seed)
        data = getattr(args, "data", None) or config.data.dataset
        if args.command in ("train", "eval", "render") and not data:
            raise PreconditionError("no dataset given (--data or data.dataset)")
        if args.command == "synth":
            return cmd_synth(config, args.out)
        if args.command == "train":
            return cmd_train(config, data, args.out)
        if args.command == "eval":
            return cmd_eval(config, args.checkpoint, data, args.scheme, args.out)
        if args.command == "render":
            return cmd_render(config, args.checkpoint, data, args.out)
        return cmd_gradcheck(config.data.seed)
    except NonFiniteLossError as exc:
        _say(err, f"error: {exc}")
        return EXIT_NUMERIC
    except NonFiniteError as exc:
        _say(err, f"error: non-finite values in '{exc.op}': {exc}")
        return EXIT_NUMERIC
    except UndefinedCorrelationError as exc:
        _say(err, f"error: {exc}")
        return EXIT_NUMERIC
    except (ConfigError, PreconditionError, checkpoint.CheckpointError, OSError, KeyError, ValueError) as exc:
        _say(err, f"error: {exc}")
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
