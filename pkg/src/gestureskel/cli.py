"""Command front-end: synth-data, preprocess, filter-clips, train, generate,
render, eval.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Every command is
deterministic under a fixed --seed, writes only under its --out target,
and honours GESTURE_SKEL_THREADS as a worker-thread cap.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("gestureskel")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config_file(path) -> dict:
    """Flat `key = value` text file; values become int/float/bool when they can."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    values: dict = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = _parse_value(value.strip())
    return values


def _parse_value(text: str):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _configure(args) -> None:
    level = logging.DEBUG if getattr(args, "verbose", False) else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("GESTURE_SKEL_THREADS")
    if threads:
        import torch

        torch.set_num_threads(max(1, int(threads)))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    from .synthetic import write_raw_bundle

    summary = write_raw_bundle(args.out, n_videos=args.videos,
                               shot_frames=args.shot_frames,
                               n_speakers=args.speakers, seed=args.seed)
    log.info("wrote raw bundle for %d videos under %s", len(summary["videos"]), args.out)
    return 0


def _rules_from_file(path) -> "FilterRules":
    from .dataset import FilterRules

    if path is None:
        return FilterRules()
    values = parse_config_file(path)
    known = {f.name for f in dataclasses.fields(FilterRules)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown filter rule keys: {', '.join(sorted(unknown))}")
    return FilterRules(**values)


def cmd_preprocess(args) -> int:
    from .dataset import curate

    summary = curate(args.skeletons, args.histograms, args.out,
                     features_dir=args.features, rules=_rules_from_file(args.rules),
                     margin=args.margin, smooth_window=args.smooth_window,
                     shot_threshold=args.shot_threshold,
                     frame_size=tuple(args.frame_size))
    log.info("accepted %d of %d clips", summary["accepted"], summary["candidates"])
    return 0


def cmd_filter_clips(args) -> int:
    from .dataset import ClipManifest, filter_clip, write_manifest
    from .skeleton import read_skeleton_file

    rules = _rules_from_file(args.rules)
    rows = []
    for skel_path in sorted(Path(args.skeletons).glob("*.skel")):
        for clip_id, seq in read_skeleton_file(skel_path):
            verdict = filter_clip(seq, rules)
            rows.append(ClipManifest(
                clip_id=f"{skel_path.stem}_{clip_id}", source_video=skel_path.stem,
                start=0, end=seq.num_frames, fps=seq.fps, verdict=verdict, crop=None,
            ))
    if not rows:
        raise UsageError(f"no .skel files with records under {args.skeletons}")
    write_manifest(args.out, rows)
    log.info("wrote verdicts for %d clips to %s", len(rows), args.out)
    return 0


def _split_config(values: dict):
    from .denoiser import DenoiserConfig
    from .training import TrainConfig

    train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
    model_keys = {f.name for f in dataclasses.fields(DenoiserConfig)}
    unknown = set(values) - train_keys - model_keys
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    train_cfg = TrainConfig(**{k: v for k, v in values.items() if k in train_keys})
    model_cfg = DenoiserConfig(**{k: v for k, v in values.items() if k in model_keys})
    return train_cfg, model_cfg


def cmd_train(args) -> int:
    from .training import Trainer, load_training_clips

    train_cfg, model_cfg = _split_config(parse_config_file(args.config))
    clips = load_training_clips(args.data, use_local=train_cfg.use_local_repr)
    if not clips:
        raise UsageError(f"no accepted clips in manifest {args.data}")
    trainer = Trainer(train_cfg, model_cfg, clips, out_dir=args.out)
    report = trainer.run(resume=args.resume)
    log.info("trained %d steps; final loss %.6f; final checkpoint %s",
             len(report.losses), report.losses[-1] if report.losses else float("nan"),
             report.final_checkpoint)
    return 0


def cmd_generate(args) -> int:
    from .generation import GenerationRequest, export_pose, generate

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    request = GenerationRequest(
        checkpoint=args.ckpt, reference=args.ref, audio=args.audio,
        guidance_scale=args.alpha, seed=args.seed, frames=args.frames,
    )
    seq = generate(request)
    export_pose(seq, out_dir / "generated_full.pose", clip_id="generated")
    if args.hands_only:
        export_pose(seq, out_dir / "generated_hands.pose", clip_id="generated",
                    variant="hands_only")
    log.info("generated %d frames into %s", seq.num_frames, out_dir)
    return 0


def cmd_render(args) -> int:
    from .generation import RenderStyle, import_pose, render, save_frames

    clip_id, seq = import_pose(args.pose)
    frames = render(seq, canvas_size=args.size, style=RenderStyle())
    paths = save_frames(frames, args.out)
    log.info("rendered %d frames of %s into %s", len(paths), clip_id or "sequence", args.out)
    return 0


def cmd_eval(args) -> int:
    from PIL import Image

    from .generation import import_pose
    from .metrics import pjpe, psnr, ssim

    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    lines = []
    pjpe_values, ssim_values, psnr_values = [], [], []

    pred_poses = {p.name: p for p in pred_dir.glob("*.pose")}
    for name in sorted(pred_poses.keys() & {p.name for p in gt_dir.glob("*.pose")}):
        _, pred_seq = import_pose(pred_poses[name])
        _, gt_seq = import_pose(gt_dir / name)
        _, err = pjpe(pred_seq, gt_seq)
        pjpe_values.append(err)
        lines.append(f"{name}\tpjpe\t{err:.6f}")

    pred_images = {p.name: p for p in pred_dir.glob("*.png")}
    for name in sorted(pred_images.keys() & {p.name for p in gt_dir.glob("*.png")}):
        a = np.asarray(Image.open(pred_images[name]), dtype=np.float64) / 255.0
        b = np.asarray(Image.open(gt_dir / name), dtype=np.float64) / 255.0
        s, p = ssim(a, b), psnr(a, b)
        ssim_values.append(s)
        psnr_values.append(p)
        lines.append(f"{name}\tssim\t{s:.6f}\tpsnr\t{p:.4f}")

    if not lines:
        raise UsageError("no overlapping .pose or .png files between --pred and --gt")
    for label, values in (("pjpe", pjpe_values), ("ssim", ssim_values), ("psnr", psnr_values)):
        if values:
            lines.append(f"aggregate\t{label}\t{float(np.mean(values)):.6f}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("wrote report with %d lines to %s", len(lines), args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="gestureskel",
                     description="Audio-synchronized skeleton sequence synthesis")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth-data", help="write a synthetic raw curation bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=2)
    p.add_argument("--shot-frames", type=int, default=250)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("preprocess", help="curate raw sidecars into a training bundle")
    p.add_argument("--skeletons", required=True)
    p.add_argument("--histograms", required=True)
    p.add_argument("--features")
    p.add_argument("--out", required=True)
    p.add_argument("--rules")
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--smooth-window", type=int, default=5)
    p.add_argument("--shot-threshold", type=float, default=0.5)
    p.add_argument("--frame-size", type=int, nargs=2, default=(1280, 720),
                   metavar=("WIDTH", "HEIGHT"))
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("filter-clips", help="run quality filters over skeleton clips")
    p.add_argument("--skeletons", required=True)
    p.add_argument("--histograms")
    p.add_argument("--rules")
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_filter_clips)

    p = sub.add_parser("train", help="train the motion denoiser")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="path to clips.manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--resume")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample a skeleton sequence from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ref", required=True, help="single-frame .skel reference")
    p.add_argument("--audio", required=True, help=".feat audio features")
    p.add_argument("--alpha", type=float, default=2.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int)
    p.add_argument("--hands-only", action="store_true",
                   help="also export the 42-keypoint hand sequence")
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("render", help="rasterize a pose file into image frames")
    p.add_argument("--pose", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="paired metrics between two result directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_eval)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    _configure(args)
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surface as exit code 2
        log.error("%s", exc)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
