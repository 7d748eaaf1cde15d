"""End-to-end inference and export.

generate() turns a checkpoint, a single reference skeleton, and an audio
feature track into a full skeleton sequence: the reference is encoded and
normalized with the checkpoint statistics, the sampler runs in normalized
motion space, and the result is decoded back to crop coordinates with all
confidences at 1.  Pose sequences are exported as line-based text files
for downstream video generators, and render() rasterizes them into the
usual limb-map conditioning images.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from .audio import AudioFeatureSequence, align_to_frames, load_features
from .denoiser import load_checkpoint
from .diffusion import GuidanceConfig, make_schedule, sample
from .skeleton import (
    DEFAULT_ROOT_MAP,
    LEFT_HAND_INDICES,
    NUM_KEYPOINTS,
    RIGHT_HAND_INDICES,
    LocalMotionSequence,
    SkeletonFrame,
    SkeletonSequence,
    extract_hand_skeletons,
    from_local,
    read_skeleton_file,
    to_local,
)

log = logging.getLogger(__name__)

POSE_HEADER = "pose-sequence v1"
POSE_VARIANTS = ("full_body", "hands_only")

# Limb table in COCO-WholeBody indexing; face landmarks are drawn as dots.
BODY_EDGES = (
    (0, 1), (0, 2), (1, 3), (2, 4),
    (5, 6), (5, 7), (7, 9), (6, 8), (8, 10),
    (5, 11), (6, 12), (11, 12),
    (11, 13), (13, 15), (12, 14), (14, 16),
    (15, 17), (15, 18), (15, 19), (16, 20), (16, 21), (16, 22),
)

def _hand_edges(root: int) -> tuple[tuple[int, int], ...]:
    edges = []
    for finger in range(5):
        chain = [root] + [root + 1 + 4 * finger + j for j in range(4)]
        edges.extend(zip(chain[:-1], chain[1:]))
    return tuple(edges)

SKELETON_EDGES = BODY_EDGES + _hand_edges(LEFT_HAND_INDICES[0]) + _hand_edges(RIGHT_HAND_INDICES[0])

DEFAULT_PALETTE = (
    (255, 85, 0), (255, 170, 0), (255, 255, 0), (170, 255, 0), (85, 255, 0),
    (0, 255, 85), (0, 255, 170), (0, 255, 255), (0, 170, 255), (0, 85, 255),
    (85, 0, 255), (170, 0, 255), (255, 0, 255), (255, 0, 170), (255, 0, 85),
)


@dataclass(frozen=True)
class RenderStyle:
    line_width: int = 4
    point_radius: int = 2
    confidence_threshold: float = 0.3
    palette: tuple = DEFAULT_PALETTE
    background: tuple[int, int, int] = (0, 0, 0)


@dataclass
class GenerationRequest:
    checkpoint: str | Path
    reference: SkeletonFrame | str | Path
    audio: AudioFeatureSequence | str | Path
    guidance_scale: float = 2.5
    seed: int = 0
    frames: int | None = None
    clip_range: float | None = None
    use_ema: bool = False


def _resolve_reference(ref) -> SkeletonFrame:
    if isinstance(ref, SkeletonFrame):
        return ref
    records = read_skeleton_file(ref)
    if not records:
        raise ValueError(f"{ref}: reference skeleton file holds no record")
    seq = records[0][1]
    return seq.frame(0)


def _resolve_audio(audio) -> AudioFeatureSequence:
    if isinstance(audio, AudioFeatureSequence):
        return audio
    return load_features(audio)


def generate(req: GenerationRequest) -> SkeletonSequence:
    """Sample a skeleton sequence; deterministic for a fixed request and seed."""
    model, meta = load_checkpoint(req.checkpoint, use_ema=req.use_ema)
    if meta.stats is None or meta.schedule is None:
        raise ValueError("checkpoint is missing normalization stats or a schedule descriptor")
    root_map = meta.root_map or DEFAULT_ROOT_MAP
    sched = make_schedule(meta.schedule["kind"], meta.schedule["steps"])

    reference = _resolve_reference(req.reference)
    if reference.num_keypoints != NUM_KEYPOINTS:
        raise ValueError(f"reference must have {NUM_KEYPOINTS} keypoints")
    audio = _resolve_audio(req.audio)
    frames = req.frames
    if frames is None:
        frames = int(25 * audio.duration)
    if frames < 1:
        raise ValueError("derived frame count is empty; supply frames explicitly")
    if frames > model.config.max_frames:
        raise ValueError(f"{frames} frames exceed the model capacity of {model.config.max_frames}")

    ref_seq = SkeletonSequence(reference.coords[None], reference.confidence[None])
    if meta.use_local_repr:
        ref_values = to_local(ref_seq, root_map).values
    else:
        ref_values = ref_seq.coords.reshape(1, -1)
    ref_row = torch.from_numpy((ref_values - meta.stats.mean) / meta.stats.std).float()

    aligned = align_to_frames(audio, frames).values
    audio_tensor = torch.from_numpy(np.ascontiguousarray(aligned)).float()

    out = sample(model, ref_row, audio_tensor, sched,
                 GuidanceConfig(req.guidance_scale), seed=req.seed,
                 clip_range=req.clip_range)
    values = out.numpy().astype(np.float64) * meta.stats.std + meta.stats.mean
    if meta.use_local_repr:
        return from_local(LocalMotionSequence(values, root_map))
    coords = values.reshape(frames, NUM_KEYPOINTS, 2)
    return SkeletonSequence(coords, np.ones((frames, NUM_KEYPOINTS)))


# ---------------------------------------------------------------------------
# Pose text files
# ---------------------------------------------------------------------------

def export_pose(seq: SkeletonSequence, path, clip_id: str = "generated",
                variant: str = "full_body") -> None:
    """Write per-frame keypoint records as text; hands_only keeps indices 91-132."""
    if variant not in POSE_VARIANTS:
        raise ValueError(f"variant must be one of {POSE_VARIANTS}")
    if variant == "hands_only":
        seq = extract_hand_skeletons(seq)
    path = Path(path)
    lines = [POSE_HEADER,
             f"id {clip_id}",
             f"fps {seq.fps}",
             f"frames {seq.num_frames}",
             f"keypoints {seq.num_keypoints}"]
    for f in range(seq.num_frames):
        lines.append(f"frame {f}")
        for k in range(seq.num_keypoints):
            x, y = seq.coords[f, k]
            lines.append(f"{x:.8f} {y:.8f} {seq.confidence[f, k]:.8f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def import_pose(path) -> tuple[str, SkeletonSequence]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != POSE_HEADER:
        raise ValueError(f"{path}: not a pose file")
    header: dict[str, str] = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("frame "):
        key, _, value = lines[pos].partition(" ")
        header[key] = value
        pos += 1
    clip_id = header.get("id", "")
    fps = int(header["fps"])
    frames = int(header["frames"])
    keypoints = int(header["keypoints"])
    coords = np.zeros((frames, keypoints, 2))
    conf = np.zeros((frames, keypoints))
    for f in range(frames):
        if lines[pos] != f"frame {f}":
            raise ValueError(f"{path}: expected 'frame {f}' at line {pos + 1}")
        pos += 1
        for k in range(keypoints):
            x, y, c = lines[pos].split()
            coords[f, k] = (float(x), float(y))
            conf[f, k] = float(c)
            pos += 1
    return clip_id, SkeletonSequence(coords, conf, fps)


# ---------------------------------------------------------------------------
# Pose-map rendering
# ---------------------------------------------------------------------------

def render(seq: SkeletonSequence, canvas_size: int = 512,
           style: RenderStyle = RenderStyle()) -> list[np.ndarray]:
    """Rasterize each frame into an RGB limb map, deterministic per input.

    Keypoints under the confidence threshold are omitted, as are limbs
    with an omitted endpoint.
    """
    edges = [e for e in SKELETON_EDGES
             if e[0] < seq.num_keypoints and e[1] < seq.num_keypoints]
    frames = []
    for f in range(seq.num_frames):
        img = Image.new("RGB", (canvas_size, canvas_size), style.background)
        draw = ImageDraw.Draw(img)
        pts = seq.coords[f] * canvas_size
        visible = seq.confidence[f] >= style.confidence_threshold
        for i, (a, b) in enumerate(edges):
            if visible[a] and visible[b]:
                color = style.palette[i % len(style.palette)]
                draw.line([tuple(pts[a]), tuple(pts[b])], fill=color, width=style.line_width)
        r = style.point_radius
        for k in np.flatnonzero(visible):
            x, y = pts[k]
            color = style.palette[k % len(style.palette)]
            draw.ellipse([x - r, y - r, x + r, y + r], fill=color)
        frames.append(np.asarray(img))
    return frames


def save_frames(frames, out_dir, prefix: str = "frame") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = out_dir / f"{prefix}_{i:06d}.png"
        Image.fromarray(frame).save(path)
        paths.append(path)
    return paths
