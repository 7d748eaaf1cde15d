"""Deterministic clip curation: shot segmentation, quality filters, crops.

All perception outputs (per-frame color histograms, skeleton tracks)
arrive as sidecar files; this module never decodes video.  A curation run
detects hard cuts from histogram distance, partitions shots into 5-15 s
clips, scores each candidate against four skeleton quality rules, crops
accepted speakers to a square region, and emits a tab-separated manifest
alongside the crop-normalized skeleton records.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import AudioFeatureSequence, load_features, save_features
from .skeleton import (
    LEFT_WRIST,
    NUM_KEYPOINTS,
    RIGHT_WRIST,
    SkeletonSequence,
    shoulder_width,
    smooth as smooth_sequence,
    read_skeleton_file,
    write_skeleton_file,
)

log = logging.getLogger(__name__)

UPPER_BODY_KEYPOINTS = (0, 5, 6, 7, 8, 9, 10)

MIN_CLIP_SECONDS = 5
MAX_CLIP_SECONDS = 15


@dataclass(frozen=True)
class FilterRules:
    """Thresholds for the four clip quality rules; all configurable."""

    upper_body_conf: float = 0.5
    upper_body_frame_frac: float = 0.95
    frontal_width_ratio: float = 0.15
    frontal_nose_conf: float = 0.5
    min_height_frac: float = 0.30
    min_wrist_motion: float = 1e-3


@dataclass(frozen=True)
class RuleVerdict:
    passed: bool
    value: float
    threshold: float


@dataclass(frozen=True)
class ClipVerdict:
    rules: dict[str, RuleVerdict]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rules.values())


@dataclass(frozen=True)
class CropTransform:
    """Square source-pixel crop mapped onto the unit square."""

    origin: tuple[float, float]
    side: float
    target: int = 512

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("crop side must be positive")

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return (coords - np.asarray(self.origin)) / self.side

    def invert(self, coords: np.ndarray) -> np.ndarray:
        return coords * self.side + np.asarray(self.origin)


@dataclass(frozen=True)
class ClipManifest:
    clip_id: str
    source_video: str
    start: int
    end: int
    fps: int
    verdict: ClipVerdict
    crop: CropTransform | None

    @property
    def passed(self) -> bool:
        return self.verdict.passed

    @property
    def num_frames(self) -> int:
        return self.end - self.start


# ---------------------------------------------------------------------------
# Shot boundaries and clip ranges
# ---------------------------------------------------------------------------

def _normalize_histograms(hists: np.ndarray) -> np.ndarray:
    hists = np.asarray(hists, dtype=np.float64)
    if hists.ndim == 2 and hists.shape[1] == 24:
        hists = hists.reshape(-1, 3, 8)
    if hists.ndim != 3 or hists.shape[1:] != (3, 8):
        raise ValueError(f"expected per-frame 3x8 histograms, got shape {hists.shape}")
    sums = hists.sum(axis=2, keepdims=True)
    sums[sums == 0] = 1.0
    return hists / sums


def detect_shots(histograms: np.ndarray, threshold: float = 0.5) -> list[int]:
    """Indices f where the chi-square distance between frames f-1 and f
    exceeds the threshold; each index starts a new shot."""
    hists = _normalize_histograms(histograms)
    if hists.shape[0] < 2:
        raise ValueError("need at least two frames to detect shots")
    a, b = hists[:-1], hists[1:]
    denom = a + b
    denom[denom == 0] = 1.0
    dist = ((a - b) ** 2 / denom).sum(axis=2).mean(axis=1)
    return [int(i) + 1 for i in np.flatnonzero(dist > threshold)]


def segment_clips(cuts: list[int], total_frames: int, fps: int = 25) -> list[tuple[int, int]]:
    """Greedy partition of each shot into clips of 5-15 s; short remainders drop."""
    min_frames = MIN_CLIP_SECONDS * fps
    max_frames = MAX_CLIP_SECONDS * fps
    bounds = [0] + sorted(set(int(c) for c in cuts if 0 < c < total_frames)) + [total_frames]
    ranges = []
    for shot_start, shot_end in zip(bounds[:-1], bounds[1:]):
        pos = shot_start
        while shot_end - pos >= min_frames:
            end = min(pos + max_frames, shot_end)
            ranges.append((pos, end))
            pos = end
    return ranges


# ---------------------------------------------------------------------------
# Quality filters
# ---------------------------------------------------------------------------

def bbox_track(seq: SkeletonSequence, conf_floor: float = 0.1) -> np.ndarray:
    """Per-frame keypoint bounding boxes (x0, y0, x1, y1); low-confidence
    keypoints are ignored when any confident one exists."""
    boxes = np.empty((seq.num_frames, 4))
    for f in range(seq.num_frames):
        mask = seq.confidence[f] >= conf_floor
        pts = seq.coords[f, mask] if np.any(mask) else seq.coords[f]
        boxes[f] = (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())
    return boxes


def filter_clip(seq: SkeletonSequence, rules: FilterRules = FilterRules()) -> ClipVerdict:
    """Evaluate the four quality rules on a crop-normalized sequence."""
    conf = seq.confidence
    coords = seq.coords

    upper = conf[:, list(UPPER_BODY_KEYPOINTS)].mean(axis=1)
    frac_ok = float(np.mean(upper >= rules.upper_body_conf))
    upper_verdict = RuleVerdict(frac_ok >= rules.upper_body_frame_frac, frac_ok,
                                rules.upper_body_frame_frac)

    boxes = bbox_track(seq)
    heights = boxes[:, 3] - boxes[:, 1]
    widths = np.array([shoulder_width(seq.frame(f)) for f in range(seq.num_frames)])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(heights > 0, widths / heights, 0.0)
    ratio = float(np.median(ratios))
    nose_conf = float(np.median(conf[:, 0]))
    frontal_ok = ratio >= rules.frontal_width_ratio and nose_conf >= rules.frontal_nose_conf
    frontal_verdict = RuleVerdict(frontal_ok, ratio, rules.frontal_width_ratio)

    height = float(np.median(heights))
    size_verdict = RuleVerdict(height >= rules.min_height_frac, height, rules.min_height_frac)

    if seq.num_frames > 1:
        wrists = coords[:, [LEFT_WRIST, RIGHT_WRIST]]
        steps = np.linalg.norm(np.diff(wrists, axis=0), axis=2)
        motion = float(steps.mean())
    else:
        motion = 0.0
    motion_verdict = RuleVerdict(motion >= rules.min_wrist_motion, motion,
                                 rules.min_wrist_motion)

    return ClipVerdict(rules={
        "upper_body": upper_verdict,
        "frontal": frontal_verdict,
        "figure_size": size_verdict,
        "motion": motion_verdict,
    })


# ---------------------------------------------------------------------------
# Crop geometry
# ---------------------------------------------------------------------------

def crop_and_resize(bboxes: np.ndarray, margin: float,
                    frame_size: tuple[int, int], target: int = 512) -> CropTransform:
    """Square crop covering the union box expanded by the margin fraction,
    clamped to the frame bounds."""
    boxes = np.asarray(bboxes, dtype=np.float64)
    if boxes.ndim == 1:
        boxes = boxes[None]
    if boxes.size == 0:
        raise ValueError("empty bounding-box track")
    x0, y0 = boxes[:, 0].min(), boxes[:, 1].min()
    x1, y1 = boxes[:, 2].max(), boxes[:, 3].max()
    if x1 <= x0 and y1 <= y0:
        raise ValueError("degenerate bounding box (zero extent)")
    width_px, height_px = frame_size
    side = max(x1 - x0, y1 - y0) * (1.0 + 2.0 * margin)
    side = min(side, float(min(width_px, height_px)))
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    ox = float(np.clip(cx - side / 2.0, 0.0, width_px - side))
    oy = float(np.clip(cy - side / 2.0, 0.0, height_px - side))
    return CropTransform(origin=(ox, oy), side=float(side), target=target)


def transform_keypoints(seq: SkeletonSequence, crop: CropTransform) -> SkeletonSequence:
    return SkeletonSequence(crop.apply(seq.coords), seq.confidence.copy(), seq.fps)


# ---------------------------------------------------------------------------
# Manifest serialization (tab-separated, one line per candidate clip)
# ---------------------------------------------------------------------------

def _verdict_to_text(verdict: ClipVerdict) -> str:
    parts = [f"{name}:{'pass' if r.passed else 'fail'}:{r.value:.6g}:{r.threshold:.6g}"
             for name, r in verdict.rules.items()]
    return ";".join(parts)


def _verdict_from_text(text: str) -> ClipVerdict:
    rules = {}
    for part in text.split(";"):
        name, flag, value, threshold = part.split(":")
        rules[name] = RuleVerdict(flag == "pass", float(value), float(threshold))
    return ClipVerdict(rules=rules)


def write_manifest(path, rows: list[ClipManifest]) -> None:
    path = Path(path)
    lines = []
    for row in rows:
        crop = "-" if row.crop is None else (
            f"{row.crop.origin[0]:.6g},{row.crop.origin[1]:.6g},{row.crop.side:.6g},{row.crop.target}"
        )
        lines.append("\t".join([
            row.clip_id, row.source_video, str(row.start), str(row.end), str(row.fps),
            "PASS" if row.passed else "FAIL", _verdict_to_text(row.verdict), crop,
        ]))
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_manifest(path) -> list[ClipManifest]:
    path = Path(path)
    rows = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 8:
            raise ValueError(f"{path}:{line_no}: expected 8 tab-separated fields")
        clip_id, video, start, end, fps, _, verdict_text, crop_text = fields
        crop = None
        if crop_text != "-":
            ox, oy, side, target = crop_text.split(",")
            crop = CropTransform(origin=(float(ox), float(oy)), side=float(side),
                                 target=int(target))
        rows.append(ClipManifest(
            clip_id=clip_id, source_video=video, start=int(start), end=int(end),
            fps=int(fps), verdict=_verdict_from_text(verdict_text), crop=crop,
        ))
    return rows


# ---------------------------------------------------------------------------
# Full curation pass over raw sidecar directories
# ---------------------------------------------------------------------------

def curate(skeleton_dir, histogram_dir, out_dir, features_dir=None,
           rules: FilterRules = FilterRules(), margin: float = 0.2,
           smooth_window: int = 5, shot_threshold: float = 0.5,
           frame_size: tuple[int, int] = (1280, 720), fps: int = 25) -> dict:
    """Run the curation pipeline and emit a training bundle.

    Inputs per source video `<vid>`: `<vid>.skel` (one record per tracked
    person, source-pixel coordinates) and `<vid>.npy` histograms; features
    (optional) as `<vid>.feat` at the extractor rate.  Outputs under
    out_dir: clips.skel, clips.manifest, and features/<clip_id>.feat.
    """
    skeleton_dir, histogram_dir, out_dir = Path(skeleton_dir), Path(histogram_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feature_out = out_dir / "features"

    manifest_rows: list[ClipManifest] = []
    accepted: list[tuple[str, SkeletonSequence]] = []
    height_px = float(frame_size[1])

    for skel_path in sorted(skeleton_dir.glob("*.skel")):
        video_id = skel_path.stem
        hist_path = histogram_dir / f"{video_id}.npy"
        if not hist_path.exists():
            raise FileNotFoundError(f"missing histogram sidecar for {video_id}: {hist_path}")
        histograms = np.load(hist_path)
        people = read_skeleton_file(skel_path)
        total_frames = min(len(histograms), *(seq.num_frames for _, seq in people))
        cuts = detect_shots(histograms[:total_frames], shot_threshold)
        ranges = segment_clips(cuts, total_frames, fps)
        log.info("%s: %d cuts, %d candidate clips", video_id, len(cuts), len(ranges))

        features = None
        if features_dir is not None:
            feat_path = Path(features_dir) / f"{video_id}.feat"
            if feat_path.exists():
                features = load_features(feat_path)

        for start, end in ranges:
            for person_id, track in people:
                clip_id = f"{video_id}_{person_id}_{start:06d}_{end:06d}"
                sub = track.slice(start, end)
                scaled = SkeletonSequence(sub.coords / height_px, sub.confidence, sub.fps)
                verdict = filter_clip(scaled, rules)
                crop = None
                if verdict.passed:
                    crop = crop_and_resize(bbox_track(sub), margin, frame_size)
                    clip_seq = smooth_sequence(transform_keypoints(sub, crop), smooth_window)
                    accepted.append((clip_id, clip_seq))
                    if features is not None:
                        rate = features.source_rate
                        lo = int(math.floor(start / fps * rate))
                        hi = max(lo + 1, int(math.ceil(end / fps * rate)))
                        rows = features.values[lo: min(hi, features.num_rows)]
                        feature_out.mkdir(parents=True, exist_ok=True)
                        save_features(feature_out / f"{clip_id}.feat",
                                      AudioFeatureSequence(rows, rate))
                manifest_rows.append(ClipManifest(
                    clip_id=clip_id, source_video=video_id, start=start, end=end,
                    fps=fps, verdict=verdict, crop=crop,
                ))

    write_skeleton_file(out_dir / "clips.skel", accepted)
    write_manifest(out_dir / "clips.manifest", manifest_rows)
    summary = {
        "candidates": len(manifest_rows),
        "accepted": len(accepted),
        "manifest": str(out_dir / "clips.manifest"),
    }
    log.info("curation done: %(accepted)d/%(candidates)d clips accepted", summary)
    return summary
