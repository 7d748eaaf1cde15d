"""Per-frame speech embeddings and their alignment to video frames.

Embeddings arrive as sidecar files produced by an external speech encoder
(768 dims per segment, typically 50 segments per second for 16 kHz audio).
This module only ingests, validates, and resamples them so that one row
lines up with each 25 FPS video frame.

Feature file layout:
  magic "AUDF0001" | u32 rows | u32 cols (= 768) | f32 source_rate |
  rows * cols little-endian f32, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AUDIO_DIM = 768
FEATURE_MAGIC = b"AUDF0001"
TARGET_FPS = 25


@dataclass(frozen=True)
class AudioFeatureSequence:
    values: np.ndarray   # (N, 768)
    source_rate: float   # rows per second of the raw extractor output

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != AUDIO_DIM:
            raise ValueError(f"features must have shape (N, {AUDIO_DIM}), got {values.shape}")
        if values.shape[0] < 1:
            raise ValueError("feature sequence needs at least one row")
        if not np.all(np.isfinite(values)):
            raise ValueError("features contain non-finite values")
        if not (self.source_rate > 0 and np.isfinite(self.source_rate)):
            raise ValueError(f"source_rate must be positive, got {self.source_rate}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "source_rate", float(self.source_rate))

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    @property
    def duration(self) -> float:
        """Covered time span in seconds."""
        return self.num_rows / self.source_rate


@dataclass(frozen=True)
class FeatureReport:
    """Structured validation outcome; never raises."""

    ok: bool
    issues: tuple[str, ...] = ()


def save_features(path, feat: AudioFeatureSequence) -> None:
    path = Path(path)
    rows, cols = feat.values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIf", rows, cols, feat.source_rate))
        fh.write(feat.values.astype("<f4").tobytes())


def load_features(path) -> AudioFeatureSequence:
    path = Path(path)
    raw = path.read_bytes()
    header = len(FEATURE_MAGIC) + 12
    if len(raw) < header or raw[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature file (bad magic or truncated header)")
    rows, cols, rate = struct.unpack_from("<IIf", raw, len(FEATURE_MAGIC))
    if cols != AUDIO_DIM:
        raise ValueError(f"{path}: expected {AUDIO_DIM} feature columns, file declares {cols}")
    expected = header + rows * cols * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: size mismatch (expected {expected} bytes, found {len(raw)})")
    values = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=header)
    values = values.reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: features contain non-finite values")
    return AudioFeatureSequence(values, rate)


def align_to_frames(feat: AudioFeatureSequence, frames: int, fps: int = TARGET_FPS) -> AudioFeatureSequence:
    """Resample so that row f sits at the midpoint of video frame f.

    Source row i is taken to sit at time (i + 0.5) / source_rate; the output
    is the linear interpolation at frame midpoints (f + 0.5) / fps, with
    constant extrapolation beyond the covered span.
    """
    if frames < 1:
        raise ValueError(f"frame count must be >= 1, got {frames}")
    values = feat.values
    n = values.shape[0]
    if n == 1:
        return AudioFeatureSequence(np.repeat(values, frames, axis=0), float(fps))

    src_times = (np.arange(n) + 0.5) / feat.source_rate
    dst_times = (np.arange(frames) + 0.5) / fps
    hi = np.searchsorted(src_times, dst_times, side="right").clip(1, n - 1)
    lo = hi - 1
    w = (dst_times - src_times[lo]) / (src_times[hi] - src_times[lo])
    w = np.clip(w, 0.0, 1.0)[:, None]
    out = (1.0 - w) * values[lo] + w * values[hi]
    return AudioFeatureSequence(out, float(fps))


def validate_features(feat: AudioFeatureSequence, expected_frames: int) -> FeatureReport:
    """Shape, finiteness, and alignment checks as a report, never an exception."""
    issues: list[str] = []
    values = np.asarray(feat.values)
    if values.ndim != 2 or values.shape[1] != AUDIO_DIM:
        issues.append(f"expected shape (F, {AUDIO_DIM}), got {values.shape}")
    else:
        bad = np.argwhere(~np.isfinite(values))
        if len(bad):
            row, col = bad[0]
            issues.append(f"non-finite value at row {row}, column {col}")
        if values.shape[0] != expected_frames:
            issues.append(f"length mismatch: {values.shape[0]} rows for {expected_frames} frames")
    return FeatureReport(ok=not issues, issues=tuple(issues))


def synthetic_walk(frames: int, seed: int = 0, dims: int = AUDIO_DIM,
                   step: float = 0.05, source_rate: float = float(TARGET_FPS)) -> AudioFeatureSequence:
    """Deterministic pseudo-random walk standing in for real speech embeddings."""
    rng = np.random.default_rng(seed)
    steps = rng.normal(scale=step, size=(frames, dims))
    values = np.cumsum(steps, axis=0)
    if dims != AUDIO_DIM:
        full = np.zeros((frames, AUDIO_DIM))
        full[:, :dims] = values
        values = full
    return AudioFeatureSequence(values, source_rate)
