"""COCO-WholeBody skeleton containers and the root-relative motion encoding.

Keypoint layout (133 points): body 0-16, feet 17-22, face 23-90, left hand
91-111, right hand 112-132.  Coordinates live in crop units: (0, 0) is the
top-left corner of a square crop, (1, 1) its bottom-right.  Off-crop joints
may fall outside [0, 1]; values only need to be finite.

The local motion encoding stores every keypoint relative to a part root:
face landmarks relative to the nose, hand keypoints relative to their
wrist, and body keypoints relative to the body root (the shoulder
midpoint by default).  One designated slot keeps the absolute body-root
position, which is what makes the encoding exactly invertible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NUM_KEYPOINTS = 133
MOTION_DIM = 2 * NUM_KEYPOINTS

BODY_INDICES = tuple(range(0, 23))  # 17 body points plus 6 foot points
FACE_INDICES = tuple(range(23, 91))
LEFT_HAND_INDICES = tuple(range(91, 112))
RIGHT_HAND_INDICES = tuple(range(112, 133))

# Mouth block of the 68-landmark face set (local 48-67) in global indexing.
MOUTH_INDICES = tuple(range(71, 91))

NOSE = 0
LEFT_SHOULDER = 5
RIGHT_SHOULDER = 6
LEFT_WRIST = 9
RIGHT_WRIST = 10

DEFAULT_FPS = 25

STD_FLOOR = 1e-6

SKELETON_MAGIC = b"SKEL0001"


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class SkeletonFrame:
    """One pose: per-keypoint (x, y) plus a detector confidence in [0, 1]."""

    coords: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        coords = _as_float_array(self.coords, "coords")
        conf = _as_float_array(self.confidence, "confidence")
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (K, 2), got {coords.shape}")
        if conf.shape != (coords.shape[0],):
            raise ValueError("confidence must have one entry per keypoint")
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidence values must lie in [0, 1]")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "confidence", conf)

    @property
    def num_keypoints(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class SkeletonSequence:
    """Ordered pose frames at a fixed 25 FPS."""

    coords: np.ndarray      # (F, K, 2)
    confidence: np.ndarray  # (F, K)
    fps: int = DEFAULT_FPS

    def __post_init__(self):
        coords = _as_float_array(self.coords, "coords")
        conf = _as_float_array(self.confidence, "confidence")
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ValueError(f"coords must have shape (F, K, 2), got {coords.shape}")
        if coords.shape[0] < 1:
            raise ValueError("sequence needs at least one frame")
        if conf.shape != coords.shape[:2]:
            raise ValueError("confidence must have shape (F, K)")
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidence values must lie in [0, 1]")
        if self.fps != DEFAULT_FPS:
            raise ValueError(f"fps is fixed at {DEFAULT_FPS}, got {self.fps}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "confidence", conf)

    @property
    def num_frames(self) -> int:
        return self.coords.shape[0]

    @property
    def num_keypoints(self) -> int:
        return self.coords.shape[1]

    def frame(self, index: int) -> SkeletonFrame:
        return SkeletonFrame(self.coords[index].copy(), self.confidence[index].copy())

    @classmethod
    def from_frames(cls, frames: Sequence[SkeletonFrame], fps: int = DEFAULT_FPS) -> "SkeletonSequence":
        if not frames:
            raise ValueError("need at least one frame")
        coords = np.stack([f.coords for f in frames])
        conf = np.stack([f.confidence for f in frames])
        return cls(coords, conf, fps)

    def slice(self, start: int, stop: int) -> "SkeletonSequence":
        return SkeletonSequence(self.coords[start:stop].copy(),
                                self.confidence[start:stop].copy(), self.fps)


@dataclass(frozen=True)
class RootMap:
    """Part-root assignment for the local motion encoding.

    ``body_root`` names a pair of body keypoints whose midpoint acts as the
    body root; passing the same index twice roots the body at that keypoint
    directly.  The slot of ``body_root[0]`` stores the absolute body-root
    position in the encoded values.
    """

    face_root: int = NOSE
    left_hand_root: int = LEFT_WRIST
    right_hand_root: int = RIGHT_WRIST
    body_root: tuple[int, int] = (LEFT_SHOULDER, RIGHT_SHOULDER)

    def __post_init__(self):
        object.__setattr__(self, "body_root", tuple(int(i) for i in self.body_root))
        body = set(BODY_INDICES)
        for name in ("face_root", "left_hand_root", "right_hand_root"):
            idx = getattr(self, name)
            if idx not in body:
                raise ValueError(f"{name}={idx} must be a body keypoint index (0-22)")
        if len(self.body_root) != 2:
            raise ValueError("body_root must name exactly two keypoints")
        for idx in self.body_root:
            if idx not in body:
                raise ValueError(f"body_root index {idx} must be a body keypoint index (0-22)")

    @property
    def anchor(self) -> int:
        """Slot that stores the absolute body-root coordinates."""
        return self.body_root[0]

    def root_position(self, coords: np.ndarray) -> np.ndarray:
        """Body-root position for coords of shape (..., K, 2)."""
        a, b = self.body_root
        return 0.5 * (coords[..., a, :] + coords[..., b, :])

    def groups(self) -> dict[str, tuple[int, ...]]:
        return {
            "body": BODY_INDICES,
            "face": FACE_INDICES,
            "left_hand": LEFT_HAND_INDICES,
            "right_hand": RIGHT_HAND_INDICES,
        }


DEFAULT_ROOT_MAP = RootMap()


@dataclass(frozen=True)
class LocalMotionSequence:
    """Root-relative motion values, shape (F, 266)."""

    values: np.ndarray
    root_map: RootMap = DEFAULT_ROOT_MAP

    def __post_init__(self):
        values = _as_float_array(self.values, "values")
        if values.ndim != 2 or values.shape[1] != MOTION_DIM:
            raise ValueError(f"values must have shape (F, {MOTION_DIM}), got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NormalizationStats:
    """Per-dimension corpus mean and standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _as_float_array(self.mean, "mean")
        std = _as_float_array(self.std, "std")
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-D arrays of equal length")
        if np.any(std <= 0):
            raise ValueError("std must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def to_local(seq: SkeletonSequence, roots: RootMap = DEFAULT_ROOT_MAP) -> LocalMotionSequence:
    """Encode a sequence into root-relative offsets.

    Face and hand keypoints are offset from their part roots, body
    keypoints from the body root.  The anchor slot keeps the absolute
    body-root position instead of an offset.
    """
    if seq.num_keypoints != NUM_KEYPOINTS:
        raise ValueError(f"expected {NUM_KEYPOINTS} keypoints, got {seq.num_keypoints}")
    coords = seq.coords
    root = roots.root_position(coords)  # (F, 2)

    local = np.empty_like(coords)
    body = list(BODY_INDICES)
    local[:, body] = coords[:, body] - root[:, None, :]
    local[:, list(FACE_INDICES)] = coords[:, list(FACE_INDICES)] - coords[:, roots.face_root][:, None, :]
    local[:, list(LEFT_HAND_INDICES)] = (
        coords[:, list(LEFT_HAND_INDICES)] - coords[:, roots.left_hand_root][:, None, :]
    )
    local[:, list(RIGHT_HAND_INDICES)] = (
        coords[:, list(RIGHT_HAND_INDICES)] - coords[:, roots.right_hand_root][:, None, :]
    )
    local[:, roots.anchor] = root
    return LocalMotionSequence(local.reshape(seq.num_frames, MOTION_DIM), roots)


def from_local(lm: LocalMotionSequence, roots: RootMap | None = None) -> SkeletonSequence:
    """Exact inverse of :func:`to_local`.

    Generated skeletons carry no detector confidence, so every confidence
    is set to 1.0.
    """
    if roots is None:
        roots = lm.root_map
    elif roots != lm.root_map:
        raise ValueError("root map does not match the one used to encode the sequence")

    frames = lm.num_frames
    vals = lm.values.reshape(frames, NUM_KEYPOINTS, 2)
    a, b = roots.body_root
    root = vals[:, a].copy()

    coords = np.empty_like(vals)
    for idx in BODY_INDICES:
        if idx == a or (idx == b and a != b):
            continue
        coords[:, idx] = root + vals[:, idx]
    if a == b:
        coords[:, a] = root
    else:
        # root is the midpoint of a and b, so a mirrors b's offset.
        coords[:, b] = root + vals[:, b]
        coords[:, a] = root - vals[:, b]

    coords[:, list(FACE_INDICES)] = coords[:, roots.face_root][:, None, :] + vals[:, list(FACE_INDICES)]
    coords[:, list(LEFT_HAND_INDICES)] = (
        coords[:, roots.left_hand_root][:, None, :] + vals[:, list(LEFT_HAND_INDICES)]
    )
    coords[:, list(RIGHT_HAND_INDICES)] = (
        coords[:, roots.right_hand_root][:, None, :] + vals[:, list(RIGHT_HAND_INDICES)]
    )
    return SkeletonSequence(coords, np.ones((frames, NUM_KEYPOINTS)))


def smooth(seq: SkeletonSequence, window: int = 5,
           exclude: Iterable[int] = MOUTH_INDICES) -> SkeletonSequence:
    """Centered moving average over time with edge truncation.

    Excluded keypoints (the mouth by default, which moves sharply during
    speech) are returned bit-identical.  Windows larger than the sequence
    degenerate to the full-sequence mean.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd positive integer, got {window}")
    if window == 1:
        return seq

    frames = seq.num_frames
    half = window // 2
    coords = seq.coords
    csum = np.concatenate([np.zeros((1,) + coords.shape[1:]), np.cumsum(coords, axis=0)], axis=0)
    lo = np.maximum(np.arange(frames) - half, 0)
    hi = np.minimum(np.arange(frames) + half, frames - 1)
    out = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)[:, None, None]

    excl = [i for i in exclude]
    if excl:
        out[:, excl] = coords[:, excl]
    return SkeletonSequence(out, seq.confidence.copy(), seq.fps)


def fit_normalization(corpus: Sequence) -> NormalizationStats:
    """Per-dimension mean and population std over all frames of all sequences."""
    if len(corpus) == 0:
        raise ValueError("cannot fit normalization on an empty corpus")
    arrays = []
    for item in corpus:
        values = item.values if isinstance(item, LocalMotionSequence) else _as_float_array(item, "corpus item")
        if values.ndim != 2:
            raise ValueError("corpus items must be 2-D (frames x dims)")
        arrays.append(values)
    dims = arrays[0].shape[1]
    if any(a.shape[1] != dims for a in arrays):
        raise ValueError("corpus items disagree on dimensionality")
    stacked = np.concatenate(arrays, axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return NormalizationStats(mean, std)


def normalize(lm: LocalMotionSequence, stats: NormalizationStats) -> LocalMotionSequence:
    if lm.values.shape[1] != stats.mean.shape[0]:
        raise ValueError("stats dimensionality does not match the sequence")
    return LocalMotionSequence((lm.values - stats.mean) / stats.std, lm.root_map)


def denormalize(lm: LocalMotionSequence, stats: NormalizationStats) -> LocalMotionSequence:
    if lm.values.shape[1] != stats.mean.shape[0]:
        raise ValueError("stats dimensionality does not match the sequence")
    return LocalMotionSequence(lm.values * stats.std + stats.mean, lm.root_map)


def extract_hand_skeletons(seq: SkeletonSequence) -> SkeletonSequence:
    """Restrict to the 42 hand keypoints (global indices 91-132), order preserved."""
    if seq.num_keypoints != NUM_KEYPOINTS:
        raise ValueError(f"expected {NUM_KEYPOINTS} keypoints, got {seq.num_keypoints}")
    idx = list(LEFT_HAND_INDICES) + list(RIGHT_HAND_INDICES)
    return SkeletonSequence(seq.coords[:, idx].copy(), seq.confidence[:, idx].copy(), seq.fps)


def shoulder_width(frame: SkeletonFrame) -> float:
    """Euclidean distance between the shoulder keypoints."""
    delta = frame.coords[LEFT_SHOULDER] - frame.coords[RIGHT_SHOULDER]
    return float(np.hypot(delta[0], delta[1]))


# ---------------------------------------------------------------------------
# Binary skeleton files: the ingest contract for pose-detector outputs.
#
# File = magic, then one record per clip:
#   u32 id_len | id bytes (utf-8) | u32 fps | u32 frame_count |
#   frame_count * 133 * 3 little-endian f32 (x, y, confidence)
# A sidecar text manifest lists "clip_id<TAB>frame_count" per line.
# ---------------------------------------------------------------------------

def write_skeleton_file(path, records: Iterable[tuple[str, SkeletonSequence]]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(SKELETON_MAGIC)
        for clip_id, seq in records:
            if seq.num_keypoints != NUM_KEYPOINTS:
                raise ValueError(f"clip {clip_id!r}: skeleton files hold {NUM_KEYPOINTS}-keypoint sequences")
            idb = clip_id.encode("utf-8")
            fh.write(struct.pack("<I", len(idb)))
            fh.write(idb)
            fh.write(struct.pack("<II", seq.fps, seq.num_frames))
            data = np.concatenate([seq.coords, seq.confidence[:, :, None]], axis=2)
            fh.write(data.astype("<f4").tobytes())


def read_skeleton_file(path) -> list[tuple[str, SkeletonSequence]]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(SKELETON_MAGIC)] != SKELETON_MAGIC:
        raise ValueError(f"{path}: not a skeleton file (bad magic)")
    pos = len(SKELETON_MAGIC)
    records = []
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise ValueError(f"{path}: truncated record header")
        (id_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        clip_id = raw[pos: pos + id_len].decode("utf-8")
        pos += id_len
        if pos + 8 > len(raw):
            raise ValueError(f"{path}: truncated record header for clip {clip_id!r}")
        fps, frames = struct.unpack_from("<II", raw, pos)
        pos += 8
        count = frames * NUM_KEYPOINTS * 3
        end = pos + count * 4
        if end > len(raw):
            raise ValueError(f"{path}: truncated data for clip {clip_id!r}")
        data = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(frames, NUM_KEYPOINTS, 3)
        pos = end
        records.append((clip_id, SkeletonSequence(
            data[:, :, :2].astype(np.float64),
            np.clip(data[:, :, 2].astype(np.float64), 0.0, 1.0),
            fps,
        )))
    return records


def write_skeleton_manifest(path, entries: Iterable[tuple[str, int]]) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for clip_id, frames in entries:
            fh.write(f"{clip_id}\t{frames}\n")


def read_skeleton_manifest(path) -> list[tuple[str, int]]:
    path = Path(path)
    entries = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{line_no}: expected 'clip_id<TAB>frames'")
        entries.append((parts[0], int(parts[1])))
    return entries
