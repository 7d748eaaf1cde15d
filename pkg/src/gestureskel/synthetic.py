"""Deterministic synthetic speakers for tests and the toy pipeline.

Each toy clip pairs a procedurally laid-out 133-keypoint figure with a
768-dim feature track whose leading dimensions carry the signals that
drive the motion: the left wrist (with its hand) moves vertically with
one signal, every joint sways horizontally with a second, and a constant
per-track code identifies the audio.  All pose variation is therefore
recoverable from the feature rows, which is what makes tiny models able
to overfit these corpora quickly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audio as audio_mod
from .audio import AUDIO_DIM, AudioFeatureSequence
from .skeleton import (
    LEFT_HAND_INDICES,
    LEFT_WRIST,
    MOUTH_INDICES,
    NUM_KEYPOINTS,
    SkeletonSequence,
    write_skeleton_file,
)

# Feature-row layout.  Signal dims are replicated and scaled so that the
# information survives a random projection with high signal-to-noise.
WRIST_SIGNAL_DIMS = slice(0, 16)
SWAY_SIGNAL_DIMS = slice(16, 32)
CODE_DIMS = slice(32, 96)
SIGNAL_GAIN = 2.0
CODE_GAIN = 2.0
WALK_STEP = 0.01

WRIST_AMP = 0.08
SWAY_AMP = 0.01
MOUTH_AMP = 0.01

# Per-joint sway gains, fixed across all clips and speakers.  Strictly
# distinct per joint so that every root-relative motion dimension varies
# over time (no dimension degenerates to a constant).
_SWAY_X = (np.arange(NUM_KEYPOINTS) - 66.0) / 66.0
_SWAY_Y = (np.arange(NUM_KEYPOINTS) + 7.0) / 140.0


@dataclass(frozen=True)
class ToyClip:
    clip_id: str
    speaker: int
    shoulder_width: float
    skeleton: SkeletonSequence
    features: AudioFeatureSequence
    wrist_signal: np.ndarray
    sway_signal: np.ndarray


def signal_track(frames: int, seed: int, components: int = 3) -> np.ndarray:
    """Smooth deterministic signal in [-1, 1]: a mix of seeded sinusoids."""
    rng = np.random.default_rng(seed)
    periods = rng.uniform(8.0, 40.0, size=components)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=components)
    weights = rng.uniform(0.5, 1.0, size=components)
    f = np.arange(frames)
    sig = sum(w * np.sin(2.0 * math.pi * f / p + ph)
              for w, p, ph in zip(weights, periods, phases))
    peak = np.max(np.abs(sig))
    return sig / peak if peak > 0 else sig


def reference_pose(shoulder_width: float = 0.24, center_x: float = 0.5) -> np.ndarray:
    """Plausible standing figure in crop units, shape (133, 2)."""
    w = shoulder_width
    cx = center_x
    pts = np.zeros((NUM_KEYPOINTS, 2))

    # Body (COCO order) and feet.
    pts[0] = (cx, 0.22)
    pts[1] = (cx - 0.015, 0.20)
    pts[2] = (cx + 0.015, 0.20)
    pts[3] = (cx - 0.045, 0.21)
    pts[4] = (cx + 0.045, 0.21)
    pts[5] = (cx - w / 2, 0.33)
    pts[6] = (cx + w / 2, 0.33)
    pts[7] = (cx - w / 2 - 0.05, 0.47)
    pts[8] = (cx + w / 2 + 0.05, 0.47)
    pts[9] = (cx - w / 2 - 0.06, 0.60)
    pts[10] = (cx + w / 2 + 0.06, 0.60)
    pts[11] = (cx - w / 4, 0.64)
    pts[12] = (cx + w / 4, 0.64)
    pts[13] = (cx - w / 4, 0.82)
    pts[14] = (cx + w / 4, 0.82)
    pts[15] = (cx - w / 4, 0.96)
    pts[16] = (cx + w / 4, 0.96)
    for side, ankle in ((0, 15), (1, 16)):
        sign = -1.0 if side == 0 else 1.0
        pts[17 + 3 * side] = pts[ankle] + (sign * 0.020, 0.020)
        pts[18 + 3 * side] = pts[ankle] + (sign * 0.035, 0.018)
        pts[19 + 3 * side] = pts[ankle] + (-sign * 0.010, 0.022)

    # Face: 68 landmarks around the nose.
    fc = np.array([cx, 0.215])
    jaw_t = np.linspace(0.0, math.pi, 17)
    for i, t in enumerate(jaw_t):
        pts[23 + i] = fc + (0.055 * math.cos(math.pi - t), 0.012 + 0.060 * math.sin(t))
    for i in range(5):  # brows
        pts[40 + i] = fc + (-0.040 + 0.012 * i, -0.030)
        pts[45 + i] = fc + (0.040 - 0.012 * (4 - i), -0.030)
    for i in range(4):  # nose bridge
        pts[50 + i] = fc + (0.0, -0.018 + 0.008 * i)
    for i in range(5):  # nostril row
        pts[54 + i] = fc + (-0.010 + 0.005 * i, 0.016)
    for eye, ex in ((0, -0.025), (1, 0.025)):
        for i in range(6):
            ang = 2.0 * math.pi * i / 6
            pts[59 + 6 * eye + i] = fc + (ex + 0.009 * math.cos(ang), -0.012 + 0.005 * math.sin(ang))
    mc = fc + (0.0, 0.055)
    for i in range(12):  # outer lips
        ang = 2.0 * math.pi * i / 12
        pts[71 + i] = mc + (0.018 * math.cos(ang), 0.009 * math.sin(ang))
    for i in range(8):  # inner lips
        ang = 2.0 * math.pi * i / 8
        pts[83 + i] = mc + (0.010 * math.cos(ang), 0.005 * math.sin(ang))

    # Hands: a fan of fingers below each wrist.
    for hand, wrist, sign in ((0, 9, -1.0), (1, 10, 1.0)):
        base = 91 + 21 * hand
        pts[base] = pts[wrist]
        for finger in range(5):
            ang = math.radians(250.0 + 10.0 * finger) if sign < 0 else math.radians(290.0 - 10.0 * finger)
            direction = np.array([math.cos(ang), -math.sin(ang)])
            for joint in range(4):
                pts[base + 1 + 4 * finger + joint] = pts[wrist] + direction * 0.012 * (joint + 1)
    return pts


def _motion(base: np.ndarray, wrist_sig: np.ndarray, sway_sig: np.ndarray,
            wrist_amp: float, sway_amp: float, mouth_amp: float) -> np.ndarray:
    frames = len(wrist_sig)
    coords = np.repeat(base[None], frames, axis=0)
    wrist_group = [LEFT_WRIST, *LEFT_HAND_INDICES]
    coords[:, wrist_group, 1] += wrist_amp * wrist_sig[:, None]
    coords[:, :, 0] += sway_amp * sway_sig[:, None] * _SWAY_X[None, :]
    coords[:, :, 1] += sway_amp * sway_sig[:, None] * _SWAY_Y[None, :]
    coords[:, list(MOUTH_INDICES), 1] += mouth_amp * wrist_sig[:, None]
    return coords


def _track_features(frames: int, track_seed: int, wrist_sig: np.ndarray,
                    sway_sig: np.ndarray) -> np.ndarray:
    walk = audio_mod.synthetic_walk(frames, seed=track_seed + 90001, step=WALK_STEP).values.copy()
    rng = np.random.default_rng(track_seed + 70001)
    code = CODE_GAIN * rng.choice([-1.0, 1.0], size=CODE_DIMS.stop - CODE_DIMS.start)
    walk[:, WRIST_SIGNAL_DIMS] = SIGNAL_GAIN * wrist_sig[:, None]
    walk[:, SWAY_SIGNAL_DIMS] = SIGNAL_GAIN * sway_sig[:, None]
    walk[:, CODE_DIMS] = code[None, :]
    return walk


def make_toy_corpus(n_speakers: int = 1, n_tracks: int = 8, frames: int = 32,
                    seed: int = 0, shoulder_widths: tuple[float, ...] = (0.24,),
                    share_audio: bool = True, wrist_amp: float = WRIST_AMP,
                    sway_amp: float = SWAY_AMP) -> list[ToyClip]:
    """Cross of speakers and audio tracks.

    With share_audio the same track set drives every speaker, so body
    shape cannot be inferred from the features alone; without it every
    clip receives a unique track.
    """
    if len(shoulder_widths) < n_speakers:
        raise ValueError("need one shoulder width per speaker")
    clips = []
    for spk in range(n_speakers):
        base = reference_pose(shoulder_widths[spk])
        for trk in range(n_tracks):
            track_index = trk if share_audio else spk * n_tracks + trk
            track_seed = seed * 100003 + track_index
            wrist_sig = signal_track(frames, track_seed)
            sway_sig = signal_track(frames, track_seed + 50021)
            coords = _motion(base, wrist_sig, sway_sig, wrist_amp, sway_amp, MOUTH_AMP)
            skeleton = SkeletonSequence(coords, np.ones((frames, NUM_KEYPOINTS)))
            features = AudioFeatureSequence(
                _track_features(frames, track_seed, wrist_sig, sway_sig), 25.0)
            clips.append(ToyClip(
                clip_id=f"spk{spk}_trk{track_index}",
                speaker=spk,
                shoulder_width=shoulder_widths[spk],
                skeleton=skeleton,
                features=features,
                wrist_signal=wrist_sig,
                sway_signal=sway_sig,
            ))
    return clips


def write_raw_bundle(out_dir, n_videos: int = 2, shots_per_video: int = 2,
                     shot_frames: int = 250, n_speakers: int = 2,
                     shoulder_widths: tuple[float, ...] = (0.20, 0.30),
                     seed: int = 0, frame_size: tuple[int, int] = (1280, 720),
                     feature_rate: float = 50.0) -> dict:
    """Emit raw curation inputs: per-video skeleton tracks in source pixels,
    per-frame color histograms with hard cuts between shots, and a
    full-video feature file at the extractor rate."""
    out_dir = Path(out_dir)
    skel_dir = out_dir / "skeletons"
    hist_dir = out_dir / "histograms"
    feat_dir = out_dir / "features"
    for d in (skel_dir, hist_dir, feat_dir):
        d.mkdir(parents=True, exist_ok=True)

    width_px, height_px = frame_size
    margin_x = (width_px - height_px) / 2.0
    summary = {"videos": [], "frame_size": frame_size}
    for v in range(n_videos):
        spk = v % n_speakers
        base = reference_pose(shoulder_widths[spk])
        total = shots_per_video * shot_frames
        coords = np.empty((total, NUM_KEYPOINTS, 2))
        wrist_full = np.empty(total)
        sway_full = np.empty(total)
        for s in range(shots_per_video):
            track_seed = seed * 100003 + v * 1009 + s
            wsig = signal_track(shot_frames, track_seed)
            ssig = signal_track(shot_frames, track_seed + 50021)
            seg = _motion(base, wsig, ssig, WRIST_AMP, SWAY_AMP, MOUTH_AMP)
            coords[s * shot_frames:(s + 1) * shot_frames] = seg
            wrist_full[s * shot_frames:(s + 1) * shot_frames] = wsig
            sway_full[s * shot_frames:(s + 1) * shot_frames] = ssig

        pixels = np.empty_like(coords)
        pixels[:, :, 0] = coords[:, :, 0] * height_px + margin_x
        pixels[:, :, 1] = coords[:, :, 1] * height_px
        seq = SkeletonSequence(pixels, np.ones((total, NUM_KEYPOINTS)))
        write_skeleton_file(skel_dir / f"video{v}.skel", [("p0", seq)])

        hists = np.zeros((total, 3, 8))
        bins = np.arange(8)
        for f in range(total):
            shot = f // shot_frames
            for ch in range(3):
                center = (1.5 + 3.0 * shot + ch + 0.3 * math.sin(0.01 * f)) % 8
                weights = np.exp(-0.5 * ((bins - center) / 0.8) ** 2)
                hists[f, ch] = weights / weights.sum()
        np.save(hist_dir / f"video{v}.npy", hists)

        rows = int(round(total / 25.0 * feature_rate))
        row_frames = np.clip((np.arange(rows) + 0.5) / feature_rate * 25.0 - 0.5, 0, total - 1)
        frame_axis = np.arange(total)
        wsig_rows = np.interp(row_frames, frame_axis, wrist_full)
        ssig_rows = np.interp(row_frames, frame_axis, sway_full)
        feats = _track_features(rows, seed * 100003 + v * 1009, wsig_rows, ssig_rows)
        audio_mod.save_features(feat_dir / f"video{v}.feat",
                                AudioFeatureSequence(feats, feature_rate))
        summary["videos"].append({"video": f"video{v}", "frames": total, "speaker": spk})
    return summary
