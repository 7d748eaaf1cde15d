"""Windowed training loop for the motion denoiser.

Clips are normalized with corpus statistics, cut into fixed-length
windows, and iterated in shuffled epochs.  Each optimization step samples
a diffusion step and noise per example, drops the audio condition with a
fixed probability (the null condition takes its place at token assembly),
and applies one Adam update on the clean-signal regression loss.  All
randomness flows through one seeded generator whose state is carried in
checkpoints, so resumed runs continue bit-for-bit.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .audio import align_to_frames
from .denoiser import DenoiserConfig, GestureDenoiser, build_denoiser, load_checkpoint, save_checkpoint
from .diffusion import make_schedule, q_sample, x0_loss
from .skeleton import (
    DEFAULT_ROOT_MAP,
    NormalizationStats,
    RootMap,
    SkeletonSequence,
    fit_normalization,
    read_skeleton_file,
    to_local,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    # Paper-scale defaults; override for desk-scale runs.
    learning_rate: float = 5e-5
    batch_size: int = 128
    total_steps: int = 2_000_000
    dropout_prob: float = 0.10
    window_frames: int = 80
    window_stride: int | None = None
    seed: int = 0
    schedule_kind: str = "cosine"
    schedule_steps: int = 1000
    checkpoint_every: int = 10_000
    use_local_repr: bool = True
    ema_decay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        for name in ("batch_size", "total_steps", "window_frames", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.window_stride is not None and self.window_stride < 1:
            raise ValueError("window_stride must be >= 1")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")


@dataclass(frozen=True)
class TrainClip:
    clip_id: str
    motion: np.ndarray  # (L, D)
    audio: np.ndarray   # (L, 768)

    def __post_init__(self):
        motion = np.asarray(self.motion, dtype=np.float64)
        audio = np.asarray(self.audio, dtype=np.float64)
        if motion.ndim != 2 or audio.ndim != 2 or motion.shape[0] != audio.shape[0]:
            raise ValueError(f"clip {self.clip_id!r}: motion and audio must share the frame axis")
        if not (np.all(np.isfinite(motion)) and np.all(np.isfinite(audio))):
            raise ValueError(f"clip {self.clip_id!r}: non-finite values")
        object.__setattr__(self, "motion", motion)
        object.__setattr__(self, "audio", audio)

    @property
    def num_frames(self) -> int:
        return self.motion.shape[0]


@dataclass(frozen=True)
class TrainingExample:
    x0: np.ndarray         # (F, D)
    audio: np.ndarray      # (F, 768)
    reference: np.ndarray  # (1, D), first frame of the window
    clip_id: str
    offset: int


@dataclass
class TrainReport:
    losses: list[float]
    checkpoints: list[Path]
    final_checkpoint: Path | None


def build_clip(clip_id: str, skeleton: SkeletonSequence, features,
               root_map: RootMap = DEFAULT_ROOT_MAP, use_local: bool = True) -> TrainClip:
    """Pair a skeleton clip with frame-aligned audio features."""
    frames = skeleton.num_frames
    if use_local:
        motion = to_local(skeleton, root_map).values
    else:
        motion = skeleton.coords.reshape(frames, -1)
    audio = align_to_frames(features, frames).values
    return TrainClip(clip_id, motion, audio)


def load_training_clips(manifest_path, use_local: bool = True,
                        root_map: RootMap = DEFAULT_ROOT_MAP) -> list[TrainClip]:
    """Load a curated bundle: manifest + clips.skel + features/<clip>.feat.

    Only clips whose filter verdict passed are returned.
    """
    from .audio import load_features
    from .dataset import read_manifest

    manifest_path = Path(manifest_path)
    bundle_dir = manifest_path.parent
    records = dict(read_skeleton_file(bundle_dir / "clips.skel"))
    clips = []
    for row in read_manifest(manifest_path):
        if not row.passed:
            continue
        if row.clip_id not in records:
            raise ValueError(f"manifest clip {row.clip_id!r} missing from clips.skel")
        feat_path = bundle_dir / "features" / f"{row.clip_id}.feat"
        features = load_features(feat_path)
        clips.append(build_clip(row.clip_id, records[row.clip_id], features,
                                root_map=root_map, use_local=use_local))
    return clips


def make_windows(clip: TrainClip, frames: int, stride: int | None = None) -> list[TrainingExample]:
    """Fixed-length windows at the given stride; short clips yield nothing.

    The reference row is the first frame of each window, mirroring
    inference where the reference comes from a single still image.
    """
    if frames < 1:
        raise ValueError("window length must be >= 1")
    stride = frames if stride is None else stride
    if clip.num_frames < frames:
        log.debug("clip %s shorter than window (%d < %d), skipped", clip.clip_id,
                  clip.num_frames, frames)
        return []
    windows = []
    for offset in range(0, clip.num_frames - frames + 1, stride):
        x0 = clip.motion[offset: offset + frames]
        windows.append(TrainingExample(
            x0=x0,
            audio=clip.audio[offset: offset + frames],
            reference=x0[:1].copy(),
            clip_id=clip.clip_id,
            offset=offset,
        ))
    return windows


def drop_condition(batch, p: float, generator: torch.Generator) -> torch.Tensor:
    """Per-example null flags drawn independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("dropout probability must lie in [0, 1]")
    n = batch if isinstance(batch, int) else len(batch)
    return torch.rand(n, generator=generator) < p


class Trainer:
    """Owns the model, optimizer, and RNG stream for one training run."""

    def __init__(self, config: TrainConfig, model_config: DenoiserConfig,
                 clips: list[TrainClip], out_dir=None):
        if not clips:
            raise ValueError("training dataset is empty")
        if config.window_frames > model_config.max_frames:
            raise ValueError("window_frames exceeds the model's max_frames")
        self.config = config
        self.model_config = model_config
        self.out_dir = None if out_dir is None else Path(out_dir)

        self.stats = fit_normalization([c.motion for c in clips])
        stride = config.window_stride or config.window_frames
        windows: list[TrainingExample] = []
        for clip in clips:
            normed = TrainClip(clip.clip_id, (clip.motion - self.stats.mean) / self.stats.std,
                               clip.audio)
            windows.extend(make_windows(normed, config.window_frames, stride))
        if not windows:
            raise ValueError("no clip is long enough for the requested window length")
        self.windows = windows
        self._x0 = torch.from_numpy(np.stack([w.x0 for w in windows])).float()
        self._audio = torch.from_numpy(np.stack([w.audio for w in windows])).float()
        self._ref = torch.from_numpy(np.stack([w.reference for w in windows])).float()

        self.schedule = make_schedule(config.schedule_kind, config.schedule_steps)
        self.model = build_denoiser(model_config, config.seed)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate)
        self.generator = torch.Generator().manual_seed(config.seed)
        self.step_index = 0
        self.losses: list[float] = []
        self._index_queue: list[int] = []
        self.ema: dict[str, torch.Tensor] | None = None
        if config.ema_decay > 0:
            self.ema = {k: v.detach().clone() for k, v in self.model.state_dict().items()}

    # -- batching ----------------------------------------------------------

    def _next_indices(self) -> torch.Tensor:
        n = len(self.windows)
        while len(self._index_queue) < self.config.batch_size:
            perm = torch.randperm(n, generator=self.generator).tolist()
            self._index_queue.extend(perm)
        take = self._index_queue[: self.config.batch_size]
        del self._index_queue[: self.config.batch_size]
        return torch.tensor(take, dtype=torch.long)

    # -- optimization ------------------------------------------------------

    def train_step(self) -> float:
        cfg = self.config
        idx = self._next_indices()
        x0 = self._x0[idx]
        audio = self._audio[idx]
        ref = self._ref[idx]
        batch = x0.shape[0]

        t = torch.randint(self.schedule.num_steps, (batch,), generator=self.generator)
        eps = torch.randn(x0.shape, generator=self.generator)
        x_t = q_sample(x0, t, eps, self.schedule)
        flags = drop_condition(batch, cfg.dropout_prob, self.generator)

        self.model.train()
        tokens = self.model.assemble_tokens(x_t, ref, audio, null_mask=flags)
        x0_hat = self.model(tokens, t)
        loss = x0_loss(x0, x0_hat)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite loss at step {self.step_index}: {loss.item()}")

        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        if self.ema is not None:
            decay = cfg.ema_decay
            with torch.no_grad():
                for name, value in self.model.state_dict().items():
                    self.ema[name].mul_(decay).add_(value, alpha=1.0 - decay)

        self.step_index += 1
        value = float(loss.detach())
        self.losses.append(value)
        return value

    def run(self, resume=None) -> TrainReport:
        cfg = self.config
        if resume is not None:
            self._load_trainer_state(resume)
        start = len(self.losses)
        checkpoints: list[Path] = []
        while self.step_index < cfg.total_steps:
            self.train_step()
            due = self.step_index % cfg.checkpoint_every == 0 or self.step_index == cfg.total_steps
            if due and self.out_dir is not None:
                path = self.out_dir / f"ckpt_{self.step_index:08d}.pt"
                self.save_checkpoint(path)
                checkpoints.append(path)
                log.info("step %d: loss %.6f, checkpoint %s", self.step_index,
                         self.losses[-1], path)
        return TrainReport(losses=self.losses[start:], checkpoints=checkpoints,
                           final_checkpoint=checkpoints[-1] if checkpoints else None)

    # -- persistence ---------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        extra = {
            "step": self.step_index,
            "optimizer_state": self.optimizer.state_dict(),
            "generator_state": self.generator.get_state(),
            "index_queue": list(self._index_queue),
            "train_config": asdict(self.config),
        }
        if self.ema is not None:
            extra["ema_state_dict"] = self.ema
        save_checkpoint(path, self.model, stats=self.stats,
                        schedule=self.schedule.descriptor(),
                        root_map=DEFAULT_ROOT_MAP,
                        use_local_repr=self.config.use_local_repr,
                        extra=extra)

    def _load_trainer_state(self, path) -> None:
        model, meta = load_checkpoint(path)
        if meta.config != self.model_config:
            raise ValueError("checkpoint model configuration does not match this trainer")
        if meta.stats is not None and not (
            np.allclose(meta.stats.mean, self.stats.mean)
            and np.allclose(meta.stats.std, self.stats.std)
        ):
            raise ValueError("checkpoint normalization stats do not match this dataset")
        self.model.load_state_dict(model.state_dict())
        self.optimizer.load_state_dict(meta.extra["optimizer_state"])
        self.generator.set_state(meta.extra["generator_state"])
        self.step_index = int(meta.extra["step"])
        self._index_queue = list(meta.extra.get("index_queue", []))
        if "ema_state_dict" in meta.extra:
            self.ema = meta.extra["ema_state_dict"]
