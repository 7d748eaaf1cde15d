"""Shared fixtures: toy corpora and overfit checkpoints reused across modules.

The overfit trainings are expensive (minutes of CPU), so they are
session-scoped and shared by the generation tests and the acceptance
suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pytest
import torch

from gestureskel import synthetic
from gestureskel.denoiser import DenoiserConfig
from gestureskel.training import TrainConfig, Trainer, build_clip

TOY_FRAMES = 32
TOY_WIDTHS = (0.20, 0.30)


@dataclass
class ToyModel:
    checkpoint: Path
    corpus: list
    trainer: Trainer


def toy_model_config(use_reference: bool = True, d_model: int = 64,
                     n_layers: int = 2) -> DenoiserConfig:
    return DenoiserConfig(d_model=d_model, n_layers=n_layers, n_heads=4,
                          time_embed_dim=64, max_frames=64,
                          use_reference=use_reference)


def train_toy(corpus, out_path: Path, use_reference: bool, steps: int,
              learning_rate: float = 3e-4, seed: int = 3) -> ToyModel:
    clips = [build_clip(c.clip_id, c.skeleton, c.features) for c in corpus]
    config = TrainConfig(learning_rate=learning_rate, batch_size=8, total_steps=steps,
                         window_frames=TOY_FRAMES, seed=seed,
                         schedule_kind="cosine", schedule_steps=100,
                         checkpoint_every=steps)
    trainer = Trainer(config, toy_model_config(use_reference), clips,
                      out_dir=out_path.parent)
    trainer.run()
    trainer.save_checkpoint(out_path)
    return ToyModel(checkpoint=out_path, corpus=corpus, trainer=trainer)


@pytest.fixture(scope="session")
def shared_audio_corpus():
    """Two speakers (shoulder widths 0.20 / 0.30) driven by the same four
    audio tracks, so body shape is only recoverable from the reference."""
    return synthetic.make_toy_corpus(n_speakers=2, n_tracks=4, frames=TOY_FRAMES,
                                     seed=11, shoulder_widths=TOY_WIDTHS,
                                     share_audio=True)


@pytest.fixture(scope="session")
def overfit_model(shared_audio_corpus, tmp_path_factory) -> ToyModel:
    out = tmp_path_factory.mktemp("overfit_ref") / "model.pt"
    return train_toy(shared_audio_corpus, out, use_reference=True, steps=3000)


@pytest.fixture(scope="session")
def overfit_model_noref(shared_audio_corpus, tmp_path_factory) -> ToyModel:
    out = tmp_path_factory.mktemp("overfit_noref") / "model.pt"
    return train_toy(shared_audio_corpus, out, use_reference=False, steps=2000)
