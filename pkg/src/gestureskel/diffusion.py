"""Denoising-diffusion machinery for motion sequences.

Covers the noise schedule, the closed-form forward corruption
x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, the clean-signal
regression loss, the ancestral reverse step parametrized by a predicted
x0, and classifier-free guidance.  Every stochastic operation takes an
explicit noise tensor or seed; this module owns no hidden RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

SCHEDULE_KINDS = ("cosine", "linear")

LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02
COSINE_OFFSET = 0.008
MAX_BETA = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed diffusion coefficients, float64 throughout.

    posterior_mean_x0 / posterior_mean_xt are the coefficients of the
    predicted clean signal and of x_t in the reverse-step mean:
      mean = sqrt(abar_{t-1}) * beta_t / (1 - abar_t) * x0
           + sqrt(alpha_t) * (1 - abar_{t-1}) / (1 - abar_t) * x_t
    """

    kind: str
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bar: np.ndarray
    alpha_bar_prev: np.ndarray
    posterior_variance: np.ndarray
    posterior_mean_x0: np.ndarray
    posterior_mean_xt: np.ndarray

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "steps": self.num_steps}


def make_schedule(kind: str = "cosine", steps: int = 1000) -> NoiseSchedule:
    """Build a noise schedule of the given family.

    The cosine family follows the squared-cosine cumulative-product rule
    with betas capped at 0.999; the linear family interpolates betas from
    1e-4 to 0.02 regardless of step count.
    """
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; choose from {SCHEDULE_KINDS}")
    if steps < 2:
        raise ValueError(f"schedule needs at least 2 steps, got {steps}")

    if kind == "linear":
        betas = np.linspace(LINEAR_BETA_START, LINEAR_BETA_END, steps, dtype=np.float64)
    else:
        def abar_fn(u: float) -> float:
            return math.cos((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * math.pi / 2.0) ** 2

        betas = np.empty(steps, dtype=np.float64)
        for i in range(steps):
            betas[i] = min(1.0 - abar_fn((i + 1) / steps) / abar_fn(i / steps), MAX_BETA)

    alphas = 1.0 - betas
    alpha_bar = np.cumprod(alphas)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    one_minus = 1.0 - alpha_bar
    posterior_variance = betas * (1.0 - alpha_bar_prev) / one_minus
    posterior_mean_x0 = betas * np.sqrt(alpha_bar_prev) / one_minus
    posterior_mean_xt = np.sqrt(alphas) * (1.0 - alpha_bar_prev) / one_minus
    return NoiseSchedule(kind, betas, alphas, alpha_bar, alpha_bar_prev,
                         posterior_variance, posterior_mean_x0, posterior_mean_xt)


@dataclass(frozen=True)
class GuidanceConfig:
    """Classifier-free guidance scale; 1 disables guidance, 0 is unconditional."""

    scale: float = 2.5

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale >= 0):
            raise ValueError(f"guidance scale must be finite and >= 0, got {self.scale}")


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not 0 <= t < sched.num_steps:
        raise ValueError(f"step index {t} outside [0, {sched.num_steps})")


def q_sample(x0: torch.Tensor, t, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Forward corruption at step t with caller-supplied noise.

    t may be a scalar or a 1-D tensor with one entry per leading batch
    element of x0.
    """
    if eps.shape != x0.shape:
        raise ValueError(f"noise shape {tuple(eps.shape)} does not match x0 {tuple(x0.shape)}")
    if isinstance(t, int):
        _check_t(t, sched)
        a = math.sqrt(sched.alpha_bar[t])
        b = math.sqrt(1.0 - sched.alpha_bar[t])
        return a * x0 + b * eps
    t = torch.as_tensor(t, dtype=torch.long)
    if t.dim() != 1 or t.shape[0] != x0.shape[0]:
        raise ValueError("batched t must be 1-D with one entry per batch element")
    if torch.any(t < 0) or torch.any(t >= sched.num_steps):
        raise ValueError(f"step indices outside [0, {sched.num_steps})")
    abar = torch.from_numpy(sched.alpha_bar).to(x0.dtype)[t]
    shape = (x0.shape[0],) + (1,) * (x0.dim() - 1)
    a = abar.sqrt().view(shape)
    b = (1.0 - abar).sqrt().view(shape)
    return a * x0 + b * eps


def x0_loss(x0: torch.Tensor, x0_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error between the clean signal and its prediction."""
    if x0.shape != x0_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x0.shape)} vs {tuple(x0_hat.shape)}")
    return torch.mean((x0 - x0_hat) ** 2)


def posterior_step(x_t: torch.Tensor, x0_hat: torch.Tensor, t: int,
                   sched: NoiseSchedule, noise: torch.Tensor | None = None) -> torch.Tensor:
    """One ancestral reverse step given the predicted clean signal.

    At t = 0 the predicted clean signal is returned exactly and noise must
    be absent (or zero).
    """
    _check_t(t, sched)
    if x_t.shape != x0_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x_t.shape)} vs {tuple(x0_hat.shape)}")
    if t == 0:
        if noise is not None and bool(torch.any(noise != 0)):
            raise ValueError("nonzero noise requested at the terminal step t=0")
        return x0_hat.clone()
    mean = float(sched.posterior_mean_x0[t]) * x0_hat + float(sched.posterior_mean_xt[t]) * x_t
    if noise is None:
        return mean
    if noise.shape != x_t.shape:
        raise ValueError("noise shape does not match the state")
    return mean + math.sqrt(sched.posterior_variance[t]) * noise


def cfg_combine(uncond: torch.Tensor, cond: torch.Tensor, scale: float) -> torch.Tensor:
    """uncond + scale * (cond - uncond), with the scale 0 and 1 identities exact."""
    if uncond.shape != cond.shape:
        raise ValueError(f"shape mismatch: {tuple(uncond.shape)} vs {tuple(cond.shape)}")
    if scale == 0.0:
        return uncond.clone()
    if scale == 1.0:
        return cond.clone()
    return uncond + scale * (cond - uncond)


def ancestral_sample(denoise_fn: Callable[[torch.Tensor, int], torch.Tensor],
                     shape: tuple[int, ...], sched: NoiseSchedule,
                     seed: int | None = 0, generator: torch.Generator | None = None,
                     stochastic: bool = True,
                     clip_range: float | None = None) -> torch.Tensor:
    """Full reverse loop from seeded Gaussian noise down to the clean signal.

    denoise_fn(x_t, t) must return the predicted clean signal.  With
    stochastic=False the loop follows posterior means only, which is the
    setting where a perfect predictor recovers its target exactly.
    """
    if generator is None:
        generator = torch.Generator()
        generator.manual_seed(0 if seed is None else seed)
    x = torch.randn(shape, generator=generator)
    for t in reversed(range(sched.num_steps)):
        x0_hat = denoise_fn(x, t)
        if clip_range is not None:
            x0_hat = x0_hat.clamp(-clip_range, clip_range)
        noise = None
        if stochastic and t > 0:
            noise = torch.randn(shape, generator=generator)
        x = posterior_step(x, x0_hat, t, sched, noise)
    return x


def sample(model, reference, audio: torch.Tensor, sched: NoiseSchedule,
           guidance: GuidanceConfig = GuidanceConfig(), seed: int = 0,
           clip_range: float | None = None) -> torch.Tensor:
    """Guided sampling of a motion sequence in normalized space.

    Evaluates the denoiser twice per step (audio-conditional and
    null-conditional), combines the two predictions with the guidance
    scale, then takes one ancestral step.  Deterministic for a fixed seed.
    """
    audio = torch.as_tensor(audio, dtype=torch.float32)
    if audio.dim() != 2:
        raise ValueError("audio must be a (frames, dim) matrix aligned to the output")
    frames = audio.shape[0]
    dim = model.config.keypoint_dim

    def denoise_pair(x: torch.Tensor, t: int) -> torch.Tensor:
        cond = model.denoise(model.assemble_tokens(x, reference, audio), t)
        uncond = model.denoise(model.assemble_tokens(x, reference, None), t)
        return cfg_combine(uncond, cond, guidance.scale)

    model.eval()
    with torch.no_grad():
        return ancestral_sample(denoise_pair, (frames, dim), sched,
                                seed=seed, clip_range=clip_range)
