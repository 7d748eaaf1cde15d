"""Transformer denoiser over motion tokens.

Token assembly realizes both conditioning strategies: the reference
skeleton is prepended along the frame axis (zero-padded to token width),
and per-frame audio embeddings are concatenated along the feature axis so
every gesture token carries exactly its own audio segment.  The
cross-attention mode exists for ablation only; it consumes the same token
matrix but routes the audio columns through cross-attention instead.

The network projects tokens to the model width, adds fixed sinusoidal
positions, and runs pre-norm transformer blocks whose layer norms are
modulated by the diffusion-step embedding (shift, scale, and residual
gate per sublayer, all zero-initialized so training starts from a
near-identity network).  The output head predicts the clean signal for
the frame tokens; the reference-token output is discarded.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .audio import AUDIO_DIM
from .skeleton import MOTION_DIM, NormalizationStats, RootMap

CONDITIONING_MODES = ("feature_concat", "cross_attention")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DenoiserConfig:
    d_model: int = 256
    n_layers: int = 8
    n_heads: int = 8
    time_embed_dim: int = 256
    max_frames: int = 400
    keypoint_dim: int = MOTION_DIM
    audio_dim: int = AUDIO_DIM
    conditioning_mode: str = "feature_concat"
    use_reference: bool = True

    def __post_init__(self):
        for name in ("d_model", "n_layers", "n_heads", "time_embed_dim", "max_frames",
                     "keypoint_dim", "audio_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} must be divisible by n_heads={self.n_heads}")
        if self.conditioning_mode not in CONDITIONING_MODES:
            raise ValueError(f"conditioning_mode must be one of {CONDITIONING_MODES}")

    @property
    def token_width(self) -> int:
        return self.keypoint_dim + self.audio_dim


def sinusoidal_embedding(positions: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Standard sin/cos embedding of 1-D positions, shape (len(positions), dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = positions.to(torch.float64)[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


def _zero_init(module: nn.Linear) -> nn.Linear:
    nn.init.zeros_(module.weight)
    if module.bias is not None:
        nn.init.zeros_(module.bias)
    return module


class DenoiserBlock(nn.Module):
    """Pre-norm attention + MLP with step-conditioned modulation."""

    def __init__(self, d_model: int, n_heads: int, cross_attention: bool = False):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model, elementwise_affine=False)
        self.attn = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(d_model, elementwise_affine=False)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model),
            nn.GELU(),
            nn.Linear(4 * d_model, d_model),
        )
        self.modulation = nn.Sequential(nn.SiLU(), _zero_init(nn.Linear(d_model, 6 * d_model)))
        if cross_attention:
            self.cross_norm = nn.LayerNorm(d_model, elementwise_affine=False)
            self.cross_attn = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
            _zero_init(self.cross_attn.out_proj)
        else:
            self.cross_norm = None
            self.cross_attn = None

    def forward(self, x, cond, memory=None, identity_attention: bool = False):
        mods = self.modulation(cond).unsqueeze(1).chunk(6, dim=-1)
        shift1, scale1, gate1, shift2, scale2, gate2 = mods
        h = self.norm1(x) * (1 + scale1) + shift1
        if identity_attention:
            attn_out = h
        else:
            attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + gate1 * attn_out
        if self.cross_attn is not None and memory is not None:
            q = self.cross_norm(x)
            cross_out, _ = self.cross_attn(q, memory, memory, need_weights=False)
            x = x + cross_out
        h = self.norm2(x) * (1 + scale2) + shift2
        return x + gate2 * self.mlp(h)


class GestureDenoiser(nn.Module):
    """Predicts the clean motion sequence from noisy tokens and a step index."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        cross = config.conditioning_mode == "cross_attention"

        in_width = config.keypoint_dim if cross else config.token_width
        self.input_proj = nn.Linear(in_width, d)
        self.memory_proj = nn.Linear(config.audio_dim, d) if cross else None

        positions = torch.arange(config.max_frames + 1)
        pe = sinusoidal_embedding(positions, d).to(torch.float32)
        self.register_buffer("pos_encoding", pe, persistent=False)

        self.time_mlp = nn.Sequential(
            nn.Linear(config.time_embed_dim, d),
            nn.SiLU(),
            nn.Linear(d, d),
        )
        self.blocks = nn.ModuleList(
            [DenoiserBlock(d, config.n_heads, cross) for _ in range(config.n_layers)]
        )
        self.final_norm = nn.LayerNorm(d, elementwise_affine=False)
        self.final_modulation = nn.Sequential(nn.SiLU(), _zero_init(nn.Linear(d, 2 * d)))
        self.out_proj = _zero_init(nn.Linear(d, config.keypoint_dim))
        # Learnable stand-in for dropped audio, broadcast across frames.
        self.null_condition = nn.Parameter(torch.randn(config.audio_dim) * 0.02)

        # Diagnostic switch: attention acts as identity, making each token
        # depend only on its own row.
        self.identity_attention = False

    # -- token assembly ----------------------------------------------------

    def assemble_tokens(self, x_t: torch.Tensor, reference: torch.Tensor | None = None,
                        audio: torch.Tensor | None = None,
                        null_mask: torch.Tensor | None = None) -> torch.Tensor:
        """Build the (frames[+1]) x (keypoint_dim + audio_dim) token matrix.

        audio=None selects the learnable null condition for every frame;
        null_mask selects it per batch element.  With a reference row the
        audio columns of row 0 are zero.
        """
        cfg = self.config
        unbatched = x_t.dim() == 2
        x = x_t.unsqueeze(0) if unbatched else x_t
        if x.dim() != 3 or x.shape[-1] != cfg.keypoint_dim:
            raise ValueError(f"x_t must have shape (B, F, {cfg.keypoint_dim}) or (F, {cfg.keypoint_dim})")
        batch, frames = x.shape[0], x.shape[1]

        null_row = self.null_condition.to(x.dtype)
        if audio is None:
            aud = null_row.expand(batch, frames, cfg.audio_dim)
        else:
            aud = audio.unsqueeze(0) if audio.dim() == 2 else audio
            if aud.shape != (batch, frames, cfg.audio_dim):
                raise ValueError(
                    f"audio shape {tuple(aud.shape)} is not aligned to (B={batch}, F={frames}, {cfg.audio_dim})"
                )
            aud = aud.to(x.dtype)
            if null_mask is not None:
                mask = null_mask.view(batch, 1, 1)
                aud = torch.where(mask, null_row.expand_as(aud), aud)

        rows = torch.cat([x, aud], dim=-1)
        if cfg.use_reference:
            if reference is None:
                raise ValueError("this model conditions on a reference skeleton; none was given")
            ref = reference
            if ref.dim() == 1:
                ref = ref.view(1, cfg.keypoint_dim)
            if ref.dim() == 2:
                ref = ref.unsqueeze(0).expand(batch, *ref.shape)
            if ref.shape != (batch, 1, cfg.keypoint_dim):
                raise ValueError(f"reference must have shape (B, 1, {cfg.keypoint_dim})")
            pad = torch.zeros(batch, 1, cfg.audio_dim, dtype=x.dtype)
            ref_row = torch.cat([ref.to(x.dtype), pad], dim=-1)
            rows = torch.cat([ref_row, rows], dim=1)
        return rows.squeeze(0) if unbatched else rows

    # -- evaluation --------------------------------------------------------

    def forward(self, tokens: torch.Tensor, t) -> torch.Tensor:
        cfg = self.config
        unbatched = tokens.dim() == 2
        tok = tokens.unsqueeze(0) if unbatched else tokens
        if tok.dim() != 3 or tok.shape[-1] != cfg.token_width:
            raise ValueError(f"tokens must be (B, N, {cfg.token_width}); got {tuple(tokens.shape)}")
        batch, n_tokens = tok.shape[0], tok.shape[1]
        frames = n_tokens - 1 if cfg.use_reference else n_tokens
        if frames < 1:
            raise ValueError("token matrix holds no frame rows")
        if frames > cfg.max_frames:
            raise ValueError(f"{frames} frames exceed the model capacity of {cfg.max_frames}")

        if isinstance(t, int):
            t_vec = torch.full((batch,), t, dtype=torch.long)
        else:
            t_vec = torch.as_tensor(t, dtype=torch.long)
            if t_vec.dim() == 0:
                t_vec = t_vec.expand(batch)
            if t_vec.shape != (batch,):
                raise ValueError("t must be a scalar or one index per batch element")

        dtype = self.out_proj.weight.dtype
        tok = tok.to(dtype)
        cond = self.time_mlp(sinusoidal_embedding(t_vec, cfg.time_embed_dim).to(dtype))

        memory = None
        if cfg.conditioning_mode == "cross_attention":
            h = self.input_proj(tok[..., : cfg.keypoint_dim])
            memory = self.memory_proj(tok[..., cfg.keypoint_dim:])
            if cfg.use_reference:
                memory = memory[:, 1:]
        else:
            h = self.input_proj(tok)
        h = h + self.pos_encoding[:n_tokens].to(dtype)

        for block in self.blocks:
            h = block(h, cond, memory, self.identity_attention)

        h = self.final_norm(h)
        shift, scale = self.final_modulation(cond).unsqueeze(1).chunk(2, dim=-1)
        h = h * (1 + scale) + shift
        y = self.out_proj(h)
        if cfg.use_reference:
            y = y[:, 1:]
        return y.squeeze(0) if unbatched else y

    def denoise(self, tokens: torch.Tensor, t) -> torch.Tensor:
        return self.forward(tokens, t)


def build_denoiser(config: DenoiserConfig, seed: int = 0) -> GestureDenoiser:
    """Deterministic construction: the same seed yields identical parameters."""
    torch.manual_seed(seed)
    return GestureDenoiser(config)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class CheckpointMeta:
    config: DenoiserConfig
    stats: NormalizationStats | None
    schedule: dict | None
    root_map: RootMap | None
    use_local_repr: bool
    extra: dict


def save_checkpoint(path, model: GestureDenoiser, stats: NormalizationStats | None = None,
                    schedule: dict | None = None, root_map: RootMap | None = None,
                    use_local_repr: bool = True, extra: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "state_dict": model.state_dict(),
        "stats": None if stats is None else {"mean": stats.mean, "std": stats.std},
        "schedule": schedule,
        "root_map": None if root_map is None else asdict(root_map),
        "use_local_repr": use_local_repr,
        "extra": extra or {},
    }
    torch.save(payload, Path(path))


def load_checkpoint(path, use_ema: bool = False) -> tuple[GestureDenoiser, CheckpointMeta]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    config = DenoiserConfig(**payload["config"])
    model = GestureDenoiser(config)
    model.load_state_dict(payload["state_dict"])
    extra = payload.get("extra", {})
    if use_ema:
        ema = extra.get("ema_state_dict")
        if ema is None:
            raise ValueError("checkpoint carries no EMA parameters")
        model.load_state_dict(ema)

    stats = None
    if payload.get("stats") is not None:
        stats = NormalizationStats(payload["stats"]["mean"], payload["stats"]["std"])
    root_map = None
    if payload.get("root_map") is not None:
        rm = dict(payload["root_map"])
        rm["body_root"] = tuple(rm["body_root"])
        root_map = RootMap(**rm)
    meta = CheckpointMeta(config=config, stats=stats, schedule=payload.get("schedule"),
                          root_map=root_map, use_local_repr=payload.get("use_local_repr", True),
                          extra=extra)
    return model, meta
