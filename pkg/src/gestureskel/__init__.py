"""Audio-synchronized 2D skeleton sequence synthesis.

A conditional diffusion transformer predicts full-body gesture motion
(133 COCO-WholeBody keypoints) from per-frame speech embeddings and a
single reference skeleton, plus the dataset curation, export, and
evaluation machinery around it.
"""

from .audio import AudioFeatureSequence, align_to_frames, load_features, save_features
from .denoiser import DenoiserConfig, GestureDenoiser, build_denoiser, load_checkpoint, save_checkpoint
from .diffusion import (
    GuidanceConfig,
    NoiseSchedule,
    ancestral_sample,
    cfg_combine,
    make_schedule,
    posterior_step,
    q_sample,
    sample,
    x0_loss,
)
from .generation import GenerationRequest, export_pose, generate, import_pose, render
from .metrics import pjpe, psnr, ssim
from .skeleton import (
    LocalMotionSequence,
    NormalizationStats,
    RootMap,
    SkeletonFrame,
    SkeletonSequence,
    extract_hand_skeletons,
    fit_normalization,
    from_local,
    normalize,
    denormalize,
    shoulder_width,
    smooth,
    to_local,
)
from .training import TrainConfig, Trainer, TrainingExample, drop_condition, make_windows

__version__ = "0.1.0"
