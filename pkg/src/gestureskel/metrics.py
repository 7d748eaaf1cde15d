"""Paired image metrics and skeleton-space diagnostics.

SSIM follows the original windowed formulation: 11x11 Gaussian window
with sigma 1.5, stability constants (0.01)^2 and (0.03)^2 on a unit
dynamic range, averaged over the valid window positions and channels.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP = 100.0


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise ValueError("images must be (H, W) or (H, W, C)")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("images contain non-finite values")
    return a, b


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    k /= k.sum()
    return np.outer(k, k)


def _ssim_channel(a: np.ndarray, b: np.ndarray, window: np.ndarray) -> float:
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    def filt(x):
        return convolve2d(x, window, mode="valid")

    mu_a = filt(a)
    mu_b = filt(b)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = filt(a * a) - mu_aa
    var_b = filt(b * b) - mu_bb
    cov = filt(a * b) - mu_ab
    num = (2 * mu_ab + c1) * (2 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b, window_size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean structural similarity over windows and channels, in [-1, 1]."""
    a, b = _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < window_size:
        raise ValueError(f"images must be at least {window_size} pixels on each side")
    window = _gaussian_window(window_size, sigma)
    if a.ndim == 2:
        return _ssim_channel(a, b, window)
    return float(np.mean([_ssim_channel(a[..., c], b[..., c], window)
                          for c in range(a.shape[2])]))


def psnr(a, b, cap: float = PSNR_CAP) -> float:
    """10*log10(1/MSE) on unit dynamic range, capped for (near-)identical inputs."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(1.0 / mse))


def pjpe(seq_a, seq_b) -> tuple[np.ndarray, float]:
    """Mean per-joint Euclidean error over frames, plus the mean over joints."""
    a = np.asarray(getattr(seq_a, "coords", seq_a), dtype=np.float64)
    b = np.asarray(getattr(seq_b, "coords", seq_b), dtype=np.float64)
    if a.shape != b.shape or a.ndim != 3 or a.shape[2] != 2:
        raise ValueError(f"expected matching (F, K, 2) arrays, got {a.shape} vs {b.shape}")
    per_joint = np.linalg.norm(a - b, axis=2).mean(axis=0)
    return per_joint, float(per_joint.mean())
