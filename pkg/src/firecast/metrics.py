"""Masked evaluation measures.

All comparisons are restricted to where fire exists or is predicted: MSE and
SSIM run over the union of the two burned masks, BMAE over the union of the
extracted fire perimeters. Empty unions are flagged rather than returned as
NaN so aggregation stays safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .dataset import BURN_THRESHOLD

SSIM_WINDOW = 7  # uniform window; grids here are small so 11x11 would starve


@dataclass
class MetricValue:
    value: float
    empty_mask: bool = False

    def __float__(self):
        return self.value


def burned_mask(frame: np.ndarray, tau: float = BURN_THRESHOLD) -> np.ndarray:
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    return np.asarray(frame) >= tau


def masked_mse(s_true: np.ndarray, s_pred: np.ndarray,
               tau: float = BURN_THRESHOLD) -> MetricValue:
    """Mean squared error over the union of true and predicted burned areas."""
    s_true, s_pred = np.asarray(s_true), np.asarray(s_pred)
    if s_true.shape != s_pred.shape:
        raise ValueError(f"shape mismatch: {s_true.shape} vs {s_pred.shape}")
    union = burned_mask(s_true, tau) | burned_mask(s_pred, tau)
    if not union.any():
        return MetricValue(0.0, empty_mask=True)
    diff = s_true[union] - s_pred[union]
    return MetricValue(float(np.mean(diff * diff)))


def ssim_masked(s_true: np.ndarray, s_pred: np.ndarray,
                tau: float = BURN_THRESHOLD, window: int = SSIM_WINDOW,
                k1: float = 0.01, k2: float = 0.03, L: float = 1.0) -> MetricValue:
    """Uniform-window SSIM averaged over windows centered in the mask union.

    Only fully interior windows count (no padding bias); window statistics
    use all pixels of the window, masking applies to center selection only.
    """
    s_true, s_pred = np.asarray(s_true, np.float64), np.asarray(s_pred, np.float64)
    if s_true.shape != s_pred.shape:
        raise ValueError(f"shape mismatch: {s_true.shape} vs {s_pred.shape}")
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2

    def win_mean(a):
        return uniform_filter(a, size=window, mode="constant")

    mu1, mu2 = win_mean(s_true), win_mean(s_pred)
    s11 = win_mean(s_true * s_true) - mu1 * mu1
    s22 = win_mean(s_pred * s_pred) - mu2 * mu2
    s12 = win_mean(s_true * s_pred) - mu1 * mu2
    ssim_map = ((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) / (
        (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2))

    half = window // 2
    valid = np.zeros(s_true.shape, dtype=bool)
    if s_true.shape[0] > 2 * half and s_true.shape[1] > 2 * half:
        valid[half:-half, half:-half] = True
    centers = valid & (burned_mask(s_true, tau) | burned_mask(s_pred, tau))
    if not centers.any():
        return MetricValue(0.0, empty_mask=True)
    return MetricValue(float(ssim_map[centers].mean()))


def extract_boundary(mask: np.ndarray) -> np.ndarray:
    """Burned cells with at least one unburned 4-neighbor.

    The grid edge counts as unburned, so a mask touching the border keeps
    its outline there.
    """
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return mask & ~interior


def boundary_length(frame_or_mask: np.ndarray, tau: float = BURN_THRESHOLD) -> int:
    """Perimeter pixel count of the burned area."""
    m = frame_or_mask
    if m.dtype != bool:
        m = burned_mask(m, tau)
    return int(extract_boundary(m).sum())


def bmae(s_true: np.ndarray, s_pred: np.ndarray,
         tau: float = BURN_THRESHOLD) -> MetricValue:
    """Intensity MAE over the union of the two extracted fire perimeters."""
    s_true, s_pred = np.asarray(s_true), np.asarray(s_pred)
    if s_true.shape != s_pred.shape:
        raise ValueError(f"shape mismatch: {s_true.shape} vs {s_pred.shape}")
    union = (extract_boundary(burned_mask(s_true, tau))
             | extract_boundary(burned_mask(s_pred, tau)))
    if not union.any():
        return MetricValue(0.0, empty_mask=True)
    return MetricValue(float(np.mean(np.abs(s_true[union] - s_pred[union]))))
