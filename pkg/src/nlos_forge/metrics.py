"""Similarity metrics between reference and candidate signals.

ED is the root-mean-square error, CS the cosine similarity of the flattened
signals, PSNR the usual peak ratio in dB (+inf for identical inputs), and
SSIM the mean local structural similarity with an 11x11 Gaussian window
(sigma 1.5, K1 0.01, K2 0.03).  3D volumes are scored per time slice (last
axis) and averaged; 2D arrays are scored directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11x11 window


@dataclass(frozen=True)
class MetricReport:
    ed: float
    cs: float
    ssim: float
    psnr: float  # dB; +inf for identical inputs


def _gaussian_window() -> np.ndarray:
    taps = np.exp(-0.5 * (np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1) / _SSIM_SIGMA) ** 2)
    taps /= taps.sum()
    return np.outer(taps, taps)


_WINDOW = _gaussian_window()


def _ssim_2d(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    kw = {"mode": "reflect"}
    mu_a = correlate(a, _WINDOW, **kw)
    mu_b = correlate(b, _WINDOW, **kw)
    var_a = correlate(a * a, _WINDOW, **kw) - mu_a * mu_a
    var_b = correlate(b * b, _WINDOW, **kw) - mu_b * mu_b
    cov = correlate(a * b, _WINDOW, **kw) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def structural_similarity(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    if a.ndim == 2:
        return _ssim_2d(a, b, data_range)
    if a.ndim == 3:
        return float(np.mean([_ssim_2d(a[..., t], b[..., t], data_range)
                              for t in range(a.shape[-1])]))
    raise ValueError("SSIM is defined for 2D images and 3D volumes")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between flattened signals; 1 when both are zero.

    Computed as dot / sqrt(dot_aa * dot_bb) so identical inputs score
    exactly 1; clipped to [-1, 1] against last-ulp rounding.
    """
    av, bv = a.reshape(-1), b.reshape(-1)
    aa, bb = np.dot(av, av), np.dot(bv, bv)
    if aa == 0 and bb == 0:
        return 1.0
    if aa == 0 or bb == 0:
        return 0.0
    return float(np.clip(np.dot(av, bv) / np.sqrt(aa * bb), -1.0, 1.0))


def evaluate(reference: np.ndarray, candidate: np.ndarray, data_range: float = 1.0) -> MetricReport:
    """Score candidate against reference; shapes must match exactly."""
    a = np.asarray(reference, dtype=float)
    b = np.asarray(candidate, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: reference {a.shape} vs candidate {b.shape}")
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((a - b) ** 2))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(data_range**2 / mse)
    return MetricReport(
        ed=math.sqrt(mse),
        cs=cosine_similarity(a, b),
        ssim=structural_similarity(a, b, data_range),
        psnr=psnr,
    )


def classification_report(true_labels, predicted_labels, n_classes: int) -> dict:
    """Confusion counts plus accuracy and macro precision/recall."""
    t = np.asarray(true_labels, dtype=int)
    p = np.asarray(predicted_labels, dtype=int)
    if t.shape != p.shape:
        raise ValueError("label arrays must have the same shape")
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(confusion, (t, p), 1)
    diag = np.diag(confusion).astype(float)
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    precision = np.where(col > 0, diag / np.maximum(col, 1), 0.0)
    recall = np.where(row > 0, diag / np.maximum(row, 1), 0.0)
    return {
        "confusion": confusion,
        "accuracy": float(diag.sum() / max(len(t), 1)),
        "precision": float(precision.mean()),
        "recall": float(recall.mean()),
    }
