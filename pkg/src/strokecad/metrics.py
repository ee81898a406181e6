"""Segmentation metrics and the training-loss formulas."""

from __future__ import annotations

import numpy as np

from .operators import OP_TYPES


def face_iou(F_pred: np.ndarray, F_gt: np.ndarray) -> float:
    """Intersection-over-union of binarized base-face maps, in percent.

    An empty union is defined as 0.
    """
    a = np.asarray(F_pred) > 0.5
    b = np.asarray(F_gt) > 0.5
    union = (a | b).sum()
    if union == 0:
        return 0.0
    return 100.0 * float((a & b).sum()) / float(union)


def _bands(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C)
    return np.where(C <= 0.5, 0, np.where(C <= 1.5, 1, 2))


def curve_accuracy(C_pred: np.ndarray, C_gt: np.ndarray, M: np.ndarray) -> float:
    """Fraction of stroke-mask pixels whose class band matches, in percent."""
    mask = np.asarray(M) >= 0.5
    total = mask.sum()
    if total == 0:
        return 0.0
    return 100.0 * float((_bands(C_pred)[mask] == _bands(C_gt)[mask]).sum()) / float(total)


def class_weights(type_counts: dict) -> dict:
    """Normalized inverse type-frequency weights."""
    for t in OP_TYPES:
        if type_counts.get(t, 0) <= 0:
            raise ValueError(f"type count for {t} must be positive")
    inv = {t: 1.0 / type_counts[t] for t in OP_TYPES}
    total = sum(inv.values())
    return {t: inv[t] / total for t in OP_TYPES}


def cls_loss(probabilities: dict, true_type: str, type_counts: dict) -> float:
    """Weighted cross entropy of the classifier output for one sample."""
    w = class_weights(type_counts)
    p = float(probabilities[true_type])
    p = max(p, 1e-300)
    return -w[true_type] * float(np.log(p))


def reg_loss(F: np.ndarray, F_gt: np.ndarray, C: np.ndarray, C_gt: np.ndarray,
             M: np.ndarray) -> float:
    """Segmentation regression loss: mean squared face map error plus the
    stroke-masked mean squared curve map error."""
    F = np.asarray(F, dtype=np.float64)
    F_gt = np.asarray(F_gt, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    C_gt = np.asarray(C_gt, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    msize = float(M.sum())
    face_term = float(((F - F_gt) ** 2).sum()) / float(F.size)
    if msize == 0:
        return face_term
    curve_term = float((M * (C - C_gt) ** 2).sum()) / msize
    return face_term + curve_term
