"""Loss functions over prediction/label vectors.

Only cross-entropy has an analytic gradient here; the others are
metrics. ``t`` below is the vector length.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import DomainError, ShapeError

# Clamp bound for cross-entropy logs and divisions; log(0) never happens.
CE_EPS = 1e-12


class LossKind(Enum):
    MSE = "mse"
    MSLE = "msle"
    L2 = "l2"
    L1 = "l1"
    MAE = "mae"
    MAPE = "mape"
    CROSS_ENTROPY = "cross_entropy"


def _check_pair(yhat: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.ndim != 1 or y.ndim != 1:
        raise ShapeError("loss expects rank-1 prediction and label vectors")
    if yhat.shape != y.shape:
        raise ShapeError(f"length mismatch: {yhat.shape[0]} vs {y.shape[0]}")
    if yhat.shape[0] < 1:
        raise ShapeError("loss needs at least one component")
    return yhat, y


def _check_binary_labels(y: np.ndarray) -> None:
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DomainError("cross-entropy labels must be exactly 0 or 1")


def loss(kind: LossKind, yhat: np.ndarray, y: np.ndarray) -> float:
    """Scalar loss between predictions ``yhat`` and labels ``y``."""
    yhat, y = _check_pair(yhat, y)
    t = y.shape[0]
    if kind == LossKind.MSE:
        return float(np.sum((y - yhat) ** 2) / t)
    if kind == LossKind.MSLE:
        if np.any(y <= -1.0) or np.any(yhat <= -1.0):
            raise DomainError("MSLE needs all values > -1")
        return float(np.sum((np.log(y + 1.0) - np.log(yhat + 1.0)) ** 2) / t)
    if kind == LossKind.L2:
        return float(np.sum((y - yhat) ** 2))
    if kind == LossKind.L1:
        return float(np.sum(np.abs(y - yhat)))
    if kind == LossKind.MAE:
        return float(np.sum(np.abs(y - yhat)) / t)
    if kind == LossKind.MAPE:
        if np.any(y == 0.0):
            raise DomainError("MAPE is undefined when a label is zero")
        return float(np.sum(np.abs((y - yhat) / y)) * 100.0 / t)
    if kind == LossKind.CROSS_ENTROPY:
        _check_binary_labels(y)
        yc = np.clip(yhat, CE_EPS, 1.0 - CE_EPS)
        return float(-np.sum(y * np.log(yc) + (1.0 - y) * np.log(1.0 - yc)) / t)
    raise DomainError(f"unknown loss kind {kind!r}")


def ce_grad(yhat: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the cross-entropy loss with respect to each prediction.

    Component i is (1/t) * (-y_i/yhat_i + (1 - y_i)/(1 - yhat_i)) with
    yhat clamped away from 0 and 1 before the divisions.
    """
    yhat, y = _check_pair(yhat, y)
    _check_binary_labels(y)
    t = y.shape[0]
    yc = np.clip(yhat, CE_EPS, 1.0 - CE_EPS)
    return (-y / yc + (1.0 - y) / (1.0 - yc)) / t
