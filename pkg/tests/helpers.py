"""Numeric helpers shared by the tests."""

from __future__ import annotations

from typing import Callable

import numpy as np

from theorylab.flow_model import LogFlowParams

FD_STEP = 1e-5


def fd_gradient(
    loss_fn: Callable[[LogFlowParams], float],
    params: LogFlowParams,
    h: float = FD_STEP,
) -> tuple[np.ndarray, float]:
    """Central finite differences of a scalar loss in (w, zeta)."""
    grad_w = np.empty_like(params.w)
    for i in range(params.w.size):
        hi, lo = params.w.copy(), params.w.copy()
        hi[i] += h
        lo[i] -= h
        grad_w[i] = (
            loss_fn(LogFlowParams(hi, params.zeta))
            - loss_fn(LogFlowParams(lo, params.zeta))
        ) / (2.0 * h)
    grad_zeta = (
        loss_fn(LogFlowParams(params.w, params.zeta + h))
        - loss_fn(LogFlowParams(params.w, params.zeta - h))
    ) / (2.0 * h)
    return grad_w, grad_zeta


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst per-coordinate error relative to max(1, |analytic|)."""
    analytic = np.atleast_1d(np.asarray(analytic, dtype=np.float64))
    numeric = np.atleast_1d(np.asarray(numeric, dtype=np.float64))
    scale = np.maximum(1.0, np.abs(analytic))
    return float((np.abs(analytic - numeric) / scale).max())
