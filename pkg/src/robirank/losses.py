"""Scalar loss family with exact derivatives.

Everything downstream is composed from three pieces: a base-2 logistic
loss that upper-bounds the 0-1 step loss, and two increasing transforms
that slow its growth on badly-misordered points.  The first transform
grows without bound but with a vanishing derivative; the second
saturates below 1 and effectively gives up on hopeless points.

All logarithms are base 2, so derivative formulas carry explicit
1/ln(2) factors.  Every function accepts a scalar or a numpy array and
applies elementwise.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

LN2 = math.log(2.0)


class TransformKind(Enum):
    """Selects the slow-growth transform applied to a nonnegative loss."""

    RHO1 = "rho1"  # log2(t + 1): unbounded, slowly growing
    RHO2 = "rho2"  # 1 - 1/log2(t + 2): saturates below 1


def _finite(t, name="t"):
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _nonneg(t, name="t"):
    arr = _finite(t, name)
    if np.any(arr < 0.0):
        raise ValueError(f"{name} must be >= 0")
    return arr


def _like_input(out, t):
    return float(out) if np.ndim(t) == 0 else out


def _logistic_raw(arr):
    # -min(t, 0) + log1p(2**-|t|)/ln2: neither tail can overflow.
    u = np.log1p(np.exp2(-np.absolute(arr))) / LN2
    return u + np.maximum(-arr, 0.0)


def _logistic_grad_raw(arr):
    u = np.exp2(-np.absolute(arr))
    return np.where(arr >= 0.0, -u / (1.0 + u), -1.0 / (1.0 + u))


def logistic_loss(t):
    """Base-2 logistic loss log2(1 + 2**(-t)).

    Upper-bounds the indicator I(t < 0), is strictly decreasing, and is
    evaluated without overflow for |t| up to 1e6.
    """
    arr = _finite(t)
    return _like_input(_logistic_raw(arr), t)


def logistic_loss_grad(t):
    """Derivative of logistic_loss: -1/(2**t + 1), always in (-1, 0)."""
    arr = _finite(t)
    return _like_input(_logistic_grad_raw(arr), t)


def transform(kind, t):
    """Apply the selected slow-growth transform; domain is t >= 0.

    RHO1 maps t to log2(t + 1); RHO2 maps t to 1 - 1/log2(t + 2), which
    stays in [0, 1).  RHO1 dominates RHO2 pointwise on t >= 0.
    """
    arr = _nonneg(t)
    if kind is TransformKind.RHO1:
        out = np.log1p(arr) / LN2
    elif kind is TransformKind.RHO2:
        # 1 - 1/log2(t+2) rewritten as e/(1+e) with e = log2(t+2) - 1,
        # which avoids cancellation for tiny t
        e = np.log1p(arr / 2.0) / LN2
        out = e / (1.0 + e)
    else:
        raise ValueError(f"unknown transform kind {kind!r}")
    return _like_input(out, t)


def transform_grad(kind, t):
    """Derivative of transform(kind, .); strictly positive on t >= 0."""
    arr = _nonneg(t)
    if kind is TransformKind.RHO1:
        out = 1.0 / ((arr + 1.0) * LN2)
    elif kind is TransformKind.RHO2:
        lg = np.log2(arr + 2.0)
        out = 1.0 / ((arr + 2.0) * LN2 * lg * lg)
    else:
        raise ValueError(f"unknown transform kind {kind!r}")
    return _like_input(out, t)


def robust_loss(kind, t):
    """Composition transform(kind, logistic_loss(t)).

    RHO1 yields a loss that still diverges as t -> -inf but with a
    derivative tending to 0; RHO2 yields a loss bounded above by 1.
    """
    return transform(kind, logistic_loss(t))


def robust_loss_grad(kind, t):
    """Chain-rule derivative of robust_loss(kind, .)."""
    inner = logistic_loss(t)
    return transform_grad(kind, inner) * logistic_loss_grad(t)
