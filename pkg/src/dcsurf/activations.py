"""Scalar activation functions with closed-form derivatives up to third order.

Exact derivative propagation through the network needs f' and f'' of every
activation, and backpropagating a loss that contains second derivatives of
the network additionally needs f'''. All functions here are total on finite
reals and vectorize over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOFTPLUS = "softplus"
SIGMOID = "sigmoid"
TANH = "tanh"
RELU = "relu"
ELU = "elu"

_KNOWN_KINDS = (SOFTPLUS, SIGMOID, TANH, RELU, ELU)


@dataclass(frozen=True)
class ActivationKind:
    """Activation family tag plus shape parameters.

    ``a`` is the negative-side slope of the relu family (0 recovers classical
    ReLU). ``alpha`` and ``beta`` parameterize the elu family (1, 1 recovers
    classical ELU). Parameters of families that do not use them are ignored.
    """

    kind: str = SOFTPLUS
    a: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _KNOWN_KINDS:
            raise ValueError(f"unknown activation kind: {self.kind!r}")
        for name in ("a", "alpha", "beta"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"activation parameter {name} must be finite")

    @property
    def is_smooth(self) -> bool:
        """True for C^inf families (no kink at the origin)."""
        return self.kind in (SOFTPLUS, SIGMOID, TANH)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch on sign so the exponential argument is always <= 0.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    # x + log(1 + e^-x) for x > 0 avoids overflow on large pre-activations.
    out = np.empty_like(x)
    pos = x > 0
    out[pos] = x[pos] + np.log1p(np.exp(-x[pos]))
    out[~pos] = np.log1p(np.exp(x[~pos]))
    return out


def act_eval(kind: ActivationKind, x):
    """f(x) for the given activation family."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    k = kind.kind
    if k == SOFTPLUS:
        out = _softplus(x)
    elif k == SIGMOID:
        out = _sigmoid(x)
    elif k == TANH:
        out = np.tanh(x)
    elif k == RELU:
        out = np.where(x >= 0, x, kind.a * x)
    else:  # ELU
        out = np.where(x >= 0, x, kind.alpha * np.expm1(np.minimum(kind.beta * x, 0.0)))
    return float(out[0]) if scalar else out


def act_d1(kind: ActivationKind, x):
    """f'(x); kinked families use the right-hand value at 0."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    k = kind.kind
    if k == SOFTPLUS:
        out = _sigmoid(x)
    elif k == SIGMOID:
        s = _sigmoid(x)
        out = s * (1.0 - s)
    elif k == TANH:
        y = np.tanh(x)
        out = 1.0 - y * y
    elif k == RELU:
        out = np.where(x >= 0, 1.0, kind.a)
    else:  # ELU
        out = np.where(x >= 0, 1.0, kind.alpha * kind.beta * np.exp(np.minimum(kind.beta * x, 0.0)))
    return float(out[0]) if scalar else out


def act_d2(kind: ActivationKind, x):
    """f''(x); kinked families return 0 at the origin (right-hand value)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    k = kind.kind
    if k == SOFTPLUS:
        s = _sigmoid(x)
        out = s * (1.0 - s)
    elif k == SIGMOID:
        s = _sigmoid(x)
        out = s * (1.0 - s) * (1.0 - 2.0 * s)
    elif k == TANH:
        y = np.tanh(x)
        out = -2.0 * y * (1.0 - y * y)
    elif k == RELU:
        out = np.zeros_like(x)
    else:  # ELU
        out = np.where(x >= 0, 0.0, kind.alpha * kind.beta**2 * np.exp(np.minimum(kind.beta * x, 0.0)))
    return float(out[0]) if scalar else out


def act_d3(kind: ActivationKind, x):
    """f'''(x), needed when backpropagating second-derivative penalties."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    k = kind.kind
    if k == SOFTPLUS:
        s = _sigmoid(x)
        out = s * (1.0 - s) * (1.0 - 2.0 * s)
    elif k == SIGMOID:
        s = _sigmoid(x)
        out = s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)
    elif k == TANH:
        y = np.tanh(x)
        out = (1.0 - y * y) * (6.0 * y * y - 2.0)
    elif k == RELU:
        out = np.zeros_like(x)
    else:  # ELU
        out = np.where(x >= 0, 0.0, kind.alpha * kind.beta**3 * np.exp(np.minimum(kind.beta * x, 0.0)))
    return float(out[0]) if scalar else out


def act_d123(kind: ActivationKind, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(f', f'', f''') in one pass, evaluating the base nonlinearity once.

    Training evaluates all three on the same pre-activations every epoch;
    the fused form shares the expensive exponential between them.  Results
    match ``act_d1``/``act_d2``/``act_d3`` exactly.
    """
    x = np.asarray(x, dtype=float)
    k = kind.kind
    if k == SOFTPLUS:
        s = _sigmoid(x)
        f1 = s
        f2 = s * (1.0 - s)
        f3 = f2 * (1.0 - 2.0 * s)
        return f1, f2, f3
    if k == SIGMOID:
        s = _sigmoid(x)
        f1 = s * (1.0 - s)
        return f1, f1 * (1.0 - 2.0 * s), f1 * (1.0 - 6.0 * s + 6.0 * s * s)
    if k == TANH:
        y = np.tanh(x)
        f1 = 1.0 - y * y
        return f1, -2.0 * y * f1, f1 * (6.0 * y * y - 2.0)
    if k == RELU:
        zero = np.zeros_like(x)
        return np.where(x >= 0, 1.0, kind.a), zero, zero
    # ELU
    e = np.exp(np.minimum(kind.beta * x, 0.0))
    f1 = np.where(x >= 0, 1.0, kind.alpha * kind.beta * e)
    f2 = np.where(x >= 0, 0.0, kind.alpha * kind.beta**2 * e)
    f3 = np.where(x >= 0, 0.0, kind.alpha * kind.beta**3 * e)
    return f1, f2, f3


def activation_from_name(name: str, **params) -> ActivationKind:
    """Build an ActivationKind from its lowercase config name."""
    return ActivationKind(kind=name.strip().lower(), **params)
