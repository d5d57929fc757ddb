"""Feedforward network with exact input-derivative propagation.

The model is a plain MLP: affine maps with an elementwise activation after
every map except the last. Alongside the value, each layer propagates the
Jacobian with respect to the network inputs and the diagonal (or full) matrix
of second input-derivatives, all in closed form. A hand-derived reverse pass
turns adjoints of (value, gradient, second derivative) into parameter
gradients, which is what lets a loss containing derivative penalties be
trained exactly rather than by numeric differentiation.

Conventions: weights W have shape (d_in, d_out) and act as x @ W + b; all
point evaluations are batched over axis 0; reductions use fixed einsum
orders so repeated runs are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activations import ActivationKind, act_d1, act_d123, act_d2, act_eval


@dataclass(frozen=True)
class MlpParams:
    """Immutable parameter set: per-layer weights, biases, activation kind."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: ActivationKind = field(default_factory=ActivationKind)

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be nonempty lists of equal length")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {l}: weight {w.shape} and bias {b.shape} disagree")
            if l > 0 and self.weights[l - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {l}: input width does not match previous output")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l}: non-finite parameter")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output dimension must be 1")

    @property
    def arch(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class ForwardTape:
    """Per-layer intermediates from one propagation pass.

    ``pre_activations[l]`` holds the affine output of layer l; ``inputs[l]``
    holds what layer l consumed (``inputs[0]`` is the network input).
    ``first_derivs``/``second_derivs`` hold the layer-wise input-derivative
    tensors when requested; ``lin_first``/``lin_second`` keep the affine
    images of the previous layer's derivative tensors for the reverse pass.
    All arrays carry a leading batch axis.
    """

    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray
    first_derivs: list[np.ndarray] | None = None
    second_derivs: list[np.ndarray] | None = None
    lin_first: list[np.ndarray] | None = None
    lin_second: list[np.ndarray] | None = None
    act_derivs: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None


def init_params(arch: list[int], kind: ActivationKind | None = None, seed: int = 0) -> MlpParams:
    """Seed-deterministic initialization: N(0, 2/(d_in+d_out)) weights, zero biases."""
    if len(arch) < 2:
        raise ValueError("architecture needs at least input and output sizes")
    if any(int(d) < 1 for d in arch):
        raise ValueError(f"architecture has a non-positive layer size: {arch}")
    if arch[-1] != 1:
        raise ValueError("output layer size must be 1")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for d_in, d_out in zip(arch[:-1], arch[1:]):
        std = np.sqrt(2.0 / (d_in + d_out))
        weights.append(rng.normal(0.0, std, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpParams(tuple(weights), tuple(biases), kind or ActivationKind())


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"input must be a point or a batch of points, got shape {arr.shape}")


def _propagate(
    params: MlpParams,
    X: np.ndarray,
    need_first: bool = False,
    need_second: bool = False,
) -> ForwardTape:
    """One batched pass filling the tape; derivatives only when asked for."""
    if not np.isfinite(X).all():
        raise ValueError("non-finite network input")
    if X.shape[1] != params.n_inputs:
        raise ValueError(f"input width {X.shape[1]} does not match network ({params.n_inputs})")
    kind = params.activation
    L = params.n_layers
    B, n = X.shape

    inputs = [X]
    pre = []
    G: list[np.ndarray] = []
    S: list[np.ndarray] = []
    P: list[np.ndarray] = []
    Q: list[np.ndarray] = []
    F: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    h = X
    g_prev = None  # layer-wise Jacobian of the previous layer's output, (B, d, n)
    s_prev = None  # its diagonal second-derivative tensor, (B, d, n)
    for l in range(L):
        W, b = params.weights[l], params.biases[l]
        a = h @ W + b
        pre.append(a)
        last = l == L - 1
        if need_first or need_second:
            if l == 0:
                p = np.broadcast_to(W.T[None, :, :], (B, W.shape[1], n))
            else:
                p = W.T @ g_prev
            P.append(p)
            if need_second:
                if l == 0:
                    q = np.zeros((B, W.shape[1], n))
                else:
                    q = W.T @ s_prev
                Q.append(q)
            if last:
                g_prev = p
                if need_second:
                    s_prev = q
            elif need_second:
                f1, f2, f3 = act_d123(kind, a)
                F.append((f1, f2, f3))
                g_prev = f1[:, :, None] * p
                s_prev = f2[:, :, None] * p**2 + f1[:, :, None] * q
            else:
                f1 = act_d1(kind, a)
                g_prev = f1[:, :, None] * p
            G.append(g_prev)
            if need_second:
                S.append(s_prev)
        if last:
            out = a[:, 0]
        else:
            h = act_eval(kind, a)
            inputs.append(h)

    return ForwardTape(
        inputs=inputs,
        pre_activations=pre,
        output=out,
        first_derivs=G if (need_first or need_second) else None,
        second_derivs=S if need_second else None,
        lin_first=P if (need_first or need_second) else None,
        lin_second=Q if need_second else None,
        act_derivs=F if need_second else None,
    )


def forward(params: MlpParams, x) -> tuple[float | np.ndarray, ForwardTape]:
    """Network value at x (single point or batch), plus the filled tape."""
    X, single = _as_batch(x)
    tape = _propagate(params, X)
    y = tape.output
    return (float(y[0]) if single else y), tape


def forward_jacobian(params: MlpParams, x) -> np.ndarray:
    """Exact gradient of the network output with respect to its inputs."""
    X, single = _as_batch(x)
    tape = _propagate(params, X, need_first=True)
    jac = tape.first_derivs[-1][:, 0, :]
    return jac[0] if single else jac


def forward_second(params: MlpParams, x) -> np.ndarray:
    """Exact diagonal of the Hessian w.r.t. inputs: [d2y/dx_i^2]."""
    X, single = _as_batch(x)
    tape = _propagate(params, X, need_second=True)
    sec = tape.second_derivs[-1][:, 0, :]
    return sec[0] if single else sec


def forward_derivatives(params: MlpParams, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, gradient, and diagonal second derivatives in one propagation.

    Loss code evaluating penalties on a mesh needs all three; this avoids
    re-running the layer recursions per view.
    """
    X, single = _as_batch(x)
    tape = _propagate(params, X, need_second=True)
    y = tape.output
    jac = tape.first_derivs[-1][:, 0, :]
    sec = tape.second_derivs[-1][:, 0, :]
    if single:
        return float(y[0]), jac[0], sec[0]
    return y, jac, sec


def derivative_tape(params: MlpParams, x) -> ForwardTape:
    """Batch propagation retaining the derivative tensors for later backprop.

    The returned tape can be handed to ``param_gradients`` as ``mesh_tape``
    to avoid re-propagating the same points under the same parameters.
    """
    X, _ = _as_batch(x)
    return _propagate(params, X, need_second=True)


def forward_hessian(params: MlpParams, x) -> np.ndarray:
    """Full input Hessian including mixed partials, by layer-wise recursion.

    Each layer's second-derivative tensor gains a dyadic term from the
    activation curvature and a chained term from the previous layer; the
    last (linear) layer only applies its weights.
    """
    X, single = _as_batch(x)
    if not np.isfinite(X).all():
        raise ValueError("non-finite network input")
    kind = params.activation
    L = params.n_layers
    B, n = X.shape

    h = X
    g_prev = None
    h2_prev = None  # (B, d, n, n)
    for l in range(L):
        W, b = params.weights[l], params.biases[l]
        a = h @ W + b
        if l == 0:
            u = np.broadcast_to(W.T[None, :, :], (B, W.shape[1], n))
            chained = None
        else:
            u = np.einsum("mj,bmi->bji", W, g_prev)
            chained = np.einsum("mj,bmik->bjik", W, h2_prev)
        if l == L - 1:
            hess = chained if chained is not None else np.zeros((B, 1, n, n))
            return hess[0, 0] if single else hess[:, 0]
        f1 = act_d1(kind, a)
        f2 = act_d2(kind, a)
        dyad = u[:, :, :, None] * u[:, :, None, :]
        h2_prev = f2[:, :, None, None] * dyad
        if chained is not None:
            h2_prev = h2_prev + f1[:, :, None, None] * chained
        g_prev = f1[:, :, None] * u
        h = act_eval(kind, a)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class DerivativeBundle:
    """Value, gradient, diagonal second derivatives, optional full Hessian."""

    value: float
    grad: np.ndarray
    diag2: np.ndarray
    hessian: np.ndarray | None = None


def derivative_bundle(params: MlpParams, x, full_hessian: bool = False) -> DerivativeBundle:
    """All derivative views of the network at one point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("derivative_bundle takes a single point")
    y, _ = forward(params, x)
    return DerivativeBundle(
        value=y,
        grad=forward_jacobian(params, x),
        diag2=forward_second(params, x),
        hessian=forward_hessian(params, x) if full_hessian else None,
    )


def _zero_grads(params: MlpParams) -> tuple[list[np.ndarray], list[np.ndarray]]:
    return ([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


def param_gradients(
    params: MlpParams,
    data_x=None,
    data_adjoint=None,
    mesh_x=None,
    mesh_grad_adjoint=None,
    mesh_second_adjoint=None,
    data_tape: ForwardTape | None = None,
    mesh_tape: ForwardTape | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Parameter gradients of any cost built from values, gradients, seconds.

    ``data_adjoint[i]`` is dE/dPhi at data point i (classical backprop path).
    ``mesh_grad_adjoint[j]`` and ``mesh_second_adjoint[j]`` are dE/d(grad Phi)
    and dE/d(diag second) at mesh point j; these are pushed through the
    derivative-propagation recursions in reverse, which is where the third
    activation derivative enters.  The optional tapes skip re-propagation;
    each must come from these params on the matching batch (``mesh_tape``
    with the derivative tensors retained).
    """
    dW, db = _zero_grads(params)
    kind = params.activation
    L = params.n_layers

    if data_x is not None:
        X, _ = _as_batch(data_x)
        w_val = np.asarray(data_adjoint, dtype=float)
        if w_val.shape != (X.shape[0],):
            raise ValueError("data adjoint length does not match batch")
        tape = data_tape if data_tape is not None else _propagate(params, X)
        delta = w_val[:, None]
        for l in range(L - 1, -1, -1):
            dW[l] += tape.inputs[l].T @ delta
            db[l] += delta.sum(axis=0)
            if l > 0:
                delta = delta @ params.weights[l].T
                delta = delta * act_d1(kind, tape.pre_activations[l - 1])

    if mesh_x is not None:
        Xm, _ = _as_batch(mesh_x)
        M, n = Xm.shape
        gbar_out = np.asarray(mesh_grad_adjoint, dtype=float)
        sbar_out = np.asarray(mesh_second_adjoint, dtype=float)
        if gbar_out.shape != (M, n) or sbar_out.shape != (M, n):
            raise ValueError("mesh adjoint shapes do not match mesh batch")
        tape = mesh_tape if mesh_tape is not None else _propagate(params, Xm, need_second=True)
        if tape.second_derivs is None:
            raise ValueError("mesh tape lacks derivative tensors")
        G = tape.first_derivs
        S = tape.second_derivs
        P = tape.lin_first
        Q = tape.lin_second

        # Last layer is affine: its weight gradient collects the previous
        # layer's derivative tensors directly, and nothing flows to its bias.
        W_last = params.weights[L - 1]
        if L == 1:
            dW[0] += gbar_out.sum(axis=0)[:, None]
            # second-derivative of an affine map is identically zero
        else:
            g_prev = G[L - 2]
            s_prev = S[L - 2]
            dW[L - 1] += np.tensordot(g_prev, gbar_out, axes=([0, 2], [0, 1]))[:, None]
            dW[L - 1] += np.tensordot(s_prev, sbar_out, axes=([0, 2], [0, 1]))[:, None]
            w_out = W_last[:, 0]
            Gbar = w_out[None, :, None] * gbar_out[:, None, :]
            Sbar = w_out[None, :, None] * sbar_out[:, None, :]
            xbar = np.zeros((M, W_last.shape[0]))

            eye = np.broadcast_to(np.eye(n)[None, :, :], (M, n, n))
            for l in range(L - 2, -1, -1):
                if tape.act_derivs is not None:
                    f1, f2, f3 = tape.act_derivs[l]
                else:
                    f1, f2, f3 = act_d123(kind, tape.pre_activations[l])
                p = P[l]
                q = Q[l]
                f2bar = np.sum(Sbar * p**2, axis=2)
                pbar = 2.0 * f2[:, :, None] * p * Sbar + f1[:, :, None] * Gbar
                f1bar = np.sum(Sbar * q, axis=2) + np.sum(Gbar * p, axis=2)
                qbar = f1[:, :, None] * Sbar
                abar = xbar * f1 + f1bar * f2 + f2bar * f3
                g_in = G[l - 1] if l > 0 else eye
                dW[l] += np.tensordot(g_in, pbar, axes=([0, 2], [0, 2]))
                if l > 0:
                    dW[l] += np.tensordot(S[l - 1], qbar, axes=([0, 2], [0, 2]))
                dW[l] += tape.inputs[l].T @ abar
                db[l] += abar.sum(axis=0)
                if l > 0:
                    W = params.weights[l]
                    Gbar = W @ pbar
                    Sbar = W @ qbar
                    xbar = abar @ W.T

    return dW, db


def save_checkpoint(params: MlpParams, path, seed: int | None = None, extra: dict | None = None) -> None:
    """Write a self-describing JSON checkpoint; floats round-trip bit-exactly."""
    doc = {
        "format": "dcsurf-checkpoint",
        "version": 1,
        "architecture": params.arch,
        "activation": {
            "kind": params.activation.kind,
            "a": params.activation.a,
            "alpha": params.activation.alpha,
            "beta": params.activation.beta,
        },
        "seed": seed,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    """Read a checkpoint; returns the params and the remaining metadata."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "dcsurf-checkpoint":
        raise ValueError(f"{path}: not a model checkpoint")
    act = doc["activation"]
    kind = ActivationKind(kind=act["kind"], a=act["a"], alpha=act["alpha"], beta=act["beta"])
    params = MlpParams(
        tuple(np.asarray(w, dtype=float) for w in doc["weights"]),
        tuple(np.asarray(b, dtype=float) for b in doc["biases"]),
        kind,
    )
    meta = {k: v for k, v in doc.items() if k not in ("weights", "biases", "activation")}
    return params, meta
