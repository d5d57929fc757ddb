"""Full-batch Adam training of premium surfaces with derivative penalties.

Each epoch evaluates the total cost (MSE plus mesh penalty) once, backprops
both terms through the network, and applies one Adam update.  Runs are
deterministic given the seed.  With every penalty magnitude at zero the mesh
machinery is skipped entirely, so such a run is a plain least-squares fit
whose parameter trajectory the penalty code cannot perturb.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activations import SOFTPLUS, ActivationKind, activation_from_name
from .constraints import (
    LossReport,
    PenaltyConfig,
    _data_arrays,
    evaluate_cost,
    init_adaptive_weights,
    self_adaptive_update,
)
from .network import MlpParams, forward, init_params, param_gradients


class TrainingError(RuntimeError):
    """Raised when the loss or the parameters stop being finite."""

    def __init__(self, epoch: int, e_mse: float, e_penalty: float, detail: str = "") -> None:
        msg = f"training diverged at epoch {epoch}: e_mse={e_mse!r}, e_penalty={e_penalty!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.epoch = epoch
        self.e_mse = e_mse
        self.e_penalty = e_penalty


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training run depends on besides the data itself."""

    epochs: int = 10000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    architecture: tuple[int, ...] = (2, 16, 16, 1)
    activation: str = SOFTPLUS
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    history_stride: int = 10

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("Adam epsilon must be positive")
        if self.history_stride < 1:
            raise ValueError("history stride must be at least 1")
        if len(self.architecture) < 2:
            raise ValueError("architecture needs at least input and output sizes")

    @property
    def activation_kind(self) -> ActivationKind:
        return activation_from_name(self.activation)


@dataclass(frozen=True)
class TrainReport:
    """Outcome of one run: final parameters and the strided loss history."""

    params: MlpParams
    history_epochs: tuple[int, ...]
    history: tuple[LossReport, ...]
    seconds: float
    epochs_run: int
    adaptive_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.history_epochs) != len(self.history):
            raise ValueError("history epochs and reports must pair up")
        if self.seconds < 0:
            raise ValueError("wall time cannot be negative")

    def at_epoch(self, epoch: int) -> LossReport:
        """The recorded report for one epoch; raises if it was not recorded."""
        try:
            return self.history[self.history_epochs.index(epoch)]
        except ValueError:
            raise KeyError(f"epoch {epoch} is not in the recorded history") from None


@dataclass(frozen=True)
class AdamState:
    """Parameters plus first/second moment buffers and the step counter."""

    params: MlpParams
    m_w: tuple[np.ndarray, ...]
    v_w: tuple[np.ndarray, ...]
    m_b: tuple[np.ndarray, ...]
    v_b: tuple[np.ndarray, ...]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(
    params: MlpParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> AdamState:
    """Fresh optimizer state with zeroed moment buffers."""
    return AdamState(
        params=params,
        m_w=tuple(np.zeros_like(w) for w in params.weights),
        v_w=tuple(np.zeros_like(w) for w in params.weights),
        m_b=tuple(np.zeros_like(b) for b in params.biases),
        v_b=tuple(np.zeros_like(b) for b in params.biases),
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(state: AdamState, grads, lr: float) -> AdamState:
    """One bias-corrected Adam update; moment buffers carry across steps."""
    dW, db = grads
    if len(dW) != len(state.params.weights) or len(db) != len(state.params.biases):
        raise ValueError("gradient structure does not match parameters")
    for g, w in zip(dW, state.params.weights):
        if np.shape(g) != w.shape:
            raise ValueError("weight gradient shape does not match parameters")
    for g, b in zip(db, state.params.biases):
        if np.shape(g) != b.shape:
            raise ValueError("bias gradient shape does not match parameters")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t

    def update(theta, m, v, g):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        theta_new = theta - lr * (m_new / c1) / (np.sqrt(v_new / c2) + state.eps)
        return theta_new, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for w, m, v, g in zip(state.params.weights, state.m_w, state.v_w, dW):
        w2, m2, v2 = update(w, m, v, g)
        new_w.append(w2)
        new_mw.append(m2)
        new_vw.append(v2)
    new_b, new_mb, new_vb = [], [], []
    for b, m, v, g in zip(state.params.biases, state.m_b, state.v_b, db):
        b2_, m2, v2 = update(b, m, v, g)
        new_b.append(b2_)
        new_mb.append(m2)
        new_vb.append(v2)
    params = MlpParams(tuple(new_w), tuple(new_b), state.params.activation)
    return AdamState(
        params=params,
        m_w=tuple(new_mw),
        v_w=tuple(new_vw),
        m_b=tuple(new_mb),
        v_b=tuple(new_vb),
        step=t,
        beta1=b1,
        beta2=b2,
        eps=state.eps,
    )


def _resolve_rate(data, rate: float | None) -> float:
    if rate is not None:
        return float(rate)
    sabr = getattr(data, "sabr", None)
    if sabr is not None:
        return float(sabr.r)
    return 0.0


def train(data, mesh, cfg: TrainConfig, rate: float | None = None) -> TrainReport:
    """Fit the surface for cfg.epochs full-batch Adam epochs.

    The history records the loss of the parameters entering each epoch (the
    same values that epoch's gradients used) at every stride multiple and at
    the final epoch.  ``rate`` discounts the lower-bound penalty term; by
    default it is taken from the data's model parameters when present.
    """
    x, c = _data_arrays(data)
    mesh_x = np.asarray(mesh, dtype=float)
    r = _resolve_rate(data, rate)
    pen = cfg.penalty
    # all-zero magnitudes make the mesh terms identically zero: plain MSE fit
    plain_fit = not pen.magnitudes.any() and not pen.self_adaptive

    weights = init_adaptive_weights(pen, mesh_x.shape[0]) if pen.self_adaptive else None
    state = adam_init(
        init_params(list(cfg.architecture), cfg.activation_kind, seed=cfg.seed),
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )

    history_epochs: list[int] = []
    history: list[LossReport] = []
    started = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        recorded = epoch % cfg.history_stride == 0 or epoch == cfg.epochs
        signed = None
        try:
            if plain_fit:
                e_mse, data_adjoint, tape = _mse_adjoint(state.params, x, c)
                e_penalty = 0.0
                if not np.isfinite(e_mse):
                    raise TrainingError(epoch, e_mse, e_penalty)
                # penalty is inert here; evaluate it only when reporting
                report = (
                    evaluate_cost(state.params, (x, c), mesh_x, pen, rate=r).report
                    if recorded
                    else None
                )
                grads = param_gradients(
                    state.params, data_x=x, data_adjoint=data_adjoint, data_tape=tape
                )
            else:
                ev = evaluate_cost(
                    state.params, (x, c), mesh_x, pen, rate=r, adaptive_weights=weights
                )
                report = ev.report
                e_mse, e_penalty = report.e_mse, report.e_penalty
                signed = ev.signed
                if not np.isfinite(report.total):
                    raise TrainingError(epoch, e_mse, e_penalty)
                grads = param_gradients(
                    state.params,
                    data_x=x,
                    data_adjoint=ev.data_adjoint,
                    mesh_x=mesh_x,
                    mesh_grad_adjoint=ev.mesh_adjoints.grad,
                    mesh_second_adjoint=ev.mesh_adjoints.second,
                    data_tape=ev.data_tape,
                    mesh_tape=ev.mesh_tape,
                )
        except FloatingPointError as exc:
            raise TrainingError(epoch, float("nan"), float("nan"), str(exc)) from exc
        try:
            state = adam_step(state, grads, cfg.learning_rate)
        except ValueError as exc:
            raise TrainingError(epoch, e_mse, e_penalty, str(exc)) from exc
        if weights is not None:
            weights = self_adaptive_update(weights, signed, pen.eta_m, pen.g)
        if recorded:
            history_epochs.append(epoch)
            history.append(report)
    seconds = time.perf_counter() - started

    return TrainReport(
        params=state.params,
        history_epochs=tuple(history_epochs),
        history=tuple(history),
        seconds=seconds,
        epochs_run=cfg.epochs,
        adaptive_weights=weights,
    )


def _mse_adjoint(params: MlpParams, x: np.ndarray, c: np.ndarray):
    preds, tape = forward(params, x)
    resid = np.asarray(preds, dtype=float) - c
    return float(resid @ resid) / resid.size, (2.0 / resid.size) * resid, tape


def history_csv(report: TrainReport, path) -> None:
    """Write the strided loss history as ``epoch,e_mse,e_penalty`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "e_mse", "e_penalty"])
        for epoch, rep in zip(report.history_epochs, report.history):
            writer.writerow([epoch, "%.17g" % rep.e_mse, "%.17g" % rep.e_penalty])


def report_json(report: TrainReport) -> dict:
    """JSON-ready view of a run: the full per-record loss breakdown."""
    rows = []
    for epoch, rep in zip(report.history_epochs, report.history):
        rows.append(
            {
                "epoch": epoch,
                "e_mse": rep.e_mse,
                "e_penalty": rep.e_penalty,
                "pen_k": rep.pen_k,
                "pen_kk": rep.pen_kk,
                "pen_tau": rep.pen_tau,
                "n_viol_k": rep.n_viol_k,
                "n_viol_kk": rep.n_viol_kk,
                "n_viol_tau": rep.n_viol_tau,
                "total": rep.total,
            }
        )
    # wall-clock time stays off the record so reruns are byte-identical
    return {
        "epochs_run": report.epochs_run,
        "history": rows,
    }


def save_history(report: TrainReport, path) -> None:
    """Write ``report_json`` to a file as indented JSON."""
    Path(path).write_text(json.dumps(report_json(report), indent=1) + "\n")
