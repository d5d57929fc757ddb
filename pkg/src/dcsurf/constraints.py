"""Training cost: data-fit MSE plus penalties on no-arbitrage derivative signs.

A premium surface admits no static arbitrage when it is nonincreasing and
convex in strike and nondecreasing in expiry. Each condition is scored on a
mesh through a sign-adjusted derivative: positive means violated, and only
violations contribute to the cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ForwardTape, MlpParams, derivative_tape, forward

G_IDENTITY = "identity"
G_SQUARE = "square"

# sign adjustments: h * derivative > 0 exactly when the inequality is broken
H_K = 1.0
H_KK = -1.0
H_TAU = -1.0


@dataclass(frozen=True)
class PenaltyConfig:
    """Weights and shape of the no-arbitrage penalty.

    ``m_k``, ``m_kk``, ``m_tau`` scale the strike-slope, convexity, and
    expiry-slope terms; ``g`` intensifies the violation value (identity or
    square). ``lower_bound`` additionally penalizes the strike slope falling
    below -e^{-r tau}, sharing ``m_k``. Self-adaptive mode promotes the
    magnitudes to per-mesh-point weights m with effective multiplier m^2,
    raised by ``eta_m`` wherever a constraint is broken.
    """

    m_k: float = 0.001
    m_kk: float = 0.01
    m_tau: float = 0.001
    g: str = G_IDENTITY
    lower_bound: bool = False
    self_adaptive: bool = False
    eta_m: float = 0.0

    def __post_init__(self) -> None:
        for name in ("m_k", "m_kk", "m_tau", "eta_m"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a nonnegative real")
        if self.g not in (G_IDENTITY, G_SQUARE):
            raise ValueError(f"unknown intensifier {self.g!r}")

    @property
    def magnitudes(self) -> np.ndarray:
        return np.array([self.m_k, self.m_kk, self.m_tau])


@dataclass(frozen=True)
class MeshAdjoints:
    """d(penalty)/d(grad Phi) and d(penalty)/d(diag second), both (M, 2)."""

    grad: np.ndarray
    second: np.ndarray


@dataclass(frozen=True)
class LossReport:
    """Cost breakdown: total = e_mse + e_penalty, penalty split per term."""

    e_mse: float
    e_penalty: float
    pen_k: float
    pen_kk: float
    pen_tau: float
    n_viol_k: int
    n_viol_kk: int
    n_viol_tau: int
    total: float


def _g_eval(g: str, x):
    return x * x if g == G_SQUARE else x


def _g_deriv(g: str, x):
    return 2.0 * x if g == G_SQUARE else np.ones_like(x)


def lambda_penalty(m: float, signed_value: float, g: str = G_IDENTITY) -> float:
    """m * g(signed_value) if the sign-adjusted derivative is positive, else 0.

    The inequalities are non-strict, so a derivative sitting exactly on its
    bound carries no penalty.
    """
    if m < 0:
        raise ValueError("penalty magnitude must be nonnegative")
    if g not in (G_IDENTITY, G_SQUARE):
        raise ValueError(f"unknown intensifier {g!r}")
    if signed_value > 0.0:
        return m * float(_g_eval(g, signed_value))
    return 0.0


def mse_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.ndim != 1 or p.shape != t.shape or p.size == 0:
        raise ValueError("predictions and targets must be equal-length nonempty vectors")
    d = t - p
    return float(d @ d) / p.size


def _check_mesh(model: MlpParams, mesh) -> np.ndarray:
    X = np.asarray(mesh, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2 or X.shape[0] == 0:
        raise ValueError("mesh must be a nonempty (M, 2) array of (strike, expiry) points")
    if model.n_inputs != 2:
        raise ValueError("penalty mesh needs a 2-input model (strike, expiry)")
    return X


def _mesh_weights(cfg: PenaltyConfig, n_mesh: int, adaptive_weights) -> np.ndarray:
    if adaptive_weights is None:
        return np.repeat(cfg.magnitudes[:, None], n_mesh, axis=1)
    if not cfg.self_adaptive:
        raise ValueError("adaptive weights require self_adaptive mode")
    w = np.asarray(adaptive_weights, dtype=float)
    if w.shape != (3, n_mesh):
        raise ValueError("adaptive weights must have shape (3, n_mesh)")
    if (w < 0).any():
        raise ValueError("adaptive weights must be nonnegative")
    # effective multiplier is gamma(m) = m^2
    return w * w


class _MeshTerms:
    """Everything the penalty knows at one set of parameters."""

    def __init__(self, model: MlpParams, mesh, cfg: PenaltyConfig, rate: float, adaptive_weights) -> None:
        X = _check_mesh(model, mesh)
        M = X.shape[0]
        tape = derivative_tape(model, X)
        G = tape.first_derivs[-1][:, 0, :]
        S = tape.second_derivs[-1][:, 0, :]
        finite = np.isfinite(G).all(axis=1) & np.isfinite(S).all(axis=1)
        if not finite.all():
            j = int(np.argmax(~finite))
            raise FloatingPointError(
                f"non-finite derivative at mesh point {j} (strike={X[j, 0]!r}, expiry={X[j, 1]!r})"
            )
        mult = _mesh_weights(cfg, M, adaptive_weights)
        g = cfg.g

        x_k = H_K * G[:, 0]
        x_kk = H_KK * S[:, 0]
        x_tau = H_TAU * G[:, 1]
        viol_k = x_k > 0
        viol_kk = x_kk > 0
        viol_tau = x_tau > 0

        lam_k = np.where(viol_k, mult[0] * _g_eval(g, x_k), 0.0)
        lam_kk = np.where(viol_kk, mult[1] * _g_eval(g, x_kk), 0.0)
        lam_tau = np.where(viol_tau, mult[2] * _g_eval(g, x_tau), 0.0)

        gbar = np.zeros((M, 2))
        sbar = np.zeros((M, 2))
        gbar[:, 0] = np.where(viol_k, mult[0] * _g_deriv(g, x_k) * H_K, 0.0) / M
        gbar[:, 1] = np.where(viol_tau, mult[2] * _g_deriv(g, x_tau) * H_TAU, 0.0) / M
        sbar[:, 0] = np.where(viol_kk, mult[1] * _g_deriv(g, x_kk) * H_KK, 0.0) / M

        signed_k = x_k
        n_viol_k = int(viol_k.sum())
        pen_k = float(lam_k.sum()) / M
        if cfg.lower_bound:
            # strike slope may not drop below -e^{-r tau}; dual-delta bound
            x_lb = -(G[:, 0] + np.exp(-rate * X[:, 1]))
            viol_lb = x_lb > 0
            lam_lb = np.where(viol_lb, mult[0] * _g_eval(g, x_lb), 0.0)
            gbar[:, 0] += np.where(viol_lb, -mult[0] * _g_deriv(g, x_lb), 0.0) / M
            pen_k += float(lam_lb.sum()) / M
            n_viol_k += int(viol_lb.sum())
            signed_k = np.where(viol_lb, x_lb, x_k)

        self.pen_k = pen_k
        self.pen_kk = float(lam_kk.sum()) / M
        self.pen_tau = float(lam_tau.sum()) / M
        self.e_penalty = self.pen_k + self.pen_kk + self.pen_tau
        self.counts = (n_viol_k, int(viol_kk.sum()), int(viol_tau.sum()))
        self.adjoints = MeshAdjoints(grad=gbar, second=sbar)
        self.signed = np.stack([signed_k, x_kk, x_tau])
        self.tape = tape


def penalty_loss(
    model: MlpParams,
    mesh,
    cfg: PenaltyConfig,
    rate: float = 0.0,
    adaptive_weights=None,
) -> tuple[float, MeshAdjoints]:
    """Mean no-arbitrage penalty over the mesh, plus adjoints for backprop.

    The adjoints are per-point derivatives of the penalty with respect to the
    network's input gradient and diagonal second derivatives; feed them to
    ``param_gradients`` as the mesh adjoints.
    """
    terms = _MeshTerms(model, mesh, cfg, rate, adaptive_weights)
    return terms.e_penalty, terms.adjoints


def mesh_violations(model: MlpParams, mesh, cfg: PenaltyConfig, rate: float = 0.0) -> np.ndarray:
    """Sign-adjusted derivative values per term, shape (3, M); positive = violated.

    With the lower bound enabled, a point breaking it reports that violation
    in the strike row (the two strike-slope bounds cannot both be broken).
    """
    terms = _MeshTerms(model, mesh, cfg, rate, None)
    return terms.signed


@dataclass(frozen=True)
class CostEval:
    """One cost evaluation carrying everything a training step consumes.

    ``data_adjoint`` is dE_MSE/dPhi per data point; ``mesh_adjoints`` feed
    ``param_gradients``; ``signed`` (3, M) are the sign-adjusted derivative
    values the self-adaptive weight update reads.  The two tapes let the
    backprop pass reuse this evaluation's propagations.
    """

    report: LossReport
    data_adjoint: np.ndarray
    mesh_adjoints: MeshAdjoints
    signed: np.ndarray
    data_tape: ForwardTape
    mesh_tape: ForwardTape


def evaluate_cost(
    model: MlpParams,
    data,
    mesh,
    cfg: PenaltyConfig,
    rate: float = 0.0,
    adaptive_weights=None,
) -> CostEval:
    """Cost report plus the adjoints of both terms, from one propagation each."""
    x, c = _data_arrays(data)
    preds, data_tape = forward(model, x)
    resid = np.asarray(preds, dtype=float) - c
    e_mse = float(resid @ resid) / resid.size
    terms = _MeshTerms(model, mesh, cfg, rate, adaptive_weights)
    report = LossReport(
        e_mse=e_mse,
        e_penalty=terms.e_penalty,
        pen_k=terms.pen_k,
        pen_kk=terms.pen_kk,
        pen_tau=terms.pen_tau,
        n_viol_k=terms.counts[0],
        n_viol_kk=terms.counts[1],
        n_viol_tau=terms.counts[2],
        total=e_mse + terms.e_penalty,
    )
    return CostEval(
        report=report,
        data_adjoint=(2.0 / resid.size) * resid,
        mesh_adjoints=terms.adjoints,
        signed=terms.signed,
        data_tape=data_tape,
        mesh_tape=terms.tape,
    )


def total_cost(
    model: MlpParams,
    data,
    mesh,
    cfg: PenaltyConfig,
    rate: float = 0.0,
    adaptive_weights=None,
) -> LossReport:
    """Full cost report at one set of parameters: MSE plus mesh penalty."""
    return evaluate_cost(model, data, mesh, cfg, rate, adaptive_weights).report


def _data_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(data, "points") and hasattr(data, "premiums"):
        x, c = data.points, data.premiums
    else:
        x, c = data
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0 or c.ndim != 1 or x.shape[0] != c.shape[0]:
        raise ValueError("data must pair a nonempty (N, d) point array with N premiums")
    return x, c


def init_adaptive_weights(cfg: PenaltyConfig, n_mesh: int) -> np.ndarray:
    """Per-mesh-point weights (3, M) starting at the scalar magnitudes."""
    if n_mesh < 1:
        raise ValueError("mesh must be nonempty")
    return np.repeat(cfg.magnitudes[:, None], n_mesh, axis=1)


def self_adaptive_update(weights, signed_values, eta_m: float, g: str = G_IDENTITY) -> np.ndarray:
    """Gradient-ascent step on per-point weights: m += eta * 2m * g(violation).

    Only violated points move. Because the effective multiplier is m^2, the
    ascent direction is 2m * g(violation), which keeps weights nonnegative
    and nondecreasing, and makes m = 0 a fixed point.
    """
    if eta_m < 0:
        raise ValueError("eta_m must be nonnegative")
    w = np.asarray(weights, dtype=float)
    v = np.asarray(signed_values, dtype=float)
    if w.shape != v.shape:
        raise ValueError("weights and signed values must share a shape")
    if (w < 0).any():
        raise ValueError("adaptive weights must be nonnegative")
    bump = np.where(v > 0, _g_eval(g, v), 0.0)
    return w + eta_m * 2.0 * w * bump
