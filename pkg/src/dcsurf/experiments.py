"""Experiment harness: metric rows, risk-profile slices, condition matrices, benchmarks.

The matrix sweeps SABR (nu, rho) conditions with paired seeds, training a
penalized and an unpenalized model per cell and scoring both in premium and
implied-vol space. Cross-model penalty comparisons always score through one
shared multiplier configuration so an unpenalized run's surface is judged by
the same yardstick; its own training history would report zero by
construction.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraints import H_K, H_KK, H_TAU, PenaltyConfig, _g_eval, penalty_loss
from .datasets import QuoteGrid, penalty_mesh, synth_in_sample, synth_out_sample
from .network import MlpParams, forward, forward_derivatives
from .sabr import SabrParams, black_call, implied_vol_black_batch, sabr_iv
from .training import TrainConfig, TrainingError, TrainReport, train

MODEL_TAGS = ("mlp", "dcnn")
SAMPLE_TAGS = ("in", "out")

# the nine published (nu, rho) conditions, in table order
CONDITIONS = (
    (0.0, 0.0),
    (0.2, 0.0),
    (0.4, 0.0),
    (0.6, 0.0),
    (0.8, 0.0),
    (0.6, -0.8),
    (0.6, -0.4),
    (0.6, 0.4),
    (0.6, 0.8),
)

DEFAULT_TAU_SLICES = (0.5, 1.0, 2.0, 3.0, 5.0)

BASE_SABR = SabrParams(alpha=0.2, beta=1.0, rho=0.0, nu=0.0, f=1.0, r=0.04)

_FMT = "%.17g"

MATRIX_FIELDS = (
    "condition",
    "model",
    "sample",
    "e_mse",
    "e_penalty",
    "e_mse_sigma",
    "invalid_iv",
    "seed",
    "status",
)

BENCH_FIELDS = ("arch", "activation", "n_params", "mode", "repeat", "seconds")


@dataclass(frozen=True)
class MetricsRow:
    """One evaluation of one trained (or analytic) surface on one sample set.

    ``e_mse_sigma`` is None for in-sample rows, where the vol-space metric is
    not computed. A failed run keeps its identifying fields and carries the
    failure text in ``status``; its metric fields are NaN.
    """

    condition: str
    model: str
    sample: str
    e_mse: float
    e_penalty: float
    e_mse_sigma: float | None
    invalid_iv: int
    seed: int
    status: str = "ok"

    def __post_init__(self) -> None:
        if self.model not in MODEL_TAGS:
            raise ValueError(f"model must be one of {MODEL_TAGS}")
        if self.sample not in SAMPLE_TAGS:
            raise ValueError(f"sample must be one of {SAMPLE_TAGS}")
        if self.invalid_iv < 0:
            raise ValueError("invalid_iv count must be nonnegative")
        if self.status == "ok":
            for name in ("e_mse", "e_penalty"):
                v = getattr(self, name)
                if not np.isfinite(v) or v < 0:
                    raise ValueError(f"{name} must be a nonnegative real")
            if self.e_mse_sigma is not None and (
                not np.isfinite(self.e_mse_sigma) or self.e_mse_sigma < 0
            ):
                raise ValueError("e_mse_sigma must be a nonnegative real")


@dataclass(frozen=True)
class RiskProfile:
    """Derivative slices of a premium surface at fixed expiries.

    Row i of each 2-D array is the tau_slices[i] slice over ``moneyness``.
    The masks flag where the corresponding no-arbitrage sign test fails:
    dC/dM > 0, d2C/dM2 < 0, dC/dtau < 0.
    """

    tau_slices: tuple[float, ...]
    moneyness: np.ndarray
    premium: np.ndarray
    dual_delta: np.ndarray
    dual_gamma: np.ndarray
    dual_theta: np.ndarray
    viol_k: np.ndarray
    viol_kk: np.ndarray
    viol_tau: np.ndarray

    def __post_init__(self) -> None:
        shape = (len(self.tau_slices), self.moneyness.shape[0])
        arrays = ("premium", "dual_delta", "dual_gamma", "dual_theta", "viol_k", "viol_kk", "viol_tau")
        for name in arrays:
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")


class OracleSurface:
    """The generating SABR pricer exposed through the trained-model interface.

    Premiums reproduce the synthetic generator bit for bit; derivatives come
    from central finite differences (one-sided at the domain edges), which is
    plenty for sign tests and reference curves away from the tau=0 kink.
    """

    def __init__(self, p: SabrParams, step: float = 1e-5) -> None:
        self.sabr = p
        self.step = float(step)

    def predict(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        m, t = X[:, 0], X[:, 1]
        p = self.sabr
        out = np.where(t <= 0.0, np.maximum(1.0 - m, 0.0), np.exp(-p.r * np.maximum(t, 0.0)))
        interior = (m > 0) & (t > 0)
        if interior.any():
            sig = sabr_iv(m[interior] * p.f, t[interior], p)
            out[interior] = black_call(p.f, m[interior] * p.f, p.r, t[interior], sig) / p.f
        return out

    def derivatives(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        X = np.asarray(x, dtype=float)
        h = self.step
        value = self.predict(X)
        grad = np.empty_like(X)
        second = np.empty_like(X)
        for j in range(2):
            lo = X.copy()
            hi = X.copy()
            # step inward where a central stencil would leave the domain
            room = X[:, j] >= h
            lo[:, j] = np.where(room, X[:, j] - h, X[:, j])
            hi[:, j] = X[:, j] + h
            f_lo, f_hi = self.predict(lo), self.predict(hi)
            grad[:, j] = (f_hi - f_lo) / (hi[:, j] - lo[:, j])
            second[:, j] = np.where(
                room,
                (f_hi - 2.0 * value + f_lo) / h**2,
                0.0,
            )
        return value, grad, second


def _surface_eval(model, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(model, MlpParams):
        return forward_derivatives(model, x)
    return model.derivatives(x)


def _surface_predict(model, x) -> np.ndarray:
    if isinstance(model, MlpParams):
        preds, _ = forward(model, x)
        return np.atleast_1d(np.asarray(preds, dtype=float))
    return model.predict(x)


def _oracle_penalty(model: OracleSurface, mesh, cfg: PenaltyConfig, rate: float) -> float:
    X = np.asarray(mesh, dtype=float)
    _, grad, second = model.derivatives(X)
    mags = cfg.magnitudes
    terms = 0.0
    for mult, signed in (
        (mags[0], H_K * grad[:, 0]),
        (mags[1], H_KK * second[:, 0]),
        (mags[2], H_TAU * grad[:, 1]),
    ):
        lam = np.where(signed > 0, mult * _g_eval(cfg.g, signed), 0.0)
        terms += float(lam.sum())
    if cfg.lower_bound:
        signed = -(grad[:, 0] + np.exp(-rate * X[:, 1]))
        lam = np.where(signed > 0, mags[0] * _g_eval(cfg.g, signed), 0.0)
        terms += float(lam.sum())
    return terms / X.shape[0]


def sigma_domain(truth: QuoteGrid, rate: float | None = None, vol_tol: float = 1e-7) -> np.ndarray:
    """Mask of grid points whose vols are recoverable from double premiums.

    A premium pins its implied vol only up to noise/vega, where the noise
    floor is one ulp of the premium or the inverter's reprice tolerance,
    whichever is larger. The mask keeps interior points with known
    generating vols whose induced vol error stays below ``vol_tol``.
    """
    r = rate if rate is not None else (truth.sabr.r if truth.sabr is not None else 0.0)
    base = (truth.moneyness > 0) & (truth.tau > 0) & np.isfinite(truth.sigma)
    mask = np.zeros(len(truth), dtype=bool)
    if not base.any():
        return mask
    m, t, sig = truth.moneyness[base], truth.tau[base], truth.sigma[base]
    root_t = np.sqrt(t)
    d1 = (-np.log(m) + 0.5 * sig * sig * t) / (sig * root_t)
    vega = np.exp(-r * t) * np.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi) * root_t
    noise = np.maximum(np.spacing(truth.premiums[base]), 1e-10)
    with np.errstate(divide="ignore", over="ignore"):
        mask[base] = noise < vol_tol * vega
    return mask


def eval_metrics(
    model,
    truth: QuoteGrid,
    mesh,
    cfg: PenaltyConfig,
    *,
    sample: str = "out",
    condition: str = "",
    seed: int = 0,
    model_tag: str = "dcnn",
    rate: float | None = None,
) -> MetricsRow:
    """Score one surface against a truth grid.

    Premium MSE runs over every grid point. The penalty is evaluated on the
    mesh with ``cfg``'s multipliers regardless of how the model was trained.
    For out-of-sample rows each predicted premium is inverted to an implied
    vol and compared against the grid's generating vols; points whose
    inversion fails are excluded from the mean and counted, and the grid's
    edge rows (tau=0 or moneyness=0, where no vol is defined) do not enter
    either number.

    The vol comparison is restricted to the grid's conditioned sigma-domain:
    points where one premium ulp (or the inverter's reprice tolerance) moves
    the implied vol by less than 1e-7. Outside it, deep in the money or far
    out, the premium-to-vol map is not invertible at double precision and
    any recovered vol is noise for every model alike, so those points enter
    neither the mean nor the invalid count.
    """
    if sample not in SAMPLE_TAGS:
        raise ValueError(f"sample must be one of {SAMPLE_TAGS}")
    r = rate if rate is not None else (truth.sabr.r if truth.sabr is not None else 0.0)

    preds = _surface_predict(model, truth.points)
    resid = preds - truth.premiums
    e_mse = float(resid @ resid) / resid.size

    if isinstance(model, MlpParams):
        e_penalty, _ = penalty_loss(model, mesh, dataclasses.replace(cfg, self_adaptive=False), rate=r)
    else:
        e_penalty = _oracle_penalty(model, mesh, dataclasses.replace(cfg, self_adaptive=False), r)

    e_mse_sigma = None
    invalid = 0
    if sample == "out":
        f = truth.sabr.f if truth.sabr is not None else 1.0
        usable = sigma_domain(truth, rate=r)
        # grids without generating vols (market quotes) skip the vol metric
        if usable.any():
            m, t, sig_true = truth.moneyness[usable], truth.tau[usable], truth.sigma[usable]
            sig_pred, reasons = implied_vol_black_batch(preds[usable] * f, f, m * f, r, t)
            ok = np.array([why is None for why in reasons])
            invalid = int((~ok).sum())
            if ok.any():
                d = sig_pred[ok] - sig_true[ok]
                e_mse_sigma = float(d @ d) / d.size

    return MetricsRow(
        condition=condition,
        model=model_tag,
        sample=sample,
        e_mse=e_mse,
        e_penalty=e_penalty,
        e_mse_sigma=e_mse_sigma,
        invalid_iv=invalid,
        seed=seed,
    )


def risk_profiles(
    model,
    tau_slices: tuple[float, ...] = DEFAULT_TAU_SLICES,
    m_grid=None,
) -> RiskProfile:
    """Dual delta, dual gamma, and dual theta curves at fixed expiries."""
    if len(tau_slices) == 0:
        raise ValueError("need at least one expiry slice")
    m = np.linspace(0.0, 2.5, 101) if m_grid is None else np.asarray(m_grid, dtype=float)
    if m.ndim != 1 or m.size == 0:
        raise ValueError("moneyness grid must be a nonempty vector")

    n_t, n_m = len(tau_slices), m.size
    premium = np.empty((n_t, n_m))
    delta = np.empty((n_t, n_m))
    gamma = np.empty((n_t, n_m))
    theta = np.empty((n_t, n_m))
    for i, t in enumerate(tau_slices):
        x = np.column_stack([m, np.full(n_m, float(t))])
        value, grad, second = _surface_eval(model, x)
        premium[i] = np.asarray(value, dtype=float).reshape(n_m)
        delta[i] = grad[:, 0]
        gamma[i] = second[:, 0]
        theta[i] = grad[:, 1]

    return RiskProfile(
        tau_slices=tuple(float(t) for t in tau_slices),
        moneyness=m,
        premium=premium,
        dual_delta=delta,
        dual_gamma=gamma,
        dual_theta=theta,
        viol_k=delta > 0,
        viol_kk=gamma < 0,
        viol_tau=theta < 0,
    )


def condition_tag(nu: float, rho: float) -> str:
    return f"nu={nu:g},rho={rho:g}"


def _strip_penalty(cfg: TrainConfig) -> TrainConfig:
    plain = PenaltyConfig(m_k=0.0, m_kk=0.0, m_tau=0.0, g=cfg.penalty.g, lower_bound=cfg.penalty.lower_bound)
    return dataclasses.replace(cfg, penalty=plain)


def _run_cell(args) -> list[MetricsRow]:
    nu, rho, seed, cfg, base = args
    tag = condition_tag(nu, rho)
    p = dataclasses.replace(base, nu=float(nu), rho=float(rho))
    train_grid = synth_in_sample(p)
    truth_grid = synth_out_sample(p)
    mesh = penalty_mesh()
    scoring = dataclasses.replace(cfg.penalty, self_adaptive=False, eta_m=0.0)

    rows: list[MetricsRow] = []
    for mode in MODEL_TAGS:
        run_cfg = dataclasses.replace(
            _strip_penalty(cfg) if mode == "mlp" else cfg, seed=int(seed)
        )
        try:
            report = train(train_grid, mesh, run_cfg)
        except TrainingError as exc:
            for sample in SAMPLE_TAGS:
                rows.append(
                    MetricsRow(
                        condition=tag,
                        model=mode,
                        sample=sample,
                        e_mse=float("nan"),
                        e_penalty=float("nan"),
                        e_mse_sigma=None,
                        invalid_iv=0,
                        seed=int(seed),
                        status=f"error: {exc}",
                    )
                )
            continue
        for sample, grid in (("in", train_grid), ("out", truth_grid)):
            rows.append(
                eval_metrics(
                    report.params,
                    grid,
                    mesh,
                    scoring,
                    sample=sample,
                    condition=tag,
                    seed=int(seed),
                    model_tag=mode,
                )
            )
    return rows


def run_matrix(
    conditions=CONDITIONS,
    seeds=(0, 1, 2),
    cfg: TrainConfig | None = None,
    base: SabrParams = BASE_SABR,
    jobs: int = 1,
) -> list[MetricsRow]:
    """Train and score both model modes over (nu, rho) x seeds.

    Seeds are paired: the same seed initializes the penalized and the plain
    model identically. A failed cell contributes error-status rows and the
    sweep continues. Output order is deterministic regardless of ``jobs``.
    """
    conditions = list(conditions)
    seeds = list(seeds)
    if not conditions or not seeds:
        raise ValueError("conditions and seeds must be nonempty")
    cfg = cfg or TrainConfig()

    cells = [(nu, rho, seed, cfg, base) for nu, rho in conditions for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    return [row for cell_rows in results for row in cell_rows]


def aggregate_matrix(rows: list[MetricsRow]) -> list[dict]:
    """Per (condition, model, sample): mean, std, median over the ok seeds."""
    groups: dict[tuple[str, str, str], list[MetricsRow]] = {}
    order: list[tuple[str, str, str]] = []
    for row in rows:
        key = (row.condition, row.model, row.sample)
        if key not in groups:
            groups[key] = []
            order.append(key)
        if row.status == "ok":
            groups[key].append(row)

    out = []
    for key in order:
        members = groups[key]
        entry: dict = {
            "condition": key[0],
            "model": key[1],
            "sample": key[2],
            "n": len(members),
        }
        for metric in ("e_mse", "e_penalty", "e_mse_sigma"):
            values = [getattr(r, metric) for r in members if getattr(r, metric) is not None]
            if values:
                entry[f"{metric}_mean"] = statistics.fmean(values)
                entry[f"{metric}_std"] = statistics.pstdev(values)
                entry[f"{metric}_median"] = statistics.median(values)
            else:
                entry[f"{metric}_mean"] = entry[f"{metric}_std"] = entry[f"{metric}_median"] = None
        out.append(entry)
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return _FMT % value
    return str(value)


def matrix_csv(rows: list[MetricsRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MATRIX_FIELDS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, name)) for name in MATRIX_FIELDS])


def aggregate_csv(rows: list[MetricsRow], path) -> None:
    agg = aggregate_matrix(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["condition", "model", "sample", "n"]
    for metric in ("e_mse", "e_penalty", "e_mse_sigma"):
        fields += [f"{metric}_mean", f"{metric}_std", f"{metric}_median"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for entry in agg:
            writer.writerow([_fmt(entry[name]) for name in fields])


def load_matrix_csv(path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                MetricsRow(
                    condition=rec["condition"],
                    model=rec["model"],
                    sample=rec["sample"],
                    e_mse=float(rec["e_mse"]),
                    e_penalty=float(rec["e_penalty"]),
                    e_mse_sigma=float(rec["e_mse_sigma"]) if rec["e_mse_sigma"] else None,
                    invalid_iv=int(rec["invalid_iv"]),
                    seed=int(rec["seed"]),
                    status=rec["status"],
                )
            )
    return rows


def profile_csv(profile: RiskProfile, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["tau", "moneyness", "premium", "dual_delta", "dual_gamma", "dual_theta", "viol_k", "viol_kk", "viol_tau"]
        )
        for i, t in enumerate(profile.tau_slices):
            for j in range(profile.moneyness.size):
                writer.writerow(
                    [
                        _FMT % t,
                        _FMT % profile.moneyness[j],
                        _FMT % profile.premium[i, j],
                        _FMT % profile.dual_delta[i, j],
                        _FMT % profile.dual_gamma[i, j],
                        _FMT % profile.dual_theta[i, j],
                        int(profile.viol_k[i, j]),
                        int(profile.viol_kk[i, j]),
                        int(profile.viol_tau[i, j]),
                    ]
                )


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchRow:
    arch: tuple[int, ...]
    activation: str
    n_params: int
    mode: str
    repeat: int
    seconds: float


def arch_param_count(arch) -> int:
    arch = list(arch)
    weights = sum(arch[i] * arch[i + 1] for i in range(len(arch) - 1))
    biases = sum(arch[1:])
    return weights + biases


def bench(
    archs=((2, 16, 16, 1),),
    activations=("softplus",),
    repeats: int = 3,
    epochs: int = 200,
    seed: int = 0,
    base: SabrParams = dataclasses.replace(BASE_SABR, nu=0.6, rho=-0.4),
) -> list[BenchRow]:
    """Wall-clock comparison of penalized vs plain training.

    Every (arch, activation, mode) cell trains ``repeats`` times on the same
    synthetic workload; use ``bench_summary`` for means and the mode ratio.
    """
    if repeats < 1 or epochs < 1:
        raise ValueError("repeats and epochs must be positive")
    grid = synth_in_sample(base)
    mesh = penalty_mesh()
    rows: list[BenchRow] = []
    for arch in archs:
        for act in activations:
            cfg = TrainConfig(epochs=epochs, seed=seed, architecture=tuple(arch), activation=act)
            n_par = arch_param_count(arch)
            for mode in MODEL_TAGS:
                run_cfg = _strip_penalty(cfg) if mode == "mlp" else cfg
                for rep in range(repeats):
                    t0 = time.perf_counter()
                    train(grid, mesh, run_cfg)
                    rows.append(
                        BenchRow(
                            arch=tuple(arch),
                            activation=act,
                            n_params=n_par,
                            mode=mode,
                            repeat=rep,
                            seconds=time.perf_counter() - t0,
                        )
                    )
    return rows


def bench_summary(rows: list[BenchRow]) -> list[dict]:
    """Mean/std per cell plus the dcnn/mlp time ratio."""
    cells: dict[tuple[tuple[int, ...], str], dict[str, list[float]]] = {}
    order = []
    for row in rows:
        key = (row.arch, row.activation)
        if key not in cells:
            cells[key] = {m: [] for m in MODEL_TAGS}
            order.append(key)
        cells[key][row.mode].append(row.seconds)

    out = []
    for key in order:
        times = cells[key]
        entry = {
            "arch": "-".join(str(n) for n in key[0]),
            "activation": key[1],
            "n_params": arch_param_count(key[0]),
        }
        for mode in MODEL_TAGS:
            vals = times[mode]
            entry[f"{mode}_mean_s"] = statistics.fmean(vals) if vals else None
            entry[f"{mode}_std_s"] = statistics.pstdev(vals) if vals else None
        if times["mlp"] and times["dcnn"]:
            entry["ratio"] = statistics.fmean(times["dcnn"]) / statistics.fmean(times["mlp"])
        else:
            entry["ratio"] = None
        out.append(entry)
    return out


def bench_csv(rows: list[BenchRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    "-".join(str(n) for n in row.arch),
                    row.activation,
                    row.n_params,
                    row.mode,
                    row.repeat,
                    _FMT % row.seconds,
                ]
            )
        writer.writerow([])
        summary = bench_summary(rows)
        writer.writerow(["arch", "activation", "n_params", "mlp_mean_s", "dcnn_mean_s", "ratio"])
        for entry in summary:
            writer.writerow(
                [
                    entry["arch"],
                    entry["activation"],
                    entry["n_params"],
                    _fmt(entry["mlp_mean_s"]),
                    _fmt(entry["dcnn_mean_s"]),
                    _fmt(entry["ratio"]),
                ]
            )
