"""Synthetic premium grids, boundary augmentation, and CSV quote files.

Premiums are stored forward-normalized (C/F) against coordinates
(moneyness, tau), which makes the no-arbitrage bounds scale-free. Boundary
values are analytic: (1 - moneyness)+ at tau = 0 and e^{-r tau} at zero
strike.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .sabr import SabrParams, black_call, sabr_iv

log = logging.getLogger(__name__)

SYNTHETIC = "synthetic-sabr"
MARKET_CSV = "market-csv"

_CSV_FIELDS = ("moneyness", "tau", "premium")


@dataclass(frozen=True)
class QuotePoint:
    moneyness: float
    tau: float
    premium: float
    is_boundary: bool = False
    weight: float = 1.0


@dataclass(frozen=True)
class GridSpec:
    """Axes of a rectangular (moneyness, tau) grid plus a boundary budget."""

    moneyness: tuple[float, ...]
    tau: tuple[float, ...]
    boundary_count: int = 0

    def __post_init__(self) -> None:
        for name, axis in (("moneyness", self.moneyness), ("tau", self.tau)):
            arr = np.asarray(axis, dtype=float)
            if arr.size == 0:
                raise ValueError(f"{name} axis is empty")
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise ValueError(f"{name} axis must be finite and nonnegative")
            if arr.size > 1 and not (np.diff(arr) > 0).all():
                raise ValueError(f"{name} axis must be strictly increasing")
        if self.boundary_count < 0:
            raise ValueError("boundary_count must be nonnegative")


@dataclass(frozen=True, eq=False)
class QuoteGrid:
    """Array-backed quote collection; index or iterate for QuotePoint views."""

    moneyness: np.ndarray
    tau: np.ndarray
    premiums: np.ndarray
    is_boundary: np.ndarray
    weights: np.ndarray
    sigma: np.ndarray  # generating vols where known, NaN elsewhere
    provenance: str = SYNTHETIC
    sabr: SabrParams | None = None

    def __post_init__(self) -> None:
        n = self.moneyness.shape[0]
        if n == 0:
            raise ValueError("quote grid is empty")
        for name in ("moneyness", "tau", "premiums", "is_boundary", "weights", "sigma"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must be a length-{n} vector")
        for name in ("moneyness", "tau", "premiums", "weights"):
            arr = getattr(self, name)
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise ValueError(f"{name} values must be finite and nonnegative")
        if (self.premiums > 1.0).any():
            raise ValueError("normalized premiums cannot exceed the forward")
        if self.sabr is not None:
            bound = np.exp(-self.sabr.r * self.tau)
            if (self.premiums > bound + 1e-12).any():
                raise ValueError("premium above the discounted forward bound")
        coords = np.column_stack([self.moneyness, self.tau])
        if np.unique(coords, axis=0).shape[0] != n:
            raise ValueError("duplicate (moneyness, tau) coordinates")

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.moneyness, self.tau])

    def __len__(self) -> int:
        return self.moneyness.shape[0]

    def __getitem__(self, i: int) -> QuotePoint:
        return QuotePoint(
            moneyness=float(self.moneyness[i]),
            tau=float(self.tau[i]),
            premium=float(self.premiums[i]),
            is_boundary=bool(self.is_boundary[i]),
            weight=float(self.weights[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def in_sample_spec() -> GridSpec:
    """Sparse calibration grid: 25 x 7 interior points plus 200 boundary."""
    return GridSpec(
        moneyness=tuple(np.linspace(0.1, 2.5, 25)),
        tau=(0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0),
        boundary_count=200,
    )


def mesh_spec() -> GridSpec:
    """Penalty mesh axes: 26 x 11 = 286 points over [0, 2.5] x [0, 5]."""
    return GridSpec(
        moneyness=tuple(np.linspace(0.0, 2.5, 26)),
        tau=tuple(np.linspace(0.0, 5.0, 11)),
    )


def penalty_mesh(spec: GridSpec | None = None) -> np.ndarray:
    """Rectangular (M, 2) mesh, tau-major with moneyness varying fastest."""
    spec = spec or mesh_spec()
    m = np.asarray(spec.moneyness, dtype=float)
    t = np.asarray(spec.tau, dtype=float)
    return np.column_stack([np.tile(m, t.size), np.repeat(t, m.size)])


def _boundary_points(m_max: float, tau_max: float, n_tau0: int, n_k0: int, r: float):
    # tau = 0 edge carries the payoff (1 - M)+; the zero-strike edge carries
    # e^{-r tau} and skips tau = 0, which already belongs to the first edge.
    m_edge = np.linspace(0.0, m_max, n_tau0) if n_tau0 else np.empty(0)
    t_edge = np.linspace(0.0, tau_max, n_k0 + 1)[1:] if n_k0 else np.empty(0)
    moneyness = np.concatenate([m_edge, np.zeros(t_edge.size)])
    tau = np.concatenate([np.zeros(m_edge.size), t_edge])
    premiums = np.concatenate([np.maximum(1.0 - m_edge, 0.0), np.exp(-r * t_edge)])
    return moneyness, tau, premiums


def synth_in_sample(p: SabrParams, spec: GridSpec | None = None) -> QuoteGrid:
    """Sparse SABR-priced grid with analytic boundary points appended."""
    spec = spec or in_sample_spec()
    m_ax = np.asarray(spec.moneyness, dtype=float)
    t_ax = np.asarray(spec.tau, dtype=float)
    if (m_ax <= 0).any() or (t_ax <= 0).any():
        raise ValueError("interior axes must be strictly positive; edges come from the boundary budget")
    m = np.tile(m_ax, t_ax.size)
    t = np.repeat(t_ax, m_ax.size)
    k = m * p.f
    sig = sabr_iv(k, t, p)
    prem = black_call(p.f, k, p.r, t, sig) / p.f

    n_k0 = spec.boundary_count // 2
    n_tau0 = spec.boundary_count - n_k0
    bm, bt, bc = _boundary_points(float(m_ax.max()), float(t_ax.max()), n_tau0, n_k0, p.r)

    n_int, n_bnd = m.size, bm.size
    return QuoteGrid(
        moneyness=np.concatenate([m, bm]),
        tau=np.concatenate([t, bt]),
        premiums=np.concatenate([prem, bc]),
        is_boundary=np.concatenate([np.zeros(n_int, dtype=bool), np.ones(n_bnd, dtype=bool)]),
        weights=np.ones(n_int + n_bnd),
        sigma=np.concatenate([sig, np.full(n_bnd, np.nan)]),
        provenance=SYNTHETIC,
        sabr=p,
    )


def synth_out_sample(
    p: SabrParams,
    n_moneyness: int = 126,
    n_tau: int = 101,
    m_max: float = 2.5,
    tau_max: float = 5.0,
) -> QuoteGrid:
    """Dense evaluation grid with ground-truth vols stored at interior points."""
    if n_moneyness < 2 or n_tau < 2:
        raise ValueError("dense grid needs at least two points per axis")
    m_ax = np.linspace(0.0, m_max, n_moneyness)
    t_ax = np.linspace(0.0, tau_max, n_tau)
    m = np.tile(m_ax, t_ax.size)
    t = np.repeat(t_ax, m_ax.size)

    interior = (m > 0) & (t > 0)
    prem = np.where(t == 0.0, np.maximum(1.0 - m, 0.0), np.exp(-p.r * t))
    sig = np.full(m.size, np.nan)
    sig[interior] = sabr_iv(m[interior] * p.f, t[interior], p)
    prem[interior] = black_call(p.f, m[interior] * p.f, p.r, t[interior], sig[interior]) / p.f

    return QuoteGrid(
        moneyness=m,
        tau=t,
        premiums=prem,
        is_boundary=~interior,
        weights=np.ones(m.size),
        sigma=sig,
        provenance=SYNTHETIC,
        sabr=p,
    )


def boundary_augment(grid: QuoteGrid, counts: tuple[int, int], r: float) -> QuoteGrid:
    """Append analytic boundary points, sized to the grid's own extent."""
    n_tau0, n_k0 = counts
    if n_tau0 < 0 or n_k0 < 0:
        raise ValueError("boundary counts must be nonnegative")
    if n_tau0 == 0 and n_k0 == 0:
        return grid
    bm, bt, bc = _boundary_points(float(grid.moneyness.max()), float(grid.tau.max()), n_tau0, n_k0, r)
    n_bnd = bm.size
    return QuoteGrid(
        moneyness=np.concatenate([grid.moneyness, bm]),
        tau=np.concatenate([grid.tau, bt]),
        premiums=np.concatenate([grid.premiums, bc]),
        is_boundary=np.concatenate([grid.is_boundary, np.ones(n_bnd, dtype=bool)]),
        weights=np.concatenate([grid.weights, np.ones(n_bnd)]),
        sigma=np.concatenate([grid.sigma, np.full(n_bnd, np.nan)]),
        provenance=grid.provenance,
        sabr=grid.sabr,
    )


def market_style_grid(
    reference: QuoteGrid,
    p: SabrParams,
    boundary_counts: tuple[int, int] = (100, 100),
) -> QuoteGrid:
    """SABR premiums at the reference's exact locations, plus boundary points."""
    m = reference.moneyness.copy()
    t = reference.tau.copy()
    interior = (m > 0) & (t > 0)
    prem = np.where(t == 0.0, np.maximum(1.0 - m, 0.0), np.exp(-p.r * t))
    sig = np.full(m.size, np.nan)
    sig[interior] = sabr_iv(m[interior] * p.f, t[interior], p)
    prem[interior] = black_call(p.f, m[interior] * p.f, p.r, t[interior], sig[interior]) / p.f
    grid = QuoteGrid(
        moneyness=m,
        tau=t,
        premiums=prem,
        is_boundary=~interior,
        weights=reference.weights.copy(),
        sigma=sig,
        provenance=SYNTHETIC,
        sabr=p,
    )
    return boundary_augment(grid, boundary_counts, p.r)


def write_quotes_csv(grid: QuoteGrid, path) -> None:
    """Emit `moneyness,tau,premium,weight` rows at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS + ("weight",))
        for i in range(len(grid)):
            writer.writerow(
                "%.17g" % v
                for v in (grid.moneyness[i], grid.tau[i], grid.premiums[i], grid.weights[i])
            )


def load_quotes_csv(path) -> QuoteGrid:
    """Read quotes; duplicate coordinates are averaged with a logged count."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = tuple(h.strip() for h in header)
        if header not in (_CSV_FIELDS, _CSV_FIELDS + ("weight",)):
            raise ValueError(f"{path}: expected header moneyness,tau,premium[,weight]")
        has_weight = len(header) == 4

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric field") from None
            if not all(np.isfinite(v) and v >= 0 for v in vals):
                raise ValueError(f"{path}: line {lineno}: values must be finite and nonnegative")
            rows.append(vals if has_weight else vals + [1.0])
    if not rows:
        raise ValueError(f"{path}: no data rows")

    merged: dict[tuple[float, float], list[list[float]]] = {}
    order: list[tuple[float, float]] = []
    for m, t, c, w in rows:
        key = (m, t)
        if key not in merged:
            merged[key] = []
            order.append(key)
        merged[key].append([c, w])
    n_extra = len(rows) - len(merged)
    if n_extra:
        log.warning("%s: averaged %d duplicate coordinate rows", path, n_extra)

    m = np.array([k[0] for k in order])
    t = np.array([k[1] for k in order])
    prem = np.array([np.mean([cw[0] for cw in merged[k]]) for k in order])
    w = np.array([np.mean([cw[1] for cw in merged[k]]) for k in order])
    return QuoteGrid(
        moneyness=m,
        tau=t,
        premiums=prem,
        is_boundary=(m == 0.0) | (t == 0.0),
        weights=w,
        sigma=np.full(m.size, np.nan),
        provenance=MARKET_CSV,
        sabr=None,
    )


def grid_manifest(grid: QuoteGrid, spec: GridSpec | None = None, seed: int | None = None) -> dict:
    """JSON-ready provenance record written alongside generated CSV files."""
    manifest: dict = {
        "provenance": grid.provenance,
        "n_points": len(grid),
        "n_boundary": int(grid.is_boundary.sum()),
        "seed": seed,
    }
    if grid.sabr is not None:
        s = grid.sabr
        manifest["sabr"] = {
            "alpha": s.alpha, "beta": s.beta, "rho": s.rho, "nu": s.nu,
            "f": s.f, "r": s.r, "q": s.q,
        }
    if spec is not None:
        manifest["grid"] = {
            "moneyness": list(spec.moneyness),
            "tau": list(spec.tau),
            "boundary_count": spec.boundary_count,
        }
    return manifest
