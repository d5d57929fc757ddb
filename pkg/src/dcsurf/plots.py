"""Direct SVG emission for the standard diagnostic figures.

No plotting library: each figure is a few hundred bytes of hand-built SVG,
so outputs are byte-deterministic and the package carries no graphics
dependency. CSV files remain the authoritative record; these are visual
aids only.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 400
_MARGIN = dict(left=64, right=16, top=28, bottom=44)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class _Panel:
    """One cartesian viewport inside an SVG: data-to-pixel mapping + marks."""

    def __init__(self, x0, y0, width, height, xlim, ylim, logy=False):
        self.x0, self.y0 = x0, y0
        self.width, self.height = width, height
        self.logy = logy
        self.xmin, self.xmax = xlim
        self.ymin, self.ymax = ylim
        if logy:
            self.ymin, self.ymax = math.log10(self.ymin), math.log10(self.ymax)
        if self.xmax <= self.xmin:
            self.xmax = self.xmin + 1.0
        if self.ymax <= self.ymin:
            self.ymax = self.ymin + 1.0
        self.marks: list[str] = []

    def px(self, x: float) -> float:
        return self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.width

    def py(self, y: float) -> float:
        if self.logy:
            y = math.log10(max(y, 1e-300))
        return self.y0 + self.height - (y - self.ymin) / (self.ymax - self.ymin) * self.height

    def polyline(self, xs, ys, color: str, width: float = 1.5) -> None:
        pts = " ".join(
            f"{_fmt(self.px(float(x)))},{_fmt(self.py(float(y))) }"
            for x, y in zip(xs, ys)
            if math.isfinite(float(x)) and math.isfinite(float(y)) and (not self.logy or y > 0)
        )
        if pts:
            self.marks.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'
            )

    def dots(self, xs, ys, color: str, radius: float = 2.5) -> None:
        for x, y in zip(xs, ys):
            if math.isfinite(float(x)) and math.isfinite(float(y)):
                self.marks.append(
                    f'<circle cx="{_fmt(self.px(float(x)))}" cy="{_fmt(self.py(float(y)))}" '
                    f'r="{radius}" fill="{color}"/>'
                )

    def frame(self, xlabel: str, ylabel: str, title: str) -> list[str]:
        x1, y1 = self.x0 + self.width, self.y0 + self.height
        out = [
            f'<rect x="{self.x0}" y="{self.y0}" width="{self.width}" height="{self.height}" '
            'fill="none" stroke="#888" stroke-width="1"/>'
        ]
        for frac in (0.0, 0.5, 1.0):
            xv = self.xmin + frac * (self.xmax - self.xmin)
            yv = self.ymin + frac * (self.ymax - self.ymin)
            xpix = self.x0 + frac * self.width
            ypix = y1 - frac * self.height
            xlab = _fmt(xv)
            ylab = f"1e{_fmt(yv)}" if self.logy else _fmt(yv)
            out.append(
                f'<text x="{_fmt(xpix)}" y="{y1 + 16}" font-size="10" text-anchor="middle">{xlab}</text>'
            )
            out.append(
                f'<text x="{self.x0 - 6}" y="{_fmt(ypix + 3)}" font-size="10" text-anchor="end">{ylab}</text>'
            )
        out.append(
            f'<text x="{_fmt(self.x0 + self.width / 2)}" y="{y1 + 32}" font-size="11" '
            f'text-anchor="middle">{xlabel}</text>'
        )
        out.append(
            f'<text x="14" y="{_fmt(self.y0 + self.height / 2)}" font-size="11" text-anchor="middle" '
            f'transform="rotate(-90 14 {_fmt(self.y0 + self.height / 2)})">{ylabel}</text>'
        )
        if title:
            out.append(
                f'<text x="{_fmt(self.x0 + self.width / 2)}" y="{self.y0 - 8}" font-size="12" '
                f'font-weight="bold" text-anchor="middle">{title}</text>'
            )
        return out + self.marks


def _document(body: list[str], width=_W, height=_H) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">'
    )
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"])


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")


def _limits(values, pad=0.05) -> tuple[float, float]:
    arr = np.asarray([v for v in np.ravel(values) if math.isfinite(float(v))], dtype=float)
    if arr.size == 0:
        return 0.0, 1.0
    lo, hi = float(arr.min()), float(arr.max())
    span = (hi - lo) or max(abs(hi), 1.0)
    return lo - pad * span, hi + pad * span


def _log_limits(values) -> tuple[float, float]:
    arr = np.asarray([v for v in np.ravel(values) if math.isfinite(float(v)) and v > 0], dtype=float)
    if arr.size == 0:
        return 1e-8, 1.0
    return float(arr.min()) * 0.5, float(arr.max()) * 2.0


def line_plot(
    path,
    series: dict[str, tuple],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
) -> None:
    """One panel, one polyline per named series, legend in the top right."""
    all_x = np.concatenate([np.ravel(xs) for xs, _ in series.values()]) if series else np.zeros(1)
    all_y = np.concatenate([np.ravel(ys) for _, ys in series.values()]) if series else np.zeros(1)
    panel = _Panel(
        _MARGIN["left"],
        _MARGIN["top"],
        _W - _MARGIN["left"] - _MARGIN["right"],
        _H - _MARGIN["top"] - _MARGIN["bottom"],
        _limits(all_x, pad=0.0),
        _log_limits(all_y) if logy else _limits(all_y),
        logy=logy,
    )
    legend = []
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        panel.polyline(xs, ys, color)
        lx, ly = _W - _MARGIN["right"] - 150, _MARGIN["top"] + 14 + 14 * i
        legend.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        legend.append(f'<text x="{lx + 24}" y="{ly}" font-size="10">{label}</text>')
    _write(path, _document(panel.frame(xlabel, ylabel, title) + legend))


def history_svg(history_epochs, history, path, title: str = "training history") -> None:
    """Accuracy and penalty loss components against the epoch counter."""
    epochs = np.asarray(history_epochs, dtype=float)
    series = {
        "E_MSE": (epochs, np.array([h.e_mse for h in history])),
        "E_penalty": (epochs, np.array([h.e_penalty for h in history])),
    }
    line_plot(path, series, title=title, xlabel="epoch", ylabel="loss", logy=True)


def profile_svg(profile, path, title: str = "risk profiles") -> None:
    """Three stacked panels: dual delta, dual gamma, dual theta; violations dotted red."""
    names = ("dual_delta", "dual_gamma", "dual_theta")
    masks = ("viol_k", "viol_kk", "viol_tau")
    height = 3 * 240 + 40
    panel_h = 190
    body: list[str] = []
    m = profile.moneyness
    for row, (name, mask_name) in enumerate(zip(names, masks)):
        curves = getattr(profile, name)
        mask = getattr(profile, mask_name)
        panel = _Panel(
            _MARGIN["left"],
            36 + row * 240,
            _W - _MARGIN["left"] - _MARGIN["right"],
            panel_h,
            _limits(m, pad=0.0),
            _limits(curves),
        )
        for i, t in enumerate(profile.tau_slices):
            panel.polyline(m, curves[i], PALETTE[i % len(PALETTE)])
            bad = mask[i]
            if bad.any():
                panel.dots(m[bad], curves[i][bad], "#d62728")
        body += panel.frame("moneyness", name, f"{title}: {name}" if row == 0 else name)
    legend = []
    for i, t in enumerate(profile.tau_slices):
        lx, ly = _W - _MARGIN["right"] - 120, 50 + 13 * i
        legend.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 16}" y2="{ly - 4}" '
            f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="2"/>'
        )
        legend.append(f'<text x="{lx + 22}" y="{ly}" font-size="10">tau={_fmt(t)}</text>')
    _write(path, _document(body + legend, height=height))


def matrix_svg(rows, path, title: str = "in-sample penalty by condition") -> None:
    """Median in-sample penalty per condition, one line per model mode."""
    conditions: list[str] = []
    for row in rows:
        if row.condition not in conditions:
            conditions.append(row.condition)
    series = {}
    for mode in ("mlp", "dcnn"):
        ys = []
        for cond in conditions:
            vals = [
                r.e_penalty
                for r in rows
                if r.condition == cond and r.model == mode and r.sample == "in" and r.status == "ok"
            ]
            ys.append(float(np.median(vals)) if vals else float("nan"))
        series[mode] = (np.arange(len(conditions), dtype=float), np.asarray(ys))
    panel = _Panel(
        _MARGIN["left"],
        _MARGIN["top"],
        _W - _MARGIN["left"] - _MARGIN["right"],
        _H - _MARGIN["top"] - _MARGIN["bottom"],
        (-0.5, len(conditions) - 0.5),
        _log_limits(np.concatenate([ys for _, ys in series.values()])),
        logy=True,
    )
    legend = []
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        panel.polyline(xs, ys, color)
        panel.dots(xs, ys, color)
        lx, ly = _W - _MARGIN["right"] - 130, _MARGIN["top"] + 14 + 14 * i
        legend.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        legend.append(f'<text x="{lx + 24}" y="{ly}" font-size="10">{label}</text>')
    ticks = [
        f'<text x="{_fmt(panel.px(float(i)))}" y="{_H - _MARGIN["bottom"] + 16}" font-size="8" '
        f'text-anchor="middle">{cond}</text>'
        for i, cond in enumerate(conditions)
    ]
    body = panel.frame("", "median E_penalty", title)
    _write(path, _document(body + legend + ticks))


def mesh_violation_svg(mesh, signed, path, title: str = "constraint violations") -> None:
    """Scatter of the penalty mesh; points violating any sign test are red."""
    mesh = np.asarray(mesh, dtype=float)
    signed = np.asarray(signed, dtype=float)
    bad = (signed > 0).any(axis=0)
    panel = _Panel(
        _MARGIN["left"],
        _MARGIN["top"],
        _W - _MARGIN["left"] - _MARGIN["right"],
        _H - _MARGIN["top"] - _MARGIN["bottom"],
        _limits(mesh[:, 0]),
        _limits(mesh[:, 1]),
    )
    panel.dots(mesh[~bad, 0], mesh[~bad, 1], "#bbbbbb", radius=2.0)
    panel.dots(mesh[bad, 0], mesh[bad, 1], "#d62728", radius=3.0)
    _write(path, _document(panel.frame("moneyness", "tau", title)))
