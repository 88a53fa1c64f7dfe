"""File outputs: trajectory CSV, JSON documents and a small SVG line plot."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .simulate import Trajectory

__all__ = ["csv_header", "trajectory_csv", "write_trajectory_csv", "to_jsonable", "write_json",
           "render_svg", "write_svg"]


def csv_header(n_states: int, n: int, m: int, decomposed: bool) -> list[str]:
    cols = ["t"]
    cols += [f"x_{i}" for i in range(1, n_states + 1)]
    cols += [f"y_{i}" for i in range(1, n + 1)]
    cols += [f"u_{i}" for i in range(1, n + 1)]
    cols += [f"zeta_{k}" for k in range(1, m + 1)]
    cols += [f"mu_{k}" for k in range(1, m + 1)]
    if decomposed:
        cols += [f"w_{i}" for i in range(1, n + 1)]
        cols += [f"z_{i}" for i in range(1, n + 1)]
    cols.append("disagreement_norm")
    return cols


def trajectory_csv(traj: Trajectory, scenario_hash: str = "") -> str:
    """CSV text: one ``#`` provenance line, the header, then 17-significant-digit rows."""
    n = traj.y.shape[1]
    m = traj.mu.shape[1]
    header = csv_header(traj.states.shape[1], n, m, traj.decomposed)
    blocks = [traj.times[:, None], traj.states, traj.y, traj.u, traj.zeta, traj.mu]
    if traj.decomposed:
        blocks += [traj.w, traj.z]
    blocks.append(traj.disagreement[:, None])
    data = np.hstack(blocks)
    lines = [f"# scenario_hash={scenario_hash} tool=netpassivity version={__version__}", ",".join(header)]
    lines += [",".join(format(v, ".17g") for v in row) for row in data]
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path: str | Path, scenario_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(trajectory_csv(traj, scenario_hash))
    return path


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays, sets and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(to_jsonable(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(doc: Any) -> str:
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_json(doc: Any, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))
    return path


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def render_svg(times: Sequence[float], series: np.ndarray, labels: Sequence[str] | None = None,
               title: str = "", xlabel: str = "t", ylabel: str = "y", metadata: str = "",
               width: int = 720, height: int = 440, max_points: int = 2000) -> str:
    """Line plot of the columns of ``series`` against ``times`` as an SVG string."""
    t = np.asarray(times, dtype=float)
    Y = np.asarray(series, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(t) > max_points:
        sel = np.unique(np.linspace(0, len(t) - 1, max_points).round().astype(int))
        t, Y = t[sel], Y[sel]
    labels = list(labels) if labels is not None else [f"y_{i + 1}" for i in range(Y.shape[1])]
    ml, mr, mt, mb = 70, 110, 40 if title else 20, 50
    pw, ph = width - ml - mr, height - mt - mb
    t0, t1 = (float(t[0]), float(t[-1])) if len(t) else (0.0, 1.0)
    if t1 <= t0:
        t1 = t0 + 1.0
    finite = Y[np.isfinite(Y)]
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (-1.0, 1.0)
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return ml + (v - t0) / (t1 - t0) * pw

    def sy(v):
        return mt + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">']
    if metadata:
        out.append(f"<metadata>{escape(metadata)}</metadata>")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    if title:
        out.append(f'<text x="{ml + pw / 2:.1f}" y="{mt - 14}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for v in _nice_ticks(t0, t1):
        x = sx(v)
        out.append(f'<line x1="{x:.2f}" y1="{mt}" x2="{x:.2f}" y2="{mt + ph}" stroke="#eee"/>')
        out.append(f'<text x="{x:.2f}" y="{mt + ph + 16}" text-anchor="middle">{v:g}</text>')
    for v in _nice_ticks(y0, y1):
        y = sy(v)
        out.append(f'<line x1="{ml}" y1="{y:.2f}" x2="{ml + pw}" y2="{y:.2f}" stroke="#eee"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    for j in range(Y.shape[1]):
        color = _PALETTE[j % len(_PALETTE)]
        ok = np.isfinite(Y[:, j])
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t[ok], Y[ok, j]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 10 + 18 * j
        out.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 42}" y="{ly + 4}">{escape(labels[j])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(traj: Trajectory, path: str | Path, title: str = "", scenario_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = f"scenario_hash={scenario_hash} tool=netpassivity version={__version__}"
    svg = render_svg(traj.times, traj.y, [f"y_{i + 1}" for i in range(traj.y.shape[1])],
                     title=title, ylabel="agent outputs y", metadata=meta)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return path
