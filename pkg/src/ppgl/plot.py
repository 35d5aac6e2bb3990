"""Standalone SVG reward curves from a metrics CSV."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .config import load_config_file
from .metrics import read_metrics_csv

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50


def rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(0, idx - window)
    return (csum[idx] - csum[lo]) / (idx - lo)


def _run_title(csv_path: Path) -> str:
    cfg = csv_path.parent / "resolved_config.toml"
    if cfg.exists():
        try:
            values = load_config_file(cfg)
            return f"{values.get('env', '?')} / {values.get('algo', '?')} / {values.get('policy', '?')}"
        except ValueError:
            pass
    return csv_path.stem


def emit_reward_curve_svg(
    csv_path: str | Path, out_path: str | Path, window: int = 10, title: str | None = None
) -> Path:
    csv_path, out_path = Path(csv_path), Path(out_path)
    rows = [r for r in read_metrics_csv(csv_path) if math.isfinite(r.mean_reward)]
    if len(rows) < 2:
        raise ValueError(
            f"{csv_path}: need at least 2 updates with finished episodes to plot, got {len(rows)}; run longer"
        )
    x = np.array([r.timesteps for r in rows], dtype=np.float64)
    y = rolling_mean(np.array([r.mean_reward for r in rows]), window)

    x_lo, x_hi = float(x.min()), float(x.max())
    y_lo, y_hi = float(y.min()), float(y.max())
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + (plot_w * (v - x_lo) / (x_hi - x_lo) if x_hi > x_lo else plot_w / 2)

    def py(v):
        return MARGIN_T + (plot_h * (y_hi - v) / (y_hi - y_lo) if y_hi > y_lo else plot_h / 2)

    points = " ".join(f"{px(a):.3f},{py(b):.3f}" for a, b in zip(x, y))
    title = title or _run_title(csv_path)
    x0, y0 = MARGIN_L, MARGIN_T + plot_h
    svg = f"""<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
  <title>{escape(title)}</title>
  <rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
  <text x="{WIDTH / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(title)}</text>
  <line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>
  <line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>
  <text x="{x0 + plot_w / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">timesteps</text>
  <text x="16" y="{MARGIN_T + plot_h / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {MARGIN_T + plot_h / 2})">mean episode reward (rolling {window})</text>
  <text x="{x0}" y="{y0 + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{x_lo:g}</text>
  <text x="{x0 + plot_w}" y="{y0 + 16}" text-anchor="end" font-family="sans-serif" font-size="10">{x_hi:g}</text>
  <text x="{x0 - 6}" y="{y0}" text-anchor="end" font-family="sans-serif" font-size="10">{y_lo:.4g}</text>
  <text x="{x0 - 6}" y="{MARGIN_T + 4}" text-anchor="end" font-family="sans-serif" font-size="10">{y_hi:.4g}</text>
  <polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{points}" data-timesteps={quoteattr(" ".join(repr(float(v)) for v in x))} data-values={quoteattr(" ".join(repr(float(v)) for v in y))}/>
</svg>
"""
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(svg)
    except OSError as exc:
        raise OSError(f"cannot write {out_path}: {exc}") from exc
    return out_path
