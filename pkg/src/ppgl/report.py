"""Task x variant table of final evaluation rewards."""
from __future__ import annotations

import json
import logging
from pathlib import Path

from .config import load_config_file

logger = logging.getLogger(__name__)

TASK_ORDER = ("feeding", "bathing", "scratching", "cartpole", "reach")
VARIANTS = (("ppo", "mlp"), ("ppo", "lstm"), ("ppg", "mlp"), ("ppg", "lstm"))
MISSING = "—"


def format_reward(value: float) -> str:
    return f"{int(round(value)):+d}"


def _run_identity(run_dir: Path) -> tuple[str, str, str] | None:
    report = run_dir / "eval_report.json"
    if report.exists():
        data = json.loads(report.read_text())
        return data["env"], data["algo"], data["policy"]
    cfg = run_dir / "resolved_config.toml"
    if cfg.exists():
        values = load_config_file(cfg)
        return values.get("env", "cartpole"), values.get("algo", "ppo"), values.get("policy", "mlp")
    return None


def collect_cells(run_dirs, mode: str = "deterministic") -> dict[tuple[str, str, str], float | None]:
    cells: dict[tuple[str, str, str], float | None] = {}
    for run_dir in map(Path, run_dirs):
        ident = _run_identity(run_dir)
        if ident is None:
            logger.warning("%s: no eval report or config, skipped", run_dir)
            continue
        report = run_dir / "eval_report.json"
        value = None
        if report.exists():
            reports = json.loads(report.read_text())["reports"]
            chosen = reports.get(mode) or next(iter(reports.values()))
            value = chosen["mean"]
        if value is not None or ident not in cells:
            cells[ident] = value
    return cells


def render_table(cells: dict[tuple[str, str, str], float | None]) -> str:
    tasks = [t for t in TASK_ORDER if any(k[0] == t for k in cells)]
    tasks += sorted({k[0] for k in cells} - set(tasks))
    variants = [v for v in VARIANTS if any(k[1:] == v for k in cells)]
    header = ["task"] + [f"{a.upper()}+{p.upper()}" for a, p in variants]
    body = []
    for task in tasks:
        row = [task]
        for algo, policy in variants:
            value = cells.get((task, algo, policy))
            row.append(MISSING if value is None else format_reward(value))
        body.append(row)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]

    def line(cols):
        return " | ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep] + [line(r) for r in body]) + "\n"


def report_table(run_dirs, mode: str = "deterministic") -> str:
    return render_table(collect_cells(run_dirs, mode))
