"""Per-update metrics rows and their CSV form."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

HEADER = "update,timesteps,mean_reward,policy_loss,value_loss,entropy,clip_frac,approx_kl,aux_loss,seconds"
COLUMNS = HEADER.split(",")


@dataclass
class MetricsRow:
    update: int
    timesteps: int
    mean_reward: float = math.nan
    policy_loss: float = math.nan
    value_loss: float = math.nan
    entropy: float = math.nan
    clip_frac: float = math.nan
    approx_kl: float = math.nan
    aux_loss: float | None = None
    seconds: float = 0.0


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def format_row(row: MetricsRow) -> str:
    return ",".join(_fmt(v) for v in astuple(row)) + "\n"


def parse_row(values: list[str]) -> MetricsRow:
    kinds = [f.type for f in fields(MetricsRow)]
    out = []
    for raw, kind in zip(values, kinds):
        if kind == "int":
            out.append(int(raw))
        elif raw == "" and "None" in kind:
            out.append(None)
        else:
            out.append(float(raw))
    return MetricsRow(*out)


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    """Parse a metrics file, ignoring a trailing line that was not fully written."""
    text = Path(path).read_text()
    lines = text.split("\n")
    complete = lines[:-1]  # the piece after the final newline is partial (or empty)
    if not complete or complete[0] != HEADER:
        raise ValueError(f"{path}: missing or unexpected header")
    return [parse_row(next(csv.reader(io.StringIO(line)))) for line in complete[1:] if line]


def write_metrics_csv(rows, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(HEADER + "\n")
            for row in rows:
                fh.write(format_row(row))
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc
    return path


class MetricsWriter:
    """Appends one complete line per update; on resume keeps only the first ``keep`` rows."""

    def __init__(self, path: str | Path, keep: int = 0):
        self.path = Path(path)
        rows = []
        if keep and self.path.exists():
            rows = read_metrics_csv(self.path)[:keep]
        write_metrics_csv(rows, self.path)

    def append(self, row: MetricsRow) -> None:
        try:
            with open(self.path, "a") as fh:
                fh.write(format_row(row))
                fh.flush()
        except OSError as exc:
            raise OSError(f"cannot append metrics to {self.path}: {exc}") from exc
