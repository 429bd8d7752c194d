"""Region-by-hour incident priors estimated from historical records.

Each entry is the share of all historical records that fall in a given
(cell, hour-of-day) bucket. Served values are floored so that a bucket
with no history never yields a zero prior.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .geo import CellId, GridConfig, InvalidInput, cell_of
from .ingest import GroundTruthRecord

DEFAULT_EPSILON = 1e-6
MS_PER_HOUR = 3_600_000


class PriorEstimationError(ValueError):
    pass


class InvalidPrior(ValueError):
    """Covered-cell priors are too large to leave room for 'no incident'."""


@dataclass(frozen=True)
class PriorTable:
    entries: dict = field(default_factory=dict)  # (CellId, hour) -> raw share
    total_count: int = 0
    epsilon_floor: float = DEFAULT_EPSILON


def hour_of(timestamp_ms: int, utc_offset_hours: float = 0.0) -> int:
    return int(((timestamp_ms + utc_offset_hours * MS_PER_HOUR) // MS_PER_HOUR) % 24)


def estimate_priors(records: Sequence[GroundTruthRecord], grid: GridConfig,
                    epsilon_floor: float = DEFAULT_EPSILON,
                    utc_offset_hours: float = 0.0) -> PriorTable:
    if not records:
        raise PriorEstimationError("cannot estimate priors from zero records")
    counts = Counter((cell_of(g.location, grid), hour_of(g.timestamp, utc_offset_hours)) for g in records)
    total = len(records)
    return PriorTable({k: n / total for k, n in counts.items()}, total, epsilon_floor)


def lookup(table: PriorTable, cell: CellId, hour: int) -> float:
    if not 0 <= hour <= 23:
        raise InvalidInput(f"hour {hour} outside [0, 23]")
    return max(table.entries.get((cell, hour), 0.0), table.epsilon_floor)


def region_conditional_priors(table: PriorTable, cells: Sequence[CellId], hour: int):
    """Joint priors P(I=1, R_j) for the covered cells.

    Returns ``(per_cell, p_incident, p_no_incident)``.
    """
    if not cells:
        raise InvalidInput("need at least one covered cell")
    per_cell = [lookup(table, c, hour) for c in cells]
    p1 = sum(per_cell)
    if p1 >= 1.0:
        raise InvalidPrior(f"covered-cell priors sum to {p1} >= 1")
    return per_cell, p1, 1.0 - p1


def write_priors_csv(table: PriorTable, out: IO[str]) -> None:
    out.write(f"# total_count={table.total_count} epsilon={table.epsilon_floor!r}\n")
    out.write("cell_res,cell_q,cell_r,hour,prior\n")
    for (cell, hour), p in sorted(table.entries.items()):
        out.write(f"{cell.resolution},{cell.q},{cell.r},{hour},{p!r}\n")


def read_priors_csv(lines: Iterable[str]) -> PriorTable:
    lines = [ln.rstrip("\n") for ln in lines]
    if not lines or not lines[0].startswith("#"):
        raise PriorEstimationError("priors file must start with '# total_count=N epsilon=E'")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    try:
        total = int(meta["total_count"])
        eps = float(meta["epsilon"])
    except (KeyError, ValueError):
        raise PriorEstimationError(f"bad metadata line {lines[0]!r}") from None
    if len(lines) < 2 or lines[1].strip() != "cell_res,cell_q,cell_r,hour,prior":
        raise PriorEstimationError("missing priors header row")
    entries = {}
    for ln in lines[2:]:
        if not ln.strip():
            continue
        res, q, r, hour, p = ln.split(",")
        entries[(CellId(int(res), int(q), int(r)), int(hour))] = float(p)
    return PriorTable(entries, total, eps)
