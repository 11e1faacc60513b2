"""Granularity and suppression metrics of a published dataset."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Union

from trajanon.data.dataset import Dataset, DomainError, PublishedDataset
from trajanon.model import CELL_METERS, SLOT_MINUTES, Box

MINUTES_PER_HOUR = 60
HOURS_PER_DAY = 24
DAY_HOURS = range(8, 20)


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: the smallest value with at least ``pct`` percent at or below it."""
    if not values:
        raise DomainError("percentile of an empty sequence")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


def hour_of_day(t: int) -> int:
    return (t * SLOT_MINUTES // MINUTES_PER_HOUR) % HOURS_PER_DAY


def is_daytime(hour: int) -> bool:
    return hour in DAY_HOURS


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    median: float
    q1: float
    q3: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Summary":
        if not values:
            return cls(0, math.nan, math.nan, math.nan, math.nan)
        return cls(
            len(values),
            sum(values) / len(values),
            nearest_rank(values, 50),
            nearest_rank(values, 25),
            nearest_rank(values, 75),
        )


@dataclass(frozen=True)
class Stats:
    temporal_min: Summary
    spatial_m: Summary
    hourly: List[Dict[str, float]] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.temporal_min.count == 0


def cell_granularity(b: Box):
    """(temporal minutes, spatial meters) of one published box."""
    return b.span("t") * SLOT_MINUTES, (b.span("x") + b.span("y")) * CELL_METERS


def _records(anon) -> Mapping[str, Sequence[Box]]:
    if isinstance(anon, PublishedDataset):
        return anon.records
    if hasattr(anon, "published"):
        return anon.published()
    return anon


def granularity_stats(anon: Union[PublishedDataset, Mapping[str, Sequence[Box]]]) -> Stats:
    """Distribution of cell granularity overall and per hour of day (by cell start)."""
    temporal, spatial = [], []
    by_hour: Dict[int, List[tuple]] = {h: [] for h in range(HOURS_PER_DAY)}
    for boxes in _records(anon).values():
        for b in boxes:
            tm, sm = cell_granularity(b)
            temporal.append(tm)
            spatial.append(sm)
            by_hour[hour_of_day(b.t_min)].append((tm, sm))
    hourly = []
    if temporal:
        for h in range(HOURS_PER_DAY):
            cells = by_hour[h]
            t_sum = Summary.of([c[0] for c in cells])
            s_sum = Summary.of([c[1] for c in cells])
            hourly.append({
                "hour": h,
                "cells": len(cells),
                "temporal_median_min": t_sum.median,
                "temporal_q1_min": t_sum.q1,
                "temporal_q3_min": t_sum.q3,
                "spatial_median_m": s_sum.median,
                "spatial_q1_m": s_sum.q1,
                "spatial_q3_m": s_sum.q3,
            })
    return Stats(Summary.of(temporal), Summary.of(spatial), hourly)


def split_day_night(anon) -> Dict[str, Summary]:
    """Spatial granularity summaries of cells starting in day and night hours."""
    day, night = [], []
    for boxes in _records(anon).values():
        for b in boxes:
            _, sm = cell_granularity(b)
            (day if is_daytime(hour_of_day(b.t_min)) else night).append(sm)
    return {"day": Summary.of(day), "night": Summary.of(night)}


@dataclass(frozen=True)
class SuppressionStats:
    rate: float
    suppressed: int
    total: int
    hourly: List[float]
    day_rate: float
    night_rate: float


def _published(anon) -> PublishedDataset:
    if isinstance(anon, PublishedDataset):
        return anon
    return anon.to_published()


def suppression_rate(raw: Dataset, anon) -> SuppressionStats:
    """Fraction of raw samples withheld, overall, per hour of day, and day versus night."""
    pub = _published(anon)
    unknown = set(pub.records) - set(raw.trajectories)
    unknown |= {u for u, _ in pub.suppression_log} - set(raw.trajectories)
    if unknown:
        raise DomainError(f"published users missing from raw dataset: {sorted(unknown)[:5]}")
    total = [0] * HOURS_PER_DAY
    hidden = [0] * HOURS_PER_DAY
    log = pub.suppression_log
    for s in raw.samples():
        h = hour_of_day(s.t)
        total[h] += 1
        if (s.user, pub.epoch_of(s.t)) in log:
            hidden[h] += 1

    def ratio(num, den):
        return num / den if den else 0.0

    day = [h for h in range(HOURS_PER_DAY) if is_daytime(h)]
    night = [h for h in range(HOURS_PER_DAY) if not is_daytime(h)]
    return SuppressionStats(
        rate=ratio(sum(hidden), sum(total)),
        suppressed=sum(hidden),
        total=sum(total),
        hourly=[ratio(hidden[h], total[h]) for h in range(HOURS_PER_DAY)],
        day_rate=ratio(sum(hidden[h] for h in day), sum(total[h] for h in day)),
        night_rate=ratio(sum(hidden[h] for h in night), sum(total[h] for h in night)),
    )


def run_report(raw: Dataset, anon) -> Dict[str, object]:
    """Headline numbers of an anonymization run as an ordered mapping."""
    pub = _published(anon)
    stats = granularity_stats(pub)
    supp = suppression_rate(raw, pub)
    total_cost = sum(b.cost for _, b in pub.boxes())
    n_epochs = math.ceil(raw.timespan / pub.epsilon) if raw.timespan else 0
    return {
        "total_cost": total_cost,
        "median_spatial_m": stats.spatial_m.median,
        "median_temporal_min": stats.temporal_min.median,
        "suppression_pct": 100.0 * supp.rate,
        "epochs": n_epochs,
        "users": len(raw.trajectories),
        "cells": stats.temporal_min.count,
    }


def hourly_csv(stats: Stats, supp: SuppressionStats) -> str:
    """Plot-ready per-hour table of granularity and suppression."""
    cols = ["hour", "cells", "temporal_median_min", "temporal_q1_min", "temporal_q3_min",
            "spatial_median_m", "spatial_q1_m", "spatial_q3_m", "suppression_rate"]
    lines = [",".join(cols)]
    for h in range(HOURS_PER_DAY):
        row = stats.hourly[h] if stats.hourly else {"hour": h, "cells": 0}
        vals = [row.get(c, math.nan) for c in cols[:-1]] + [supp.hourly[h]]
        lines.append(",".join(_num(v) for v in vals))
    return "\n".join(lines) + "\n"


def _num(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6g}"
    return str(v)
