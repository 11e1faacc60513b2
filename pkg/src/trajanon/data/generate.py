"""Seeded synthetic call-detail-record trajectories.

Each user gets a home and a work cell drawn around a few shared hubs (homes
spread wide, workplaces packed into a compact business district). Events
arrive as a per-hour Poisson process whose rate is ``day_night_activity_ratio``
times higher during daytime hours, and each event is logged at the current
anchor (work by day, home by night) plus a small jitter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trajanon.data.dataset import Dataset
from trajanon.data.metrics import DAY_HOURS, HOURS_PER_DAY, MINUTES_PER_HOUR
from trajanon.model import DomainError, Sample

MINUTES_PER_DAY = HOURS_PER_DAY * MINUTES_PER_HOUR


@dataclass(frozen=True)
class GenConfig:
    users: int = 100
    days: int = 1
    rate_per_hour: float = 0.9
    day_night_activity_ratio: float = 3.0
    grid: int = 200
    home_hubs: int = 6
    home_spread: float = 12.0
    work_hubs: int = 2
    work_spread: float = 3.0
    jitter: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.users < 1 or self.days < 1:
            raise DomainError("need at least one user and one day")
        if self.rate_per_hour <= 0 or self.day_night_activity_ratio <= 0:
            raise DomainError("rates must be positive")

    def hourly_rates(self) -> np.ndarray:
        """Mean events per user in each hour of the day; averages to ``rate_per_hour``."""
        weight = np.array(
            [self.day_night_activity_ratio if h in DAY_HOURS else 1.0 for h in range(HOURS_PER_DAY)]
        )
        return self.rate_per_hour * HOURS_PER_DAY * weight / weight.sum()


def _clip(v: np.ndarray, grid: int) -> np.ndarray:
    return np.clip(np.rint(v), 0, grid - 1).astype(int)


def generate(config: GenConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    g = config.grid
    centre = np.array([g / 2, g / 2])
    home_hubs = centre + rng.uniform(-g / 3, g / 3, size=(config.home_hubs, 2))
    work_hubs = centre + rng.uniform(-g / 10, g / 10, size=(config.work_hubs, 2))
    rates = config.hourly_rates()
    width = len(str(config.users - 1))
    samples = []
    for u in range(config.users):
        user = f"u{u:0{width}d}"
        home = _clip(home_hubs[rng.integers(config.home_hubs)] + rng.normal(0, config.home_spread, 2), g)
        work = _clip(work_hubs[rng.integers(config.work_hubs)] + rng.normal(0, config.work_spread, 2), g)
        for day in range(config.days):
            for hour in range(HOURS_PER_DAY):
                n = rng.poisson(rates[hour])
                if n == 0:
                    continue
                anchor = work if hour in DAY_HOURS else home
                minutes = rng.integers(0, MINUTES_PER_HOUR, n)
                cells = _clip(anchor + rng.normal(0, config.jitter, (n, 2)), g)
                base = day * MINUTES_PER_DAY + hour * MINUTES_PER_HOUR
                for m, (x, y) in zip(minutes, cells):
                    samples.append(Sample(user, int(base + m), int(x), int(y)))
    return Dataset.from_samples(samples, n_slots=config.days * MINUTES_PER_DAY)


def add_time_noise(dataset: Dataset, width: int, seed: int = 0) -> Dataset:
    """Spread each timestamp uniformly over ``width`` slots, as when refining coarse clocks."""
    if width <= 1:
        return dataset
    rng = np.random.default_rng(seed)
    limit = dataset.timespan - 1
    noisy = []
    for s in dataset.samples():
        t = min(limit, s.t + int(rng.integers(0, width)))
        noisy.append(Sample(s.user, t, s.x, s.y))
    return Dataset.from_samples(noisy, n_slots=dataset.n_slots, origin=dataset.origin)
