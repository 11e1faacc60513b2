from __future__ import annotations

import time

import pytest

from trajanon.anonymize import AnonConfig, anonymize
from trajanon.data.generate import GenConfig, generate
from trajanon.model import Sample, Trajectory


def traj(user, *points):
    """Trajectory of ``user`` from ``(t, x, y)`` triples."""
    return Trajectory.from_samples(user, [Sample(user, t, x, y) for t, x, y in points])


class Run:
    def __init__(self, raw, anon, report, seconds):
        self.raw = raw
        self.anon = anon
        self.report = report
        self.seconds = seconds


@pytest.fixture(scope="session")
def e2e_run():
    """The end-to-end configuration: 200 users, 3 days, tau = epsilon = 60, k = 2."""
    raw = generate(GenConfig(users=200, days=3, rate_per_hour=0.9, seed=42))
    t0 = time.perf_counter()
    anon, report = anonymize(raw, AnonConfig(k=2, tau=60, epsilon=60, seed=42))
    return Run(raw, anon, report, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def small_run():
    raw = generate(GenConfig(users=40, days=1, seed=5))
    anon, report = anonymize(raw, AnonConfig(k=2, seed=5))
    return Run(raw, anon, report, 0.0)
