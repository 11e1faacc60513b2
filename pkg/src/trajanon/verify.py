"""Attack simulation against published trajectories.

The adversary knows every raw sample of a victim inside one continuous
window of ``tau`` slots and looks for published records consistent with that
knowledge, i.e. records with a box around every known sample. The victim is
protected when at least ``k`` records (its own included) remain consistent,
both for the raw ``tau`` window and for the epoch-aligned ``tau + epsilon``
window of the hiding set that covers it.
"""

from __future__ import annotations

import bisect
import itertools
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from trajanon.data.dataset import Dataset, PublishedDataset
from trajanon.model import Box, DomainError, GeneralizedTrajectory, Sample

MODES = ("exhaustive", "sampled")
DEFAULT_PROBES = 1000
COUNT_BOUND_U = 8
COUNT_BOUND_K = 3


class VerificationError(DomainError):
    pass


@dataclass
class VerificationReport:
    passed: bool
    min_consistency: Optional[int]
    windows_checked: int
    suppression_protected: int
    failures: List[Tuple[str, int]] = field(default_factory=list)
    k: int = 0
    mode: str = "exhaustive"

    def as_dict(self) -> Dict[str, object]:
        return {
            "pass": self.passed,
            "k": self.k,
            "mode": self.mode,
            "min_consistency": "none" if self.min_consistency is None else self.min_consistency,
            "windows_checked": self.windows_checked,
            "suppression_protected": self.suppression_protected,
            "failures": len(self.failures),
        }

    def failures_csv(self) -> str:
        lines = ["user_id,window_start"] + [f"{u},{s}" for u, s in self.failures]
        return "\n".join(lines) + "\n"


def _boxes(record) -> Sequence[Box]:
    if isinstance(record, GeneralizedTrajectory):
        return record.boxes
    return [c if isinstance(c, Box) else c.box for c in record]


def consistent(record, knowledge: Iterable[Sample]) -> bool:
    """True iff every known sample lies inside some cell of ``record``."""
    boxes = _boxes(record)
    return all(any(b.contains(s) for b in boxes) for s in knowledge)


def _published(anon) -> PublishedDataset:
    return anon if isinstance(anon, PublishedDataset) else anon.to_published()


def _check_config(pub: PublishedDataset, config) -> Tuple[int, int, int]:
    for key in ("k", "tau", "epsilon"):
        if key not in pub.meta and config is None:
            raise VerificationError(f"no {key!r} in anonymized metadata and no config given")
    if config is not None:
        for key, want in config.meta().items():
            have = pub.meta.get(key)
            if have is not None and int(have) != want:
                raise VerificationError(f"config {key}={want} does not match anonymized {key}={have}")
        return config.k, config.tau, config.epsilon
    return pub.k, pub.tau, pub.epsilon


def _containment(raw: Dataset, pub: PublishedDataset, eps: int) -> Dict[str, List[FrozenSet[str]]]:
    """For each raw sample, the set of users whose published record contains it."""
    by_epoch: Dict[int, List[Tuple[str, Box]]] = {}
    for user, b in pub.boxes():
        for e in range(b.t_min // eps, b.t_max // eps + 1):
            by_epoch.setdefault(e, []).append((user, b))
    arrays = {
        e: (np.array([u for u, _ in items], dtype=object), np.array([list(b) for _, b in items]))
        for e, items in by_epoch.items()
    }
    out: Dict[str, List[FrozenSet[str]]] = {}
    empty: FrozenSet[str] = frozenset()
    for user in raw.users:
        samples = raw.trajectories[user].samples
        sets: List[FrozenSet[str]] = []
        for e, group in itertools.groupby(samples, key=lambda s: s.t // eps):
            group = list(group)
            if e not in arrays:
                sets.extend(empty for _ in group)
                continue
            owners, boxes = arrays[e]
            pts = np.array([(s.t, s.x, s.y) for s in group])
            inside = (
                (boxes[None, :, 0] <= pts[:, None, 0]) & (pts[:, None, 0] <= boxes[None, :, 1])
                & (boxes[None, :, 2] <= pts[:, None, 1]) & (pts[:, None, 1] <= boxes[None, :, 3])
                & (boxes[None, :, 4] <= pts[:, None, 2]) & (pts[:, None, 2] <= boxes[None, :, 5])
            )
            sets.extend(frozenset(owners[row]) for row in inside)
        out[user] = sets
    return out


def verify(raw: Dataset, anon, config=None, mode: str = "exhaustive",
           probes: int = DEFAULT_PROBES, seed: int = 0) -> VerificationReport:
    """Simulate the windowed attacker against every user (or a seeded sample of windows)."""
    if mode not in MODES:
        raise VerificationError(f"unknown mode {mode!r}")
    pub = _published(anon)
    if not raw.trajectories:
        return VerificationReport(True, None, 0, 0, [], k=int(pub.meta.get("k", 0)), mode=mode)
    k, tau, eps = _check_config(pub, config)
    if tau % eps:
        raise VerificationError(f"epsilon={eps} does not divide tau={tau}")
    w = tau // eps
    n_slots = int(pub.meta.get("slots", raw.timespan))
    if raw.timespan > n_slots:
        raise VerificationError("raw dataset extends past the anonymized time span")
    n_epochs = math.ceil(n_slots / eps)
    last_window = max(1, n_epochs - w)
    log = pub.suppression_log
    holders = _containment(raw, pub, eps)

    starts = range(0, max(0, n_slots - tau) + 1)
    if mode == "exhaustive":
        probe_list = [(u, s) for u in raw.users for s in starts]
    else:
        rng = random.Random(seed)
        users = raw.users
        probe_list = sorted(
            (rng.choice(users), rng.choice(starts)) for _ in range(probes)
        )

    report = VerificationReport(True, None, 0, 0, [], k=k, mode=mode)
    for user, group in itertools.groupby(probe_list, key=lambda p: p[0]):
        samples = raw.trajectories[user].samples
        ts = [s.t for s in samples]
        hidden = [(user, t // eps + 1) in log for t in ts]
        sets = holders[user]

        @lru_cache(maxsize=None)
        def count(lo: int, hi: int) -> int:
            return len(frozenset.intersection(*sets[lo:hi]))

        for _, start in group:
            lo = bisect.bisect_left(ts, start)
            hi = bisect.bisect_left(ts, start + tau)
            if lo == hi:
                continue  # the attacker learns nothing about this user here
            if any(hidden[lo:hi]):
                report.suppression_protected += 1
                continue
            report.windows_checked += 1
            m = min(start // eps + 1, last_window)
            elo = bisect.bisect_left(ts, (m - 1) * eps)
            ehi = bisect.bisect_left(ts, (m + w) * eps)
            worst = count(lo, hi)
            if not any(hidden[elo:ehi]):
                worst = min(worst, count(elo, ehi))
            if report.min_consistency is None or worst < report.min_consistency:
                report.min_consistency = worst
            if worst < k:
                report.failures.append((user, start))
    report.passed = not report.failures
    return report


# --------------------------------------------------------------------------- configuration counts


def _last_row_count(columns_forbidden: Tuple[FrozenSet[int], ...], n: int) -> int:
    """Permutations of ``range(n)`` avoiding the forbidden value set of every column."""
    ways = [0] * (1 << n)
    ways[0] = 1
    for mask in range(1 << n):
        if not ways[mask]:
            continue
        col = bin(mask).count("1")
        if col == n:
            continue
        for v in range(n):
            if not mask >> v & 1 and v not in columns_forbidden[col]:
                ways[mask | 1 << v] += ways[mask]
    return ways[(1 << n) - 1]


def count_normalized_latin_rectangles(k: int, n: int) -> int:
    """Number of ``k x n`` Latin rectangles whose first row is ``0..n-1``."""
    if k < 1 or k > n:
        return 0
    if k == 1:
        return 1
    memo: Dict[Tuple[FrozenSet[int], ...], int] = {}

    def rows(prefix: List[Tuple[int, ...]]) -> int:
        forbidden = tuple(frozenset(r[c] for r in prefix) for c in range(n))
        if len(prefix) == k - 1:
            if forbidden not in memo:
                memo[forbidden] = _last_row_count(forbidden, n)
            return memo[forbidden]
        total = 0
        for perm in itertools.permutations(range(n)):
            if all(perm[c] not in forbidden[c] for c in range(n)):
                total += rows(prefix + [perm])
        return total

    return rows([tuple(range(n))])


def count_block_partitions(n: int, k: int) -> int:
    """Number of ways to split ``n`` labelled items into blocks of exactly ``k``."""
    def rec(remaining: Tuple[int, ...]) -> int:
        if not remaining:
            return 1
        head, rest = remaining[0], remaining[1:]
        total = 0
        for mates in itertools.combinations(rest, k - 1):
            left = tuple(x for x in rest if x not in mates)
            total += rec(left)
        return total

    return rec(tuple(range(n)))


def count_hiding_configs(U: int, k: int) -> Tuple[int, int]:
    """Hiding-set configurations of ``U`` users: (k-pick, full consistency).

    Under k-pick each user's column (itself plus its hiding set) is a column of
    a normalized Latin rectangle; under full consistency users form disjoint
    mutually-hiding blocks of ``k``.
    """
    if U > COUNT_BOUND_U or k > COUNT_BOUND_K or k < 2 or U % k:
        raise VerificationError(f"enumeration refused for U={U}, k={k}")
    return count_normalized_latin_rectangles(k, U), count_block_partitions(U, k)
