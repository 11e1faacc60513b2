"""Optimal merging of k trajectories into one generalized trajectory.

The merged sample pool is scanned in time order. For every end position the
candidate last cells are the contiguous windows that are complete (hold a
sample of every input trajectory) and elementary (cannot be cut into two
complete, time-coherent halves); the cheapest prefix cost plus window cost is
kept. Only elementary windows are needed because splitting a cell never
increases cost under the area cost model, and on interleaved data each end
position has O(1) such windows, so the scan is linear in the pool size.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from trajanon.model import DomainError, GeneralizedSample, Sample, Trajectory, is_time_coherent

__all__ = [
    "IncompletableError",
    "OracleBoundError",
    "MergeInput",
    "MergeResult",
    "kmerge",
    "merge_cost",
    "brute_force_merge",
    "is_complete",
    "is_elementary",
]

ORACLE_BOUND = 14


class IncompletableError(DomainError):
    """No partition can give every cell a sample of every input trajectory."""


class OracleBoundError(DomainError):
    """The exhaustive oracle refuses inputs above its size bound."""


@dataclass(frozen=True)
class MergeInput:
    trajectories: Tuple[Trajectory, ...]

    def __post_init__(self) -> None:
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        if not trajs:
            raise DomainError("nothing to merge")
        users = [tr.user for tr in trajs]
        if len(set(users)) != len(users):
            raise DomainError(f"duplicate users in merge input: {users}")
        for tr in trajs:
            if len(tr) == 0:
                raise IncompletableError(f"trajectory of {tr.user!r} is empty")

    @property
    def k(self) -> int:
        return len(self.trajectories)

    @property
    def pool(self) -> Tuple[Sample, ...]:
        return tuple(sorted((s for tr in self.trajectories for s in tr), key=lambda s: s.key))

    def user_index(self) -> dict:
        return {tr.user: i for i, tr in enumerate(self.trajectories)}


@dataclass(frozen=True)
class MergeResult:
    cells: Tuple[GeneralizedSample, ...]
    cost: int

    @property
    def generalized(self) -> Tuple[GeneralizedSample, ...]:
        return self.cells


def _as_input(trajectories) -> MergeInput:
    if isinstance(trajectories, MergeInput):
        return trajectories
    return MergeInput(tuple(trajectories))


def _cut_allowed(pool: Sequence[Sample], j: int) -> bool:
    # A cut before position j keeps time coherence only between distinct slots.
    return 0 < j < len(pool) and pool[j - 1].t < pool[j].t


def is_complete(window: Tuple[int, int], merge_input) -> bool:
    """True iff pool positions ``window[0]..window[1]`` (inclusive) cover all users."""
    mi = _as_input(merge_input)
    pool = mi.pool
    start, stop = window
    return {s.user for s in pool[start : stop + 1]} == set(mi.user_index())


def is_elementary(window: Tuple[int, int], merge_input) -> bool:
    """True iff no time-coherent cut splits the window into two complete parts."""
    mi = _as_input(merge_input)
    pool = mi.pool
    users = set(mi.user_index())
    start, stop = window
    for j in range(start + 1, stop + 1):
        if not _cut_allowed(pool, j):
            continue
        left = {s.user for s in pool[start:j]}
        right = {s.user for s in pool[j : stop + 1]}
        if left == users and right == users:
            return False
    return True


def _solve(ts, xs, ys, us, k, max_window=None):
    """Dynamic program over the sorted pool; returns (cost, backpointers)."""
    n = len(ts)
    inf = math.inf
    cost = [inf] * n
    back = [-1] * n
    # largest start index such that [start, p] is complete, -1 if none
    last_complete = [-1] * n
    # largest allowed cut position j <= p (cut goes before j), -1 if none
    prev_cut = [-1] * n
    last = [-1] * k
    missing = k
    cut = -1
    for p in range(n):
        if p > 0 and ts[p - 1] < ts[p]:
            cut = p
        prev_cut[p] = cut
        u = us[p]
        if last[u] < 0:
            missing -= 1
        last[u] = p
        if missing == 0:
            last_complete[p] = min(last)

    for theta in range(n):
        hi = last_complete[theta]
        if hi < 0:
            continue
        if theta + 1 < n and ts[theta] == ts[theta + 1]:
            continue  # a cell cannot end inside a time slot
        j = prev_cut[hi]
        lower = last_complete[j - 1] if j >= 1 else -1
        lo = lower + 1
        if max_window is not None:
            lo = max(lo, theta - max_window + 1)
        if hi < lo:
            continue
        x0 = x1 = xs[theta]
        y0 = y1 = ys[theta]
        for q in range(theta - 1, hi - 1, -1):
            xq, yq = xs[q], ys[q]
            if xq < x0:
                x0 = xq
            elif xq > x1:
                x1 = xq
            if yq < y0:
                y0 = yq
            elif yq > y1:
                y1 = yq
        t_end = ts[theta]
        best = cost[theta]
        arg = -1
        start = hi
        while True:
            if start == 0:
                prev = 0
            else:
                prev = cost[start - 1]  # infinite unless start is a valid cut
            if prev < best:
                c = (t_end - ts[start] + 1) * (x1 - x0 + y1 - y0 + 2) + prev
                if c < best:
                    best = c
                    arg = start
            start -= 1
            if start < lo:
                break
            xq, yq = xs[start], ys[start]
            if xq < x0:
                x0 = xq
            elif xq > x1:
                x1 = xq
            if yq < y0:
                y0 = yq
            elif yq > y1:
                y1 = yq
        if arg >= 0:
            cost[theta] = best
            back[theta] = arg
    return cost, back


def _prepare(mi: MergeInput):
    index = mi.user_index()
    pool = mi.pool
    ts = [s.t for s in pool]
    xs = [s.x for s in pool]
    ys = [s.y for s in pool]
    us = [index[s.user] for s in pool]
    return pool, ts, xs, ys, us


def kmerge(trajectories, max_window: Optional[int] = None) -> MergeResult:
    """Minimum-cost generalized trajectory merging all input trajectories.

    Every returned cell holds at least one sample of each input trajectory,
    the cells partition the input samples, and their time spans are strictly
    ordered. ``max_window`` caps the number of pool positions a single cell
    may span; ``None`` keeps the search exact.
    """
    mi = _as_input(trajectories)
    pool, ts, xs, ys, us = _prepare(mi)
    cost, back = _solve(ts, xs, ys, us, mi.k, max_window)
    n = len(pool)
    if cost[n - 1] == math.inf:
        raise IncompletableError("no complete partition within the window cap")
    cells: List[GeneralizedSample] = []
    end = n - 1
    while end >= 0:
        start = back[end]
        cells.append(GeneralizedSample.of(pool[start : end + 1]))
        end = start - 1
    cells.reverse()
    return MergeResult(tuple(cells), int(cost[n - 1]))


def merge_cost(groups: Sequence[Sequence[Sample]], max_window: Optional[int] = None) -> int:
    """Optimal merge cost of raw sample groups, one group per user.

    Skips result construction; used for pairwise cost matrices.
    """
    k = len(groups)
    pool = sorted(
        ((s.t, i, s.x, s.y) for i, g in enumerate(groups) for s in g),
    )
    for i, g in enumerate(groups):
        if not g:
            raise IncompletableError(f"group {i} is empty")
    ts = [p[0] for p in pool]
    us = [p[1] for p in pool]
    xs = [p[2] for p in pool]
    ys = [p[3] for p in pool]
    cost, _ = _solve(ts, xs, ys, us, k, max_window)
    if cost[-1] == math.inf:
        raise IncompletableError("no complete partition within the window cap")
    return int(cost[-1])


def brute_force_merge(trajectories, bound: int = ORACLE_BOUND) -> MergeResult:
    """Exhaustive search over every time-coherent contiguous partition.

    Test oracle: exponential in the pool size, refuses pools above ``bound``.
    """
    mi = _as_input(trajectories)
    pool = mi.pool
    n = len(pool)
    if n > bound:
        raise OracleBoundError(f"{n} samples exceed the oracle bound {bound}")
    users = set(mi.user_index())
    cuts = [j for j in range(1, n) if _cut_allowed(pool, j)]
    best: Optional[Tuple[int, Tuple[GeneralizedSample, ...]]] = None
    for chosen in itertools.product((False, True), repeat=len(cuts)):
        bounds = [0] + [j for j, on in zip(cuts, chosen) if on] + [n]
        cells = []
        for a, b in zip(bounds, bounds[1:]):
            part = pool[a:b]
            if {s.user for s in part} != users:
                break
            cells.append(GeneralizedSample.of(part))
        else:
            assert is_time_coherent(cells)
            c = sum(cell.box.cost for cell in cells)
            if best is None or c < best[0]:
                best = (c, tuple(cells))
    if best is None:
        raise IncompletableError("no complete partition exists")
    return MergeResult(best[1], best[0])
