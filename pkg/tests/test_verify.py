from __future__ import annotations

import itertools
import math

import pytest

from trajanon.anonymize import AnonConfig
from trajanon.data.dataset import Dataset, PublishedDataset
from trajanon.model import Box, GeneralizedSample, Sample
from trajanon.verify import (
    VerificationError,
    consistent,
    count_block_partitions,
    count_hiding_configs,
    count_normalized_latin_rectangles,
    verify,
)


def tamper(pub: PublishedDataset, raw: Dataset):
    """Exclude one hider's sample from the only other record that covers it.

    Returns the tampered dataset and the victim whose sample was exposed.
    """
    slots = pub.meta["slots"]
    tau = pub.tau
    for victim in raw.users:
        for s in raw.trajectories[victim].samples:
            if s.t > slots - tau or (victim, pub.epoch_of(s.t)) in pub.suppression_log:
                continue
            holders = [u for u, boxes in pub.records.items() if any(b.contains(s) for b in boxes)]
            if len(holders) != 2:
                continue
            (other,) = [u for u in holders if u != victim]
            boxes = list(pub.records[other])
            i = next(i for i, b in enumerate(boxes) if b.contains(s))
            shrunk = _exclude(boxes[i], s)
            if shrunk is None:
                continue
            boxes[i] = shrunk
            records = dict(pub.records)
            records[other] = tuple(boxes)
            return PublishedDataset(records, pub.suppression_log, dict(pub.meta)), victim
    raise AssertionError("no tamperable sample found")


def _exclude(b: Box, s: Sample):
    for lo, hi, v in (("x_min", "x_max", s.x), ("y_min", "y_max", s.y), ("t_min", "t_max", s.t)):
        if getattr(b, lo) == v and v < getattr(b, hi):
            return b._replace(**{lo: v + 1})
        if getattr(b, hi) == v and v > getattr(b, lo):
            return b._replace(**{hi: v - 1})
    return None


def test_consistent_examples():
    cell = GeneralizedSample.of([Sample("a", 0, 0, 0), Sample("b", 2, 3, 0)])
    assert consistent([cell], [Sample("z", 1, 2, 0)])
    assert not consistent([cell], [Sample("z", 1, 2, 0), Sample("z", 5, 0, 0)])
    assert consistent([cell.box], [])


def test_pipeline_output_passes(small_run):
    rep = verify(small_run.raw, small_run.anon)
    assert rep.passed
    assert rep.min_consistency >= 2
    assert rep.failures == []
    assert rep.windows_checked > 0


def test_tampered_output_fails_with_witness(small_run):
    pub, victim = tamper(small_run.anon.to_published(), small_run.raw)
    rep = verify(small_run.raw, pub)
    assert not rep.passed
    assert rep.min_consistency == 1
    assert any(u == victim for u, _ in rep.failures)
    assert rep.failures_csv().startswith("user_id,window_start\n")


def test_empty_raw_passes_vacuously():
    pub = PublishedDataset({}, frozenset(), {"k": 2, "tau": 60, "epsilon": 60, "slots": 0})
    rep = verify(Dataset({}), pub)
    assert rep.passed and rep.windows_checked == 0 and rep.min_consistency is None


def test_config_mismatch(small_run):
    with pytest.raises(VerificationError):
        verify(small_run.raw, small_run.anon, config=AnonConfig(k=3))


def test_unknown_mode(small_run):
    with pytest.raises(VerificationError):
        verify(small_run.raw, small_run.anon, mode="fast")


def test_sampled_mode_is_seeded(small_run):
    a = verify(small_run.raw, small_run.anon, mode="sampled", probes=200, seed=3)
    b = verify(small_run.raw, small_run.anon, mode="sampled", probes=200, seed=3)
    assert a == b and a.passed
    assert a.windows_checked + a.suppression_protected <= 200


def test_suppressed_knowledge_is_protected():
    # b alone is published; a's only epoch is suppressed
    raw = Dataset.from_samples([Sample("a", 0, 0, 0), Sample("b", 0, 5, 5)], n_slots=120)
    pub = PublishedDataset(
        {"b": (Box(0, 0, 0, 5, 0, 5),)},
        frozenset({("a", 1)}),
        {"k": 2, "tau": 60, "epsilon": 60, "slots": 120},
    )
    rep = verify(raw, pub)
    assert rep.suppression_protected > 0
    # b's own record covers b, but nobody else does
    assert not rep.passed and {u for u, _ in rep.failures} == {"b"}


# --------------------------------------------------------------------------- counts


def _latin_rectangles_brute(k, n):
    first = tuple(range(n))
    perms = list(itertools.permutations(range(n)))
    count = 0
    for rows in itertools.product(perms, repeat=k - 1):
        cols_ok = all(len({first[c], *(r[c] for r in rows)}) == k for c in range(n))
        count += cols_ok
    return count


def _partitions_closed_form(n, k):
    return math.factorial(n) // (math.factorial(k) ** (n // k) * math.factorial(n // k))


def test_small_population_counts():
    assert count_hiding_configs(2, 2) == (1, 1)
    assert count_hiding_configs(4, 2) == (9, 3)
    assert count_hiding_configs(6, 2) == (265, 15)


@pytest.mark.parametrize("U,k", [(2, 2), (4, 2), (6, 2), (8, 2), (3, 3), (6, 3)])
def test_counts_against_independent_oracles(U, k):
    kpick, full = count_hiding_configs(U, k)
    assert full == _partitions_closed_form(U, k)
    if U <= 6 and (k == 2 or U <= 4):
        assert kpick == _latin_rectangles_brute(k, U)
    if U > k:
        assert kpick > full


def test_latin_rectangle_known_values():
    # derangement numbers for k = 2
    assert [count_normalized_latin_rectangles(2, n) for n in range(2, 8)] == [1, 2, 9, 44, 265, 1854]
    assert count_block_partitions(6, 3) == 10


@pytest.mark.parametrize("U,k", [(9, 3), (4, 4), (5, 2), (2, 1)])
def test_counts_refused_outside_bounds(U, k):
    with pytest.raises(VerificationError):
        count_hiding_configs(U, k)
