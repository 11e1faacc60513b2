"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

from __future__ import annotations

import gc
import random
import time
from collections import Counter, defaultdict

import pytest

from test_merge import check_valid, random_instance
from test_verify import tamper
from trajanon.anonymize import AnonConfig, anonymize
from trajanon.data.dataset import save_published
from trajanon.data.generate import GenConfig, generate
from trajanon.data.metrics import split_day_night, suppression_rate
from trajanon.merge import brute_force_merge, kmerge
from trajanon.model import Sample, Trajectory
from trajanon.verify import count_hiding_configs, verify


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def test_criterion_1_merge_optimality(verdict):
    rng = random.Random(2024)
    t0 = time.perf_counter()
    n = mismatches = 0
    for i in range(240):
        trajs = random_instance(rng, 2 if i % 2 else 3, max_len=5, hi=20)
        size = sum(len(t) for t in trajs)
        if kmerge(trajs).cost != brute_force_merge(trajs, bound=max(14, size)).cost:
            mismatches += 1
        n += 1
    secs = time.perf_counter() - t0
    verdict(1, n >= 200 and mismatches == 0 and secs < 60,
            f"{n} instances, {mismatches} cost mismatches, {secs:.1f}s")


def test_criterion_2_merge_validity(verdict):
    rng = random.Random(77)
    violations = 0
    for i in range(300):
        trajs = random_instance(rng, rng.choice([1, 2, 3, 4]), max_len=8, hi=30)
        try:
            check_valid(kmerge(trajs), trajs)
        except AssertionError:
            violations += 1
    verdict(2, violations == 0, f"300 outputs, {violations} violations")


def _interleaved(n_total, seed=0):
    rng = random.Random(seed)
    half = n_total // 2
    a = Trajectory("a", tuple(Sample("a", 2 * i, rng.randint(0, 50), rng.randint(0, 50)) for i in range(half)))
    b = Trajectory("b", tuple(Sample("b", 2 * i + 1, rng.randint(0, 50), rng.randint(0, 50)) for i in range(half)))
    return [a, b]


def _best_time(trajs, repeat=5):
    best = float("inf")
    gc_was = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repeat):
            t0 = time.perf_counter()
            kmerge(trajs)
            best = min(best, time.perf_counter() - t0)
    finally:
        if gc_was:
            gc.enable()
    return best


def test_criterion_3_linear_scaling(verdict):
    small, large = _interleaved(50_000), _interleaved(100_000)
    kmerge(small)  # warm up
    t_small, t_large = _best_time(small), _best_time(large)
    ratio = t_large / t_small
    verdict(3, ratio < 3, f"{t_small:.3f}s at 50k, {t_large:.3f}s at 100k, ratio {ratio:.2f}")


def test_criterion_4_end_to_end(verdict, e2e_run):
    t0 = time.perf_counter()
    rep = verify(e2e_run.raw, e2e_run.anon, mode="exhaustive")
    total = e2e_run.seconds + time.perf_counter() - t0
    ok = rep.passed and rep.min_consistency is not None and rep.min_consistency >= 2 \
        and not rep.failures and total < 600
    verdict(4, ok, f"min_consistency {rep.min_consistency}, {len(rep.failures)} failures, "
                   f"{rep.windows_checked} windows, {total:.1f}s")


def _invariant_violations(run):
    anon, raw = run.anon, run.raw
    cfg = anon.config
    eps, k = cfg.epsilon, cfg.k
    log = anon.suppression_log
    out = Counter()

    # k-pick: every owner with a hiding set at m is picked by >= k-1 others at m
    picked = Counter()
    owners = defaultdict(set)
    for (owner, m), hs in anon.hiding_sets.items():
        owners[m].add(owner)
        for v in hs.members:
            picked[(v, m)] += 1
    for m, users in owners.items():
        for u in users:
            if picked[(u, m)] < k - 1:
                out["k-pick"] += 1

    # reuse: an owner's hiding sets are pairwise disjoint
    seen = defaultdict(list)
    for (owner, _), hs in anon.hiding_sets.items():
        seen[owner].extend(hs.members)
    for members in seen.values():
        out["reuse"] += len(members) - len(set(members))

    # epoch containment and truthfulness
    for user, rec in anon.records.items():
        for cell in rec.cells:
            b = cell.box
            if b.t_min // eps != b.t_max // eps:
                out["epoch containment"] += 1
            if not set(anon.participants[(user, b.t_min // eps + 1)]) <= cell.users:
                out["truthfulness"] += 1

    # published-or-suppressed totality
    for user in raw.users:
        boxes = anon.records[user].boxes
        for s in raw.trajectories[user].samples:
            inside = sum(1 for b in boxes if b.contains(s))
            hidden = (user, s.t // eps + 1) in log
            if (inside == 1) == hidden or inside > 1:
                out["totality"] += 1
    return out


def test_criterion_5_structural_invariants(verdict, e2e_run):
    bad = _invariant_violations(e2e_run)
    names = ["k-pick", "reuse", "epoch containment", "truthfulness", "totality"]
    verdict(5, sum(bad.values()) == 0, ", ".join(f"{n} {bad[n]}" for n in names))


def test_criterion_6_configuration_counts(verdict):
    want = {(2, 2): (1, 1), (4, 2): (9, 3), (6, 2): (265, 15)}
    got = {key: count_hiding_configs(*key) for key in want}
    strict = all(kp > fc for (u, k), (kp, fc) in
                 ((key, count_hiding_configs(*key)) for key in [(4, 2), (6, 2), (8, 2), (6, 3)]))
    verdict(6, got == want and strict, f"{got}, k-pick > full consistency for U > k: {strict}")


def test_criterion_7_circadian_direction(verdict):
    # Half-hour epochs give two-epoch windows, so sparse users do get suppressed;
    # with tau = epsilon = 60 and k = 2 this data is published in full.
    raw = generate(GenConfig(users=200, days=3, day_night_activity_ratio=5, seed=42))
    anon, _ = anonymize(raw, AnonConfig(k=2, tau=60, epsilon=30, seed=42))
    split = split_day_night(anon)
    supp = suppression_rate(raw, anon)
    ok = split["day"].median < split["night"].median and supp.night_rate >= supp.day_rate
    verdict(7, ok, f"spatial median day {split['day'].median} m vs night {split['night'].median} m; "
                   f"suppression day {supp.day_rate:.4f} vs night {supp.night_rate:.4f}")


def test_criterion_8_tamper_detection(verdict, e2e_run):
    pub, victim = tamper(e2e_run.anon.to_published(), e2e_run.raw)
    rep = verify(e2e_run.raw, pub)
    witness = next((f for f in rep.failures if f[0] == victim), None)
    verdict(8, not rep.passed and witness is not None, f"witness {witness}")


def test_criterion_9_determinism(verdict, tmp_path):
    raw = generate(GenConfig(users=60, days=2, seed=9))
    outputs = []
    for run in range(2):
        anon, _ = anonymize(raw, AnonConfig(k=2, seed=9))
        path = tmp_path / f"anon{run}.csv"
        log_path = save_published(anon.to_published(), path)
        outputs.append((path.read_bytes(), open(log_path, "rb").read()))
    verdict(9, outputs[0] == outputs[1], f"{len(outputs[0][0])} bytes of anonymized CSV compared")
