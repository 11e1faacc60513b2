"""Dataset-wide anonymization with overlapping hiding sets.

Time is cut into epochs of ``epsilon`` slots. For every window of
``w + 1 = tau / epsilon + 1`` consecutive epochs starting at epoch ``m``, each
user active in the window receives a hiding set ``h[i, m]`` of ``k - 1`` other
users. Hiding sets come from directed parent cycles built inside groups of
users that were co-clustered (by pairwise merge cost) over the whole window,
so every user is picked into the hiding sets of ``k - 1`` others. A user's
published cells at epoch ``e`` are the optimal merge of its samples with the
samples of every hiding-set member whose window covers ``e``.

Only users with the same presence pattern over the window can share cycles.
Groups that fail are retried pooled with the other failures of their pattern,
then as the whole pattern class; what still fails is suppressed: its samples in
one epoch are withheld. Suppression changes who is active where, so assignment is
repeated on the reduced data until no new suppression is needed; at that fixed
point every published sample is covered by ``k - 1`` other records.
"""

from __future__ import annotations

import logging
import math
import random
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx

from trajanon.data.dataset import PublishedDataset
from trajanon.cluster import Clustering, CostMatrix, cluster_epoch, cost_matrix
from trajanon.merge import kmerge
from trajanon.model import Box, DomainError, GeneralizedTrajectory, Sample, Trajectory

log = logging.getLogger(__name__)

UserEpoch = Tuple[str, int]


class ConfigError(DomainError):
    pass


@dataclass(frozen=True)
class AnonConfig:
    k: int = 2
    tau: int = 60
    epsilon: int = 60
    cluster_target: int = 50
    seed: int = 0
    cycle_budget: int = 32
    max_window: Optional[int] = None
    max_passes: int = 200
    pool_leftovers: bool = True

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ConfigError(f"k must be at least 2, got {self.k}")
        if self.epsilon < 1 or self.tau < 1:
            raise ConfigError("tau and epsilon must be positive")
        if self.tau % self.epsilon:
            raise ConfigError(f"epsilon={self.epsilon} does not divide tau={self.tau}")
        if self.cluster_target < 1:
            raise ConfigError("cluster_target must be positive")

    @property
    def w(self) -> int:
        return self.tau // self.epsilon

    @property
    def chi(self) -> int:
        """Trajectories merged per epoch for one owner away from dataset edges."""
        return 1 + (self.w + 1) * (self.k - 1)

    def meta(self) -> Dict[str, int]:
        return {"k": self.k, "tau": self.tau, "epsilon": self.epsilon}


@dataclass(frozen=True)
class HidingSet:
    owner: str
    epoch: int
    members: FrozenSet[str]

    def __post_init__(self) -> None:
        if self.owner in self.members:
            raise DomainError(f"{self.owner!r} cannot hide itself")


@dataclass
class AnonymizedDataset:
    records: Dict[str, GeneralizedTrajectory]
    suppression_log: FrozenSet[UserEpoch]
    config: AnonConfig
    n_epochs: int
    n_slots: int
    hiding_sets: Dict[Tuple[str, int], HidingSet] = field(default_factory=dict)
    participants: Dict[UserEpoch, Tuple[str, ...]] = field(default_factory=dict)

    def published(self) -> Dict[str, Tuple[Box, ...]]:
        return {u: rec.boxes for u, rec in self.records.items() if rec.cells}

    def epoch_of(self, t: int) -> int:
        return t // self.config.epsilon + 1

    def meta(self) -> Dict[str, int]:
        return {**self.config.meta(), "slots": self.n_slots}

    def to_published(self) -> PublishedDataset:
        return PublishedDataset(self.published(), frozenset(self.suppression_log), self.meta())


# --------------------------------------------------------------------------- hiding sets


def split_by_history(cluster: Iterable[str], history: Sequence[Optional[Clustering]]) -> List[Tuple[str, ...]]:
    """Group users by their cluster index at every history epoch.

    Absence from a history epoch is part of the key, so users missing from the
    same epochs share a bucket instead of mixing with always-present users.
    """
    buckets: Dict[tuple, List[str]] = defaultdict(list)
    for user in sorted(cluster):
        key = tuple(
            (c.assignment[user] if c is not None and user in c.assignment else -1) for c in history
        )
        buckets[key].append(user)
    return [tuple(buckets[key]) for key in sorted(buckets)]


def build_hiding_graph(subcluster: Iterable[str], reuse_state: Mapping[str, Set[str]]) -> nx.DiGraph:
    """Edge ``j -> i`` iff ``j`` may still join a hiding set of ``i``."""
    nodes = sorted(subcluster)
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    g.add_edges_from(
        (j, i) for i in nodes for j in nodes if j != i and j not in reuse_state.get(i, ())
    )
    return g


def _offsets(n: int, k: int) -> List[int]:
    # Offsets coprime with n make every parent map a single Hamiltonian cycle.
    coprime = [d for d in range(1, n) if math.gcd(d, n) == 1]
    return coprime[: k - 1] if len(coprime) >= k - 1 else list(range(1, k))


def _build_order(graph: nx.DiGraph, nodes: List[str], offsets: List[int],
                 cost: Callable[[str, str], float], rng: Optional[random.Random]) -> Optional[List[str]]:
    n = len(nodes)
    start = nodes[0] if rng is None else rng.choice(nodes)
    order = [start]
    left = set(nodes) - {start}
    while left:
        p = len(order)
        prev = order[-1]
        feasible = [
            v for v in left
            if all(graph.has_edge(order[p - d], v) for d in offsets if p - d >= 0)
        ]
        if not feasible:
            return None
        feasible.sort(key=lambda v: (cost(prev, v), v))
        nxt = feasible[0] if rng is None else rng.choice(feasible[:3])
        order.append(nxt)
        left.discard(nxt)
    for p in range(n):
        for d in offsets:
            if not graph.has_edge(order[(p - d) % n], order[p]):
                return None
    return order


def greedy_cycles(graph: nx.DiGraph, k: int, cost: Optional[Callable[[str, str], float]] = None,
                  seed: object = 0, budget: int = 32) -> Optional[List[Dict[str, str]]]:
    """Build ``k - 1`` parent assignments covering every node of ``graph``.

    Nodes are laid out on a ring by nearest-neighbour order over ``cost``;
    assignment ``r`` gives each node the node ``offsets[r]`` places behind it,
    so every node gets ``k - 1`` distinct parents and is itself the parent of
    exactly one node per assignment. Each assignment uses graph edges only.
    If no ring is found within ``budget`` randomized attempts, successive
    perfect matchings give cycle covers with the same pick counts.
    Returns a list of ``{child: parent}`` maps, or ``None`` on failure.
    """
    nodes = sorted(graph.nodes)
    n = len(nodes)
    if n < k or k < 2:
        return None
    cost = cost or (lambda a, b: 0)
    offsets = _offsets(n, k)
    rng = random.Random(str(seed))
    for attempt in range(budget + 1):
        order = _build_order(graph, nodes, offsets, cost, None if attempt == 0 else rng)
        if order is not None:
            return [{order[p]: order[(p - d) % n] for p in range(n)} for d in offsets]
    return _cycle_covers(graph, k)


def _cycle_covers(graph: nx.DiGraph, k: int) -> Optional[List[Dict[str, str]]]:
    # Last resort: k - 1 successive perfect matchings of parents to children.
    # Each is a union of disjoint cycles, so picks stay balanced.
    used = {v: set() for v in graph}
    out = []
    for _ in range(k - 1):
        b = nx.Graph()
        top = [("p", v) for v in sorted(graph)]
        b.add_nodes_from(top)
        b.add_nodes_from(("c", v) for v in sorted(graph))
        b.add_edges_from(
            (("p", j), ("c", i)) for j, i in sorted(graph.edges) if j not in used[i]
        )
        match = nx.bipartite.hopcroft_karp_matching(b, top_nodes=top)
        parents = {c[1]: p[1] for p, c in match.items() if p[0] == "p"}
        if len(parents) < len(graph):
            return None
        for child, parent in parents.items():
            used[child].add(parent)
        out.append(parents)
    return out


def hiding_sets_from_cycles(cycles: Sequence[Mapping[str, str]], epoch: int) -> Dict[str, HidingSet]:
    out = {}
    for node in sorted(cycles[0]):
        out[node] = HidingSet(node, epoch, frozenset(c[node] for c in cycles))
    return out


def suppress(subcluster: Iterable[str], epoch: int, log: Set[UserEpoch]) -> None:
    """Withhold the epoch samples of every user in ``subcluster`` from publication."""
    for user in subcluster:
        log.add((user, epoch))


# --------------------------------------------------------------------------- pipeline


def _cluster_task(args):
    groups, target, seed = args
    m = cost_matrix(groups)
    return m, cluster_epoch(m, target, seed)


class _EpochCache:
    """Cost matrices and clusterings keyed by the set of active users per epoch."""

    def __init__(self, n_jobs: int = 1):
        self.n_jobs = n_jobs
        self._store: Dict[int, Tuple[FrozenSet[str], CostMatrix, Optional[Clustering], Dict[str, int]]] = {}

    def refresh(self, active: Mapping[int, Mapping[str, Tuple[Sample, ...]]], config: AnonConfig) -> int:
        todo = [
            e for e in sorted(active)
            if e not in self._store or self._store[e][0] != frozenset(active[e])
        ]
        tasks = [(active[e], config.cluster_target, config.seed + e) for e in todo]
        if self.n_jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(self.n_jobs) as pool:
                results = list(pool.map(_cluster_task, tasks))
        else:
            results = [_cluster_task(t) for t in tasks]
        for e, (m, c) in zip(todo, results):
            self._store[e] = (frozenset(active[e]), m, c, {u: i for i, u in enumerate(m.users)})
        return len(todo)

    def clustering(self, e: int) -> Optional[Clustering]:
        return self._store[e][2]

    def pair_cost(self, e: int, a: str, b: str) -> Optional[int]:
        _, m, _, idx = self._store[e]
        if a in idx and b in idx:
            return int(m.costs[idx[a], idx[b]])
        return None


def _window(m: int, w: int) -> range:
    return range(m, m + w + 1)


def _covering(e: int, w: int, n_epochs: int) -> range:
    """Hiding-set epochs whose window contains epoch ``e``."""
    return range(max(1, e - w), min(e, n_epochs - w) + 1)


def _assign(active, cache: _EpochCache, config: AnonConfig, n_epochs: int):
    """One sweep of hiding-set selection; returns assignments and new suppressions."""
    w, k = config.w, config.k
    reuse: Dict[str, Set[str]] = defaultdict(set)
    hiding: Dict[Tuple[str, int], HidingSet] = {}
    failures: Set[UserEpoch] = set()
    for theta in range(w + 1, n_epochs + 1):
        m = theta - w
        window = _window(m, w)
        candidates = set()
        for e in window:
            candidates.update(active[e])
        history = [cache.clustering(e) for e in window]

        def cost(a, b, _window=window):
            total = 0
            for e in _window:
                c = cache.pair_cost(e, a, b)
                if c is not None:
                    total += c
            return total

        def solve(group, tag):
            # Reads reuse only; groups of one class never share owners.
            graph = build_hiding_graph(group, reuse)
            return greedy_cycles(graph, k, cost, seed=f"{config.seed}/{theta}/{tag}",
                                 budget=config.cycle_budget)

        def commit(cycles):
            for owner, hs in hiding_sets_from_cycles(cycles, m).items():
                hiding[(owner, m)] = hs
                reuse[owner].update(hs.members)

        # Cycles may only join users with the same presence pattern: a picker
        # absent where its child is present would leave the child uncovered.
        classes: Dict[tuple, List[Tuple[str, ...]]] = defaultdict(list)
        for group in split_by_history(candidates, history):
            classes[tuple(group[0] in active[e] for e in window)].append(group)
        for pattern in sorted(classes):
            solved, failed = [], []
            for gi, group in enumerate(classes[pattern]):
                cycles = solve(group, f"{pattern}/{gi}")
                (solved if cycles else failed).append(cycles or group)
            if failed and config.pool_leftovers:
                pooled = tuple(sorted(u for g in failed for u in g))
                cycles = solve(pooled, f"{pattern}/pool")
                if cycles is None and solved:
                    whole = tuple(sorted(u for g in classes[pattern] for u in g))
                    cycles = solve(whole, f"{pattern}/all")
                    if cycles is not None:
                        solved = []
                if cycles is not None:
                    solved.append(cycles)
                    failed = []
            for cycles in solved:
                commit(cycles)
            if failed:
                present = [e for e, on in zip(window, pattern) if on]
                suppress([u for g in failed for u in g], m if m in present else present[0], failures)
    return hiding, failures


def anonymize(dataset, config: AnonConfig, n_jobs: int = 1) -> Tuple[AnonymizedDataset, Dict[str, object]]:
    """Anonymize ``dataset``; returns the published dataset and a run report."""
    from trajanon.data.metrics import run_report

    eps, w = config.epsilon, config.w
    n_slots = dataset.timespan
    if n_slots < (w + 1) * eps:
        raise ConfigError(
            f"dataset spans {n_slots} slots, shorter than one window of {(w + 1) * eps}"
        )
    n_epochs = math.ceil(n_slots / eps)

    by_epoch: Dict[int, Dict[str, Tuple[Sample, ...]]] = {e: {} for e in range(1, n_epochs + 1)}
    for user in dataset.users:
        parts: Dict[int, List[Sample]] = defaultdict(list)
        for s in dataset.trajectories[user].samples:
            parts[s.t // eps + 1].append(s)
        for e, ss in parts.items():
            by_epoch[e][user] = tuple(ss)

    suppressed: Set[UserEpoch] = set()
    cache = _EpochCache(n_jobs)
    for passes in range(1, config.max_passes + 1):
        active = {
            e: {u: ss for u, ss in by_epoch[e].items() if (u, e) not in suppressed}
            for e in by_epoch
        }
        refreshed = cache.refresh(active, config)
        hiding, failures = _assign(active, cache, config, n_epochs)
        new = failures - suppressed
        log.info("pass %d: %d epochs reclustered, %d hiding sets, %d new suppressions",
                 passes, refreshed, len(hiding), len(new))
        if not new:
            break
        suppressed |= new
    else:
        raise RuntimeError(f"hiding-set assignment did not settle in {config.max_passes} passes")

    records: Dict[str, GeneralizedTrajectory] = {}
    participants: Dict[UserEpoch, Tuple[str, ...]] = {}
    weak = 0
    for user in dataset.users:
        cells = []
        for e in range(1, n_epochs + 1):
            own = active[e].get(user)
            if not own:
                continue
            members = set()
            for m in _covering(e, w, n_epochs):
                hs = hiding.get((user, m))
                if hs is None:
                    raise AssertionError(f"{user!r} active at epoch {e} without hiding set {m}")
                members |= hs.members
            present = sorted(v for v in members if v in active[e])
            weak += len(members) - len(present)
            trajs = [Trajectory(user, own)] + [Trajectory(v, active[e][v]) for v in present]
            participants[(user, e)] = tuple([user] + present)
            cells.extend(kmerge(trajs, config.max_window).cells)
        records[user] = GeneralizedTrajectory(user, tuple(cells))

    anon = AnonymizedDataset(
        records=records,
        suppression_log=frozenset(suppressed),
        config=config,
        n_epochs=n_epochs,
        n_slots=n_slots,
        hiding_sets=hiding,
        participants=participants,
    )
    report = run_report(dataset, anon)
    report.update({"passes": passes, "hiding_sets": len(hiding), "weak_coverage": weak})
    return anon, report
