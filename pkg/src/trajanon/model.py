"""Spatiotemporal samples, generalized samples and the generalization cost model.

Coordinates live on the normalized grid: one time slot is one minute, one
spatial cell is 100 m. All costs are exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence, Tuple, Union

SLOT_MINUTES = 1
CELL_METERS = 100

DIMENSIONS = ("t", "x", "y")


class DomainError(ValueError):
    """Raised when an operation receives input outside its domain."""


@dataclass(frozen=True, slots=True)
class Sample:
    """One raw observation of ``user`` at time slot ``t`` in grid cell ``(x, y)``."""

    user: str
    t: int
    x: int
    y: int

    def __post_init__(self) -> None:
        if self.t < 0 or self.x < 0 or self.y < 0:
            raise DomainError(f"negative coordinate in {self!r}")

    @property
    def key(self) -> Tuple[int, str, int, int]:
        # Pool ordering: time first, then deterministic tie-break.
        return (self.t, self.user, self.x, self.y)


class Box(NamedTuple):
    """Inclusive space-time extent of a published cell."""

    t_min: int
    t_max: int
    x_min: int
    x_max: int
    y_min: int
    y_max: int

    @classmethod
    def of(cls, samples: Iterable[Sample]) -> "Box":
        samples = list(samples)
        if not samples:
            raise DomainError("cannot box an empty sample set")
        ts = [s.t for s in samples]
        xs = [s.x for s in samples]
        ys = [s.y for s in samples]
        return cls(min(ts), max(ts), min(xs), max(xs), min(ys), max(ys))

    def span(self, dim: str) -> int:
        if dim == "t":
            return self.t_max - self.t_min + 1
        if dim == "x":
            return self.x_max - self.x_min + 1
        if dim == "y":
            return self.y_max - self.y_min + 1
        raise DomainError(f"unknown dimension {dim!r}")

    @property
    def cost(self) -> int:
        return self.span("t") * (self.span("x") + self.span("y"))

    def contains(self, s: Sample) -> bool:
        return (
            self.t_min <= s.t <= self.t_max
            and self.x_min <= s.x <= self.x_max
            and self.y_min <= s.y <= self.y_max
        )


@dataclass(frozen=True)
class GeneralizedSample:
    """A set of raw samples published together as one space-time box."""

    members: frozenset

    def __post_init__(self) -> None:
        if not self.members:
            raise DomainError("a generalized sample needs at least one member")
        if not isinstance(self.members, frozenset):
            object.__setattr__(self, "members", frozenset(self.members))

    @classmethod
    def of(cls, samples: Iterable[Sample]) -> "GeneralizedSample":
        return cls(frozenset(samples))

    @cached_property
    def box(self) -> Box:
        return Box.of(self.members)

    @property
    def users(self) -> frozenset:
        return frozenset(s.user for s in self.members)

    def __len__(self) -> int:
        return len(self.members)


Cell = Union[GeneralizedSample, Box]


def _box(cell: Cell) -> Box:
    return cell if isinstance(cell, Box) else cell.box


def span(g: Cell, dim: str) -> int:
    """Extent of ``g`` along ``dim`` (max minus min plus one)."""
    if isinstance(g, GeneralizedSample) or isinstance(g, Box):
        return _box(g).span(dim)
    raise DomainError(f"not a generalized sample: {g!r}")


def time_cost(g: Cell) -> int:
    return span(g, "t")


def space_cost(g: Cell) -> int:
    return span(g, "x") + span(g, "y")


def sample_cost(g: Cell) -> int:
    """Area of the time-by-space rectangle covered by ``g``."""
    return time_cost(g) * space_cost(g)


def is_time_coherent(cells: Sequence[Cell]) -> bool:
    """True iff consecutive cells occupy strictly ordered, disjoint time spans."""
    boxes = [_box(c) for c in cells]
    return all(a.t_max < b.t_min for a, b in zip(boxes, boxes[1:]))


def trajectory_cost(cells: Union["GeneralizedTrajectory", Sequence[Cell]]) -> int:
    if isinstance(cells, GeneralizedTrajectory):
        cells = cells.cells
    if not is_time_coherent(cells):
        raise DomainError("generalized trajectory violates time coherence")
    return sum(sample_cost(c) for c in cells)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered samples of a single user.

    Several samples may share a time slot; they are ordered by ``(x, y)``
    and must not repeat the same ``(t, x, y)`` triple.
    """

    user: str
    samples: Tuple[Sample, ...]

    def __post_init__(self) -> None:
        samples = tuple(self.samples)
        for s in samples:
            if s.user != self.user:
                raise DomainError(f"sample {s!r} does not belong to user {self.user!r}")
        for a, b in zip(samples, samples[1:]):
            if (a.t, a.x, a.y) >= (b.t, b.x, b.y):
                raise DomainError(
                    f"trajectory of {self.user!r} not sorted or has duplicate at t={b.t}"
                )
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_samples(cls, user: str, samples: Iterable[Sample]) -> "Trajectory":
        """Sort and deduplicate ``samples`` into a valid trajectory."""
        uniq = {(s.t, s.x, s.y): s for s in samples}
        return cls(user, tuple(uniq[k] for k in sorted(uniq)))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def between(self, start: int, stop: int) -> Tuple[Sample, ...]:
        """Samples with ``start <= t < stop``."""
        return tuple(s for s in self.samples if start <= s.t < stop)


@dataclass(frozen=True)
class GeneralizedTrajectory:
    """Published record of ``owner``: time-coherent generalized samples."""

    owner: str
    cells: Tuple[GeneralizedSample, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        cells = tuple(self.cells)
        object.__setattr__(self, "cells", cells)
        if not is_time_coherent(cells):
            raise DomainError(f"record of {self.owner!r} violates time coherence")
        for c in cells:
            if self.owner not in c.users:
                raise DomainError(f"cell {c.box} of {self.owner!r} holds no sample of its owner")

    @property
    def boxes(self) -> Tuple[Box, ...]:
        return tuple(c.box for c in self.cells)

    @property
    def cost(self) -> int:
        return trajectory_cost(self.cells)
