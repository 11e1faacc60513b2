"""Raw trajectory datasets and the CSV formats used on disk.

Raw rows are ``user_id,t,x,y``; anonymized rows are one published box per
line, ``user_id,t_min,t_max,x_min,x_max,y_min,y_max`` with inclusive spans;
the suppression log holds ``user_id,epoch`` rows. Lines starting with ``#``
carry ``key=value`` metadata.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from trajanon.model import Box, DomainError, Sample, Trajectory

PathLike = Union[str, os.PathLike]

RAW_HEADER = ["user_id", "t", "x", "y"]
ANON_HEADER = ["user_id", "t_min", "t_max", "x_min", "x_max", "y_min", "y_max"]
SUPPRESSION_HEADER = ["user_id", "epoch"]


class FormatError(DomainError):
    """Malformed CSV input; the message carries the offending line number."""


@dataclass(frozen=True)
class Dataset:
    trajectories: Dict[str, Trajectory]
    n_slots: Optional[int] = None
    origin: Optional[str] = None

    def __post_init__(self) -> None:
        for user, tr in self.trajectories.items():
            if tr.user != user:
                raise DomainError(f"trajectory keyed {user!r} belongs to {tr.user!r}")
        if self.n_slots is not None:
            for tr in self.trajectories.values():
                if tr.samples and tr.samples[-1].t >= self.n_slots:
                    raise DomainError(f"sample of {tr.user!r} beyond declared span {self.n_slots}")

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], n_slots: Optional[int] = None,
                     origin: Optional[str] = None) -> "Dataset":
        by_user: Dict[str, List[Sample]] = {}
        for s in samples:
            by_user.setdefault(s.user, []).append(s)
        trajs = {u: Trajectory.from_samples(u, ss) for u, ss in sorted(by_user.items())}
        return cls(trajs, n_slots, origin)

    @property
    def users(self) -> List[str]:
        return sorted(self.trajectories)

    @property
    def timespan(self) -> int:
        """Number of time slots covered; declared span if known."""
        if self.n_slots is not None:
            return self.n_slots
        last = [tr.samples[-1].t for tr in self.trajectories.values() if tr.samples]
        return max(last) + 1 if last else 0

    def samples(self) -> Iterable[Sample]:
        for user in self.users:
            yield from self.trajectories[user].samples

    def __len__(self) -> int:
        return sum(len(tr) for tr in self.trajectories.values())


def _meta_line(meta: Mapping[str, object]) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n"


def _split(text: str) -> Tuple[Dict[str, str], List[Tuple[int, str]]]:
    meta: Dict[str, str] = {}
    body = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        if line.strip():
            body.append((lineno, line))
    return meta, body


def _rows(body: List[Tuple[int, str]], header: Sequence[str], path) -> Iterable[Tuple[int, List[str]]]:
    if not body:
        raise FormatError(f"{path}: missing header {','.join(header)}")
    lineno, first = body[0]
    got = next(csv.reader([first]))
    if [h.strip() for h in got] != list(header):
        raise FormatError(f"{path}:{lineno}: expected header {','.join(header)}, got {first!r}")
    for lineno, line in body[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        yield lineno, row


def _ints(row: Sequence[str], lineno: int, path) -> List[int]:
    out = []
    for v in row:
        try:
            n = int(v)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer field {v!r}") from None
        if n < 0:
            raise FormatError(f"{path}:{lineno}: negative value {n}")
        out.append(n)
    return out


def _read_text(path: PathLike) -> str:
    with open(path, newline="") as fh:
        return fh.read()


def parse_raw(text: str, path: str = "<string>") -> Dataset:
    meta, body = _split(text)
    samples = []
    for lineno, row in _rows(body, RAW_HEADER, path):
        t, x, y = _ints(row[1:], lineno, path)
        samples.append(Sample(row[0], t, x, y))
    n_slots = int(meta["slots"]) if "slots" in meta else None
    return Dataset.from_samples(samples, n_slots=n_slots, origin=meta.get("origin"))


def read_csv(path: PathLike) -> Dataset:
    """Load a raw dataset; rejects malformed rows with line-numbered errors."""
    return parse_raw(_read_text(path), str(path))


def format_raw(dataset: Dataset) -> str:
    buf = io.StringIO()
    meta = {}
    if dataset.origin is not None:
        meta["origin"] = dataset.origin
    if dataset.n_slots is not None:
        meta["slots"] = dataset.n_slots
    if meta:
        buf.write(_meta_line(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RAW_HEADER)
    for s in dataset.samples():
        w.writerow([s.user, s.t, s.x, s.y])
    return buf.getvalue()


def write_csv(dataset: Dataset, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_raw(dataset))


def format_anonymized(records: Mapping[str, Sequence[Box]], meta: Optional[Mapping[str, object]] = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write(_meta_line(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANON_HEADER)
    for user in sorted(records):
        for b in records[user]:
            w.writerow([user, b.t_min, b.t_max, b.x_min, b.x_max, b.y_min, b.y_max])
    return buf.getvalue()


def parse_anonymized(text: str, path: str = "<string>") -> Tuple[Dict[str, Tuple[Box, ...]], Dict[str, str]]:
    meta, body = _split(text)
    records: Dict[str, List[Box]] = {}
    for lineno, row in _rows(body, ANON_HEADER, path):
        t0, t1, x0, x1, y0, y1 = _ints(row[1:], lineno, path)
        if t0 > t1 or x0 > x1 or y0 > y1:
            raise FormatError(f"{path}:{lineno}: inverted span")
        records.setdefault(row[0], []).append(Box(t0, t1, x0, x1, y0, y1))
    return {u: tuple(sorted(bs)) for u, bs in records.items()}, meta


def read_anonymized_csv(path: PathLike):
    return parse_anonymized(_read_text(path), str(path))


def write_anonymized_csv(records: Mapping[str, Sequence[Box]], path: PathLike,
                         meta: Optional[Mapping[str, object]] = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_anonymized(records, meta))


def format_suppression(log: Iterable[Tuple[str, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUPPRESSION_HEADER)
    for user, epoch in sorted(log):
        w.writerow([user, epoch])
    return buf.getvalue()


def parse_suppression(text: str, path: str = "<string>") -> Set[Tuple[str, int]]:
    _, body = _split(text)
    out = set()
    for lineno, row in _rows(body, SUPPRESSION_HEADER, path):
        (epoch,) = _ints(row[1:], lineno, path)
        out.add((row[0], epoch))
    return out


def read_suppression_csv(path: PathLike) -> Set[Tuple[str, int]]:
    return parse_suppression(_read_text(path), str(path))


def write_suppression_csv(log: Iterable[Tuple[str, int]], path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_suppression(log))


def suppression_path(anon_path: PathLike) -> str:
    """Conventional location of the suppression log next to an anonymized CSV."""
    root, ext = os.path.splitext(os.fspath(anon_path))
    return f"{root}.suppressed{ext or '.csv'}"


@dataclass(frozen=True)
class PublishedDataset:
    """What a publisher releases: boxes per user, the suppression log and run metadata."""

    records: Dict[str, Tuple[Box, ...]]
    suppression_log: frozenset = frozenset()
    meta: Dict[str, int] = field(default_factory=dict)

    def _meta_int(self, key: str) -> int:
        if key not in self.meta:
            raise FormatError(f"published dataset lacks {key!r} metadata")
        return int(self.meta[key])

    @property
    def epsilon(self) -> int:
        return self._meta_int("epsilon")

    @property
    def tau(self) -> int:
        return self._meta_int("tau")

    @property
    def k(self) -> int:
        return self._meta_int("k")

    def epoch_of(self, t: int) -> int:
        return t // self.epsilon + 1

    def boxes(self) -> Iterable[Tuple[str, Box]]:
        for user in sorted(self.records):
            for b in self.records[user]:
                yield user, b


def save_published(pub: PublishedDataset, path: PathLike) -> str:
    """Write the anonymized CSV and its sibling suppression log; returns the log path."""
    write_anonymized_csv(pub.records, path, pub.meta)
    log_path = suppression_path(path)
    write_suppression_csv(pub.suppression_log, log_path)
    return log_path


def load_published(path: PathLike, log_path: Optional[PathLike] = None) -> PublishedDataset:
    records, meta = read_anonymized_csv(path)
    log_path = log_path or suppression_path(path)
    log = read_suppression_csv(log_path) if os.path.exists(log_path) else set()
    return PublishedDataset(records, frozenset(log), {k: int(v) for k, v in meta.items()})


def write_report(report: Mapping[str, object], path: Optional[PathLike] = None) -> str:
    """Render ``key: value`` lines; also written to ``path`` when given."""
    text = "".join(f"{k}: {_fmt(v)}\n" for k, v in report.items())
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
