"""Turning a user's event sequence into (input subsequence, target) samples.

Four preparation methods are provided:

* ``m1``: every event predicts its successor (input length 1).
* ``m2``: a window of ``w`` events slides one step at a time; the first
  ``w - 1`` events are the input and the last is the target.
* ``m3``: stays are collapsed to their first (and, when settled, last)
  event, the result is cut wherever two events are more than ``t_gap``
  seconds apart, and each piece yields one sample.
* ``m4``: as ``m3``, but pieces longer than ``w`` are windowed as in ``m2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence, TypeVar

from .ingest import LocationEvent

METHODS = ("m1", "m2", "m3", "m4")

T = TypeVar("T")


class InsufficientDataError(ValueError):
    """Raised when a sequence is too short to form a single sample."""


@dataclass(frozen=True)
class PrepConfig:
    method: str
    w: int | None = None
    t: int | None = None
    t_gap: int | None = None

    def __post_init__(self):
        method = self.method.lower()
        object.__setattr__(self, "method", method)
        if method not in METHODS:
            raise ValueError(f"unknown preparation method {self.method!r}")
        if method in ("m2", "m4"):
            if self.w is None:
                raise ValueError(f"method {method} requires a window length w")
            if self.w < 2:
                raise ValueError(f"window length must be >= 2, got {self.w}")
        if method in ("m3", "m4"):
            if self.t is None or self.t <= 0:
                raise ValueError(f"method {method} requires a positive timespan t")
            if self.t_gap is not None and self.t_gap <= 0:
                raise ValueError("t_gap must be positive")

    @property
    def gap(self) -> int | None:
        return self.t if self.t_gap is None else self.t_gap

    def as_dict(self) -> dict:
        return {"method": self.method, "w": self.w, "t": self.t, "t_gap": self.t_gap}


@dataclass(frozen=True)
class Sample:
    input: tuple[LocationEvent, ...]
    target: LocationEvent


@dataclass
class PreparedDataset:
    samples: list[Sample]
    config: PrepConfig
    source_user: str = ""
    dropped: int = 0  # single-event pieces that could not form a sample
    subsequences: list[list[LocationEvent]] = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def labels(self) -> set[str]:
        out = set()
        for s in self.samples:
            out.update(e.l for e in s.input)
            out.add(s.target.l)
        return out


def _windows(seq: Sequence[LocationEvent], w: int) -> list[Sample]:
    return [Sample(tuple(seq[i : i + w - 1]), seq[i + w - 1]) for i in range(len(seq) - w + 1)]


def prep_method1(seq: Sequence[LocationEvent], user: str = "") -> PreparedDataset:
    if len(seq) < 2:
        raise InsufficientDataError(f"need at least 2 events, got {len(seq)}")
    samples = [Sample((a,), b) for a, b in zip(seq, seq[1:])]
    return PreparedDataset(samples, PrepConfig("m1"), user, subsequences=[list(seq)])


def prep_method2(seq: Sequence[LocationEvent], w: int, user: str = "") -> PreparedDataset:
    """Slide a window of length ``w``; yields ``len(seq) - w + 1`` samples."""
    config = PrepConfig("m2", w=w)
    if len(seq) < w:
        raise InsufficientDataError(f"need at least w={w} events, got {len(seq)}")
    return PreparedDataset(_windows(seq, w), config, user, subsequences=[list(seq)])


def collapse_stays(seq: Sequence[LocationEvent], t: float) -> list[LocationEvent]:
    """Replace each run of equal labels by its first event, plus its last
    event when the run spans at least ``t`` seconds."""
    if t <= 0:
        raise ValueError("t must be positive")
    out: list[LocationEvent] = []
    i, n = 0, len(seq)
    while i < n:
        j = i
        while j + 1 < n and seq[j + 1].l == seq[i].l:
            j += 1
        out.append(seq[i])
        if j > i and seq[j].t - seq[i].t >= t:
            out.append(seq[j])
        i = j + 1
    return out


def slice_by_gap(seq: Sequence[T], t: float) -> list[list[T]]:
    """Split ``seq`` after every event whose successor is more than ``t``
    seconds later.  The pieces concatenate back to ``seq``."""
    if t <= 0:
        raise ValueError("t must be positive")
    if not seq:
        return []
    pieces = [[seq[0]]]
    for prev, cur in zip(seq, seq[1:]):
        if cur.t - prev.t > t:
            pieces.append([cur])
        else:
            pieces[-1].append(cur)
    return pieces


def trajectories(seq: Sequence[LocationEvent], t: float, t_gap: float | None = None) -> list[list[LocationEvent]]:
    """Collapsed, gap-sliced pieces of ``seq`` (no length filter)."""
    return slice_by_gap(collapse_stays(seq, t), t if t_gap is None else t_gap)


def _method3_from_pieces(pieces, config, user):
    samples, dropped, kept = [], 0, []
    for piece in pieces:
        if len(piece) < 2:
            dropped += 1
            continue
        kept.append(piece)
        samples.append(Sample(tuple(piece[:-1]), piece[-1]))
    if not samples:
        raise InsufficientDataError("no trajectory with at least 2 events after collapsing and slicing")
    return PreparedDataset(samples, config, user, dropped, kept)


def prep_method3(seq: Sequence[LocationEvent], t: int, user: str = "", t_gap: int | None = None) -> PreparedDataset:
    config = PrepConfig("m3", t=t, t_gap=t_gap)
    if len(seq) < 2:
        raise InsufficientDataError(f"need at least 2 events, got {len(seq)}")
    return _method3_from_pieces(trajectories(seq, t, config.gap), config, user)


def prep_method4(
    seq: Sequence[LocationEvent], t: int, w: int | float, user: str = "", t_gap: int | None = None
) -> PreparedDataset:
    """Method 3 with long trajectories re-cut by a window of length ``w``.

    ``w`` may be ``math.inf``, in which case the result equals method 3.
    """
    if w != math.inf:
        config = PrepConfig("m4", w=int(w), t=t, t_gap=t_gap)
    else:
        config = PrepConfig("m3", t=t, t_gap=t_gap)
    base = prep_method3(seq, t, user, t_gap)
    if w == math.inf:
        return base
    samples = []
    for piece in base.subsequences:
        if len(piece) <= w:
            samples.append(Sample(tuple(piece[:-1]), piece[-1]))
        else:
            samples.extend(_windows(piece, int(w)))
    return PreparedDataset(samples, config, user, base.dropped, base.subsequences)


def prepare(seq: Sequence[LocationEvent], config: PrepConfig, user: str = "") -> PreparedDataset:
    if config.method == "m1":
        return prep_method1(seq, user)
    if config.method == "m2":
        return prep_method2(seq, config.w, user)
    if config.method == "m3":
        return prep_method3(seq, config.t, user, config.t_gap)
    return prep_method4(seq, config.t, config.w, user, config.t_gap)


def split_train_test(items: Sequence[T], ratio: float = 0.5) -> tuple[list[T], list[T]]:
    """Chronological split: the first ``ceil(ratio * n)`` items train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    if len(items) == 0:
        raise InsufficientDataError("cannot split an empty sequence")
    cut = math.ceil(ratio * len(items))
    return list(items[:cut]), list(items[cut:])


def filter_unknown(test: PreparedDataset, known_labels: set[str]) -> tuple[PreparedDataset, int]:
    """Drop test samples that mention a label outside ``known_labels``.

    Returns the filtered dataset and the number of removed samples.
    """
    if not known_labels:
        raise ValueError("known_labels must be non-empty")
    kept = [
        s for s in test.samples if s.target.l in known_labels and all(e.l in known_labels for e in s.input)
    ]
    removed = len(test.samples) - len(kept)
    return PreparedDataset(kept, test.config, test.source_user, test.dropped, test.subsequences), removed


def write_prepared(dataset: PreparedDataset, path) -> None:
    """One sample per line: index, input labels/times/coords, target."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["sample", "input_labels", "input_t", "input_coords", "target_label", "target_t", "target_lat", "target_lon"]
        )
        for i, s in enumerate(dataset.samples):
            writer.writerow(
                [
                    i,
                    "|".join(e.l for e in s.input),
                    "|".join(str(e.t) for e in s.input),
                    "|".join(f"{e.lat!r} {e.lon!r}" for e in s.input),
                    s.target.l,
                    s.target.t,
                    repr(s.target.lat),
                    repr(s.target.lon),
                ]
            )
