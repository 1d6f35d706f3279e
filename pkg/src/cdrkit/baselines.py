"""Count-based next-location predictors.

Both models count transitions inside each training subsequence and never
across subsequence boundaries.  Ties are broken by count, then by the most
recent position the candidate was seen in training, then by the
lexicographically smallest label.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .ingest import LocationEvent

State = tuple[str, ...]


def _labels(seq) -> list[str]:
    return [e.l if isinstance(e, LocationEvent) else e for e in seq]


def _argmax(counts: Mapping[str, int], last_seen: Mapping[str, int]) -> str:
    return min(counts, key=lambda lab: (-counts[lab], -last_seen[lab], lab))


@dataclass
class TransitionCounts:
    """Successor counts for every state of one fixed order."""

    order: int
    counts: dict[State, dict[str, int]] = field(default_factory=dict)
    last_seen: dict[State, dict[str, int]] = field(default_factory=dict)

    def add(self, state: State, nxt: str, position: int) -> None:
        self.counts.setdefault(state, {}).setdefault(nxt, 0)
        self.counts[state][nxt] += 1
        self.last_seen.setdefault(state, {})[nxt] = position

    def best(self, state: State) -> str | None:
        if state not in self.counts:
            return None
        return _argmax(self.counts[state], self.last_seen[state])

    def to_list(self) -> list:
        return [
            [list(state), [[nxt, self.counts[state][nxt], self.last_seen[state][nxt]] for nxt in sorted(self.counts[state])]]
            for state in sorted(self.counts)
        ]

    @classmethod
    def from_list(cls, order: int, rows) -> "TransitionCounts":
        tc = cls(order)
        for state, entries in rows:
            key = tuple(state)
            tc.counts[key] = {nxt: int(c) for nxt, c, _ in entries}
            tc.last_seen[key] = {nxt: int(pos) for nxt, _, pos in entries}
        return tc


def _count(train: Iterable[Sequence], order: int) -> tuple[TransitionCounts, dict[str, int], dict[str, int]]:
    table = TransitionCounts(order)
    totals: dict[str, int] = defaultdict(int)
    last: dict[str, int] = {}
    position = 0
    for seq in train:
        labels = _labels(seq)
        for i in range(order, len(labels)):
            nxt = labels[i]
            table.add(tuple(labels[i - order : i]), nxt, position)
            if order == 1:
                totals[nxt] += 1
                last[nxt] = position
            position += 1
    return table, dict(totals), last


@dataclass
class FrequencyTable:
    """Most-frequent-next-visited-location model."""

    table: TransitionCounts
    global_counts: dict[str, int]
    global_last: dict[str, int]

    kind = "mfnv"

    def __getitem__(self, label: str) -> dict[str, int]:
        return self.table.counts[(label,)]

    def predict(self, history) -> str:
        labels = _labels(history)
        if not self.global_counts:
            raise ValueError("empty frequency table")
        if labels:
            best = self.table.best((labels[-1],))
            if best is not None:
                return best
        return _argmax(self.global_counts, self.global_last)

    def to_dict(self) -> dict:
        return {"table": self.table.to_list()}

    @classmethod
    def from_dict(cls, data) -> "FrequencyTable":
        table = TransitionCounts.from_list(1, data["table"])
        return cls(table, *_globals(table))


def _globals(table: TransitionCounts) -> tuple[dict[str, int], dict[str, int]]:
    totals: dict[str, int] = defaultdict(int)
    last: dict[str, int] = {}
    for state, nexts in table.counts.items():
        for nxt, c in nexts.items():
            totals[nxt] += c
            last[nxt] = max(last.get(nxt, -1), table.last_seen[state][nxt])
    return dict(totals), last


def fit_mfnv(train: Iterable[Sequence]) -> FrequencyTable:
    table, totals, last = _count(train, 1)
    if not table.counts:
        raise ValueError("training data contains no transitions")
    return FrequencyTable(table, totals, last)


def predict_mfnv(table: FrequencyTable, current) -> str:
    return table.predict([current])


@dataclass
class MarkovModel:
    """Order-``k`` Markov chain with recursive backoff to lower orders."""

    order: int
    tables: dict[int, TransitionCounts]
    global_counts: dict[str, int]
    global_last: dict[str, int]

    kind = "markov"

    def distribution(self, state: Sequence[str]) -> dict[str, float]:
        state = tuple(state)
        counts = self.tables[len(state)].counts[state]
        total = sum(counts.values())
        return {nxt: c / total for nxt, c in counts.items()}

    def predict(self, history) -> str:
        labels = _labels(history)
        if not labels:
            raise ValueError("history must be non-empty")
        for k in range(min(self.order, len(labels)), 0, -1):
            best = self.tables[k].best(tuple(labels[-k:]))
            if best is not None:
                return best
        return _argmax(self.global_counts, self.global_last)

    def to_dict(self) -> dict:
        return {"order": self.order, "tables": {str(k): t.to_list() for k, t in sorted(self.tables.items())}}

    @classmethod
    def from_dict(cls, data) -> "MarkovModel":
        tables = {int(k): TransitionCounts.from_list(int(k), rows) for k, rows in data["tables"].items()}
        return cls(int(data["order"]), tables, *_globals(tables[1]))


def fit_markov(train: Iterable[Sequence], order: int = 2) -> MarkovModel:
    if order < 1:
        raise ValueError(f"Markov order must be >= 1, got {order}")
    train = [list(seq) for seq in train]
    tables = {}
    for k in range(1, order + 1):
        tables[k], totals, last = _count(train, k)
        if k == 1:
            global_counts, global_last = totals, last
    if not tables[order].counts:
        raise ValueError(f"no state of order {order} has a successor in the training data")
    return MarkovModel(order, tables, global_counts, global_last)


def predict_markov(model: MarkovModel, history) -> str:
    return model.predict(history)


def label_coordinates(sequences: Iterable[Sequence[LocationEvent]]) -> dict[str, tuple[float, float]]:
    coords = {}
    for seq in sequences:
        for e in seq:
            coords.setdefault(e.l, (e.lat, e.lon))
    return coords


def baseline_predict_coords(predictor, history, label_coords: Mapping[str, tuple[float, float]]) -> tuple[float, float]:
    label = predictor.predict(history)
    assert label in label_coords, f"predicted label {label!r} has no coordinates"
    return label_coords[label]
