"""Seeded synthetic CDR corpora for commuters.

Each simulated day is: home stay, outbound route, work stay, return
route.  Stays emit one call shortly after arrival and one shortly before
departure plus Poisson-timed calls in between; every route tower passed
emits ``calls_per_tower`` calls unless the pass is skipped, which happens
independently with probability ``skip_prob``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .ingest import CdrRecord, CellSite

DAY = 86400
ANCHOR_WINDOW = 300  # seconds after arrival / before departure for the guaranteed stay calls

Coord = tuple[float, float]


@dataclass(frozen=True)
class CommuterSpec:
    home: Coord
    work: Coord
    outbound: tuple[Coord, ...]
    inbound: tuple[Coord, ...]
    depart_home: int = 8 * 3600  # seconds after midnight
    depart_work: int = 17 * 3600
    jitter: int = 900  # departure times are uniform within +/- jitter
    hop_seconds: int = 600  # travel time between consecutive towers
    stationary_rate: float = 1.0  # calls per hour while settled
    moving_rate: float = 0.0  # extra calls per hour while travelling
    calls_per_tower: int = 1
    skip_prob: float = 0.0
    anchor_calls: bool = True
    days: int = 60
    seed: int = 0
    start_date: str = "2024-01-01"
    user_id: str = "989120000001"
    mcc: int = 432
    mnc: int = 11

    def __post_init__(self):
        if self.stationary_rate < 0 or self.moving_rate < 0:
            raise ValueError("call rates must be non-negative")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        if not 0.0 <= self.skip_prob <= 1.0:
            raise ValueError("skip_prob must lie in [0, 1]")
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if self.home == self.work:
            raise ValueError("need at least 2 distinct anchor towers")
        if self.depart_home + self.jitter + (len(self.outbound) + 1) * self.hop_seconds >= self.depart_work - self.jitter:
            raise ValueError("work stay would be empty; move departure times apart")

    @property
    def towers(self) -> list[Coord]:
        """Home, work, outbound towers, inbound towers; index = tower id."""
        return [self.home, self.work, *self.outbound, *self.inbound]

    def tower_key(self, idx: int) -> tuple[int, int, int, int]:
        # home/work share LAC 100; each route gets its own LAC
        if idx < 2:
            return (self.mcc, self.mnc, 100, idx + 1)
        if idx < 2 + len(self.outbound):
            return (self.mcc, self.mnc, 200, idx - 1)
        return (self.mcc, self.mnc, 300, idx - 1 - len(self.outbound))

    @property
    def outbound_ids(self) -> list[int]:
        return list(range(2, 2 + len(self.outbound)))

    @property
    def inbound_ids(self) -> list[int]:
        return list(range(2 + len(self.outbound), 2 + len(self.outbound) + len(self.inbound)))


@dataclass(frozen=True)
class Segment:
    kind: str  # "stay" or "pass"
    tower: int
    start: int
    end: int
    skipped: bool = False


@dataclass
class SynthCorpus:
    records: list[CdrRecord]
    cells: list[CellSite]
    itinerary: list[Segment] = field(repr=False)
    spec: CommuterSpec | None = None


def commuter(
    seed: int = 0,
    days: int = 60,
    skip_prob: float = 0.1,
    center: Coord = (35.70, 51.40),
    user_id: str | None = None,
    **overrides,
) -> CommuterSpec:
    """A two-route commuter on six towers around ``center``.

    Home and work sit about 0.24 degrees apart on a diagonal; the morning
    route passes two towers on one side of it and the evening route two
    towers on the other side.
    """
    rng = np.random.default_rng([seed, 7])
    jit = lambda: rng.uniform(-0.01, 0.01, 2)  # noqa: E731
    c = np.asarray(center)
    home = c + np.array([-0.12, -0.12]) + jit()
    work = c + np.array([0.12, 0.12]) + jit()
    axis = work - home
    normal = np.array([-axis[1], axis[0]]) / np.linalg.norm(axis)
    outbound = [home + axis * f + 0.04 * normal + jit() for f in (1 / 3, 2 / 3)]
    inbound = [home + axis * f - 0.04 * normal + jit() for f in (2 / 3, 1 / 3)]
    as_pair = lambda p: (round(float(p[0]), 6), round(float(p[1]), 6))  # noqa: E731
    return CommuterSpec(
        home=as_pair(home),
        work=as_pair(work),
        outbound=tuple(as_pair(p) for p in outbound),
        inbound=tuple(as_pair(p) for p in inbound),
        skip_prob=skip_prob,
        days=days,
        seed=seed,
        user_id=user_id or f"98912{seed:07d}",
        **overrides,
    )


def _stay_calls(rng, spec: CommuterSpec, start: int, end: int) -> list[int]:
    times = []
    if spec.anchor_calls:
        times.append(start + int(rng.integers(0, ANCHOR_WINDOW)))
        times.append(end - int(rng.integers(1, ANCHOR_WINDOW + 1)))
    n = rng.poisson(spec.stationary_rate * (end - start) / 3600.0)
    times.extend(int(v) for v in rng.integers(start, end, n))
    return times


def itinerary(spec: CommuterSpec, rng: np.random.Generator) -> list[Segment]:
    base = int(datetime.strptime(spec.start_date, "%Y-%m-%d").replace(tzinfo=timezone.utc).timestamp())
    segs: list[Segment] = []
    stay_start = base
    hop = spec.hop_seconds
    for d in range(spec.days):
        midnight = base + d * DAY
        for route, dest, depart in (
            (spec.outbound_ids, 1, spec.depart_home),
            (spec.inbound_ids, 0, spec.depart_work),
        ):
            leave = midnight + depart + int(rng.integers(-spec.jitter, spec.jitter + 1))
            here = 0 if dest == 1 else 1
            segs.append(Segment("stay", here, stay_start, leave))
            t = leave
            for tower in route:
                skipped = bool(rng.random() < spec.skip_prob)
                segs.append(Segment("pass", tower, t, t + hop, skipped))
                t += hop
            stay_start = t + hop  # final hop into the destination
    segs.append(Segment("stay", 0, stay_start, base + spec.days * DAY))
    return segs


def generate(spec: CommuterSpec) -> SynthCorpus:
    """Simulate ``spec``; identical specs give identical corpora."""
    rng = np.random.default_rng(spec.seed)
    segs = itinerary(spec, rng)
    stamped: list[tuple[int, int]] = []
    for seg in segs:
        if seg.kind == "stay":
            times = _stay_calls(rng, spec, seg.start, seg.end)
        else:
            times = []
            if not seg.skipped:
                times = [int(v) for v in rng.integers(seg.start, seg.end, spec.calls_per_tower)]
                n = rng.poisson(spec.moving_rate * (seg.end - seg.start) / 3600.0)
                times += [int(v) for v in rng.integers(seg.start, seg.end, n)]
        stamped.extend((t, seg.tower) for t in times)
    if not stamped:
        raise ValueError("spec produces no records (all call rates are zero)")
    stamped.sort()
    records = []
    last = None
    for t, tower in stamped:
        if last is not None and t <= last:
            t = last + 1
        last = t
        mcc, mnc, lac, cell = spec.tower_key(tower)
        records.append(CdrRecord(spec.user_id, t, mcc, mnc, lac, cell))
    cells = [CellSite(spec.tower_key(i), lat, lon) for i, (lat, lon) in enumerate(spec.towers)]
    return SynthCorpus(records, cells, segs, spec)


def route_labels(spec: CommuterSpec) -> list[str]:
    """Labels of one day's commute: home, outbound, work, inbound, home."""
    ids = [0, *spec.outbound_ids, 1, *spec.inbound_ids, 0]
    return [f"{spec.tower_key(i)[2]}-{spec.tower_key(i)[3]}" for i in ids]


def id_variants(canonical: str, country_code: str = "98") -> list[str]:
    """Formatting variants that canonicalise back to ``canonical``."""
    local = canonical[len(country_code) :]
    return [
        canonical,
        f"+{country_code} {local[:3]} {local[3:]}",
        f"00{country_code}{local}",
        f"0{local[:3]}-{local[3:6]}-{local[6:]}",
    ]


def write_cdr(records, path, rng: np.random.Generator | None = None, duplicate_prob: float = 0.0, vary_ids: bool = False) -> None:
    """Write records in the ingest CDR format, optionally with noise.

    ``duplicate_prob`` repeats a row; ``vary_ids`` writes each row's user ID
    in a random but equivalent format.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "date", "time", "mcc", "mnc", "lac", "cell"])
        variants: dict[str, list[str]] = {}
        for rec in records:
            stamp = datetime.fromtimestamp(rec.timestamp, tz=timezone.utc)
            uid = rec.user_id
            if vary_ids:
                opts = variants.setdefault(uid, id_variants(uid))
                uid = opts[int(rng.integers(len(opts)))]
            row = [uid, stamp.strftime("%Y-%m-%d"), stamp.strftime("%H:%M:%S"), rec.mcc, rec.mnc, rec.lac, rec.cell]
            writer.writerow(row)
            if duplicate_prob and rng.random() < duplicate_prob:
                writer.writerow(row)


def write_cells(cells, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mcc", "mnc", "lac", "cell", "lat", "lon"])
        for site in cells:
            writer.writerow([*site.key, repr(site.lat), repr(site.lon)])
