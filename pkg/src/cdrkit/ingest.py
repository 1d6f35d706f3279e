"""Parsing, cleaning and per-user profiling of raw call detail records.

Cleaning runs in a fixed order: dedupe, drop incomplete rows, unify user
IDs, then resolve serving cells to coordinates.  Every record that enters
the pipeline is accounted for in :class:`IngestResult` as either an event,
a duplicate, an incomplete row, a rejected ID, an unresolved cell or a
parse reject.
"""

from __future__ import annotations

import csv
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from zoneinfo import ZoneInfo

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("user_id", "date", "time", "mcc", "mnc", "lac", "cell")
CELL_COLUMNS = ("mcc", "mnc", "lac", "cell", "lat", "lon")

# reject reason codes
FIELD_COUNT = "FIELD_COUNT"
BAD_INT = "BAD_INT"
BAD_DATE = "BAD_DATE"
BAD_TIME = "BAD_TIME"
NO_DIGITS_ID = "NO_DIGITS_ID"

_NON_DIGIT = re.compile(r"\D+")


@dataclass(frozen=True)
class CdrRecord:
    """One raw network event.  ``None`` marks an absent value."""

    user_id: str | None
    timestamp: int | None
    mcc: int | None
    mnc: int | None
    lac: int | None
    cell: int | None
    extras: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.timestamp is not None and self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        for name in ("mcc", "mnc", "lac", "cell"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"negative {name} {value}")

    @property
    def key(self) -> tuple[int | None, int | None, int | None, int | None]:
        return (self.mcc, self.mnc, self.lac, self.cell)

    def is_complete(self) -> bool:
        return None not in (self.user_id, self.timestamp, self.mcc, self.mnc, self.lac, self.cell)


@dataclass(frozen=True)
class CellSite:
    key: tuple[int, int, int, int]
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class LocationEvent:
    """A resolved, timestamped visit ``{t, l, lat, lon}``."""

    t: int
    l: str
    lat: float
    lon: float


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    events: tuple[LocationEvent, ...]

    def __len__(self):
        return len(self.events)


@dataclass(frozen=True)
class Reject:
    row: int
    raw: str
    reason: str


@dataclass
class ParseResult:
    records: list[CdrRecord]
    rejects: list[Reject]
    rows: int


@dataclass
class IngestResult:
    profiles: list[UserProfile]
    rejects: list[Reject]
    counts: dict[str, int] = field(default_factory=dict)


def location_label(lac: int, cell: int) -> str:
    return f"{lac}-{cell}"


class CellTable:
    """Lookup from ``(mcc, mnc, lac, cell)`` to a :class:`CellSite`."""

    def __init__(self, sites: Iterable[CellSite]):
        self._sites: dict[tuple[int, int, int, int], CellSite] = {}
        for site in sites:
            if site.key in self._sites:
                raise ValueError(f"duplicate cell-site key {site.key}")
            self._sites[site.key] = site

    def __len__(self):
        return len(self._sites)

    def __iter__(self):
        return iter(self._sites.values())

    def get(self, key) -> CellSite | None:
        return self._sites.get(key)


def _as_table(table) -> CellTable:
    return table if isinstance(table, CellTable) else CellTable(table)


def _parse_int(text: str) -> int | None:
    text = text.strip()
    if not text:
        return None
    if not text.isdigit():
        raise ValueError(text)
    return int(text)


def _parse_timestamp(date: str, time: str, tz: ZoneInfo) -> int | None:
    """Fuse ``YYYY-MM-DD`` and ``HH:MM:SS`` into epoch seconds."""
    date, time = date.strip(), time.strip()
    if not date or not time:
        return None
    try:
        day = datetime.strptime(date, "%Y-%m-%d")
    except ValueError:
        raise ValueError(BAD_DATE) from None
    try:
        clock = datetime.strptime(time, "%H:%M:%S")
    except ValueError:
        raise ValueError(BAD_TIME) from None
    stamp = day.replace(hour=clock.hour, minute=clock.minute, second=clock.second, tzinfo=tz)
    return int(stamp.timestamp())


def parse_cdr(
    path,
    schema: Mapping[str, str] | None = None,
    delimiter: str = ",",
    tz: str = "UTC",
) -> ParseResult:
    """Read a delimited CDR file.

    ``schema`` maps each logical column in :data:`REQUIRED_COLUMNS` to the
    header name used in the file; missing entries default to the logical
    name.  Columns outside the schema are kept verbatim in
    ``CdrRecord.extras``.  Malformed rows become :class:`Reject` entries
    carrying their 1-based file line number.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"CDR file not found: {path}")
    schema = {name: (schema or {}).get(name, name) for name in REQUIRED_COLUMNS}
    zone = ZoneInfo(tz)

    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: missing header row")
    header = next(csv.reader([lines[0]], delimiter=delimiter))
    missing = [col for col in schema.values() if col not in header]
    if missing:
        raise ValueError(f"{path}: header lacks column(s) {', '.join(missing)}")
    index = {name: header.index(col) for name, col in schema.items()}
    extra_cols = [(i, col) for i, col in enumerate(header) if col not in schema.values()]

    records: list[CdrRecord] = []
    rejects: list[Reject] = []
    rows = 0
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        rows += 1
        values = next(csv.reader([raw], delimiter=delimiter))
        if len(values) != len(header):
            rejects.append(Reject(lineno, raw, FIELD_COUNT))
            continue
        try:
            ints = {name: _parse_int(values[index[name]]) for name in ("mcc", "mnc", "lac", "cell")}
        except ValueError:
            rejects.append(Reject(lineno, raw, BAD_INT))
            continue
        try:
            stamp = _parse_timestamp(values[index["date"]], values[index["time"]], zone)
        except ValueError as exc:
            rejects.append(Reject(lineno, raw, str(exc)))
            continue
        user = values[index["user_id"]].strip() or None
        extras = tuple((col, values[i]) for i, col in extra_cols)
        records.append(CdrRecord(user, stamp, extras=extras, **ints))
    logger.debug("parsed %s: %d rows, %d rejects", path, rows, len(rejects))
    return ParseResult(records, rejects, rows)


def read_cell_table(path, delimiter: str = ",") -> CellTable:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"cell-site table not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        missing = [c for c in CELL_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: header lacks column(s) {', '.join(missing)}")
        sites = []
        for row in reader:
            key = tuple(int(row[c]) for c in ("mcc", "mnc", "lac", "cell"))
            sites.append(CellSite(key, float(row["lat"]), float(row["lon"])))
    return CellTable(sites)


def dedupe(records: Sequence[CdrRecord]) -> list[CdrRecord]:
    """Keep the first occurrence of every fully identical record."""
    seen = set()
    out = []
    for rec in records:
        if rec not in seen:
            seen.add(rec)
            out.append(rec)
    return out


def drop_incomplete(records: Sequence[CdrRecord]) -> list[CdrRecord]:
    return [rec for rec in records if rec.is_complete()]


def canonical_user_id(raw: str, default_country_code: str) -> str:
    """Normalise a phone-number-like ID to digits with a country code.

    >>> canonical_user_id("+98 912 1234567", "98")
    '989121234567'
    >>> canonical_user_id("09121234567", "98")
    '989121234567'
    """
    if not default_country_code or not default_country_code.isdigit():
        raise ValueError("default_country_code must be a non-empty digit string")
    digits = _NON_DIGIT.sub("", raw)
    if not digits:
        raise ValueError(f"user ID {raw!r} has no digits")
    if digits.startswith("00"):
        digits = digits[2:]
        if not digits:
            raise ValueError(f"user ID {raw!r} is only an international prefix")
    if digits.startswith("0"):
        digits = default_country_code + digits[1:]
    return digits


def unify_user_ids(
    records: Sequence[CdrRecord], default_country_code: str
) -> tuple[list[CdrRecord], list[CdrRecord]]:
    """Rewrite user IDs to canonical form.

    Returns ``(kept, rejected)``; records whose ID carries no digits are
    rejected.  Order is preserved.
    """
    if not default_country_code:
        raise ValueError("default_country_code must be non-empty")
    kept, rejected = [], []
    cache: dict[str, str] = {}
    for rec in records:
        raw = rec.user_id or ""
        if raw not in cache:
            try:
                cache[raw] = canonical_user_id(raw, default_country_code)
            except ValueError:
                cache[raw] = ""
        canon = cache[raw]
        if not canon:
            rejected.append(rec)
        elif canon == rec.user_id:
            kept.append(rec)
        else:
            kept.append(CdrRecord(canon, rec.timestamp, rec.mcc, rec.mnc, rec.lac, rec.cell, rec.extras))
    return kept, rejected


def resolve_location(record: CdrRecord, table) -> LocationEvent | None:
    """Map a complete record to a :class:`LocationEvent`, or ``None`` if no cell matches."""
    site = _as_table(table).get(record.key)
    if site is None:
        return None
    return LocationEvent(record.timestamp, location_label(record.lac, record.cell), site.lat, site.lon)


def profile(records: Sequence[CdrRecord], table) -> tuple[list[UserProfile], int]:
    """Group cleaned records per user and resolve them to time-ordered events.

    Returns the profiles (ordered by user ID) and the number of records
    omitted because their cell is missing from ``table``.
    """
    table = _as_table(table)
    per_user: dict[str, list[LocationEvent]] = defaultdict(list)
    omitted = 0
    for rec in records:
        event = resolve_location(rec, table)
        if event is None:
            omitted += 1
            continue
        per_user[rec.user_id].append(event)
    profiles = [
        UserProfile(user, tuple(sorted(events, key=lambda e: e.t)))
        for user, events in sorted(per_user.items())
    ]
    return profiles, omitted


def clean(records: Sequence[CdrRecord], default_country_code: str):
    """Run dedupe, drop_incomplete and unify_user_ids in order.

    Returns ``(records, id_rejects, counts)``.
    """
    unique = dedupe(records)
    complete = drop_incomplete(unique)
    unified, id_rejects = unify_user_ids(complete, default_country_code)
    counts = {
        "duplicates": len(records) - len(unique),
        "incomplete": len(unique) - len(complete),
        "id_rejects": len(id_rejects),
    }
    return unified, id_rejects, counts


def _record_line(rec: CdrRecord) -> str:
    fields = [rec.user_id or "", str(rec.timestamp if rec.timestamp is not None else "")]
    fields += ["" if v is None else str(v) for v in rec.key]
    return ",".join(fields)


def ingest(
    cdr_path,
    cells_path,
    default_country_code: str = "98",
    delimiter: str = ",",
    tz: str = "UTC",
    schema: Mapping[str, str] | None = None,
) -> IngestResult:
    """Full parse, clean and profile pass over one CDR file."""
    parsed = parse_cdr(cdr_path, schema=schema, delimiter=delimiter, tz=tz)
    table = read_cell_table(cells_path, delimiter=delimiter)
    cleaned, id_rejects, counts = clean(parsed.records, default_country_code)
    profiles, unresolved = profile(cleaned, table)
    rejects = list(parsed.rejects) + [Reject(0, _record_line(r), NO_DIGITS_ID) for r in id_rejects]
    counts.update(
        rows=parsed.rows,
        parse_rejects=len(parsed.rejects),
        unresolved=unresolved,
        events=sum(len(p) for p in profiles),
        users=len(profiles),
    )
    logger.info("ingest: %s", counts)
    return IngestResult(profiles, rejects, counts)


def write_rejects(rejects: Sequence[Reject], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "raw", "reason"])
        for rej in rejects:
            writer.writerow([rej.row, rej.raw, rej.reason])


EVENT_COLUMNS = ("user_id", "t", "l", "lat", "lon")


def write_events(profiles: Sequence[UserProfile], path) -> None:
    """Write profiles as one event per line, grouped by user."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENT_COLUMNS)
        for prof in profiles:
            for ev in prof.events:
                writer.writerow([prof.user_id, ev.t, ev.l, repr(ev.lat), repr(ev.lon)])


def read_events(path) -> list[UserProfile]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"events file not found: {path}")
    per_user: dict[str, list[LocationEvent]] = defaultdict(list)
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            per_user[row["user_id"]].append(
                LocationEvent(int(row["t"]), row["l"], float(row["lat"]), float(row["lon"]))
            )
    return [
        UserProfile(user, tuple(sorted(evs, key=lambda e: e.t))) for user, evs in sorted(per_user.items())
    ]
