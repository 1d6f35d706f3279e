import csv
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdrkit import ingest as ing
from cdrkit.ingest import CdrRecord, CellSite, CellTable, LocationEvent

HEADER = "user_id,date,time,mcc,mnc,lac,cell\n"


def write(tmp_path, body, name="cdr.csv", header=HEADER):
    p = tmp_path / name
    p.write_text(header + body, encoding="utf-8")
    return p


def rec(uid="989121234567", ts=0, mcc=432, mnc=11, lac=101, cell=7):
    return CdrRecord(uid, ts, mcc, mnc, lac, cell)


# parse_cdr -------------------------------------------------------------------


def test_parse_well_formed(tmp_path):
    p = write(tmp_path, "u1,2024-01-01,00:00:00,432,11,101,7\n"
                        "u1,2024-01-01,00:01:00,432,11,101,8\n"
                        "u2,2024-01-02,12:00:00,432,11,102,7\n")
    res = ing.parse_cdr(p)
    assert len(res.records) == 3 and res.rejects == []
    assert res.records[0].timestamp == 1704067200
    assert res.records[2].timestamp == 1704067200 + 86400 + 12 * 3600


def test_parse_bad_lac_rejected_with_row_number(tmp_path):
    p = write(tmp_path, "u1,2024-01-01,00:00:00,432,11,101,7\n"
                        "u1,2024-01-01,00:01:00,432,11,abc,8\n"
                        "u2,2024-01-02,12:00:00,432,11,102,7\n")
    res = ing.parse_cdr(p)
    assert len(res.records) == 2
    assert [(r.row, r.reason) for r in res.rejects] == [(3, ing.BAD_INT)]
    assert "abc" in res.rejects[0].raw


@pytest.mark.parametrize(
    "row, reason",
    [
        ("u1,2024-13-01,00:00:00,432,11,1,1", ing.BAD_DATE),
        ("u1,2024-01-01,25:00:00,432,11,1,1", ing.BAD_TIME),
        ("u1,2024-01-01,00:00:00,432,11,1", ing.FIELD_COUNT),
        ("u1,2024-01-01,00:00:00,432,-1,1,1", ing.BAD_INT),
    ],
)
def test_parse_reject_reasons(tmp_path, row, reason):
    res = ing.parse_cdr(write(tmp_path, row + "\n"))
    assert [r.reason for r in res.rejects] == [reason]


def test_parse_empty_fields_are_absent(tmp_path):
    res = ing.parse_cdr(write(tmp_path, "u1,2024-01-01,00:00:00,432,11,101,\n"))
    assert res.records[0].cell is None and not res.records[0].is_complete()


def test_parse_schema_mapping_and_extras(tmp_path):
    hdr = "msisdn,d,tm,mcc,mnc,lac,ci,duration\n"
    p = write(tmp_path, "u1,2024-01-01,00:00:00,432,11,101,7,35\n", header=hdr)
    res = ing.parse_cdr(p, schema={"user_id": "msisdn", "date": "d", "time": "tm", "cell": "ci"})
    assert res.records[0].cell == 7
    assert res.records[0].extras == (("duration", "35"),)


def test_parse_timezone(tmp_path):
    p = write(tmp_path, "u1,2024-01-01,03:30:00,432,11,101,7\n")
    assert ing.parse_cdr(p, tz="Asia/Tehran").records[0].timestamp == 1704067200


def test_parse_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        ing.parse_cdr(tmp_path / "nope.csv")
    with pytest.raises(ValueError, match="lac"):
        ing.parse_cdr(write(tmp_path, "", header="user_id,date,time,mcc,mnc,cell\n"))


def _scanner_oracle(lines):
    """Independent well-formedness check by plain string splitting."""
    ok = 0
    for raw in lines:
        parts = raw.split(",")
        if len(parts) != 7:
            continue
        if not all(p == "" or p.isdigit() for p in parts[3:]):
            continue
        d, t = parts[1], parts[2]
        try:
            y, m, dd = (int(v) for v in d.split("-"))
            hh, mm, ss = (int(v) for v in t.split(":"))
            import datetime as _dt

            _dt.datetime(y, m, dd, hh, mm, ss)
        except ValueError:
            continue
        ok += 1
    return ok


def test_parse_randomized_matches_line_scanner(tmp_path):
    rng = random.Random(5)
    lines = []
    for _ in range(1000):
        f = ["u%d" % rng.randrange(5), "2024-01-%02d" % rng.randrange(1, 29), "%02d:%02d:%02d" % (rng.randrange(24), rng.randrange(60), rng.randrange(60)),
             "432", "11", str(rng.randrange(100, 110)), str(rng.randrange(1, 9))]
        r = rng.random()
        if r < 0.05:
            f[5] = "x1"
        elif r < 0.10:
            f.pop()
        elif r < 0.14:
            f[1] = "2024-02-30"
        elif r < 0.18:
            f[2] = "12:61:00"
        elif r < 0.22:
            f[6] = ""
        lines.append(",".join(f))
    res = ing.parse_cdr(write(tmp_path, "\n".join(lines) + "\n"))
    assert len(res.records) == _scanner_oracle(lines)
    assert len(res.records) + len(res.rejects) == 1000 == res.rows


# cleaning ------------------------------------------------------------------


def test_dedupe_examples():
    r, s = rec(ts=1), rec(ts=2)
    assert ing.dedupe([r, r, s]) == [r, s]
    distinct = [rec(ts=i) for i in range(5)]
    assert ing.dedupe(distinct) == distinct


def test_dedupe_random_multiset():
    rng = random.Random(1)
    pool = [rec(ts=i, cell=i % 3) for i in range(60)]
    records = [rng.choice(pool) for _ in range(500)]
    out = ing.dedupe(records)
    assert set(Counter(out).values()) == {1}
    assert set(out) == set(records)
    # first-occurrence order
    firsts = sorted(set(records), key=records.index)
    assert out == firsts
    assert ing.dedupe(out) == out


def test_drop_incomplete():
    good = rec()
    missing_cell = rec(cell=None)
    assert ing.drop_incomplete([good, missing_cell]) == [good]
    assert ing.drop_incomplete([good, good]) == [good, good]
    rng = random.Random(2)
    batch = []
    for i in range(300):
        fields = dict(uid="98912", ts=i, mcc=432, mnc=11, lac=1, cell=1)
        for k in list(fields):
            if rng.random() < 0.05:
                fields[k] = None
        batch.append(rec(**fields))
    expect = sum(all(v is not None for v in (r.user_id, r.timestamp, r.mcc, r.mnc, r.lac, r.cell)) for r in batch)
    assert len(ing.drop_incomplete(batch)) == expect


def test_canonical_ids():
    assert ing.canonical_user_id("+98 912 1234567", "98") == "989121234567"
    assert ing.canonical_user_id("09121234567", "98") == "989121234567"
    assert ing.canonical_user_id("00989121234567", "98") == "989121234567"
    assert ing.canonical_user_id("989121234567", "98") == "989121234567"
    with pytest.raises(ValueError):
        ing.canonical_user_id("n/a", "98")


def test_unify_rejects_and_order():
    records = [rec(uid="+98 912 1234567", ts=1), rec(uid="--", ts=2), rec(uid="09121234567", ts=3)]
    kept, rejected = ing.unify_user_ids(records, "98")
    assert [r.user_id for r in kept] == ["989121234567"] * 2
    assert [r.timestamp for r in kept] == [1, 3]
    assert [r.timestamp for r in rejected] == [2]
    again, _ = ing.unify_user_ids(kept, "98")
    assert again == kept


def test_unify_noise_injection():
    rng = random.Random(3)
    bases = sorted({"98912%07d" % rng.randrange(10**7) for _ in range(100)})
    noisy = []
    for b in bases:
        local = b[2:]
        for _ in range(4):
            form = rng.choice([b, "+98 " + local, "00" + b, "0" + local, "0%s-%s" % (local[:3], local[3:]), " +98-%s " % local])
            noisy.append(rec(uid=form))
    kept, rejected = ing.unify_user_ids(noisy, "98")
    assert not rejected
    assert {r.user_id for r in kept} == set(bases)


@given(st.text(alphabet="0123456789 +-()", min_size=1, max_size=20))
def test_canonical_idempotent(raw):
    digits = "".join(c for c in raw if c.isdigit())
    if digits in ("", "00"):
        with pytest.raises(ValueError):
            ing.canonical_user_id(raw, "98")
        return
    once = ing.canonical_user_id(raw, "98")
    assert once.isdigit()
    assert not once.startswith("0")
    assert ing.canonical_user_id(once, "98") == once


# resolution and profiling ----------------------------------------------------------


def test_resolve_location():
    table = CellTable([CellSite((432, 11, 101, 7), 35.70, 51.40)])
    assert ing.resolve_location(rec(ts=5), table) == LocationEvent(5, "101-7", 35.70, 51.40)
    assert ing.resolve_location(rec(cell=8), table) is None


def test_label_is_unambiguous():
    assert ing.location_label(12, 34) != ing.location_label(1, 234)


def test_cell_table_rejects_duplicates_and_bad_coords():
    with pytest.raises(ValueError):
        CellTable([CellSite((1, 1, 1, 1), 0, 0), CellSite((1, 1, 1, 1), 1, 1)])
    with pytest.raises(ValueError):
        CellSite((1, 1, 1, 1), 91.0, 0.0)


def test_join_count_oracle():
    rng = random.Random(4)
    sites = [CellSite((432, 11, 100, c), 35.0 + c / 100, 51.0) for c in range(20)]
    records = []
    for i in range(200):
        cell = rng.randrange(20) if rng.random() >= 0.1 else 99
        records.append(rec(ts=i, lac=100, cell=cell))
    keys = {s.key for s in sites}
    expect = sum(r.key in keys for r in records)
    profiles, omitted = ing.profile(records, sites)
    assert sum(len(p) for p in profiles) == expect
    assert omitted == 200 - expect


def test_profile_interleaved_users():
    sites = [CellSite((432, 11, 101, 7), 35.7, 51.4)]
    records = [rec(uid="a", ts=5), rec(uid="b", ts=3), rec(uid="a", ts=1), rec(uid="b", ts=9)]
    profiles, omitted = ing.profile(records, sites)
    assert omitted == 0
    assert [p.user_id for p in profiles] == ["a", "b"]
    assert [e.t for e in profiles[0].events] == [1, 5]
    assert [e.t for e in profiles[1].events] == [3, 9]
    single, _ = ing.profile([rec(uid="a", ts=t) for t in (3, 1, 2)], sites)
    assert len(single) == 1 and [e.t for e in single[0].events] == [1, 2, 3]


def test_profile_ties_keep_input_order():
    sites = [CellSite((432, 11, 101, c), 35.7, 51.4) for c in (1, 2)]
    profiles, _ = ing.profile([rec(ts=1, cell=2), rec(ts=1, cell=1)], sites)
    assert [e.l for e in profiles[0].events] == ["101-2", "101-1"]


def test_group_by_oracle_twelve_users():
    rng = random.Random(6)
    sites = [CellSite((432, 11, 101, c), 35.7, 51.4 + c / 100) for c in range(5)]
    records = [rec(uid="u%02d" % rng.randrange(12), ts=rng.randrange(10**6), cell=rng.randrange(5)) for _ in range(1000)]
    profiles, _ = ing.profile(records, sites)
    assert {p.user_id: len(p) for p in profiles} == dict(Counter(r.user_id for r in records))
    for p in profiles:
        ts = [e.t for e in p.events]
        assert ts == sorted(ts)


# end to end ---------------------------------------------------------------


def _files(tmp_path, rows, sites):
    cdr = write(tmp_path, "".join(r + "\n" for r in rows))
    cells = tmp_path / "cells.csv"
    with cells.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ing.CELL_COLUMNS)
        for s in sites:
            w.writerow([*s.key, s.lat, s.lon])
    return cdr, cells


def test_ingest_accounting(tmp_path):
    rows = [
        "+98 912 1234567,2024-01-01,08:00:00,432,11,101,7",
        "+98 912 1234567,2024-01-01,08:00:00,432,11,101,7",  # duplicate
        "09121234567,2024-01-01,09:00:00,432,11,101,8",
        "09121234567,2024-01-01,09:30:00,432,11,101,",  # incomplete
        "none,2024-01-01,10:00:00,432,11,101,7",  # no digits
        "09121234567,2024-01-01,11:00:00,432,11,999,1",  # unresolved
        "09121234567,2024-01-01,bad,432,11,101,7",  # parse reject
    ]
    cdr, cells = _files(tmp_path, rows, [CellSite((432, 11, 101, 7), 35.7, 51.4), CellSite((432, 11, 101, 8), 35.8, 51.5)])
    res = ing.ingest(cdr, cells)
    c = res.counts
    assert (c["rows"], c["parse_rejects"], c["duplicates"], c["incomplete"], c["id_rejects"], c["unresolved"], c["events"]) == (
        7, 1, 1, 1, 1, 1, 2)
    assert c["events"] + c["unresolved"] + c["id_rejects"] + c["incomplete"] + c["duplicates"] + c["parse_rejects"] == c["rows"]
    assert [p.user_id for p in res.profiles] == ["989121234567"]
    assert {r.reason for r in res.rejects} == {ing.BAD_TIME, ing.NO_DIGITS_ID}


def test_ingest_deterministic_and_events_roundtrip(tmp_path):
    rows = ["a%d,2024-01-01,0%d:00:00,432,11,101,7" % (i % 2 + 1, i) for i in range(8)]
    cdr, cells = _files(tmp_path, rows, [CellSite((432, 11, 101, 7), 35.7, 51.4)])
    a = ing.ingest(cdr, cells)
    b = ing.ingest(cdr, cells)
    assert a.profiles == b.profiles
    ing.write_events(a.profiles, tmp_path / "events.csv")
    assert ing.read_events(tmp_path / "events.csv") == a.profiles
