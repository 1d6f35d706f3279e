"""Small builders shared by the test modules."""

from __future__ import annotations

import zlib

from cdrkit.ingest import LocationEvent, UserProfile


def coord_of(label: str) -> tuple[float, float]:
    # stable pseudo-coordinates per label, about 0.2 degrees of spread
    h = zlib.crc32(label.encode())
    return (35.6 + (h % 1000) / 5000.0, 51.3 + (h // 1000 % 1000) / 5000.0)


def ev(t: int, label: str) -> LocationEvent:
    lat, lon = coord_of(label)
    return LocationEvent(int(t), label, lat, lon)


def seq(labels, start: int = 0, step: int = 60) -> list[LocationEvent]:
    return [ev(start + i * step, lab) for i, lab in enumerate(labels)]


def labels(events) -> list[str]:
    return [e.l for e in events]


def user(events, uid: str = "989120000001") -> UserProfile:
    return UserProfile(uid, tuple(events))
