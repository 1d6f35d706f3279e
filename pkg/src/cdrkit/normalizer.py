"""Per-axis coordinate scaling fitted on a user's training split.

``minmax`` maps the training range onto [0, 1].  ``variance`` subtracts
the mean and divides by the population variance; pass
``std_divisor=True`` to divide by the standard deviation instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("minmax", "variance")


@dataclass(frozen=True)
class NormalizerParams:
    kind: str
    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (0.0, 0.0)
    mean: tuple[float, float] = (0.0, 0.0)
    var: tuple[float, float] = (0.0, 0.0)
    std_divisor: bool = False

    @property
    def degenerate_axes(self) -> list[int]:
        if self.kind != "minmax":
            return []
        return [ax for ax in (0, 1) if self.hi[ax] == self.lo[ax]]

    def _scale(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(offset, divisor)`` with degenerate axes marked by divisor 0."""
        if self.kind == "minmax":
            return np.array(self.lo), np.array(self.hi) - np.array(self.lo)
        div = np.sqrt(self.var) if self.std_divisor else np.array(self.var)
        return np.array(self.mean), np.asarray(div, dtype=float)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lo": list(self.lo),
            "hi": list(self.hi),
            "mean": list(self.mean),
            "var": list(self.var),
            "std_divisor": self.std_divisor,
        }

    @classmethod
    def from_dict(cls, d) -> "NormalizerParams":
        return cls(d["kind"], tuple(d["lo"]), tuple(d["hi"]), tuple(d["mean"]), tuple(d["var"]), bool(d["std_divisor"]))


def fit(coords, kind: str = "minmax", std_divisor: bool = False, allow_degenerate: bool = True) -> NormalizerParams:
    """Fit per-axis statistics on ``coords`` (N, 2).

    A MinMax axis with zero spread is accepted when ``allow_degenerate``
    and then maps to the constant 0.5.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown normalizer {kind!r}")
    pts = np.asarray(coords, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least 2 points to fit a normalizer")
    lo = tuple(float(v) for v in pts.min(axis=0))
    hi = tuple(float(v) for v in pts.max(axis=0))
    mean = tuple(float(v) for v in pts.mean(axis=0))
    var = tuple(float(v) for v in pts.var(axis=0))
    if kind == "minmax" and not allow_degenerate and any(a == b for a, b in zip(lo, hi)):
        raise ValueError("zero-spread axis under min-max scaling")
    if kind == "variance" and any(v <= 0 for v in var):
        raise ValueError("zero variance axis under variance scaling")
    return NormalizerParams(kind, lo, hi, mean, var, std_divisor)


def transform(coords, params: NormalizerParams) -> np.ndarray:
    pts = np.asarray(coords, dtype=float)
    offset, div = params._scale()
    safe = np.where(div == 0, 1.0, div)
    out = (pts - offset) / safe
    return np.where(div == 0, 0.5, out)


def inverse_transform(coords, params: NormalizerParams) -> np.ndarray:
    pts = np.asarray(coords, dtype=float)
    offset, div = params._scale()
    return np.where(div == 0, offset, pts * div + offset)


def output_activation(kind: str) -> str:
    """ReLU keeps min-max predictions non-negative; variance scaling needs a linear output."""
    return "relu" if kind == "minmax" else "linear"
