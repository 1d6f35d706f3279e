"""Versioned JSON model documents with a content checksum."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MODEL_KINDS = ("mfnv", "markov", "cls-rnn", "reg-rnn")


class ModelFormatError(ValueError):
    pass


@dataclass
class PersistedModel:
    """Everything needed to predict with a trained model.

    ``params`` holds network arrays for the RNN kinds and the count tables
    (under ``"counts"``) for the baselines.
    """

    kind: str
    params: dict
    config: dict
    summary: dict = field(default_factory=dict)
    normalizer: dict | None = None
    vocabulary: list[str] | None = None
    label_coords: dict[str, list[float]] = field(default_factory=dict)
    optimizer: dict | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelFormatError(f"unknown model kind {self.kind!r}")

    def payload(self) -> dict:
        params = {}
        for name, value in self.params.items():
            if isinstance(value, np.ndarray):
                params[name] = {"shape": list(value.shape), "data": value.ravel().tolist()}
            else:
                params[name] = value
        return {
            "config": self.config,
            "label_coords": {k: list(v) for k, v in self.label_coords.items()},
            "normalizer": self.normalizer,
            "optimizer": self.optimizer,
            "params": params,
            "summary": self.summary,
            "vocabulary": self.vocabulary,
        }


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_model(model: PersistedModel) -> str:
    payload = model.payload()
    digest = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    doc = {"checksum": f"sha256:{digest}", "format_version": FORMAT_VERSION, "model_kind": model.kind, "payload": payload}
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def load_model(document: str) -> PersistedModel:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model document is not valid JSON: {exc}") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    payload = doc.get("payload")
    digest = "sha256:" + hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if doc.get("checksum") != digest:
        raise ModelFormatError("checksum mismatch: model document is corrupted")
    params = {}
    for name, value in payload["params"].items():
        if isinstance(value, dict) and set(value) == {"shape", "data"}:
            params[name] = np.asarray(value["data"], dtype=float).reshape(value["shape"])
        else:
            params[name] = value
    return PersistedModel(
        kind=doc["model_kind"],
        params=params,
        config=payload["config"],
        summary=payload["summary"],
        normalizer=payload["normalizer"],
        vocabulary=payload["vocabulary"],
        label_coords={k: list(v) for k, v in payload["label_coords"].items()},
        optimizer=payload["optimizer"],
    )


def write_model(model: PersistedModel, path) -> None:
    Path(path).write_text(save_model(model), encoding="utf-8")


def read_model(path) -> PersistedModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    return load_model(path.read_text(encoding="utf-8"))
