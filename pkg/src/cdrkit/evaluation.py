"""Meter-denominated evaluation, threshold accuracy, grid search and model comparison."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .ingest import UserProfile
from .prep import InsufficientDataError, PrepConfig, PreparedDataset, filter_unknown, prepare
from .training import Predictor, TrainingConfig, TrainingDivergedError, classifier_dataset, split_events, train

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_T_GRID = tuple(m * 60 for m in (15, 30, 60, 120, 240))
DEFAULT_W_GRID = (2, 3, 5, 8, 12)


def haversine(a, b) -> float:
    """Great-circle distance in meters between two (lat, lon) points in degrees."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


@dataclass
class Prediction:
    history_length: int
    target: tuple[float, float]
    predicted: tuple[float, float]
    distance_m: float
    target_label: str
    predicted_label: str | None = None


@dataclass
class EvaluationReport:
    model_kind: str
    config: dict
    predictions: list[Prediction]
    removed_unknown: int = 0

    @property
    def distances(self) -> np.ndarray:
        return np.array([p.distance_m for p in self.predictions])

    @property
    def n(self) -> int:
        return len(self.predictions)

    @property
    def mean(self) -> float:
        return float(sum(p.distance_m for p in self.predictions) / self.n)

    @property
    def median(self) -> float:
        return float(np.median(self.distances))

    @property
    def max(self) -> float:
        return float(self.distances.max())

    @property
    def accuracy(self) -> float | None:
        """Label accuracy for label-predicting models, else ``None``."""
        if any(p.predicted_label is None for p in self.predictions):
            return None
        return sum(p.predicted_label == p.target_label for p in self.predictions) / self.n

    def summary(self) -> dict:
        return {
            "model": self.model_kind,
            "samples": self.n,
            "mean_error_m": self.mean,
            "median_error_m": self.median,
            "max_error_m": self.max,
            "accuracy": self.accuracy,
            "removed_unknown": self.removed_unknown,
        }


def evaluate(model, test: PreparedDataset) -> EvaluationReport:
    """Predict every test sample in chronological order and measure the error.

    ``model`` is a :class:`Predictor`, a persisted model, or any object with
    ``kind`` and ``predict_samples(samples) -> (coords, labels)``.
    """
    if not isinstance(model, Predictor) and hasattr(model, "params"):
        model = Predictor(model)
    if len(test) == 0:
        raise InsufficientDataError("test set is empty")
    coords, labels = model.predict_samples(test.samples)
    preds = []
    for s, c, lab in zip(test.samples, coords, labels):
        target = (s.target.lat, s.target.lon)
        preds.append(Prediction(len(s.input), target, tuple(c), haversine(c, target), s.target.l, lab))
    config = getattr(model, "config", None)
    config = config.as_dict() if hasattr(config, "as_dict") else (config or {})
    return EvaluationReport(model.kind, config, preds)


def threshold_curve(report_or_distances, thresholds: Sequence[float]) -> list[tuple[float, float]]:
    """Fraction of predictions within ``d`` meters (inclusive) for each threshold."""
    d = report_or_distances.distances if isinstance(report_or_distances, EvaluationReport) else np.asarray(report_or_distances)
    if len(d) == 0:
        return [(float(t), 0.0) for t in thresholds]
    if any(t <= 0 for t in thresholds):
        raise ValueError("thresholds must be positive")
    ordered = np.sort(d)
    return [(float(t), float(np.searchsorted(ordered, t, side="right")) / len(d)) for t in thresholds]


def model_test_set(predictor: Predictor, profile: UserProfile) -> tuple[PreparedDataset, int]:
    """The model's own test samples from the chronological split.

    Classifier test sets go through unknown-location filtering.
    """
    cfg = predictor.config
    _, test_events = split_events(profile, cfg.split)
    if predictor.kind == "cls-rnn":
        test = classifier_dataset(test_events, cfg, profile.user_id)
        return filter_unknown(test, predictor.known_labels())
    return prepare(test_events, cfg.prep, profile.user_id), 0


def evaluate_on_profile(model, profile: UserProfile) -> EvaluationReport:
    predictor = model if isinstance(model, Predictor) else Predictor(model)
    test, removed = model_test_set(predictor, profile)
    report = evaluate(predictor, test)
    report.removed_unknown = removed
    return report


def cell_seed(seed: int, t: int, w: int) -> int:
    return int(np.random.SeedSequence([seed, int(t), int(w)]).generate_state(1)[0])


@dataclass
class GridSearchResult:
    t_values: list[int]
    w_values: list[int]
    errors: dict[tuple[int, int], float | None]
    failures: dict[tuple[int, int], str] = field(default_factory=dict)

    @property
    def argmin(self) -> tuple[int, int]:
        cells = {k: v for k, v in self.errors.items() if v is not None}
        if not cells:
            raise InsufficientDataError("every grid cell failed")
        # ties resolve to the first cell in (t, w) order
        return min(sorted(cells), key=lambda k: cells[k])

    @property
    def minimum(self) -> float:
        return self.errors[self.argmin]

    def is_edge(self, cell: tuple[int, int] | None = None) -> bool:
        t, w = cell or self.argmin
        return t in (self.t_values[0], self.t_values[-1]) or w in (self.w_values[0], self.w_values[-1])

    def rows(self) -> list[tuple[int, int, float | None]]:
        return [(t, w, self.errors[(t, w)]) for t in self.t_values for w in self.w_values]


def _grid_cell(args):
    profile, config, t, w = args
    cfg = replace(config, prep=PrepConfig(config.prep.method if config.prep.method in ("m3", "m4") else "m4", w=w, t=t),
                  seed=cell_seed(config.seed, t, w))
    try:
        report = evaluate_on_profile(train(profile, cfg), profile)
        return (t, w), report.mean, None
    except (InsufficientDataError, TrainingDivergedError) as exc:
        return (t, w), None, f"{type(exc).__name__}: {exc}"


def grid_search(profile: UserProfile, t_values, w_values, base: TrainingConfig, jobs: int = 1) -> GridSearchResult:
    """Train and evaluate ``base`` for every (t, w) with a per-cell derived seed."""
    t_values, w_values = sorted(int(t) for t in t_values), sorted(int(w) for w in w_values)
    if not t_values or not w_values:
        raise ValueError("grid axes must be non-empty")
    tasks = [(profile, base, t, w) for t in t_values for w in w_values]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_grid_cell, tasks))
    else:
        results = [_grid_cell(task) for task in tasks]
    errors, failures = {}, {}
    for cell, err, fail in results:
        errors[cell] = err
        if fail:
            failures[cell] = fail
            logger.warning("grid cell t=%s w=%s failed: %s", cell[0], cell[1], fail)
    return GridSearchResult(t_values, w_values, errors, failures)


@dataclass
class ComparisonRow:
    name: str
    report: EvaluationReport | None
    error: str | None = None


def shared_test_set(profile: UserProfile, prep: PrepConfig, split: float) -> PreparedDataset:
    _, test_events = split_events(profile, split)
    return prepare(test_events, prep, profile.user_id)


def _compare_one(args):
    profile, cfg, test = args
    try:
        predictor = Predictor(train(profile, cfg))
        data, removed = test, 0
        if predictor.kind == "cls-rnn":
            data, removed = filter_unknown(test, predictor.known_labels())
        report = evaluate(predictor, data)
        report.removed_unknown = removed
        return ComparisonRow(cfg.model, report)
    except (InsufficientDataError, TrainingDivergedError, ValueError) as exc:
        return ComparisonRow(cfg.model, None, f"{type(exc).__name__}: {exc}")


def compare_models(
    profile: UserProfile,
    configs: Sequence[TrainingConfig],
    prep: PrepConfig | None = None,
    extra: Mapping[str, object] | None = None,
    jobs: int = 1,
) -> list[ComparisonRow]:
    """Evaluate several models on one shared set of test samples.

    The shared samples come from ``prep`` (default: the first config's
    preparation) applied to the chronological test split; baselines and
    the classifier predict from each sample's input history.
    """
    if not configs and not extra:
        raise ValueError("nothing to compare")
    prep = prep or configs[0].prep
    split = configs[0].split if configs else 0.5
    test = shared_test_set(profile, prep, split)
    tasks = [(profile, cfg, test) for cfg in configs]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_compare_one, tasks))
    else:
        rows = [_compare_one(task) for task in tasks]
    for name, predictor in (extra or {}).items():
        rows.append(ComparisonRow(name, evaluate(predictor, test)))
    return rows


def default_model_configs(base: TrainingConfig) -> list[TrainingConfig]:
    return [replace(base, model=m) for m in ("mfnv", "markov", "cls-rnn", "reg-rnn")]


# writers ----------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_report(report: EvaluationReport, path) -> None:
    summary = report.summary()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for k, v in summary.items():
            writer.writerow([k, _fmt(v)])


def write_curve(curve, path, name: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "threshold_m", "accuracy"] if name else ["threshold_m", "accuracy"])
        for d, acc in curve:
            writer.writerow(([name] if name else []) + [_fmt(d), _fmt(acc)])


def write_curves(curves: Mapping[str, list], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "threshold_m", "accuracy"])
        for name, curve in curves.items():
            for d, acc in curve:
                writer.writerow([name, _fmt(d), _fmt(acc)])


def write_trace(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample", "history_length", "target_lat", "target_lon", "pred_lat", "pred_lon", "distance_m"])
        for i, p in enumerate(report.predictions):
            writer.writerow([i, p.history_length, *map(_fmt, p.target), *map(_fmt, p.predicted), _fmt(p.distance_m)])


def write_trajectories(report: EvaluationReport, path) -> None:
    """GeoJSON with the actual and predicted target sequences as line strings."""
    actual = [[p.target[1], p.target[0]] for p in report.predictions]
    predicted = [[p.predicted[1], p.predicted[0]] for p in report.predictions]
    doc = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": {"series": "actual"}, "geometry": {"type": "LineString", "coordinates": actual}},
            {"type": "Feature", "properties": {"series": "predicted", "model": report.model_kind},
             "geometry": {"type": "LineString", "coordinates": predicted}},
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def write_grid(result: GridSearchResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_seconds", "w", "mean_error_m"])
        for t, w, e in result.rows():
            writer.writerow([t, w, _fmt(e)])


def write_comparison(rows: Sequence[ComparisonRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "samples", "mean_error_m", "median_error_m", "accuracy", "removed_unknown", "error"])
        for row in rows:
            if row.report is None:
                writer.writerow([row.name, "", "", "", "", "", row.error])
            else:
                r = row.report
                writer.writerow([row.name, r.n, _fmt(r.mean), _fmt(r.median), _fmt(r.accuracy), r.removed_unknown, ""])
