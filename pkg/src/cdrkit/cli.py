"""``cdrkit`` command line: synth, ingest, prepare, train, predict, evaluate, gridsearch, compare.

Every command except ``predict`` writes its artifacts under ``--out`` plus
a ``manifest.json`` recording the command, resolved configuration, input
digests, seed, outputs and duration.  Settings resolve as command-line
flag, then ``--config`` file (flat ``key = value`` lines), then default.

Exit status: 0 ok, 1 unexpected error, 2 usage, 3 missing input,
4 insufficient data, 5 training diverged.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import ingest as ing
from . import plotting, synth
from .model_io import read_model, write_model
from .neural.optim import KINDS as OPTIMIZERS
from .neural.optim import OptimizerConfig
from .normalizer import KINDS as NORMALIZERS
from .prep import METHODS, InsufficientDataError, PrepConfig, prepare, write_prepared
from .training import MODEL_KINDS, Predictor, TrainingConfig, TrainingDivergedError, train

logger = logging.getLogger("cdrkit")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}

DEFAULTS = {
    "method": "m4",
    "w": 5,
    "t_seconds": 3600,
    "t_gap": None,
    "model": "reg-rnn",
    "markov_order": 2,
    "normalizer": "minmax",
    "std_divisor": False,
    "optimizer": "adam",
    "lr": 1e-3,
    "epochs": 200,
    "patience": 20,
    "batch": 1,
    "stateful": True,
    "loss": "mse",
    "split": 0.5,
    "seed": 42,
    "jobs": 1,
    "thresholds": [100.0, 250.0, 500.0, 1000.0, 2000.0, 5000.0],
    "t_grid": list(ev.DEFAULT_T_GRID),
    "w_grid": list(ev.DEFAULT_W_GRID),
    "tz": "UTC",
    "country_code": "98",
    "days": 60,
    "skip_prob": 0.1,
    "duplicate_prob": 0.0,
    "vary_ids": False,
}


class UsageError(Exception):
    pass


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def float_list(text) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys equal underscores."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# parser ------------------------------------------------------------------


def _input_flags(p):
    g = p.add_argument_group("input")
    g.add_argument("--events", help="profiled events CSV written by 'ingest'")
    g.add_argument("--cdr", help="raw CDR file (ingested on the fly together with --cells)")
    g.add_argument("--cells", help="cell-site table CSV (mcc,mnc,lac,cell,lat,lon)")
    g.add_argument("--user", help="user ID to model (default: the user with most events)")
    g.add_argument("--tz", help="time zone of CDR date/time fields (default UTC)")
    g.add_argument("--country-code", help="country code for local-format user IDs (default 98)")


def _prep_flags(p):
    g = p.add_argument_group("preparation")
    g.add_argument("--method", type=str.lower, choices=METHODS, help="preparation method (default m4)")
    g.add_argument("--w", type=int, help="window length in events; required with m2/m4 (default 5)")
    g.add_argument("--t-seconds", type=int, help="settlement timespan t in seconds (default 3600)")
    g.add_argument("--t-gap", type=int, help="trajectory slicing gap in seconds (default: equal to t)")


def _train_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=MODEL_KINDS, help="model kind (default reg-rnn)")
    g.add_argument("--markov-order", type=int, help="Markov chain order k (default 2)")
    g.add_argument("--normalizer", choices=NORMALIZERS, help="coordinate normalizer (default minmax)")
    g.add_argument("--std-divisor", action="store_const", const=True,
                   help="variance scaling divides by the standard deviation instead of the variance")
    g.add_argument("--optimizer", choices=OPTIMIZERS, help="optimizer (default adam)")
    g.add_argument("--lr", type=float, help="learning rate (default 0.001)")
    g.add_argument("--epochs", type=int, help="maximum epochs (default 200)")
    g.add_argument("--patience", type=int, help="early-stopping patience in epochs (default 20)")
    g.add_argument("--batch", type=int, help="mini-batch size in samples (default 1)")
    g.add_argument("--stateful", type=parse_bool, metavar="BOOL",
                   help="carry LSTM state across batches within an epoch (default true)")
    g.add_argument("--loss", choices=("mse", "mae"), help="regression loss (default mse)")
    g.add_argument("--split", type=float, help="chronological train fraction (default 0.5)")


def _common(p, out=True):
    p.add_argument("--seed", type=int, help="seed for all randomness (default 42)")
    p.add_argument("--config", help="flat key = value file; flags override it")
    if out:
        p.add_argument("--out", help="run directory for artifacts and manifest.json (required)")


def _thresholds(p):
    p.add_argument("--thresholds", type=float_list, metavar="LIST",
                   help="comma-separated accuracy thresholds in meters (default 100,250,500,1000,2000,5000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdrkit", description="Next-location prediction from call detail records.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic commuter CDR corpus")
    p.add_argument("--days", type=int, help="simulated days (default 60)")
    p.add_argument("--skip-prob", type=float, help="probability a route tower pass emits no record (default 0.1)")
    p.add_argument("--duplicate-prob", type=float, help="probability a CDR row is written twice (default 0)")
    p.add_argument("--vary-ids", type=parse_bool, metavar="BOOL",
                   help="write user IDs in random equivalent formats (default false)")
    _common(p)

    p = sub.add_parser("ingest", help="parse, clean and profile a CDR file")
    _input_flags(p)
    _common(p)

    p = sub.add_parser("prepare", help="write prepared samples for one user")
    _input_flags(p)
    _prep_flags(p)
    _common(p)

    p = sub.add_parser("train", help="train one model and write model.json")
    _input_flags(p)
    _prep_flags(p)
    _train_flags(p)
    _common(p)

    p = sub.add_parser("predict", help="print the next location 'lat,lon' for a history")
    p.add_argument("--model-file", required=True, help="model.json written by 'train'")
    p.add_argument("--history", required=True, help="CSV of past events with columns t,l,lat,lon (t in seconds)")
    _common(p, out=False)

    p = sub.add_parser("evaluate", help="evaluate a trained model on its chronological test split")
    p.add_argument("--model-file", required=True, help="model.json written by 'train'")
    _input_flags(p)
    _thresholds(p)
    _common(p)

    p = sub.add_parser("gridsearch", help="grid search over settlement timespan t and window w")
    _input_flags(p)
    _prep_flags(p)
    _train_flags(p)
    p.add_argument("--t-grid", type=int_list, metavar="LIST",
                   help="comma-separated t values in seconds (default 900,1800,3600,7200,14400)")
    p.add_argument("--w-grid", type=int_list, metavar="LIST", help="comma-separated w values in events (default 2,3,5,8,12)")
    p.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
    _common(p)

    p = sub.add_parser("compare", help="train and compare all four model kinds on a shared test split")
    _input_flags(p)
    _prep_flags(p)
    _train_flags(p)
    _thresholds(p)
    p.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
    _common(p)
    return parser


# settings resolution ---------------------------------------------------------


class Settings:
    """Flag > config file > default lookup; remembers which keys were given."""

    def __init__(self, args, parser):
        self.args = vars(args)
        self.config = read_config(args.config) if getattr(args, "config", None) else {}
        self._types = {}
        for action in _subparser(parser, args.command)._actions:
            if action.dest in self.args:
                self._types[action.dest] = action.type
        unknown = set(self.config) - set(self._types)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")

    def given(self, key) -> bool:
        return self.args.get(key) is not None or key in self.config

    def __getitem__(self, key):
        v = self.args.get(key)
        if v is not None:
            return v
        if key in self.config:
            raw = self.config[key]
            typ = self._types.get(key)
            if key in ("std_divisor", "vary_ids", "stateful"):
                typ = parse_bool
            try:
                return typ(raw) if typ else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
        return DEFAULTS.get(key)

    def resolved(self) -> dict:
        return {k: self[k] for k in sorted(self._types) if k != "config"}


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def prep_config(s: Settings) -> PrepConfig:
    method = s["method"]
    if s.given("method") and method in ("m2", "m4") and not s.given("w"):
        raise UsageError(f"--method {method} requires --w")
    w = s["w"] if method in ("m2", "m4") else None
    t = s["t_seconds"] if method in ("m3", "m4") else None
    try:
        return PrepConfig(method, w=w, t=t, t_gap=s["t_gap"] if t else None)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def training_config(s: Settings) -> TrainingConfig:
    if not 0.0 < s["split"] < 1.0:
        raise UsageError(f"--split must be in (0, 1), got {s['split']}")
    try:
        return TrainingConfig(
            model=s["model"],
            prep=prep_config(s),
            normalizer=s["normalizer"],
            std_divisor=bool(s["std_divisor"]),
            optimizer=OptimizerConfig(s["optimizer"], lr=s["lr"]),
            loss=s["loss"],
            batch_size=s["batch"],
            epochs=s["epochs"],
            patience=s["patience"],
            stateful=s["stateful"],
            seed=s["seed"],
            split=s["split"],
            markov_order=s["markov_order"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# run plumbing --------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    def __init__(self, command: str, out, settings: Settings | None):
        if out is None:
            raise UsageError("--out is required")
        self.command = command
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.settings = settings
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.config: dict = {}
        self.started = time.perf_counter()

    def input(self, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"input not found: {path}")
        self.inputs[str(path)] = "sha256:" + sha256_file(path)
        return path

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "settings": self.settings.resolved() if self.settings else {},
            "config": self.config,
            "inputs": self.inputs,
            "seed": self.settings["seed"] if self.settings else None,
            "outputs": sorted(self.outputs),
            "duration_s": round(time.perf_counter() - self.started, 3),
        }
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=".manifest.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
            fh.write("\n")
        target = self.out / "manifest.json"
        os.replace(tmp, target)
        return target


def load_profile(s: Settings, run: Run) -> ing.UserProfile:
    if s["events"]:
        profiles = ing.read_events(run.input(s["events"]))
    elif s["cdr"] and s["cells"]:
        result = ing.ingest(run.input(s["cdr"]), run.input(s["cells"]), default_country_code=s["country_code"], tz=s["tz"])
        profiles = result.profiles
    else:
        raise UsageError("give --events, or --cdr together with --cells")
    if not profiles:
        raise InsufficientDataError("no user has any resolved event")
    user = s["user"]
    if user is None:
        # most events wins; ties go to the smallest ID
        return min(profiles, key=lambda p: (-len(p), p.user_id))
    for p in profiles:
        if p.user_id == user:
            return p
    raise InsufficientDataError(f"user {user!r} not found in the input")


def read_history(path) -> list[ing.LocationEvent]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"history file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    try:
        events = [ing.LocationEvent(int(r["t"]), r["l"], float(r["lat"]), float(r["lon"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise UsageError(f"history file needs numeric t,lat,lon and a label column l: {exc}") from None
    if not events:
        raise InsufficientDataError("history file has no events")
    return sorted(events, key=lambda e: e.t)


# commands ----------------------------------------------------------------


def cmd_synth(s: Settings, run: Run) -> None:
    spec = synth.commuter(seed=s["seed"], days=s["days"], skip_prob=s["skip_prob"])
    corpus = synth.generate(spec)
    rng = np.random.default_rng([s["seed"], 1])
    synth.write_cdr(corpus.records, run.path("cdr.csv"), rng, duplicate_prob=s["duplicate_prob"], vary_ids=s["vary_ids"])
    synth.write_cells(corpus.cells, run.path("cells.csv"))
    run.config = {"days": s["days"], "skip_prob": s["skip_prob"], "duplicate_prob": s["duplicate_prob"],
                  "vary_ids": s["vary_ids"], "user_id": spec.user_id}


def cmd_ingest(s: Settings, run: Run) -> None:
    if not (s["cdr"] and s["cells"]):
        raise UsageError("ingest needs --cdr and --cells")
    result = ing.ingest(run.input(s["cdr"]), run.input(s["cells"]), default_country_code=s["country_code"], tz=s["tz"])
    ing.write_events(result.profiles, run.path("events.csv"))
    ing.write_rejects(result.rejects, run.path("rejects.csv"))
    with open(run.path("counts.json"), "w", encoding="utf-8") as fh:
        json.dump(result.counts, fh, indent=1, sort_keys=True)
        fh.write("\n")
    run.config = {"tz": s["tz"], "country_code": s["country_code"]}
    print(f"{result.counts['users']} users, {result.counts['events']} events, {len(result.rejects)} rejects")


def cmd_prepare(s: Settings, run: Run) -> None:
    prof = load_profile(s, run)
    cfg = prep_config(s)
    data = prepare(list(prof.events), cfg, prof.user_id)
    write_prepared(data, run.path("samples.csv"))
    run.config = {"user": prof.user_id, "prep": cfg.as_dict()}
    print(f"{len(data)} samples for user {prof.user_id}")


def cmd_train(s: Settings, run: Run) -> None:
    prof = load_profile(s, run)
    cfg = training_config(s)
    model = train(prof, cfg)
    write_model(model, run.path("model.json"))
    history = model.summary.get("loss_history")
    if history:
        plotting.plot_training_loss(history, run.path("loss.png"), label=cfg.model)
        with open(run.path("loss.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss"])
            w.writerows((i + 1, repr(float(v))) for i, v in enumerate(history))
    run.config = {"user": prof.user_id, "training": cfg.as_dict()}
    print(f"trained {cfg.model} for user {prof.user_id}")


def cmd_predict(s: Settings) -> None:
    model = read_model(s["model_file"])
    lat, lon = Predictor(model).predict_next(read_history(s["history"]))
    print(f"{lat!r},{lon!r}")


def _curve_outputs(run: Run, curves: dict) -> None:
    ev.write_curves(curves, run.path("curves.csv"))
    plotting.plot_threshold_curves(curves, run.path("curves.png"))


def cmd_evaluate(s: Settings, run: Run) -> None:
    model = read_model(run.input(s["model_file"]))
    prof = load_profile(s, run)
    report = ev.evaluate_on_profile(model, prof)
    ev.write_report(report, run.path("report.csv"))
    ev.write_trace(report, run.path("trace.csv"))
    ev.write_trajectories(report, run.path("trajectories.geojson"))
    plotting.plot_trajectories(report, run.path("trajectories.png"))
    _curve_outputs(run, {model.kind: ev.threshold_curve(report, sorted(s["thresholds"]))})
    run.config = {"user": prof.user_id, "thresholds": sorted(s["thresholds"]), "model": model.config}
    print(f"{model.kind}: mean error {report.mean:.1f} m over {report.n} samples")


def cmd_gridsearch(s: Settings, run: Run) -> None:
    prof = load_profile(s, run)
    base = training_config(s)
    result = ev.grid_search(prof, s["t_grid"], s["w_grid"], base, jobs=s["jobs"])
    ev.write_grid(result, run.path("grid.csv"))
    plotting.plot_grid_surface(result, run.path("grid.png"))
    run.config = {"user": prof.user_id, "t_grid": result.t_values, "w_grid": result.w_values, "training": base.as_dict()}
    t, w = result.argmin
    edge = " (edge of grid)" if result.is_edge() else ""
    print(f"best t={t} s, w={w}: mean error {result.minimum:.1f} m{edge}")


def cmd_compare(s: Settings, run: Run) -> None:
    prof = load_profile(s, run)
    base = training_config(s)
    rows = ev.compare_models(prof, ev.default_model_configs(base), jobs=s["jobs"])
    ev.write_comparison(rows, run.path("comparison.csv"))
    plotting.plot_comparison(rows, run.path("comparison.png"))
    thresholds = sorted(s["thresholds"])
    _curve_outputs(run, {r.name: ev.threshold_curve(r.report, thresholds) for r in rows if r.report is not None})
    run.config = {"user": prof.user_id, "thresholds": thresholds, "training": base.as_dict()}
    for r in rows:
        print(f"{r.name}: " + (f"{r.report.mean:.1f} m" if r.report else r.error))


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "compare": cmd_compare,
}


def _setup_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("CDRKIT_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    try:
        s = Settings(args, parser)
        if args.command == "predict":
            cmd_predict(s)
            return EXIT_OK
        run = Run(args.command, s["out"], s)
        COMMANDS[args.command](s, run)
        run.finish()
        return EXIT_OK
    except UsageError as exc:
        print(f"cdrkit {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"cdrkit {args.command}: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except InsufficientDataError as exc:
        print(f"cdrkit {args.command}: insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"cdrkit {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except Exception as exc:  # noqa: BLE001
        logger.debug("unhandled", exc_info=True)
        print(f"cdrkit {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
