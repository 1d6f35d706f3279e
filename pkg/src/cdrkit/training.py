"""Per-user training of baselines and recurrent models, and prediction.

Samples are consumed in chronological order.  With ``stateful=True`` the
LSTM state leaving one sample enters the next (including across batch
boundaries) and is reset to zero at the start of every epoch; gradients
are truncated at sample boundaries.  Without statefulness every sample
starts from the zero state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import normalizer as norm
from .baselines import FrequencyTable, MarkovModel, fit_markov, fit_mfnv, label_coordinates
from .ingest import LocationEvent, UserProfile
from .model_io import PersistedModel
from .neural import ClassifierNet, DenseParams, EmbeddingParams, LstmParams, Optimizer, OptimizerConfig, RegressorNet
from .neural.optim import clip_by_global_norm
from .prep import PrepConfig, PreparedDataset, Sample, collapse_stays, prepare, split_train_test

logger = logging.getLogger(__name__)

MODEL_KINDS = ("mfnv", "markov", "cls-rnn", "reg-rnn")
DIVERGENCE_FACTOR = 1e6


class TrainingDivergedError(RuntimeError):
    pass


class UnknownLocationError(KeyError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    model: str = "reg-rnn"
    prep: PrepConfig = field(default_factory=lambda: PrepConfig("m4", w=5, t=3600))
    normalizer: str = "minmax"
    std_divisor: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss: str = "mse"
    batch_size: int = 1
    epochs: int = 200
    patience: int = 20
    min_delta: float = 1e-6
    stateful: bool = True
    seed: int = 42
    split: float = 0.5
    markov_order: int = 2
    embed_dim: int = 16
    cls_hidden: int = 64
    reg_hidden: tuple[int, int] = (32, 32)
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.loss not in ("mse", "mae"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.normalizer not in norm.KINDS:
            raise ValueError(f"unknown normalizer {self.normalizer!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @property
    def classifier_window(self) -> int:
        return self.prep.w if self.prep.w is not None else 3

    def as_dict(self) -> dict:
        d = asdict(self)
        d["prep"] = self.prep.as_dict()
        d["optimizer"] = self.optimizer.as_dict()
        d["reg_hidden"] = list(self.reg_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        d["prep"] = PrepConfig(**d["prep"])
        d["optimizer"] = OptimizerConfig(**d["optimizer"])
        d["reg_hidden"] = tuple(d["reg_hidden"])
        return cls(**d)


def split_events(profile: UserProfile, ratio: float) -> tuple[list[LocationEvent], list[LocationEvent]]:
    return split_train_test(list(profile.events), ratio)


def classifier_dataset(events: Sequence[LocationEvent], config: TrainingConfig, user: str = "") -> PreparedDataset:
    """Fixed windows over the stay-collapsed sequence (raw sequence if no ``t``)."""
    seq = collapse_stays(events, config.prep.t) if config.prep.t else list(events)
    return prepare(seq, PrepConfig("m2", w=config.classifier_window), user)


@dataclass
class FitResult:
    loss_history: list[float]
    initial_loss: float
    final_loss: float
    epochs_run: int
    optimizer: Optimizer


BatchHook = Callable[[int, int, list, tuple, tuple], None]


def fit_network(net, samples: Sequence, loss_fn, config: TrainingConfig, hook: BatchHook | None = None) -> FitResult:
    """Chronological mini-batch training loop shared by both networks.

    ``loss_fn(net, sample, state, weight)`` returns ``(loss, grads, state_out)``.
    ``hook(epoch, batch, sample_indices, state_in, state_out)`` is called
    after every batch's forward/backward pass, before the update.
    """
    opt = Optimizer(config.optimizer)
    params = net.parameters()
    n = len(samples)
    bs = config.batch_size
    history: list[float] = []
    best, stale = math.inf, 0
    initial = None
    for epoch in range(config.epochs):
        state = net.zero_state()
        total = 0.0
        for b, start in enumerate(range(0, n, bs)):
            idx = list(range(start, min(start + bs, n)))
            weight = 1.0 / len(idx)
            state_in = state if config.stateful else net.zero_state()
            cur = state_in
            acc = None
            for i in idx:
                loss, grads, out = loss_fn(net, samples[i], cur if config.stateful else net.zero_state(), weight)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, sample {i}")
                total += loss / weight
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] += grads[k]
                cur = out
            if hook is not None:
                hook(epoch, b, idx, state_in, cur)
            state = cur
            clip_by_global_norm(acc, config.clip_norm)
            opt.step(params, acc)
        epoch_loss = total / n
        if initial is None:
            initial = epoch_loss
        if not math.isfinite(epoch_loss) or (initial > 0 and epoch_loss > DIVERGENCE_FACTOR * initial):
            raise TrainingDivergedError(f"training diverged at epoch {epoch}: loss {epoch_loss!r} (initial {initial!r})")
        history.append(epoch_loss)
        logger.debug("epoch %d loss %.6g", epoch, epoch_loss)
        if epoch_loss < best - config.min_delta:
            best, stale = epoch_loss, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return FitResult(history, initial, history[-1], len(history), opt)


def _regressor_loss(kind):
    def loss_fn(net, sample, state, weight):
        xs, target = sample
        return net.loss_and_grads(xs, target, kind, state=state, weight=weight)

    return loss_fn


def _classifier_loss(net, sample, state, weight):
    xs, target = sample
    return net.loss_and_grads(xs, target, state=state, weight=weight)


def _coords(events) -> np.ndarray:
    return np.array([(e.lat, e.lon) for e in events], dtype=float)


def regressor_samples(dataset: PreparedDataset, params: norm.NormalizerParams) -> list:
    return [(norm.transform(_coords(s.input), params), norm.transform(_coords([s.target])[0], params)) for s in dataset]


def _summary(fit: FitResult, n_samples: int) -> dict:
    return {
        "epochs_run": fit.epochs_run,
        "final_loss": fit.final_loss,
        "initial_loss": fit.initial_loss,
        "loss_history": fit.loss_history,
        "training_samples": n_samples,
    }


def train_regressor(profile: UserProfile, config: TrainingConfig, hook: BatchHook | None = None) -> PersistedModel:
    config = replace(config, model="reg-rnn")
    train_events, _ = split_events(profile, config.split)
    dataset = prepare(train_events, config.prep, profile.user_id)
    params = norm.fit(_coords(train_events), config.normalizer, config.std_divisor)
    if params.degenerate_axes:
        logger.warning("user %s: degenerate min-max axis %s mapped to 0.5", profile.user_id, params.degenerate_axes)
    rng = np.random.default_rng(config.seed)
    net = RegressorNet.create(config.reg_hidden, norm.output_activation(config.normalizer), rng)
    samples = regressor_samples(dataset, params)
    fit = fit_network(net, samples, _regressor_loss(config.loss), config, hook)
    return PersistedModel(
        kind="reg-rnn",
        params={k: v.copy() for k, v in net.parameters().items()},
        config=config.as_dict(),
        summary=_summary(fit, len(samples)),
        normalizer=params.as_dict(),
        label_coords={k: list(v) for k, v in sorted(label_coordinates([train_events]).items())},
        optimizer=fit.optimizer.state_dict(),
    )


def train_classifier(profile: UserProfile, config: TrainingConfig, hook: BatchHook | None = None) -> PersistedModel:
    config = replace(config, model="cls-rnn")
    train_events, _ = split_events(profile, config.split)
    dataset = classifier_dataset(train_events, config, profile.user_id)
    vocab = sorted({e.l for e in train_events})
    index = {lab: i for i, lab in enumerate(vocab)}
    rng = np.random.default_rng(config.seed)
    net = ClassifierNet.create(len(vocab), config.embed_dim, config.cls_hidden, rng)
    samples = [(np.array([index[e.l] for e in s.input]), index[s.target.l]) for s in dataset]
    fit = fit_network(net, samples, _classifier_loss, config, hook)
    return PersistedModel(
        kind="cls-rnn",
        params={k: v.copy() for k, v in net.parameters().items()},
        config=config.as_dict(),
        summary=_summary(fit, len(samples)),
        vocabulary=vocab,
        label_coords={k: list(v) for k, v in sorted(label_coordinates([train_events]).items())},
        optimizer=fit.optimizer.state_dict(),
    )


def baseline_training_sequences(train_events, config: TrainingConfig, user: str = "") -> list[list[LocationEvent]]:
    """Subsequences a baseline counts transitions within.

    For m3/m4 these are the collapsed, gap-sliced trajectories; for m1/m2
    the whole training sequence.
    """
    return prepare(train_events, config.prep, user).subsequences


def train_baseline(profile: UserProfile, config: TrainingConfig) -> PersistedModel:
    if config.model not in ("mfnv", "markov"):
        raise ValueError(f"{config.model} is not a baseline")
    train_events, _ = split_events(profile, config.split)
    seqs = baseline_training_sequences(train_events, config, profile.user_id)
    if config.model == "mfnv":
        fitted = fit_mfnv(seqs)
    else:
        fitted = fit_markov(seqs, config.markov_order)
    n_transitions = sum(max(len(s) - 1, 0) for s in seqs)
    return PersistedModel(
        kind=config.model,
        params={"counts": fitted.to_dict()},
        config=config.as_dict(),
        summary={"training_sequences": len(seqs), "training_transitions": n_transitions},
        label_coords={k: list(v) for k, v in sorted(label_coordinates([train_events]).items())},
    )


def train(profile: UserProfile, config: TrainingConfig, hook: BatchHook | None = None) -> PersistedModel:
    if config.model == "reg-rnn":
        return train_regressor(profile, config, hook)
    if config.model == "cls-rnn":
        return train_classifier(profile, config, hook)
    return train_baseline(profile, config)


def build_network(model: PersistedModel):
    p = model.params
    if model.kind == "reg-rnn":
        activation = norm.output_activation(model.normalizer["kind"])
        return RegressorNet(
            LstmParams(p["lstm1.W"].copy(), p["lstm1.U"].copy(), p["lstm1.b"].copy()),
            LstmParams(p["lstm2.W"].copy(), p["lstm2.U"].copy(), p["lstm2.b"].copy()),
            DenseParams(p["dense.W"].copy(), p["dense.b"].copy(), activation),
        )
    if model.kind == "cls-rnn":
        return ClassifierNet(
            EmbeddingParams(p["embedding.E"].copy()),
            LstmParams(p["lstm.W"].copy(), p["lstm.U"].copy(), p["lstm.b"].copy()),
            DenseParams(p["dense.W"].copy(), p["dense.b"].copy(), "softmax"),
        )
    raise ValueError(f"{model.kind} has no network")


class Predictor:
    """Inference wrapper around a :class:`PersistedModel`."""

    def __init__(self, model: PersistedModel):
        self.model = model
        self.kind = model.kind
        self.config = TrainingConfig.from_dict(model.config)
        self.label_coords = {k: tuple(v) for k, v in model.label_coords.items()}
        if self.kind == "mfnv":
            self._baseline = FrequencyTable.from_dict(model.params["counts"])
        elif self.kind == "markov":
            self._baseline = MarkovModel.from_dict(model.params["counts"])
        else:
            self.net = build_network(model)
        if self.kind == "reg-rnn":
            self.norm = norm.NormalizerParams.from_dict(model.normalizer)
        if self.kind == "cls-rnn":
            self.vocabulary = list(model.vocabulary)
            self.index = {lab: i for i, lab in enumerate(self.vocabulary)}

    @property
    def stateful(self) -> bool:
        return self.config.stateful and self.kind in ("reg-rnn", "cls-rnn")

    def known_labels(self) -> set[str]:
        return set(self.vocabulary) if self.kind == "cls-rnn" else set(self.label_coords)

    def _indices(self, history) -> np.ndarray:
        window = history[-(self.config.classifier_window - 1) :]
        try:
            return np.array([self.index[e.l] for e in window])
        except KeyError as exc:
            raise UnknownLocationError(f"location {exc.args[0]!r} is not in the classifier vocabulary") from None

    def predict_label(self, history, state=None):
        """Predicted label (and outgoing RNN state) for label-based models."""
        if self.kind == "cls-rnn":
            probs, state = self.net.forward(self._indices(history), state)
            return self.vocabulary[int(np.argmax(probs))], state
        if self.kind in ("mfnv", "markov"):
            return self._baseline.predict([e.l for e in history]), state
        raise ValueError("the regressor does not predict labels")

    def _step(self, history, state=None):
        if not history:
            raise ValueError("history must be non-empty")
        if self.kind == "reg-rnn":
            xs = norm.transform(_coords(history), self.norm)
            y, state = self.net.forward(xs, state)
            lat, lon = norm.inverse_transform(y, self.norm)
            return (float(lat), float(lon)), None, state
        label, state = self.predict_label(history, state)
        return self.label_coords[label], label, state

    def predict_next(self, history: Sequence[LocationEvent]) -> tuple[float, float]:
        """Coordinates of the next location, starting from the zero state."""
        return self._step(list(history))[0]

    def predict_samples(self, samples: Sequence[Sample]) -> tuple[list[tuple[float, float]], list[str | None]]:
        """Predict every sample in order, carrying RNN state when stateful."""
        coords, labels = [], []
        state = None
        for s in samples:
            c, lab, out = self._step(list(s.input), state if self.stateful else None)
            state = out
            coords.append(c)
            labels.append(lab)
        return coords, labels


def predict_next(model: PersistedModel, history: Sequence[LocationEvent]) -> tuple[float, float]:
    return Predictor(model).predict_next(history)


def sample_losses(model_or_net, samples: Sequence, loss_fn, batch_size: int, stateful: bool) -> list[float]:
    """Forward-only per-sample losses through the batch feeder (no updates)."""
    net = model_or_net
    out = []
    state = net.zero_state()
    for start in range(0, len(samples), batch_size):
        cur = state if stateful else net.zero_state()
        for i in range(start, min(start + batch_size, len(samples))):
            loss, _, nxt = loss_fn(net, samples[i], cur if stateful else net.zero_state(), 1.0)
            out.append(loss)
            cur = nxt
        state = cur
    return out
