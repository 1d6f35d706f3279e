import math
from dataclasses import replace

import numpy as np
import pytest

from cdrkit import ingest as ing
from cdrkit import normalizer as norm
from cdrkit import synth
from cdrkit.evaluation import haversine
from cdrkit.model_io import save_model
from cdrkit.neural import LstmState, RegressorNet
from cdrkit.prep import InsufficientDataError, PrepConfig, prepare, trajectories
from cdrkit.training import (
    Predictor,
    TrainingConfig,
    TrainingDivergedError,
    UnknownLocationError,
    fit_network,
    predict_next,
    regressor_samples,
    sample_losses,
    split_events,
    train,
    train_classifier,
    train_regressor,
)
from helpers import coord_of, seq, user


@pytest.fixture(scope="module")
def commuter():
    spec = synth.commuter(seed=1, days=20, skip_prob=0.0)
    c = synth.generate(spec)
    return spec, ing.profile(c.records, c.cells)[0][0]


def small(**kw):
    base = dict(prep=PrepConfig("m3", t=3600), epochs=3, reg_hidden=(4, 4), cls_hidden=6, embed_dim=3)
    return TrainingConfig(**{**base, **kw})


class Recorder:
    def __init__(self):
        self.calls = []

    def __call__(self, epoch, batch, idx, state_in, state_out):
        snap = lambda s: tuple((x.h.copy(), x.c.copy()) for x in s)  # noqa: E731
        self.calls.append((epoch, batch, list(idx), snap(state_in), snap(state_out)))


def _equal(a, b):
    return all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))


@pytest.mark.parametrize("kind", ["reg-rnn", "cls-rnn"])
@pytest.mark.parametrize("batch", [1, 3])
def test_stateful_contract(commuter, kind, batch):
    _, prof = commuter
    rec = Recorder()
    train(prof, small(model=kind, batch_size=batch, stateful=True, prep=PrepConfig("m4", w=3, t=3600)), hook=rec)
    for epoch in range(3):
        calls = [c for c in rec.calls if c[0] == epoch]
        assert not any(v.any() for s in calls[0][3] for v in s)  # reset at epoch start
        for prev, nxt in zip(calls, calls[1:]):
            assert _equal(prev[4], nxt[3])
        order = [i for c in calls for i in c[2]]
        assert order == list(range(len(order)))


def test_stateless_batches_start_at_zero(commuter):
    _, prof = commuter
    rec = Recorder()
    train(prof, small(stateful=False, batch_size=2), hook=rec)
    assert all(not v.any() for c in rec.calls for s in c[3] for v in s)
    assert any(v.any() for c in rec.calls for s in c[4] for v in s)


def test_batching_transparency(commuter):
    _, prof = commuter
    cfg = small(stateful=False)
    train_events, _ = split_events(prof, cfg.split)
    params = norm.fit([(e.lat, e.lon) for e in train_events])
    samples = regressor_samples(prepare(train_events, cfg.prep), params)
    net = RegressorNet.create((4, 4), "relu", np.random.default_rng(0))
    loss_fn = lambda n, s, st, w: n.loss_and_grads(s[0], s[1], "mse", st, w)  # noqa: E731
    a = sample_losses(net, samples, loss_fn, 1, False)
    b = sample_losses(net, samples, loss_fn, 4, False)
    assert a == b and len(a) == len(samples)


def test_noiseless_regressor_learns(commuter):
    spec, prof = commuter
    m = train_regressor(prof, TrainingConfig(prep=PrepConfig("m3", t=3600), seed=0))
    h = m.summary["loss_history"]
    assert all(a > b for a, b in zip(h[:10], h[1:10]))
    assert h[-1] < 0.05 * h[0]
    # morning-route prefixes predict the work tower
    _, test = split_events(prof, 0.5)
    home = ing.location_label(*spec.tower_key(0)[2:])
    morning = [p for p in trajectories(test, 3600) if len(p) >= 2 and p[0].l == home]
    assert morning
    for trip in morning:
        assert haversine(predict_next(m, trip[:-1]), spec.work) < 500


def test_classifier_learns_repeating_pattern():
    prof = user(seq("ABC" * 40, step=600))
    m = train_classifier(prof, TrainingConfig(prep=PrepConfig("m2", w=3), epochs=100, seed=0))
    assert len(m.params["dense.b"]) == 3 == len(m.vocabulary)
    train_events, _ = split_events(prof, 0.5)
    p = Predictor(m)
    hits = [p.predict_label(train_events[i - 2 : i])[0] == train_events[i].l for i in range(2, len(train_events))]
    assert all(hits)


@pytest.mark.parametrize("kind", ["mfnv", "markov", "cls-rnn", "reg-rnn"])
def test_same_seed_same_document(commuter, kind):
    _, prof = commuter
    cfg = small(model=kind)
    assert save_model(train(prof, cfg)) == save_model(train(prof, cfg))


def test_different_seed_different_params(commuter):
    _, prof = commuter
    a, b = train(prof, small(seed=1)), train(prof, small(seed=2))
    assert not np.array_equal(a.params["lstm1.W"], b.params["lstm1.W"])


def test_zero_net_predicts_inverse_bias():
    prof = user(seq("HAWBH" * 6, step=600))
    m = train(prof, small(normalizer="variance", prep=PrepConfig("m2", w=3), epochs=1))
    for k in m.params:
        m.params[k][...] = 0
    m.params["dense.b"][:] = [0.3, -0.2]
    expect = tuple(norm.inverse_transform([0.3, -0.2], norm.NormalizerParams.from_dict(m.normalizer)))
    assert predict_next(m, seq("HB")) == pytest.approx(expect, abs=0)
    assert predict_next(m, seq("HAWBHAW")) == pytest.approx(expect, abs=0)


def test_classifier_predicts_label_coordinates():
    prof = user(seq("HAWB" * 10, step=600))
    m = train(prof, small(model="cls-rnn", prep=PrepConfig("m2", w=3), epochs=1))
    p = Predictor(m)
    k = int(np.argmax(p.net.forward(p._indices(seq("HA")))[0]))
    assert p.predict_next(seq("HA")) == coord_of(m.vocabulary[k])
    with pytest.raises(UnknownLocationError):
        p.predict_next(seq("HZ"))


def test_train_test_hygiene():
    events = seq("HAHA" * 5, step=600) + seq("ZQZQ" * 5, start=10**6, step=600)
    prof = user(events)
    m = train(prof, small(model="cls-rnn", prep=PrepConfig("m2", w=3), epochs=1))
    assert m.vocabulary == ["A", "H"]
    r = train(prof, small(prep=PrepConfig("m2", w=3), epochs=1))
    train_events, _ = split_events(prof, 0.5)
    assert norm.NormalizerParams.from_dict(r.normalizer) == norm.fit([(e.lat, e.lon) for e in train_events])


def test_divergence_guard():
    class Fake:
        def __init__(self):
            self.p = {"w": np.zeros(1)}

        def parameters(self):
            return self.p

        def zero_state(self):
            return (LstmState.zeros(1),)

    losses = iter([1.0, 1.0, float("nan")])
    fn = lambda net, s, st, w: (next(losses), {"w": np.zeros(1)}, st)  # noqa: E731
    with pytest.raises(TrainingDivergedError):
        fit_network(Fake(), [0, 1], fn, TrainingConfig(epochs=5))
    growth = iter([1.0, 1e7])
    fn = lambda net, s, st, w: (next(growth), {"w": np.zeros(1)}, st)  # noqa: E731
    with pytest.raises(TrainingDivergedError):
        fit_network(Fake(), [0], fn, TrainingConfig(epochs=5))


def test_early_stopping():
    class Fake:
        def parameters(self):
            return {"w": np.zeros(1)}

        def zero_state(self):
            return (LstmState.zeros(1),)

    fn = lambda net, s, st, w: (0.5, {"w": np.zeros(1)}, st)  # noqa: E731
    res = fit_network(Fake(), [0], fn, TrainingConfig(epochs=100, patience=5))
    assert res.epochs_run == 6 and res.final_loss == 0.5


def test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        train(user(seq("HA")), small(prep=PrepConfig("m2", w=5)))


def test_config_roundtrip_and_validation():
    cfg = small(model="markov", markov_order=3)
    assert TrainingConfig.from_dict(cfg.as_dict()) == cfg
    for bad in (dict(batch_size=0), dict(model="svm"), dict(loss="huber"), dict(normalizer="robust"), dict(epochs=0)):
        with pytest.raises(ValueError):
            replace(cfg, **bad)


def test_stateful_prediction_carries_state(commuter):
    _, prof = commuter
    m = train(prof, small(stateful=True))
    p = Predictor(m)
    _, test = split_events(prof, 0.5)
    data = prepare(test, p.config.prep)
    carried, _ = p.predict_samples(data.samples)
    fresh = [p.predict_next(s.input) for s in data.samples]
    assert carried[0] == fresh[0]
    assert any(not math.isclose(a[0], b[0], abs_tol=1e-12) for a, b in zip(carried, fresh))
