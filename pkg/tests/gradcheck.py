"""Analytic-vs-finite-difference gradient comparison for both networks."""

from __future__ import annotations

import numpy as np

from cdrkit.neural import ClassifierNet, RegressorNet
from reference import central_differences, classifier_loss_ref, regressor_loss_ref, relative_error

STEP = 1e-5


def _randomise(net, rng, scale=0.5):
    for p in net.parameters().values():
        p[...] = rng.normal(0.0, scale, p.shape)


def classifier_case(seed, vocab=6, embed=4, hidden=8, length=4):
    rng = np.random.default_rng(seed)
    net = ClassifierNet.create(vocab, embed, hidden, rng)
    _randomise(net, rng)
    indices = rng.integers(0, vocab, length)
    return net, indices, int(rng.integers(vocab))


def regressor_case(seed, hidden=(6, 6), length=4, activation="linear"):
    rng = np.random.default_rng(seed)
    net = RegressorNet.create(hidden, activation, rng)
    _randomise(net, rng)
    if activation == "relu":
        # keep the output units safely on the linear side of the kink
        net.dense.b[:] = 3.0
    xs = rng.uniform(0, 1, (length, 2))
    return net, xs, rng.uniform(0, 1, 2)


def classifier_errors(seed, **kw) -> dict[str, float]:
    net, idx, target = classifier_case(seed, **kw)
    _, grads, _ = net.loss_and_grads(idx, target)
    numeric = central_differences(lambda p: classifier_loss_ref(p, idx, target), net.parameters(), STEP)
    return {k: relative_error(grads[k], numeric[k]) for k in grads}


def regressor_errors(seed, activation="linear", **kw) -> dict[str, float]:
    net, xs, target = regressor_case(seed, activation=activation, **kw)
    _, grads, _ = net.loss_and_grads(xs, target, "mse")
    numeric = central_differences(lambda p: regressor_loss_ref(p, xs, target, activation), net.parameters(), STEP)
    return {k: relative_error(grads[k], numeric[k]) for k in grads}
