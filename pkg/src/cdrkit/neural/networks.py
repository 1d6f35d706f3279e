"""The two recurrent architectures.

``ClassifierNet``: one-hot label -> embedding -> LSTM -> dense softmax over
the known locations.  ``RegressorNet``: normalised (lat, lon) -> LSTM ->
LSTM -> dense layer emitting a 2-vector.

Both expose ``parameters()`` (name -> array, shared with the network so
optimizers update in place), ``forward`` and ``loss_and_grads``.  Every
call takes an optional incoming state and returns the outgoing one;
gradients never flow into the incoming state.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    DenseParams,
    EmbeddingParams,
    LstmParams,
    LstmState,
    cross_entropy,
    loss_regression,
    loss_regression_grad,
    lstm_backward,
    lstm_forward,
    softmax,
)


class ClassifierNet:
    kind = "cls-rnn"

    def __init__(self, embedding: EmbeddingParams, lstm: LstmParams, dense: DenseParams):
        if dense.activation != "softmax":
            raise ValueError("classifier output layer must use softmax")
        self.embedding = embedding
        self.lstm = lstm
        self.dense = dense

    @classmethod
    def create(cls, vocab_size: int, embed_dim: int = 16, hidden: int = 64, rng=None) -> "ClassifierNet":
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(
            EmbeddingParams.init(vocab_size, embed_dim, rng),
            LstmParams.init(embed_dim, hidden, rng),
            DenseParams.init(hidden, vocab_size, rng, "softmax"),
        )

    @property
    def vocab_size(self) -> int:
        return self.embedding.E.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "embedding.E": self.embedding.E,
            "lstm.W": self.lstm.W,
            "lstm.U": self.lstm.U,
            "lstm.b": self.lstm.b,
            "dense.W": self.dense.W,
            "dense.b": self.dense.b,
        }

    def zero_state(self) -> tuple[LstmState]:
        return (LstmState.zeros(self.lstm.hidden_size),)

    def _run(self, indices, state):
        indices = np.asarray(indices, dtype=int)
        if indices.size == 0:
            raise ValueError("input sequence is empty")
        if indices.min() < 0 or indices.max() >= self.vocab_size:
            raise IndexError("label index outside the vocabulary")
        state = state if state is not None else self.zero_state()
        xs = self.embedding.E[indices]
        hs, out_state, caches = lstm_forward(xs, state[0], self.lstm)
        probs = softmax(self.dense.W @ hs[-1] + self.dense.b)
        return indices, hs, caches, probs, (out_state,)

    def forward(self, indices, state=None):
        _, _, _, probs, out_state = self._run(indices, state)
        return probs, out_state

    def loss_and_grads(self, indices, target: int, state=None, weight: float = 1.0):
        indices, hs, caches, probs, out_state = self._run(indices, state)
        target_vec = np.zeros(self.vocab_size)
        target_vec[target] = 1.0
        loss = weight * cross_entropy(probs, target_vec)
        dlogits = weight * (probs - target_vec)
        dhs = np.zeros_like(hs)
        dhs[-1] = self.dense.W.T @ dlogits
        dxs, g = lstm_backward(dhs, caches, self.lstm)
        dE = np.zeros_like(self.embedding.E)
        np.add.at(dE, indices, dxs)
        grads = {
            "embedding.E": dE,
            "lstm.W": g["W"],
            "lstm.U": g["U"],
            "lstm.b": g["b"],
            "dense.W": np.outer(dlogits, hs[-1]),
            "dense.b": dlogits,
        }
        return loss, grads, out_state


class RegressorNet:
    kind = "reg-rnn"

    def __init__(self, lstm1: LstmParams, lstm2: LstmParams, dense: DenseParams):
        if dense.activation not in ("relu", "linear"):
            raise ValueError("regressor output layer must be relu or linear")
        if dense.W.shape[0] != 2:
            raise ValueError("regressor output layer must emit a 2-vector")
        self.lstm1 = lstm1
        self.lstm2 = lstm2
        self.dense = dense

    @classmethod
    def create(cls, hidden=(32, 32), activation: str = "relu", rng=None) -> "RegressorNet":
        rng = rng if rng is not None else np.random.default_rng(0)
        h1, h2 = hidden
        dense = DenseParams.init(h2, 2, rng, activation)
        if activation == "relu":
            # start mid-range of the [0, 1] targets so no output unit begins dead
            dense.b[:] = 0.5
        return cls(LstmParams.init(2, h1, rng), LstmParams.init(h1, h2, rng), dense)

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "lstm1.W": self.lstm1.W,
            "lstm1.U": self.lstm1.U,
            "lstm1.b": self.lstm1.b,
            "lstm2.W": self.lstm2.W,
            "lstm2.U": self.lstm2.U,
            "lstm2.b": self.lstm2.b,
            "dense.W": self.dense.W,
            "dense.b": self.dense.b,
        }

    def zero_state(self) -> tuple[LstmState, LstmState]:
        return (LstmState.zeros(self.lstm1.hidden_size), LstmState.zeros(self.lstm2.hidden_size))

    def _run(self, xs, state):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[0] == 0:
            raise ValueError("input must be a non-empty sequence of coordinate pairs")
        if xs.shape[1] != 2:
            raise ValueError(f"each input element must be a 2-vector, got width {xs.shape[1]}")
        state = state if state is not None else self.zero_state()
        hs1, s1, c1 = lstm_forward(xs, state[0], self.lstm1)
        hs2, s2, c2 = lstm_forward(hs1, state[1], self.lstm2)
        z = self.dense.W @ hs2[-1] + self.dense.b
        y = np.maximum(z, 0.0) if self.dense.activation == "relu" else z
        return hs2, c1, c2, z, y, (s1, s2)

    def forward(self, xs, state=None):
        *_, y, out_state = self._run(xs, state)
        return y, out_state

    def loss_and_grads(self, xs, target, loss: str = "mse", state=None, weight: float = 1.0):
        hs2, c1, c2, z, y, out_state = self._run(xs, state)
        value = weight * loss_regression(y, target, loss)
        dz = weight * loss_regression_grad(y, target, loss)
        if self.dense.activation == "relu":
            dz = dz * (z > 0)
        dhs2 = np.zeros_like(hs2)
        dhs2[-1] = self.dense.W.T @ dz
        dhs1, g2 = lstm_backward(dhs2, c2, self.lstm2)
        _, g1 = lstm_backward(dhs1, c1, self.lstm1)
        grads = {
            "lstm1.W": g1["W"],
            "lstm1.U": g1["U"],
            "lstm1.b": g1["b"],
            "lstm2.W": g2["W"],
            "lstm2.U": g2["U"],
            "lstm2.b": g2["b"],
            "dense.W": np.outer(dz, hs2[-1]),
            "dense.b": dz,
        }
        return value, grads, out_state


def forward_classifier(net: ClassifierNet, indices, state=None) -> np.ndarray:
    return net.forward(indices, state)[0]


def forward_regressor(net: RegressorNet, xs, state=None) -> np.ndarray:
    return net.forward(xs, state)[0]
