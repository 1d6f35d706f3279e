"""Numpy building blocks: encodings, activations, losses and the LSTM layer.

LSTM gate blocks are stacked row-wise in the order input, forget,
cell-candidate, output, so ``W[0:H]`` holds the input-gate weights,
``W[H:2H]`` the forget-gate weights and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12
GATES = ("input", "forget", "candidate", "output")


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise IndexError(f"class index {index} out of range for size {size}")
    v = np.zeros(size)
    v[index] = 1.0
    return v


def sigmoid(z):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def softmax(logits) -> np.ndarray:
    s = np.asarray(logits, dtype=float)
    e = np.exp(s - s.max())
    return e / e.sum()


def cross_entropy(probs, target) -> float:
    """``-sum(t * log p)`` with probabilities floored at ``PROB_FLOOR``."""
    probs = np.asarray(probs, dtype=float)
    target = np.asarray(target, dtype=float)
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape} vs target {target.shape}")
    return float(-np.sum(target * np.log(np.maximum(probs, PROB_FLOOR))))


def loss_regression(pred, target, kind: str = "mse") -> float:
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    if kind == "mse":
        return float(np.mean(diff**2))
    if kind == "mae":
        return float(np.mean(np.abs(diff)))
    raise ValueError(f"unknown regression loss {kind!r}")


def loss_regression_grad(pred, target, kind: str = "mse") -> np.ndarray:
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    if kind == "mse":
        return 2.0 * diff / diff.size
    if kind == "mae":
        return np.sign(diff) / diff.size
    raise ValueError(f"unknown regression loss {kind!r}")


@dataclass
class LstmParams:
    W: np.ndarray  # (4H, I)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator, forget_bias: float = 1.0):
        bound = 1.0 / np.sqrt(input_size + hidden_size)
        W = rng.uniform(-bound, bound, (4 * hidden_size, input_size))
        U = rng.uniform(-bound, bound, (4 * hidden_size, hidden_size))
        b = np.zeros(4 * hidden_size)
        b[hidden_size : 2 * hidden_size] = forget_bias
        return cls(W, U, b)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int):
        return cls(
            np.zeros((4 * hidden_size, input_size)), np.zeros((4 * hidden_size, hidden_size)), np.zeros(4 * hidden_size)
        )

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        H = self.hidden_size
        k = GATES.index(name)
        sl = slice(k * H, (k + 1) * H)
        return self.W[sl], self.U[sl], self.b[sl]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmState":
        return cls(np.zeros(hidden_size), np.zeros(hidden_size))

    def copy(self) -> "LstmState":
        return LstmState(self.h.copy(), self.c.copy())


@dataclass
class DenseParams:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ("softmax", "relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator, activation: str = "linear"):
        bound = 1.0 / np.sqrt(in_dim)
        return cls(rng.uniform(-bound, bound, (out_dim, in_dim)), np.zeros(out_dim), activation)


@dataclass
class EmbeddingParams:
    E: np.ndarray  # (vocab, dim)

    @classmethod
    def init(cls, vocab_size: int, dim: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(vocab_size)
        return cls(rng.uniform(-bound, bound, (vocab_size, dim)))


def lstm_step(x, state: LstmState, params: LstmParams):
    """One LSTM step; returns ``(h', LstmState(h', c'), cache)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_size,):
        raise ValueError(f"input has shape {x.shape}, expected ({params.input_size},)")
    if state.h.shape != (params.hidden_size,) or state.c.shape != (params.hidden_size,):
        raise ValueError("state shape does not match hidden size")
    H = params.hidden_size
    a = params.W @ x + params.U @ state.h + params.b
    i = sigmoid(a[:H])
    f = sigmoid(a[H : 2 * H])
    g = np.tanh(a[2 * H : 3 * H])
    o = sigmoid(a[3 * H :])
    c = f * state.c + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (x, state.h, state.c, i, f, g, o, tc)
    return h, LstmState(h, c), cache


def lstm_forward(xs, state: LstmState, params: LstmParams):
    """Run a sequence ``xs`` (T, I); returns hidden outputs (T, H), final state and caches."""
    hs = np.empty((len(xs), params.hidden_size))
    caches = []
    for t, x in enumerate(xs):
        hs[t], state, cache = lstm_step(x, state, params)
        caches.append(cache)
    return hs, state, caches


def lstm_backward(dhs, caches, params: LstmParams):
    """Backpropagation through time for one sequence.

    ``dhs`` is the loss gradient w.r.t. each emitted hidden vector.  The
    incoming state is treated as a constant.  Returns ``(dxs, grads)``
    where ``grads`` holds ``W``, ``U`` and ``b`` gradients.
    """
    H = params.hidden_size
    dW = np.zeros_like(params.W)
    dU = np.zeros_like(params.U)
    db = np.zeros_like(params.b)
    dxs = np.empty((len(caches), params.input_size))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    da = np.empty(4 * H)
    for t in range(len(caches) - 1, -1, -1):
        x, h_prev, c_prev, i, f, g, o, tc = caches[t]
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da[:H] = dc * g * i * (1.0 - i)
        da[H : 2 * H] = dc * c_prev * f * (1.0 - f)
        da[2 * H : 3 * H] = dc * i * (1.0 - g * g)
        da[3 * H :] = dh * tc * o * (1.0 - o)
        dW += np.outer(da, x)
        dU += np.outer(da, h_prev)
        db += da
        dxs[t] = params.W.T @ da
        dh_next = params.U.T @ da
        dc_next = dc * f
    return dxs, {"W": dW, "U": dU, "b": db}
