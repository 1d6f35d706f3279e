"""Gradient-descent optimizers updating parameter dicts in place."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

KINDS = ("sgd", "adagrad", "rmsprop", "adam")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rho: float = 0.9  # RMSProp decay

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and 0 <= self.rho < 1):
            raise ValueError("decay rates must lie in [0, 1)")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


class Optimizer:
    """Holds an :class:`OptimizerConfig` plus per-parameter accumulators.

    Accumulators: ``m``/``v`` for Adam, ``G`` (sum of squared gradients)
    for AdaGrad, ``v`` for RMSProp.
    """

    def __init__(self, config: OptimizerConfig | None = None, **kwargs):
        self.config = config if config is not None else OptimizerConfig(**kwargs)
        self.step_count = 0
        self.state: dict[str, dict[str, np.ndarray]] = {}

    def _slot(self, name: str, param: np.ndarray) -> dict[str, np.ndarray]:
        slot = self.state.get(name)
        if slot is None:
            kind = self.config.kind
            keys = {"sgd": (), "adagrad": ("G",), "rmsprop": ("v",), "adam": ("m", "v")}[kind]
            slot = self.state[name] = {k: np.zeros_like(param) for k in keys}
        return slot

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
            if cfg.kind == "sgd":
                p -= cfg.lr * g
                continue
            slot = self._slot(name, p)
            if cfg.kind == "adagrad":
                slot["G"] += g * g
                p -= cfg.lr * g / (np.sqrt(slot["G"]) + cfg.eps)
            elif cfg.kind == "rmsprop":
                slot["v"] *= cfg.rho
                slot["v"] += (1.0 - cfg.rho) * g * g
                p -= cfg.lr * g / (np.sqrt(slot["v"]) + cfg.eps)
            else:
                m, v = slot["m"], slot["v"]
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                m_hat = m / (1.0 - cfg.beta1**t)
                v_hat = v / (1.0 - cfg.beta2**t)
                p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)

    def state_dict(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "step": self.step_count,
            "slots": {name: {k: arr.tolist() for k, arr in sorted(slot.items())} for name, slot in sorted(self.state.items())},
        }

    @classmethod
    def from_state_dict(cls, data: dict) -> "Optimizer":
        opt = cls(OptimizerConfig(**data["config"]))
        opt.step_count = int(data["step"])
        opt.state = {
            name: {k: np.asarray(v, dtype=float) for k, v in slot.items()} for name, slot in data["slots"].items()
        }
        return opt


def optimizer_step(params, grads, optimizer: Optimizer) -> Optimizer:
    optimizer.step(params, grads)
    return optimizer


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
