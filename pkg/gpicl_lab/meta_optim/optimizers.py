"""
First-order optimizers over name -> ndarray parameter maps.

The *_step functions are pure: they return new parameters, new state and
the applied update, and never modify their inputs. The Optimizer classes
bind hyperparameters so the trainer can treat every kind alike.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from gpicl_lab.errors import ConfigError, NumericsError
from gpicl_lab.schemas import TrainRunConfig

logger = logging.getLogger(__name__)

Arrays = dict[str, np.ndarray]


@dataclass
class OptimizerState:
    step: int = 0
    m: Arrays = field(default_factory=dict)
    v: Arrays = field(default_factory=dict)


def check_finite(grads: Mapping[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"Non-finite gradient in {name}")


def global_norm(arrays: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(a, dtype=np.float64))) for a in arrays.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[Arrays, float]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads), norm
    scale = max_norm / norm
    return {name: (g * scale).astype(g.dtype) for name, g in grads.items()}, norm


def _zeros_like(params: Mapping[str, np.ndarray]) -> Arrays:
    return {name: np.zeros_like(p) for name, p in params.items()}


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decoupled: bool = True,
) -> tuple[Arrays, OptimizerState, Arrays]:
    """
    Bias-corrected Adam.

    weight_decay is applied as p -= lr * wd * p when decoupled, otherwise
    added to the gradient before the moments (L2).
    """
    if eps <= 0:
        raise ConfigError(f"Adam eps must be positive, got {eps}")
    check_finite(grads)
    t = state.step + 1
    m = state.m or _zeros_like(params)
    v = state.v or _zeros_like(params)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t

    new_params, new_m, new_v, updates = {}, {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if weight_decay and not decoupled:
            g = g + weight_decay * p
        new_m[name] = beta1 * m[name] + (1.0 - beta1) * g
        new_v[name] = beta2 * v[name] + (1.0 - beta2) * g * g
        update = -lr * (new_m[name] / c1) / (np.sqrt(new_v[name] / c2) + eps)
        if weight_decay and decoupled:
            update = update - lr * weight_decay * p
        updates[name] = update.astype(p.dtype)
        new_params[name] = (p + updates[name]).astype(p.dtype)
    return new_params, OptimizerState(step=t, m=new_m, v=new_v), updates


def sign_ema_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    beta: float = 0.9,
    weight_decay: float = 0.0,
) -> tuple[Arrays, OptimizerState, Arrays]:
    """m <- beta m + (1 - beta) g; p <- p - lr sign(m)."""
    check_finite(grads)
    m = state.m or _zeros_like(params)
    new_params, new_m, updates = {}, {}, {}
    for name, p in params.items():
        new_m[name] = beta * m[name] + (1.0 - beta) * grads[name]
        update = -lr * np.sign(new_m[name])
        if weight_decay:
            update = update - lr * weight_decay * p
        updates[name] = update.astype(p.dtype)
        new_params[name] = (p + updates[name]).astype(p.dtype)
    return new_params, OptimizerState(step=state.step + 1, m=new_m), updates


def sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[Arrays, OptimizerState, Arrays]:
    check_finite(grads)
    new_params, updates = {}, {}
    for name, p in params.items():
        update = -lr * (grads[name] + weight_decay * p)
        updates[name] = update.astype(p.dtype)
        new_params[name] = (p + updates[name]).astype(p.dtype)
    return new_params, OptimizerState(step=state.step + 1), updates


class Optimizer(ABC):
    """Hyperparameters bound to one update rule."""

    kind: str = ""

    def __init__(self, lr: float, weight_decay: float = 0.0, clip_norm: float | None = None):
        self.lr = lr
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm

    def init(self, params: Mapping[str, np.ndarray]) -> OptimizerState:
        return OptimizerState()

    @abstractmethod
    def apply(self, params, grads, state) -> tuple[Arrays, OptimizerState, Arrays]:
        pass

    def step(
        self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: OptimizerState
    ) -> tuple[Arrays, OptimizerState, Arrays]:
        check_finite(grads)
        if self.clip_norm is not None:
            grads, _ = clip_by_global_norm(grads, self.clip_norm)
        return self.apply(params, grads, state)

    @staticmethod
    def moment_norms(state: OptimizerState) -> dict[str, float]:
        norms = {}
        if state.m:
            norms["m_norm"] = global_norm(state.m)
        if state.v:
            norms["v_norm"] = global_norm(state.v)
        return norms


class Adam(Optimizer):
    kind = "adam"
    decoupled = False

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, clip_norm=None):
        super().__init__(lr, weight_decay, clip_norm)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def apply(self, params, grads, state):
        return adam_step(
            params, grads, state, self.lr, self.beta1, self.beta2, self.eps, self.weight_decay, self.decoupled
        )


class AdamW(Adam):
    kind = "adamw"
    decoupled = True


class SignEma(Optimizer):
    kind = "sign_ema"

    def __init__(self, lr, beta=0.9, weight_decay=0.0, clip_norm=None):
        super().__init__(lr, weight_decay, clip_norm)
        self.beta = beta

    def apply(self, params, grads, state):
        return sign_ema_step(params, grads, state, self.lr, self.beta, self.weight_decay)


class Sgd(Optimizer):
    kind = "sgd"

    def apply(self, params, grads, state):
        return sgd_step(params, grads, state, self.lr, self.weight_decay)


def build_optimizer(cfg: TrainRunConfig) -> Optimizer:
    if cfg.optimizer in ("adam", "adamw"):
        cls = AdamW if cfg.optimizer == "adamw" else Adam
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, cfg.clip_norm)
    if cfg.optimizer == "sign_ema":
        return SignEma(cfg.lr, cfg.beta1, cfg.weight_decay, cfg.clip_norm)
    if cfg.optimizer == "sgd":
        return Sgd(cfg.lr, cfg.weight_decay, cfg.clip_norm)
    raise ConfigError(f"Unknown optimizer {cfg.optimizer!r}")
