"""
Gradient-based learners: an online linear classifier trained by SGD or
Adam along the sequence, and MAML over its initialization.

For position j both predict x_j with the current weights and only then
take one step on (x_j, y_j), so prediction j has seen exactly the prefix.
"""
import logging
from typing import Literal

import numpy as np
from scipy.special import softmax

from gpicl_lab.data_tasks.batches import BatchSampler
from gpicl_lab.data_tasks.datasets import BaseDataset
from gpicl_lab.errors import ConfigError
from gpicl_lab.meta_optim.optimizers import Adam, Optimizer, OptimizerState, adam_step, sgd_step
from gpicl_lab.schemas import PermutationDistribution
from gpicl_lab.tensor_engine.autodiff import backward
from gpicl_lab.tensor_engine.losses import cross_entropy_loss
from gpicl_lab.tensor_engine.tensor import Graph, Tensor, concat

logger = logging.getLogger(__name__)

LinearParams = dict[str, np.ndarray]

# Unrolled MAML graphs above this many scalars per step are refused
MAX_UNROLL_ELEMENTS = 2**26


def linear_classifier_init(input_dim: int, num_classes: int) -> LinearParams:
    return {
        "w": np.zeros((input_dim, num_classes), dtype=np.float32),
        "b": np.zeros((num_classes,), dtype=np.float32),
    }


def sgd_online_learner(
    x: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    lr: float = 1e-3,
    optimizer: Literal["plain", "adam"] = "adam",
    init: LinearParams | None = None,
) -> np.ndarray:
    """
    Online linear classifier run independently on each of S sequences.

    x: [S, T, N_x]; y: [S, T]. Returns the logits predicted at each
    position before the update on that position, [S, T, C].
    """
    s, t, d = x.shape
    init = init or linear_classifier_init(d, num_classes)
    params = {
        "w": np.broadcast_to(init["w"], (s, d, num_classes)).astype(np.float64),
        "b": np.broadcast_to(init["b"], (s, num_classes)).astype(np.float64),
    }
    state = OptimizerState()
    rows = np.arange(s)
    out = np.empty((s, t, num_classes))

    for j in range(t):
        xj = x[:, j].astype(np.float64)
        logits = np.einsum("sd,sdc->sc", xj, params["w"]) + params["b"]
        out[:, j] = logits
        delta = softmax(logits, axis=-1)
        delta[rows, y[:, j]] -= 1.0
        grads = {"w": xj[:, :, None] * delta[:, None, :], "b": delta}
        if optimizer == "adam":
            params, state, _ = adam_step(params, grads, state, lr)
        elif optimizer == "plain":
            params, state, _ = sgd_step(params, grads, state, lr)
        else:
            raise ConfigError(f"Unknown online optimizer {optimizer!r}")
    return out


def maml_loss(
    graph: Graph,
    theta: dict[str, Tensor],
    x: np.ndarray,
    y: np.ndarray,
    inner_lr: float,
    num_classes: int,
    first_order: bool = False,
) -> Tensor:
    """
    Mean per-position loss of the online learner started from theta.

    The inner SGD steps are recorded on the graph, so backward() gives the
    exact gradient through the unroll; first_order cuts it at each step.
    """
    s, t, d = x.shape
    if s * t * d * num_classes > MAX_UNROLL_ELEMENTS:
        raise ConfigError(
            f"MAML unroll of {s}x{t}x{d}x{num_classes} scalars exceeds {MAX_UNROLL_ELEMENTS}; "
            "truncate seq_len or batch_size"
        )
    onehot = np.eye(num_classes)[y]
    w, b = theta["w"], theta["b"]
    logits = []
    for j in range(t):
        xj = graph.constant(x[:, j : j + 1])
        lj = xj @ w + b
        logits.append(lj)
        if j == t - 1:
            break
        delta = lj.softmax() - graph.constant(onehot[:, j : j + 1])
        gw = xj.transpose(0, 2, 1) @ delta
        gb = delta
        if first_order:
            gw, gb = graph.constant(gw.data), graph.constant(gb.data)
        w = w - gw * inner_lr
        b = b - gb * inner_lr
    return cross_entropy_loss(concat(logits, axis=1), y)


def maml_meta_step(
    theta: LinearParams,
    x: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    inner_lr: float,
    optimizer: Optimizer,
    state: OptimizerState,
    first_order: bool = False,
) -> tuple[LinearParams, OptimizerState, float]:
    graph = Graph()
    handles = graph.add_parameters(theta)
    loss = maml_loss(graph, handles, x, y, inner_lr, num_classes, first_order)
    grads = backward(graph, loss)
    new_theta, state, _ = optimizer.step(theta, grads, state)
    return new_theta, state, float(loss.data)


def train_maml(
    base: BaseDataset,
    num_tasks: int,
    dist: PermutationDistribution,
    batch_size: int,
    seq_len: int,
    steps: int,
    inner_lr: float = 1e-1,
    outer_lr: float = 1e-3,
    seed: int = 0,
    first_order: bool = False,
) -> LinearParams:
    sampler = BatchSampler(base, num_tasks, dist, batch_size, seq_len, seed)
    optimizer = Adam(outer_lr)
    theta = linear_classifier_init(base.input_dim, base.num_classes)
    state = optimizer.init(theta)
    for step in range(steps):
        batch = sampler.batch(step)
        theta, state, loss = maml_meta_step(
            theta, batch.inputs, batch.targets, base.num_classes, inner_lr, optimizer, state, first_order
        )
        if step % 100 == 0:
            logger.info(f"maml step {step}: meta loss {loss:.4f}")
    return theta
