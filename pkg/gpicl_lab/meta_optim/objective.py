from typing import Mapping

import numpy as np
from scipy.special import log_softmax

from gpicl_lab.data_tasks.batches import SequenceBatch
from gpicl_lab.models.base import ParamTensors, SequenceModel
from gpicl_lab.tensor_engine.autodiff import value_and_grad
from gpicl_lab.tensor_engine.losses import cross_entropy_loss
from gpicl_lab.tensor_engine.tensor import Graph, Tensor


def meta_loss(model: SequenceModel, graph: Graph, params: ParamTensors, batch: SequenceBatch) -> Tensor:
    """
    Mean over batch and positions of the loss on query j given the prefix 1..j-1.

    A single causal forward pass scores every position at once.
    """
    logits = model.forward(graph, params, graph.constant(batch.tokens))
    return cross_entropy_loss(logits, batch.targets)


def meta_loss_and_grads(
    model: SequenceModel,
    params: Mapping[str, np.ndarray],
    batch: SequenceBatch,
    dtype=np.float32,
) -> tuple[float, dict[str, np.ndarray]]:
    return value_and_grad(lambda g: meta_loss(model, g, g.parameters, batch), params, dtype=dtype)


def prefix_oracle_loss(model: SequenceModel, params: Mapping[str, np.ndarray], batch: SequenceBatch) -> float:
    """Re-runs the model on every prefix separately and scores only its last position."""
    total = 0.0
    for j in range(batch.seq_len):
        logits = model.logits(params, batch.tokens[:, : j + 1], dtype=np.float64)[:, -1]
        log_p = log_softmax(logits, axis=-1)
        total += -log_p[np.arange(batch.batch_size), batch.targets[:, j]].sum()
    return total / (batch.batch_size * batch.seq_len)
