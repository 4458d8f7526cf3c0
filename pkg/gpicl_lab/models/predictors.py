from typing import Literal, Mapping, Protocol

import numpy as np

from gpicl_lab.data_tasks.batches import SequenceBatch
from gpicl_lab.models.base import SequenceModel
from gpicl_lab.models.baselines import LinearParams, sgd_online_learner


class SequencePredictor(Protocol):
    """Anything that maps a batch of sequences to per-position logits [S, T, C]."""

    name: str

    def predict(self, batch: SequenceBatch) -> np.ndarray: ...


class InContextPredictor:
    """Frozen black-box learner: forward passes only."""

    def __init__(self, model: SequenceModel, params: Mapping[str, np.ndarray], name: str | None = None, chunk: int = 64):
        model.check_params(params)
        self.model = model
        self.params = dict(params)
        self.name = name or model.family
        self.chunk = chunk

    def predict(self, batch: SequenceBatch) -> np.ndarray:
        parts = [
            self.model.logits(self.params, batch.tokens[i : i + self.chunk])
            for i in range(0, batch.batch_size, self.chunk)
        ]
        return np.concatenate(parts, axis=0)


class OnlineSgdPredictor:
    """
    Online linear classifier; with a MAML-trained init it is the MAML baseline.

    Plain SGD by default. optimizer="adam" with lr=1e-3 gives the tuned Adam
    variant of the same learner.
    """

    def __init__(
        self,
        lr: float = 1e-1,
        optimizer: Literal["plain", "adam"] = "plain",
        init: LinearParams | None = None,
        name: str = "sgd",
    ):
        self.lr = lr
        self.optimizer = optimizer
        self.init = init
        self.name = name

    def predict(self, batch: SequenceBatch) -> np.ndarray:
        return sgd_online_learner(batch.inputs, batch.targets, batch.num_classes, self.lr, self.optimizer, self.init)
