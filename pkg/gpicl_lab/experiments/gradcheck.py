"""
Finite-difference check of every model family's analytic gradients.
"""
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from gpicl_lab.models.registry import build_model
from gpicl_lab.schemas import ModelConfig
from gpicl_lab.tensor_engine.autodiff import finite_difference_check
from gpicl_lab.tensor_engine.losses import cross_entropy_loss
from gpicl_lab.tensor_engine.rng import stream_generator

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4
NUM_CLASSES = 4
INPUT_DIM = 7

SUITE: dict[str, tuple[ModelConfig, int]] = {
    "mlp": (ModelConfig(family="mlp", hidden_size=6, mlp_hidden_layers=2, input_dim=INPUT_DIM, output_dim=NUM_CLASSES), 1),
    "lstm": (ModelConfig(family="lstm", hidden_size=5, input_dim=INPUT_DIM, output_dim=NUM_CLASSES), 4),
    "outer_lstm": (
        ModelConfig(family="outer_lstm", outer_heads=2, outer_size=3, input_dim=INPUT_DIM, output_dim=NUM_CLASSES),
        4,
    ),
    "transformer": (
        ModelConfig(
            family="transformer",
            model_size=8,
            layers=2,
            heads=2,
            key_size=3,
            mlp_ratio=2,
            max_seq=4,
            input_dim=INPUT_DIM,
            output_dim=NUM_CLASSES,
        ),
        4,
    ),
}


@dataclass(frozen=True)
class GradCheckResult:
    family: str
    seed: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < GRAD_TOLERANCE


def check_family(family: str, seed: int, coords_per_param: int = 64) -> GradCheckResult:
    config, seq_len = SUITE[family]
    model = build_model(config)
    rng = stream_generator(seed, "gradcheck", family)
    # Spread the init so saturating units and near-zero gradients both show up
    params = {
        name: (value + rng.normal(scale=0.3, size=value.shape)).astype(np.float64)
        for name, value in model.init_params(seed).items()
    }
    tokens = rng.normal(size=(2, seq_len, INPUT_DIM))
    targets = rng.integers(0, NUM_CLASSES, size=(2, seq_len))

    def loss_fn(graph):
        return cross_entropy_loss(model.forward(graph, graph.parameters, graph.constant(tokens)), targets)

    error = finite_difference_check(loss_fn, params, coords_per_param=coords_per_param, seed=seed)
    return GradCheckResult(family, seed, error)


def gradient_check_suite(seeds: Iterable[int] = range(20), families: Iterable[str] | None = None) -> list[GradCheckResult]:
    results = []
    for family in families or SUITE:
        for seed in seeds:
            result = check_family(family, seed)
            if not result.passed:
                logger.warning(f"{family} seed {seed}: max relative error {result.max_rel_error:.2e}")
            results.append(result)
        worst = max(r.max_rel_error for r in results if r.family == family)
        logger.info(f"{family}: worst relative error {worst:.2e}")
    return results
