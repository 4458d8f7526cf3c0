"""
The augmented task distribution.

Task k of a base dataset is the pair (A_k, rho_k): a Gaussian projection
regenerated from its seed whenever needed, and a label permutation.
Both are pure functions of (global seed, stream, base name, k).
"""
from dataclasses import dataclass

import numpy as np

from gpicl_lab.errors import ConfigError
from gpicl_lab.schemas import PermutationDistribution
from gpicl_lab.tensor_engine.rng import gaussian_sample, stream_generator, stream_seed
from gpicl_lab.utils.converters import stable_hash64

SEEN = "seen"
UNSEEN = "unseen"

_COIN_SCALE = float(2**64)


@dataclass(frozen=True)
class TaskSpec:
    base: str
    task_index: int
    projection_seed: int
    permutation: tuple[int, ...]
    stream: str = SEEN
    # Test hook: skip the projection entirely (A = I)
    identity_projection: bool = False

    @property
    def num_classes(self) -> int:
        return len(self.permutation)


def bias_coin(global_seed: int, stream: str, base: str, k: int) -> float:
    """Deterministic uniform [0, 1) draw per task."""
    return stable_hash64(global_seed, stream, "bias", base, k) / _COIN_SCALE


def task_from_index(
    base: str,
    k: int,
    num_tasks: int,
    dist: PermutationDistribution,
    global_seed: int,
    num_classes: int = 10,
    stream: str = SEEN,
) -> TaskSpec:
    if not 0 <= k < num_tasks:
        raise ConfigError(f"Task index {k} outside [0, {num_tasks})")

    if bias_coin(global_seed, stream, base, k) < dist.bias_fraction:
        permutation = dist.resolved_fixed(num_classes)
    else:
        rng = stream_generator(global_seed, stream, "permutation", base, k)
        permutation = tuple(int(c) for c in rng.permutation(num_classes))

    return TaskSpec(
        base=base,
        task_index=k,
        projection_seed=stream_seed(global_seed, stream, "projection", base, k),
        permutation=permutation,
        stream=stream,
    )


def projection_matrix(spec: TaskSpec, input_dim: int) -> np.ndarray:
    """A with entries ~ N(0, 1/N_x)."""
    if spec.identity_projection:
        return np.eye(input_dim, dtype=np.float32)
    return gaussian_sample(
        spec.projection_seed, (input_dim, input_dim), std=1.0 / np.sqrt(input_dim), dtype=np.float32
    )


def apply_task(
    spec: TaskSpec,
    x: np.ndarray,
    y: np.ndarray,
    projection: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """x -> x A^T, y -> rho(y). A precomputed projection may be passed in."""
    x = np.asarray(x, dtype=np.float32)
    a = projection if projection is not None else projection_matrix(spec, x.shape[-1])
    permutation = np.asarray(spec.permutation, dtype=np.int64)
    return x @ a.T, permutation[np.asarray(y, dtype=np.int64)]
