"""
Tokenized sequence batches.

Token j is concat(x_j, onehot(y_{j-1})); position 0 carries a zero label
block, so the target at j is only ever visible from position j+1 on.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gpicl_lab.data_tasks.datasets import BaseDataset
from gpicl_lab.data_tasks.tasks import SEEN, TaskSpec, apply_task, projection_matrix, task_from_index
from gpicl_lab.errors import ConfigError
from gpicl_lab.schemas import PermutationDistribution
from gpicl_lab.tensor_engine.rng import stream_generator


@dataclass(frozen=True)
class SequenceBatch:
    tokens: np.ndarray  # [B, N_T, N_x + N_y]
    targets: np.ndarray  # [B, N_T]
    task_ids: np.ndarray  # [B]
    num_classes: int = 10

    @property
    def batch_size(self) -> int:
        return self.tokens.shape[0]

    @property
    def seq_len(self) -> int:
        return self.tokens.shape[1]

    @property
    def inputs(self) -> np.ndarray:
        return self.tokens[..., : self.tokens.shape[-1] - self.num_classes]


def tokenize(x: np.ndarray, y: np.ndarray, num_classes: int) -> np.ndarray:
    b, t, _ = x.shape
    labels = np.zeros((b, t, num_classes), dtype=np.float32)
    if t > 1:
        rows = np.arange(b)[:, None]
        cols = np.arange(1, t)[None, :]
        labels[rows, cols, y[:, :-1]] = 1.0
    return np.concatenate([x.astype(np.float32), labels], axis=-1)


def resolve_with_replacement(base: BaseDataset, seq_len: int, with_replacement: bool | None) -> bool:
    if with_replacement is None:
        return len(base) < seq_len
    if not with_replacement and seq_len > len(base):
        raise ConfigError(
            f"N_T={seq_len} exceeds {base.name} size {len(base)}; sample with replacement"
        )
    return with_replacement


def build_batch(
    base: BaseDataset,
    specs: Sequence[TaskSpec],
    seq_len: int,
    rng: np.random.Generator,
    with_replacement: bool | None = None,
) -> SequenceBatch:
    """One sequence per spec, examples drawn from base with rng."""
    replace = resolve_with_replacement(base, seq_len, with_replacement)
    xs = np.empty((len(specs), seq_len, base.input_dim), dtype=np.float32)
    ys = np.empty((len(specs), seq_len), dtype=np.int64)
    projections: dict[tuple[str, int], np.ndarray] = {}

    for row, spec in enumerate(specs):
        idx = rng.choice(len(base), size=seq_len, replace=replace)
        key = (spec.stream, spec.task_index)
        if key not in projections:
            projections[key] = projection_matrix(spec, base.input_dim)
        xs[row], ys[row] = apply_task(spec, base.inputs[idx], base.labels[idx], projections[key])

    return SequenceBatch(
        tokens=tokenize(xs, ys, base.num_classes),
        targets=ys,
        task_ids=np.array([s.task_index for s in specs], dtype=np.int64),
        num_classes=base.num_classes,
    )


def sample_sequence_batch(
    base: BaseDataset,
    num_tasks: int,
    dist: PermutationDistribution,
    batch_size: int,
    seq_len: int,
    rng: np.random.Generator,
    with_replacement: bool | None = None,
    global_seed: int = 0,
    stream: str = SEEN,
) -> SequenceBatch:
    if batch_size < 1 or seq_len < 1:
        raise ConfigError(f"batch_size and seq_len must be >= 1, got {batch_size}, {seq_len}")
    ks = rng.integers(0, num_tasks, size=batch_size)
    specs = [
        task_from_index(base.name, int(k), num_tasks, dist, global_seed, base.num_classes, stream)
        for k in ks
    ]
    return build_batch(base, specs, seq_len, rng, with_replacement)


class BatchSampler:
    """
    Meta-training batches addressable by step.

    The batch at step s depends only on (global seed, s), so a resumed or
    re-run training loop sees exactly the same data.
    """

    def __init__(
        self,
        base: BaseDataset,
        num_tasks: int,
        dist: PermutationDistribution,
        batch_size: int,
        seq_len: int,
        global_seed: int,
        with_replacement: bool | None = None,
    ):
        self.base = base
        self.num_tasks = num_tasks
        self.dist = dist
        self.batch_size = batch_size
        self.seq_len = seq_len
        self.global_seed = global_seed
        self.with_replacement = resolve_with_replacement(base, seq_len, with_replacement)

    def batch(self, step: int) -> SequenceBatch:
        rng = stream_generator(self.global_seed, "batch", step)
        return sample_sequence_batch(
            self.base,
            self.num_tasks,
            self.dist,
            self.batch_size,
            self.seq_len,
            rng,
            self.with_replacement,
            self.global_seed,
        )
