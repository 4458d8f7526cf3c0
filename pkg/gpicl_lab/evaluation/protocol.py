"""
Multi-dataset evaluation at the final position.

Each method contributes one predictor per meta-training seed; each
(method, dataset) cell averages final-position unseen-task accuracy over
seeds x tasks x sequences.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from gpicl_lab.data_tasks.datasets import BaseDataset
from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.meta_test import meta_test
from gpicl_lab.models.predictors import InContextPredictor, SequencePredictor
from gpicl_lab.models.registry import build_model
from gpicl_lab.schemas import ModelConfig
from gpicl_lab.tensor_engine.checkpoint import load_checkpoint
from gpicl_lab.utils.converters import format_float

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("method", "dataset", "acc", "acc_std", "seeds")


@dataclass(frozen=True)
class ProtocolCell:
    method: str
    dataset: str
    acc: float
    acc_std: float
    seeds: int


def load_predictor(ckpt: Path | str, model_config: ModelConfig, name: str | None = None) -> InContextPredictor:
    path = Path(ckpt)
    if not path.exists():
        raise ConfigError(f"Missing checkpoint {path}")
    model = build_model(model_config)
    return InContextPredictor(model, load_checkpoint(path), name=name)


def table1_protocol(
    methods: Mapping[str, Sequence[SequencePredictor]],
    bases: Sequence[BaseDataset],
    seq_len: int,
    n_tasks: int = 16,
    n_seq_per_task: int = 16,
    global_seed: int = 0,
) -> list[ProtocolCell]:
    cells = []
    for method, predictors in methods.items():
        if not predictors:
            raise ConfigError(f"Method {method!r} has no predictors")
        for base in bases:
            accs = [
                meta_test(p, base, "unseen_task", n_tasks, n_seq_per_task, seq_len, global_seed=global_seed + i).acc_last
                for i, p in enumerate(predictors)
            ]
            cell = ProtocolCell(method, base.name, float(np.mean(accs)), float(np.std(accs)), len(accs))
            logger.info(f"{method} on {base.name}: {cell.acc:.4f} over {cell.seeds} seeds")
            cells.append(cell)
    return cells


def write_table_csv(path: Path | str, cells: Sequence[ProtocolCell]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for c in cells:
            writer.writerow([c.method, c.dataset, format_float(c.acc), format_float(c.acc_std), c.seeds])
    return path
