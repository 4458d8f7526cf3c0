from dataclasses import asdict, dataclass
from typing import Literal, Sequence

import numpy as np

from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.meta_test import LearningCurve

Phase = Literal["memorization", "task_identification", "general_learning"]

DEFAULT_PHASE_THRESHOLD = 0.05


@dataclass(frozen=True)
class PhaseLabel:
    label: Phase
    delta_seen: float
    delta_unseen_task: float
    delta_unseen_dataset: float

    @property
    def deltas(self) -> tuple[float, float, float]:
        return self.delta_seen, self.delta_unseen_task, self.delta_unseen_dataset

    def to_dict(self) -> dict:
        return asdict(self)


def phase_classify(
    seen: LearningCurve,
    unseen_task: LearningCurve,
    unseen_dataset: LearningCurve | None,
    threshold: float = DEFAULT_PHASE_THRESHOLD,
) -> PhaseLabel:
    """
    general_learning if the unseen-dataset curve rises by >= threshold,
    task_identification if only the seen curve does, memorization otherwise.
    Without an unseen-dataset curve the unseen-task curve stands in for it.
    """
    other = unseen_dataset if unseen_dataset is not None else unseen_task
    if len({seen.seq_len, unseen_task.seq_len, other.seq_len}) != 1:
        raise ConfigError("phase_classify needs curves of equal length")
    d_seen, d_task, d_data = seen.delta, unseen_task.delta, other.delta
    if d_data >= threshold:
        label = "general_learning"
    elif d_seen >= threshold:
        label = "task_identification"
    else:
        label = "memorization"
    return PhaseLabel(label, d_seen, d_task, d_data)


@dataclass(frozen=True)
class BimodalReport:
    means: tuple[float, ...]
    assignments: tuple[int, ...]
    gap: float

    @property
    def single_cluster(self) -> bool:
        return len(self.means) == 1


def bimodal_cluster(values: Sequence[float]) -> BimodalReport:
    """
    Exact 1-D 2-means over final losses.

    Clusters are contiguous in sorted order, so scanning every split point
    finds the optimum; cluster 0 is the low-loss mode. gap is the distance
    between the means over the pooled within-cluster standard deviation.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size < 4:
        raise ConfigError(f"bimodal_cluster needs at least 4 values, got {x.size}")
    if np.unique(x).size < 2:
        return BimodalReport(means=(float(x.mean()),), assignments=(0,) * x.size, gap=0.0)

    order = np.argsort(x, kind="stable")
    xs = x[order]
    best_sse, best_split = np.inf, 1
    for split in range(1, xs.size):
        if xs[split] == xs[split - 1]:
            continue
        low, high = xs[:split], xs[split:]
        sse = ((low - low.mean()) ** 2).sum() + ((high - high.mean()) ** 2).sum()
        if sse < best_sse:
            best_sse, best_split = sse, split

    threshold = xs[best_split - 1]
    assignments = tuple(int(v > threshold) for v in x)
    m_low, m_high = float(xs[:best_split].mean()), float(xs[best_split:].mean())
    within = np.sqrt(best_sse / x.size)
    gap = float("inf") if within == 0.0 else (m_high - m_low) / within
    return BimodalReport(means=(m_low, m_high), assignments=assignments, gap=gap)
