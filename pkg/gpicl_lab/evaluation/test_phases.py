import itertools

import numpy as np
import pytest

from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.meta_test import LearningCurve
from gpicl_lab.evaluation.phases import bimodal_cluster, phase_classify


def curve(first, last, length=5):
    acc = np.linspace(first, last, length)
    return LearningCurve(
        accuracy_by_position=acc,
        loss_by_position=np.full(length, 2.0),
        n_sequences=64,
        ci95_halfwidth=np.full(length, 0.01),
    )


@pytest.mark.parametrize(
    "seen,task,data,label",
    [
        ((0.1, 0.1), (0.1, 0.1), (0.1, 0.1), "memorization"),
        ((0.9, 0.9), (0.1, 0.1), (0.1, 0.1), "memorization"),
        ((0.1, 0.9), (0.1, 0.12), (0.1, 0.1), "task_identification"),
        ((0.1, 0.9), (0.1, 0.8), (0.1, 0.6), "general_learning"),
        ((0.1, 0.2), (0.1, 0.12), (0.1, 0.16), "general_learning"),
        ((0.1, 0.14), (0.1, 0.1), (0.1, 0.1), "memorization"),
    ],
)
def test_phase_classify(seen, task, data, label):
    result = phase_classify(curve(*seen), curve(*task), curve(*data))
    assert result.label == label
    assert result.delta_seen == pytest.approx(seen[1] - seen[0])


def test_phase_without_unseen_dataset_uses_unseen_tasks():
    result = phase_classify(curve(0.1, 0.9), curve(0.1, 0.7), None)
    assert result.label == "general_learning"
    assert result.delta_unseen_dataset == result.delta_unseen_task


def test_phase_threshold_is_configurable():
    seen, other = curve(0.1, 0.2), curve(0.1, 0.1)
    assert phase_classify(seen, other, other).label == "task_identification"
    assert phase_classify(seen, other, other, threshold=0.2).label == "memorization"


def test_phase_rejects_mismatched_lengths():
    with pytest.raises(ConfigError):
        phase_classify(curve(0.1, 0.2, 5), curve(0.1, 0.2, 6), None)


def test_bimodal_two_clear_modes():
    report = bimodal_cluster([0.1, 2.0, 0.1, 2.0])
    assert report.means == pytest.approx((0.1, 2.0))
    assert report.assignments == (0, 1, 0, 1)
    assert report.gap == float("inf")


def test_bimodal_single_value():
    report = bimodal_cluster([0.7] * 6)
    assert report.single_cluster
    assert report.assignments == (0,) * 6


def test_bimodal_needs_four_values():
    with pytest.raises(ConfigError):
        bimodal_cluster([0.1, 0.2, 0.3])


def brute_force_sse(values):
    x = np.asarray(values)
    best = np.inf
    for mask in itertools.product((0, 1), repeat=len(x)):
        mask = np.array(mask, dtype=bool)
        if mask.all() or not mask.any():
            continue
        a, b = x[mask], x[~mask]
        best = min(best, ((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum())
    return best


@pytest.mark.parametrize("seed", range(10))
def test_bimodal_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 13))
    x = np.concatenate([rng.normal(0.2, 0.1, n // 2), rng.normal(2.0, 0.3, n - n // 2)])
    rng.shuffle(x)
    report = bimodal_cluster(x)
    labels = np.array(report.assignments)
    sse = sum(((x[labels == k] - x[labels == k].mean()) ** 2).sum() for k in (0, 1))
    assert sse == pytest.approx(brute_force_sse(x), rel=1e-9, abs=1e-12)
    assert report.means[0] < report.means[1]
    assert report.gap > 0
