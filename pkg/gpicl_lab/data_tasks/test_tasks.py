import math

import numpy as np
import pytest

from gpicl_lab.data_tasks.batches import BatchSampler, sample_sequence_batch
from gpicl_lab.data_tasks.datasets import make_random_dataset
from gpicl_lab.data_tasks.tasks import TaskSpec, apply_task, task_from_index
from gpicl_lab.errors import ConfigError
from gpicl_lab.schemas import PermutationDistribution

UNIFORM = PermutationDistribution()


def test_task_is_pure_function_of_index():
    a = task_from_index("mnist", 17, 100, UNIFORM, global_seed=3)
    b = task_from_index("mnist", 17, 100, UNIFORM, global_seed=3)
    assert a == b
    assert a != task_from_index("mnist", 18, 100, UNIFORM, global_seed=3)


def test_task_index_out_of_range():
    with pytest.raises(ConfigError):
        task_from_index("mnist", 5, 5, UNIFORM, global_seed=0)


def test_full_bias_shares_fixed_permutation():
    dist = PermutationDistribution(bias_fraction=1.0, fixed_permutation=(1, 0, 2, 3, 4, 5, 6, 7, 8, 9))
    perms = {task_from_index("mnist", k, 50, dist, 0).permutation for k in range(50)}
    assert perms == {dist.fixed_permutation}


def test_uniform_permutations_are_bijections_and_rarely_identity():
    identity = tuple(range(10))
    hits = 0
    for k in range(10_000):
        perm = task_from_index("mnist", k, 10_000, UNIFORM, 0).permutation
        assert sorted(perm) == list(range(10))
        hits += perm == identity
    assert hits <= 3


def test_bias_fraction_rate():
    dist = PermutationDistribution(bias_fraction=0.9)
    identity = tuple(range(10))
    rate = np.mean([task_from_index("mnist", k, 10_000, dist, 1).permutation == identity for k in range(10_000)])
    sigma = math.sqrt(0.9 * 0.1 / 10_000)
    assert abs(rate - 0.9) < max(0.02, 3 * sigma)


def test_apply_task_identity_cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 6)).astype(np.float32)
    y = np.array([0, 3, 9, 1, 1])
    spec = TaskSpec(base="b", task_index=0, projection_seed=1, permutation=tuple(range(10)), identity_projection=True)
    px, py = apply_task(spec, x, y)
    np.testing.assert_array_equal(px, x)
    np.testing.assert_array_equal(py, y)


def test_apply_task_permutes_labels():
    perm = (9, 8, 7, 6, 5, 4, 3, 2, 1, 0)
    spec = TaskSpec(base="b", task_index=0, projection_seed=1, permutation=perm)
    _, py = apply_task(spec, np.zeros((3, 4)), np.array([0, 1, 9]))
    np.testing.assert_array_equal(py, [9, 8, 0])


def test_projection_preserves_norm_on_average():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 64)).astype(np.float32)
    ratios = []
    for k in range(1000):
        spec = task_from_index("mnist", k, 1000, UNIFORM, 0)
        px, _ = apply_task(spec, x, np.array([0]))
        ratios.append(float((px**2).sum() / (x**2).sum()))
    assert abs(np.mean(ratios) - 1.0) < 0.05


def test_tokenization_shift(tiny_base):
    batch = sample_sequence_batch(tiny_base, 8, UNIFORM, 4, 7, np.random.default_rng(0), global_seed=0)
    labels = batch.tokens[..., tiny_base.input_dim :]
    assert batch.tokens.shape == (4, 7, 16)
    np.testing.assert_array_equal(labels[:, 0], 0.0)
    np.testing.assert_array_equal(labels[:, 1:].argmax(-1), batch.targets[:, :-1])
    np.testing.assert_array_equal(labels.sum(-1)[:, 1:], 1.0)


def test_targets_are_permuted_base_labels(tiny_base):
    batch = sample_sequence_batch(tiny_base, 3, UNIFORM, 6, 5, np.random.default_rng(1), global_seed=2)
    for row in range(6):
        spec = task_from_index("tiny", int(batch.task_ids[row]), 3, UNIFORM, 2)
        perm = np.asarray(spec.permutation)
        inverse = np.argsort(perm)
        base_labels = inverse[batch.targets[row]]
        assert set(base_labels) <= set(tiny_base.labels)


def test_single_position_has_empty_label_block(tiny_base):
    batch = sample_sequence_batch(tiny_base, 4, UNIFORM, 3, 1, np.random.default_rng(0))
    np.testing.assert_array_equal(batch.tokens[..., tiny_base.input_dim :], 0.0)


def test_same_stream_same_batch(tiny_base):
    a = sample_sequence_batch(tiny_base, 4, UNIFORM, 2, 5, np.random.default_rng(9))
    b = sample_sequence_batch(tiny_base, 4, UNIFORM, 2, 5, np.random.default_rng(9))
    np.testing.assert_array_equal(a.tokens, b.tokens)
    np.testing.assert_array_equal(a.targets, b.targets)


def test_without_replacement_too_long(tiny_base):
    with pytest.raises(ConfigError):
        sample_sequence_batch(tiny_base, 4, UNIFORM, 1, 41, np.random.default_rng(0), with_replacement=False)


def test_random_dataset_coupon_collector():
    base = make_random_dataset(0)
    batch = sample_sequence_batch(base, 4, UNIFORM, 2000, 25, np.random.default_rng(3))
    unique = [len(np.unique(row[:, :4], axis=0)) for row in batch.inputs]
    expected = 10 * (1 - 0.9**25)
    assert abs(np.mean(unique) - expected) < 0.1


def test_batch_sampler_is_addressable_by_step(tiny_base):
    sampler = BatchSampler(tiny_base, 16, UNIFORM, 4, 6, global_seed=5)
    np.testing.assert_array_equal(sampler.batch(3).tokens, sampler.batch(3).tokens)
    assert not np.array_equal(sampler.batch(3).tokens, sampler.batch(4).tokens)
