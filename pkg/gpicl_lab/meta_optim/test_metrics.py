import json
import math

import numpy as np
import pytest

from gpicl_lab.meta_optim.diagnostics import cosine, grad_diagnostics
from gpicl_lab.meta_optim.metrics import (
    COLUMNS,
    MetricRecord,
    MetricsWriter,
    RunMetrics,
    plateau_length,
    plateau_sensitivity,
)

LN10 = math.log(10)


def test_constant_chance_loss_never_escapes():
    steps = list(range(2000))
    stats = plateau_length(steps, [LN10] * 2000, num_classes=10)
    assert not stats.escaped
    assert stats.plateau_length_steps is None
    assert stats.escape_threshold == pytest.approx(LN10 - 0.3)


def test_step_drop_is_detected_shortly_after():
    steps = list(range(1000))
    losses = [LN10] * 500 + [0.0] * 500
    stats = plateau_length(steps, losses, num_classes=10, batch_size=128)
    # the EMA needs 14 zero losses to cross ln(10) - 0.3
    assert stats.plateau_length_steps == 513
    assert stats.plateau_tasks_seen == 513 * 128


def test_brief_dip_is_not_an_escape():
    steps = list(range(1000))
    losses = [LN10] * 1000
    losses[300:320] = [0.0] * 20
    assert not plateau_length(steps, losses, num_classes=10).escaped


def test_plateau_sensitivity_is_monotone_in_margin():
    steps = list(range(3000))
    losses = list(np.linspace(LN10, 0.5, 3000))
    report = plateau_sensitivity(steps, losses, num_classes=10)
    assert list(report) == [0.2, 0.3, 0.5]
    lengths = [report[m].plateau_length_steps for m in (0.2, 0.3, 0.5)]
    assert all(v is not None for v in lengths)
    assert lengths == sorted(lengths)


def test_writer_emits_csv_and_jsonl(tmp_path):
    with MetricsWriter(tmp_path) as writer:
        writer.write(MetricRecord(0, "train", "mnist", "loss", 2.302585093))
        writer.write_many(5, "seen", "mnist", {"acc_first": 0.1, "acc_last": 1 / 3})
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert lines[1] == "0,train,mnist,loss,2.30258509"
    assert lines[3] == "5,seen,mnist,acc_last,0.333333333"
    jsonl = [json.loads(x) for x in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert len(jsonl) == 3
    assert jsonl[2] == {"step": 5, "series": "seen", "dataset": "mnist", "metric": "acc_last", "value": 0.333333333}
    assert writer.metrics.eval_steps() == [5]


def test_read_csv_restores_records(tmp_path):
    with MetricsWriter(tmp_path) as writer:
        writer.write_many(3, "train", "mnist", {"loss": 1.5})
    metrics = RunMetrics.read_csv(tmp_path / "metrics.csv")
    assert metrics.train_loss() == ([3], [1.5])
    assert metrics.last("train", "loss") == 1.5
    assert metrics.last("seen", "acc_last") is None


def test_writer_without_directory_keeps_records_in_memory():
    writer = MetricsWriter(None)
    writer.write(MetricRecord(1, "train", "x", "loss", 0.5))
    writer.close()
    assert len(writer.metrics.records) == 1


def test_cosine_cases():
    a = {"w": np.array([1.0, 2.0]), "b": np.array([3.0])}
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine({"w": np.array([1.0, 0.0])}, {"w": np.array([0.0, 1.0])}) == 0.0
    assert cosine(a, {"w": np.zeros(2), "b": np.zeros(1)}) == 0.0
    assert cosine(None, a) == 0.0


def test_grad_diagnostics():
    grads = {"head.w": np.full(4, 10.0), "embed.w": np.ones(4), "pos.e": np.ones(4)}
    params = {"w": np.array([3.0, 4.0])}
    diag = grad_diagnostics(None, grads, None, grads, params, {"w": np.zeros(2)})
    assert diag.grad_cosine == 0.0
    assert diag.distance_from_init == pytest.approx(5.0)
    assert diag.head_ratio() == pytest.approx(10.0)
    metrics = diag.as_metrics()
    assert metrics["grad_norm/head.w"] == pytest.approx(20.0)
    assert {"grad_cosine", "update_cosine", "distance_from_init"} <= set(metrics)
