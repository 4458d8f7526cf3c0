import pytest

from gpicl_lab.experiments.grokking import detect_grokking, detector_self_test, eval_aligned_losses
from gpicl_lab.meta_optim.metrics import DIAG, TRAIN, MetricRecord, RunMetrics

STEPS = [0, 100, 200, 300, 400, 500]


def test_late_drop_is_detected():
    train = [2.3, 0.5, 0.05, 0.01, 0.01, 0.01]
    test = [2.3, 2.3, 2.2, 2.1, 1.6, 1.5]
    sig = detect_grokking(STEPS, train, test)
    assert sig.detected
    assert sig.converged_step == 200
    assert sig.test_loss_at_convergence == 2.2
    assert sig.drop_step == 400
    assert sig.min_test_loss_after == 1.5


@pytest.mark.parametrize(
    "train, test",
    [
        # training never converges
        ([2.3, 1.0, 0.5, 0.3, 0.2, 0.15], [2.3, 2.0, 1.0, 0.5, 0.3, 0.2]),
        # converged, but the test loss only creeps down
        ([2.3, 0.05, 0.05, 0.05, 0.05, 0.05], [2.3, 2.2, 2.0, 1.9, 1.8, 1.75]),
        # generalization together with memorization is not late
        ([2.3, 0.05, 0.05, 0.05, 0.05, 0.05], [2.3, 0.2, 0.2, 0.2, 0.2, 0.2]),
    ],
)
def test_no_signature(train, test):
    assert not detect_grokking(STEPS, train, test).detected


def test_convergence_on_last_eval():
    sig = detect_grokking(STEPS, [1.0] * 5 + [0.01], [2.0] * 6)
    assert not sig.detected
    assert sig.converged_step == 500
    assert sig.min_test_loss_after is None


def test_thresholds_are_parameters():
    train = [0.15] * 6
    test = [2.0, 2.0, 1.7, 1.7, 1.7, 1.7]
    assert not detect_grokking(STEPS, train, test).detected
    assert detect_grokking(STEPS, train, test, converged=0.2, drop=0.2).detected


def test_eval_aligned_losses_average_the_window():
    metrics = RunMetrics()
    for step in range(7):
        if step % 3 == 0:
            metrics.add(MetricRecord(step, "unseen_task", "mnist", "loss", 10.0 + step))
            metrics.add(MetricRecord(step, "seen", "mnist", "loss", 0.0))
        metrics.add(MetricRecord(step, TRAIN, "mnist", "loss", float(step)))
        metrics.add(MetricRecord(step, DIAG, "-", "grad_norm", 1.0))

    steps, train, test = eval_aligned_losses(metrics)
    assert steps == [3, 6]
    assert train == [pytest.approx(1.0), pytest.approx(4.0)]
    assert test == [13.0, 16.0]


def test_detector_self_test():
    assert detector_self_test()
