"""
Late generalization after memorization.

The signature: once the training loss has fallen below 0.1, the
unseen-task loss later drops by at least 0.5 nats below its value at that
point.
"""
import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from gpicl_lab.evaluation.curves import write_summary_json
from gpicl_lab.experiments.runner import DEFAULT_RUNS_ROOT, run_experiment
from gpicl_lab.meta_optim.metrics import RunMetrics
from gpicl_lab.schemas import TrainRunConfig

logger = logging.getLogger(__name__)

TRAIN_CONVERGED = 0.1
GROK_DROP = 0.5
DEFAULT_WEIGHT_DECAYS = (0.0, 0.01, 0.1, 1.0)
GROK_COLUMNS = (
    "weight_decay",
    "detected",
    "converged_step",
    "test_loss_at_convergence",
    "min_test_loss_after",
    "drop_step",
    "run_dir",
)


@dataclass(frozen=True)
class GrokSignature:
    detected: bool
    converged_step: int | None
    test_loss_at_convergence: float | None
    min_test_loss_after: float | None
    drop_step: int | None

    def to_dict(self) -> dict:
        return asdict(self)


def detect_grokking(
    steps: Sequence[int],
    train_losses: Sequence[float],
    test_losses: Sequence[float],
    converged: float = TRAIN_CONVERGED,
    drop: float = GROK_DROP,
) -> GrokSignature:
    """All three sequences are aligned on evaluation steps."""
    start = next((i for i, loss in enumerate(train_losses) if loss < converged), None)
    if start is None:
        return GrokSignature(False, None, None, None, None)
    reference = test_losses[start]
    later = list(test_losses[start + 1 :])
    drop_step = next((steps[start + 1 + i] for i, loss in enumerate(later) if loss <= reference - drop), None)
    return GrokSignature(
        detected=drop_step is not None,
        converged_step=steps[start],
        test_loss_at_convergence=float(reference),
        min_test_loss_after=float(min(later)) if later else None,
        drop_step=drop_step,
    )


def eval_aligned_losses(metrics: RunMetrics) -> tuple[list[int], list[float], list[float]]:
    """
    Training loss averaged over the steps since the previous evaluation,
    paired with the unseen-task loss of that evaluation.
    """
    train_steps, train = metrics.train_loss()
    eval_steps, test = metrics.select("unseen_task", "loss")
    train_steps_arr, train_arr = np.asarray(train_steps), np.asarray(train)
    steps, train_out, test_out = [], [], []
    prev = -1
    for step, test_loss in zip(eval_steps, test):
        window = train_arr[(train_steps_arr > prev) & (train_steps_arr < step)]
        prev = step - 1
        if window.size == 0:
            continue
        steps.append(step)
        train_out.append(float(window.mean()))
        test_out.append(test_loss)
    return steps, train_out, test_out


def detector_self_test() -> bool:
    """The detector must fire on a crafted curve with a late test-loss drop and stay quiet on a flat one."""
    steps = list(range(0, 2000, 100))
    train = [2.3 * 0.5**i for i in range(len(steps))]
    late_drop = [2.3] * 12 + [1.2] * 8
    flat = [2.3] * len(steps)
    return detect_grokking(steps, train, late_drop).detected and not detect_grokking(steps, train, flat).detected


def grokking_probe(
    cfg: TrainRunConfig,
    weight_decays: Sequence[float] = DEFAULT_WEIGHT_DECAYS,
    runs_root: Path | str = DEFAULT_RUNS_ROOT,
) -> Path:
    """
    One run per weight-decay coefficient, decay decoupled from Adam's
    moments. Writes runs/<name>-grok/grok_report.csv.
    """
    out_dir = Path(runs_root) / f"{cfg.name}-grok"
    optimizer = "adamw" if cfg.optimizer == "adam" else cfg.optimizer
    rows = []
    for wd in weight_decays:
        run_cfg = cfg.model_copy(update={"name": f"{cfg.name}-wd{wd:g}", "weight_decay": wd, "optimizer": optimizer})
        run_dir = run_experiment(run_cfg, run_dir=out_dir / run_cfg.name)
        signature = detect_grokking(*eval_aligned_losses(RunMetrics.read_csv(run_dir / "metrics.csv")))
        logger.info(f"weight_decay={wd:g}: grokking signature {'found' if signature.detected else 'absent'}")
        rows.append(dict(signature.to_dict(), weight_decay=wd, run_dir=str(run_dir)))

    self_test = detector_self_test()
    logger.info(f"Detector self-test {'passed' if self_test else 'FAILED'}")
    path = out_dir / "grok_report.csv"
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=GROK_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: "" if v is None else v for k, v in row.items()} for row in rows)
    write_summary_json(
        out_dir / "grok_summary.json",
        {"detector_self_test": self_test, "signature_found": any(r["detected"] for r in rows)},
    )
    return path
