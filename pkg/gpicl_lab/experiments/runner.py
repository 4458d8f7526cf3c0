"""
One experiment: meta-train, meta-test on the scheduled regimes, and
write everything under runs/<name>/.
"""
import logging
from pathlib import Path
from typing import Any

import numpy as np

from gpicl_lab.data_tasks.datasets import NUM_CLASSES
from gpicl_lab.evaluation.curves import write_curves_csv, write_summary_json
from gpicl_lab.evaluation.phases import phase_classify
from gpicl_lab.experiments.config_file import canonical_echo, config_digest, load_run_config
from gpicl_lab.meta_optim.metrics import plateau_length, plateau_sensitivity
from gpicl_lab.meta_optim.trainer import MetaTrainer, TrainResult
from gpicl_lab.models.accounting import state_report
from gpicl_lab.schemas import TrainRunConfig
from gpicl_lab.tensor_engine.checkpoint import params_checksum

logger = logging.getLogger(__name__)

DEFAULT_RUNS_ROOT = Path("runs")
FINAL_LOSS_WINDOW = 100


def final_train_loss(losses: list[float], window: int = FINAL_LOSS_WINDOW) -> float | None:
    if not losses:
        return None
    return float(np.mean(losses[-window:]))


def summarize_run(cfg: TrainRunConfig, result: TrainResult) -> dict[str, Any]:
    curves = result.curves
    steps, losses = result.metrics.train_loss()
    phase = phase_classify(curves["seen"], curves["unseen_task"], curves.get("unseen_dataset"))
    plateau = plateau_length(steps, losses, NUM_CLASSES, cfg.batch_size)
    sensitivity = plateau_sensitivity(steps, losses, NUM_CLASSES, cfg.batch_size)
    return {
        "name": cfg.name,
        "config_digest": config_digest(cfg),
        "params_checksum": params_checksum(result.params),
        "steps": cfg.steps,
        "phase": phase.label,
        "deltas": {
            "seen": phase.delta_seen,
            "unseen_task": phase.delta_unseen_task,
            "unseen_dataset": phase.delta_unseen_dataset,
        },
        "regimes": {regime: curve.summary() for regime, curve in curves.items()},
        "final_train_loss": final_train_loss(losses),
        "plateau": plateau.to_dict(),
        "plateau_sensitivity": {str(m): s.plateau_length_steps for m, s in sensitivity.items()},
        "state_report": state_report(result.model.config).to_dict(),
    }


def run_experiment(
    config: TrainRunConfig | Path | str,
    runs_root: Path | str = DEFAULT_RUNS_ROOT,
    run_dir: Path | str | None = None,
) -> Path:
    """Runs one config end to end and returns its run directory."""
    cfg = config if isinstance(config, TrainRunConfig) else load_run_config(config)
    run_dir = Path(run_dir) if run_dir is not None else Path(runs_root) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(canonical_echo(cfg))

    result = MetaTrainer(cfg, run_dir).run()

    method = result.model.family
    write_curves_csv(
        run_dir / "curves.csv",
        [(method, result.datasets[regime], regime, curve) for regime, curve in result.curves.items()],
    )
    summary = summarize_run(cfg, result)
    write_summary_json(run_dir / "summary.json", summary)
    logger.info(f"[{cfg.name}] finished: phase={summary['phase']}, plateau={summary['plateau']['plateau_length_steps']}")
    return run_dir
