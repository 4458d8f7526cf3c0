"""
The meta-training loop.

    sample batch -> meta_loss -> backward -> optimizer step

with evaluation every eval_every steps (and once at the end) on seen
tasks, unseen tasks and the unseen base dataset. The batch at step s, the
init and every evaluation are addressed by the run seed, so a run is a
pure function of its config.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

from gpicl_lab.data_tasks.batches import BatchSampler
from gpicl_lab.data_tasks.datasets import NUM_CLASSES, BaseDataset, load_base, resolve_eval_dataset
from gpicl_lab.errors import NumericsError
from gpicl_lab.evaluation.meta_test import LearningCurve, meta_test
from gpicl_lab.meta_optim.diagnostics import grad_diagnostics
from gpicl_lab.meta_optim.metrics import DIAG, TRAIN, MetricRecord, MetricsWriter, RunMetrics
from gpicl_lab.meta_optim.objective import meta_loss_and_grads
from gpicl_lab.meta_optim.optimizers import Optimizer, build_optimizer
from gpicl_lab.models.base import Params, SequenceModel
from gpicl_lab.models.predictors import InContextPredictor
from gpicl_lab.models.registry import build_model
from gpicl_lab.schemas import ModelConfig, TrainRunConfig
from gpicl_lab.tensor_engine.checkpoint import save_checkpoint

logger = logging.getLogger(__name__)


@dataclass
class RunData:
    train: BaseDataset
    test: BaseDataset
    unseen: BaseDataset | None
    model_config: ModelConfig


def resolve_run_data(cfg: TrainRunConfig) -> RunData:
    """Loads the bases a run needs and fills N_x + N_y into the model config."""
    train = load_base(cfg.data, cfg.data.dataset, "train", seed=cfg.seed)
    n_x = train.input_dim
    test = load_base(cfg.data, cfg.data.dataset, "test", input_dim=n_x, seed=cfg.seed)
    unseen_name = resolve_eval_dataset(cfg.data)
    unseen = load_base(cfg.data, unseen_name, "test", input_dim=n_x, seed=cfg.seed) if unseen_name else None
    model_config = cfg.model.model_copy(update={"input_dim": n_x + NUM_CLASSES, "output_dim": NUM_CLASSES})
    return RunData(train=train, test=test, unseen=unseen, model_config=model_config)


@dataclass
class TrainResult:
    params: Params
    metrics: RunMetrics
    model: SequenceModel
    curves: dict[str, LearningCurve] = field(default_factory=dict)
    datasets: dict[str, str] = field(default_factory=dict)


class MetaTrainer:
    def __init__(self, cfg: TrainRunConfig, run_dir: Path | str | None = None, data: RunData | None = None):
        self.cfg = cfg
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.data = data or resolve_run_data(cfg)
        self.model = build_model(self.data.model_config)
        self.optimizer: Optimizer = build_optimizer(cfg)

    def evaluate(self, params: Params) -> dict[str, LearningCurve]:
        cfg = self.cfg
        predictor = InContextPredictor(self.model, params)
        common = dict(
            n_tasks=cfg.eval_tasks,
            n_seq_per_task=cfg.eval_seq_per_task,
            seq_len=cfg.seq_len,
            num_tasks=cfg.num_tasks,
            dist=cfg.dist,
            global_seed=cfg.seed,
            with_replacement=cfg.data.with_replacement,
        )
        curves = {
            "seen": meta_test(predictor, self.data.test, "seen", **common),
            "unseen_task": meta_test(predictor, self.data.test, "unseen_task", **common),
        }
        if self.data.unseen is not None:
            curves["unseen_dataset"] = meta_test(predictor, self.data.unseen, "unseen_dataset", **common)
        return curves

    def regime_base(self, regime: str) -> BaseDataset:
        return self.data.unseen if regime == "unseen_dataset" else self.data.test

    def _log_eval(self, writer: MetricsWriter, step: int, curves: dict[str, LearningCurve]) -> None:
        for regime, curve in curves.items():
            writer.write_many(step, regime, self.regime_base(regime).name, curve.summary())
        parts = " ".join(f"{r}={c.acc_last:.3f}" for r, c in curves.items())
        train_loss = writer.metrics.last(TRAIN, "loss")
        loss_text = "n/a" if train_loss is None else f"{train_loss:.4f}"
        logger.info(f"[{self.cfg.name}] step {step}: train loss {loss_text}, acc_last {parts}")

    def _checkpoint(self, params: Params, tag: str) -> None:
        if self.run_dir is not None:
            save_checkpoint(self.run_dir / f"ckpt-{tag}.gpck", params)

    def run(self) -> TrainResult:
        cfg = self.cfg
        params = self.model.init_params(cfg.seed)
        init_params = {k: v.copy() for k, v in params.items()}
        state = self.optimizer.init(params)
        sampler = BatchSampler(
            self.data.train, cfg.num_tasks, cfg.dist, cfg.batch_size, cfg.seq_len, cfg.seed, cfg.data.with_replacement
        )
        dataset = self.data.train.name
        prev_grads = prev_update = None
        curves: dict[str, LearningCurve] = {}

        logger.info(
            f"[{cfg.name}] {self.model.family}: {self.model.param_count()} params, "
            f"N_S={self.model.state_size()}, K={cfg.num_tasks}, B={cfg.batch_size}, steps={cfg.steps}"
        )
        writer = MetricsWriter(self.run_dir)
        try:
            for step in range(cfg.steps):
                if step % cfg.eval_every == 0:
                    self._log_eval(writer, step, self.evaluate(params))

                loss, grads = meta_loss_and_grads(self.model, params, sampler.batch(step))
                writer.write(MetricRecord(step, TRAIN, dataset, "loss", loss))
                new_params, state, update = self.optimizer.step(params, grads, state)

                if step % cfg.diagnostics_every == 0:
                    diag = grad_diagnostics(prev_grads, grads, prev_update, update, new_params, init_params)
                    values = dict(diag.as_metrics(), **self.optimizer.moment_norms(state))
                    writer.write_many(step, DIAG, "-", values)
                    logger.debug(
                        f"step {step}: grad cos {diag.grad_cosine:.3f}, update cos {diag.update_cosine:.3f}, "
                        f"head ratio {diag.head_ratio():.2f}"
                    )

                prev_grads, prev_update, params = grads, update, new_params
                if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                    self._checkpoint(params, str(step + 1))

            curves = self.evaluate(params)
            self._log_eval(writer, cfg.steps, curves)
            self._checkpoint(params, "final")
        except NumericsError as e:
            logger.error(f"[{cfg.name}] aborted: {e}")
            writer.flush()
            raise
        finally:
            writer.close()

        datasets = {regime: self.regime_base(regime).name for regime in curves}
        return TrainResult(params=params, metrics=writer.metrics, model=self.model, curves=curves, datasets=datasets)


def meta_train(cfg: TrainRunConfig, run_dir: Path | str | None = None) -> tuple[Params, RunMetrics]:
    result = MetaTrainer(cfg, run_dir).run()
    return result.params, result.metrics
