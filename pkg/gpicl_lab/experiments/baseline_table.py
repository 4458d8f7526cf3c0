"""
In-context learners against gradient-based baselines on several test bases.

Writes under runs/<name>-table1/:
    table1.csv          final-position unseen-task accuracy per method x dataset
    seq_length.csv      final-position accuracy per evaluation length
    bimodal.json        2-means split of the in-context runs' final losses
    s<seed>/            one meta-training run per seed
    maml-s<seed>.gpck   the meta-trained initialization per seed
"""
import csv
import logging
from pathlib import Path
from typing import Sequence

from gpicl_lab.data_tasks.datasets import NUM_CLASSES, load_base
from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.curves import read_summary_json, write_summary_json
from gpicl_lab.evaluation.meta_test import sequence_length_probe
from gpicl_lab.evaluation.phases import bimodal_cluster
from gpicl_lab.evaluation.protocol import load_predictor, table1_protocol, write_table_csv
from gpicl_lab.experiments.runner import DEFAULT_RUNS_ROOT, run_experiment
from gpicl_lab.meta_optim.trainer import resolve_run_data
from gpicl_lab.models.baselines import train_maml
from gpicl_lab.models.predictors import OnlineSgdPredictor, SequencePredictor
from gpicl_lab.schemas import TrainRunConfig
from gpicl_lab.tensor_engine.checkpoint import save_checkpoint
from gpicl_lab.utils.converters import format_float

logger = logging.getLogger(__name__)

SEQ_LENGTH_COLUMNS = ("method", "dataset", "seq_len", "acc")
MAML_INNER_LR = 0.1
MIN_BIMODAL_RUNS = 4


def default_lengths(seq_len: int) -> list[int]:
    return sorted({1, max(1, seq_len // 4), max(1, seq_len // 2), seq_len})


def baseline_table(
    cfg: TrainRunConfig,
    datasets: Sequence[str],
    seeds: Sequence[int] = (0,),
    lengths: Sequence[int] | None = None,
    maml_steps: int = 1000,
    n_tasks: int = 16,
    n_seq_per_task: int = 16,
    runs_root: Path | str = DEFAULT_RUNS_ROOT,
) -> Path:
    """Meta-trains cfg once per seed, trains MAML per seed and evaluates every method. Returns table1.csv."""
    if not datasets or not seeds:
        raise ConfigError("baseline_table needs at least one dataset and one seed")
    lengths = list(lengths) if lengths else default_lengths(cfg.seq_len)
    if cfg.model.family == "transformer" and max(lengths) > cfg.model.max_seq:
        raise ConfigError(f"Evaluation length {max(lengths)} exceeds the positional table (max_seq={cfg.model.max_seq})")

    out_dir = Path(runs_root) / f"{cfg.name}-table1"
    methods: dict[str, list[SequencePredictor]] = {cfg.model.family: [], "maml": [], "sgd": [], "sgd_adam": []}
    final_losses: dict[int, float] = {}
    for seed in seeds:
        run_cfg = cfg.model_copy(update={"name": f"{cfg.name}-s{seed}", "seed": seed})
        run_dir = run_experiment(run_cfg, run_dir=out_dir / f"s{seed}")
        data = resolve_run_data(run_cfg)
        methods[cfg.model.family].append(load_predictor(run_dir / "ckpt-final.gpck", data.model_config, cfg.model.family))
        loss = read_summary_json(run_dir / "summary.json")["final_train_loss"]
        if loss is not None:
            final_losses[seed] = loss

        theta = train_maml(
            data.train, run_cfg.num_tasks, run_cfg.dist, run_cfg.batch_size, run_cfg.seq_len, maml_steps,
            inner_lr=MAML_INNER_LR, seed=seed,
        )
        save_checkpoint(out_dir / f"maml-s{seed}.gpck", theta)
        methods["maml"].append(OnlineSgdPredictor(lr=MAML_INNER_LR, init=theta, name="maml"))
        methods["sgd"].append(OnlineSgdPredictor(lr=MAML_INNER_LR, name="sgd"))
        methods["sgd_adam"].append(OnlineSgdPredictor(lr=1e-3, optimizer="adam", name="sgd_adam"))

    input_dim = data.model_config.input_dim - NUM_CLASSES
    bases = [load_base(cfg.data, name, "test", input_dim=input_dim, seed=cfg.seed) for name in datasets]
    cells = table1_protocol(methods, bases, cfg.seq_len, n_tasks, n_seq_per_task, cfg.seed)
    table = write_table_csv(out_dir / "table1.csv", cells)

    with open(out_dir / "seq_length.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SEQ_LENGTH_COLUMNS)
        for method, predictors in methods.items():
            by_length = sequence_length_probe(predictors[0], bases[0], lengths, n_tasks, n_seq_per_task, cfg.seed)
            for n, acc in by_length.items():
                writer.writerow([method, bases[0].name, n, format_float(acc)])

    if len(final_losses) >= MIN_BIMODAL_RUNS:
        report = bimodal_cluster(list(final_losses.values()))
        write_summary_json(
            out_dir / "bimodal.json",
            {
                "seeds": list(final_losses),
                "final_train_losses": list(final_losses.values()),
                "means": list(report.means),
                "assignments": list(report.assignments),
                "gap": report.gap,
                "single_cluster": report.single_cluster,
            },
        )
    else:
        logger.warning(f"{len(final_losses)} runs with a final loss; the bimodal report needs {MIN_BIMODAL_RUNS}, skipping it")

    logger.info(f"[{cfg.name}] baseline table written to {table}")
    return table
