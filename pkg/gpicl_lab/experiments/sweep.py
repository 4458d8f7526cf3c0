"""
Grids of meta-training runs.

A sweep file is flat key=value text:

    name = batch-vs-tasks
    base = desk-fashion.txt        # run config, relative to this file
    repeats = 3
    max_runs = 48
    workers = 2
    axis.batch_size = 16, 64
    axis.num_tasks = 2^10, 2^14

Any other key overrides the base config for every cell. Each cell x seed
is a run directory named by the SHA-256 of its canonical config; a
directory holding summary.json is complete and is never retrained.
"""
import csv
import itertools
import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from pydantic import ValidationError

from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.curves import read_summary_json
from gpicl_lab.experiments.config_file import (
    config_digest,
    parse_run_config,
    read_key_values,
    validation_message,
)
from gpicl_lab.experiments.runner import DEFAULT_RUNS_ROOT, run_experiment
from gpicl_lab.schemas import SweepSpec, TrainRunConfig
from gpicl_lab.utils.converters import parse_list, parse_scalar

logger = logging.getLogger(__name__)

AXIS_PREFIX = "axis."
SPEC_KEYS = {"name", "repeats", "max_runs", "workers"}

SWEEP_COLUMNS = (
    "cell",
    "repeat",
    "seed",
    "status",
    "label",
    "phase",
    "plateau_length_steps",
    "plateau_tasks_seen",
    "delta_seen",
    "delta_unseen_task",
    "delta_unseen_dataset",
    "final_train_loss",
    "acc_last_unseen_task",
    "run_dir",
    "error",
)

RunFn = Callable[[TrainRunConfig, Path], Path]


@dataclass(frozen=True)
class SweepJob:
    index: int
    cell: int
    repeat: int
    axis_values: dict[str, Any]
    config: TrainRunConfig
    run_dir: Path


def load_sweep_spec(path: Path | str) -> SweepSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Sweep file not found: {path}")
    pairs = read_key_values(path.read_text(), source=str(path))

    base_keys: dict[str, Any] = {}
    if "base" in pairs:
        base_path = path.parent / pairs.pop("base")
        if not base_path.is_file():
            raise ConfigError(f"Base config not found: {base_path}")
        base_keys.update(read_key_values(base_path.read_text(), source=str(base_path)))

    spec_values: dict[str, Any] = {}
    axes: dict[str, list[Any]] = {}
    for key, value in pairs.items():
        if key.startswith(AXIS_PREFIX):
            axes[key[len(AXIS_PREFIX) :]] = parse_list(value)
        elif key in SPEC_KEYS:
            spec_values[key] = value if key == "name" else parse_scalar(value)
        else:
            base_keys[key] = value

    try:
        return SweepSpec(base_keys=base_keys, axes=axes, **spec_values)
    except ValidationError as e:
        raise ConfigError(f"Invalid sweep {path}: {validation_message(e)}") from e


def expand_jobs(spec: SweepSpec, runs_root: Path | str = DEFAULT_RUNS_ROOT) -> list[SweepJob]:
    """
    Cells are the cartesian product of the axes in declaration order; each
    cell repeats with seeds base_seed, base_seed + 1, ...
    """
    total = spec.cell_count * spec.repeats
    base = parse_run_config(spec.base_keys)
    if total > spec.max_runs:
        raise ConfigError(
            f"Sweep {spec.name!r} needs {total} runs ({spec.cell_count} cells x {spec.repeats} repeats, "
            f"about {total * base.steps} training steps), over max_runs={spec.max_runs}"
        )

    sweep_dir = Path(runs_root) / spec.name
    names = list(spec.axes)
    jobs = []
    for cell, combo in enumerate(itertools.product(*spec.axes.values())):
        axis_values = dict(zip(names, combo))
        for repeat in range(spec.repeats):
            keys = {
                **spec.base_keys,
                **axis_values,
                "seed": base.seed + repeat,
                "name": f"{spec.name}-c{cell}-r{repeat}",
            }
            cfg = parse_run_config(keys)
            run_dir = sweep_dir / config_digest(cfg)[:16]
            jobs.append(SweepJob(len(jobs), cell, repeat, axis_values, cfg, run_dir))
    return jobs


def outcome_label(summary: dict[str, Any]) -> str:
    """Trapped runs first, then memorized vs generalized."""
    if summary["plateau"]["plateau_length_steps"] is None:
        return "plateau"
    return "generalized" if summary["phase"] == "general_learning" else "memorized"


def _row(job: SweepJob, summary: dict[str, Any] | None, error: str = "") -> dict[str, Any]:
    row: dict[str, Any] = {
        "cell": job.cell,
        "repeat": job.repeat,
        "seed": job.config.seed,
        "run_dir": str(job.run_dir),
        **{f"axis.{k}": v for k, v in job.axis_values.items()},
    }
    if summary is None:
        return dict(row, status="failed", error=error)
    deltas = summary["deltas"]
    unseen = summary["regimes"].get("unseen_task", {})
    return dict(
        row,
        status="ok",
        label=outcome_label(summary),
        phase=summary["phase"],
        plateau_length_steps=summary["plateau"]["plateau_length_steps"],
        plateau_tasks_seen=summary["plateau"]["plateau_tasks_seen"],
        delta_seen=deltas["seen"],
        delta_unseen_task=deltas["unseen_task"],
        delta_unseen_dataset=deltas["unseen_dataset"],
        final_train_loss=summary["final_train_loss"],
        acc_last_unseen_task=unseen.get("acc_last"),
    )


def _default_run(cfg: TrainRunConfig, run_dir: Path) -> Path:
    return run_experiment(cfg, run_dir=run_dir)


def _execute(job: SweepJob, run_fn: RunFn) -> dict[str, Any]:
    summary_path = job.run_dir / "summary.json"
    if summary_path.exists():
        logger.info(f"Skipping finished cell {job.cell} repeat {job.repeat} ({job.run_dir.name})")
        return _row(job, read_summary_json(summary_path))
    logger.info(f"Starting cell {job.cell} repeat {job.repeat}: {job.axis_values}")
    try:
        run_fn(job.config, job.run_dir)
        summary = read_summary_json(summary_path)
    except Exception as e:
        logger.error(f"Cell {job.cell} repeat {job.repeat} failed: {e}")
        return _row(job, None, error=f"{type(e).__name__}: {e}")
    logger.info(f"Finished cell {job.cell} repeat {job.repeat}: {outcome_label(summary)}")
    return _row(job, summary)


def run_jobs(jobs: list[SweepJob], workers: int = 1, run_fn: RunFn = _default_run) -> list[dict[str, Any]]:
    """Runs jobs on a pool of threads; results come back in job order."""
    results: list[dict[str, Any] | None] = [None] * len(jobs)
    pending: queue.Queue[SweepJob] = queue.Queue()
    for job in jobs:
        pending.put(job)

    def worker() -> None:
        while True:
            try:
                job = pending.get_nowait()
            except queue.Empty:
                return
            results[job.index] = _execute(job, run_fn)

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(max(1, min(workers, len(jobs))))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return [r for r in results if r is not None]


def write_sweep_csv(path: Path, rows: list[dict[str, Any]], axis_names: list[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [*SWEEP_COLUMNS[:3], *(f"axis.{a}" for a in axis_names), *SWEEP_COLUMNS[3:]]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n", restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return path


def run_sweep(
    spec: SweepSpec | Path | str,
    runs_root: Path | str = DEFAULT_RUNS_ROOT,
    run_fn: RunFn = _default_run,
) -> Path:
    """Runs (or resumes) a sweep and writes runs/<sweep>/sweep.csv."""
    spec = spec if isinstance(spec, SweepSpec) else load_sweep_spec(spec)
    jobs = expand_jobs(spec, runs_root)
    logger.info(f"Sweep {spec.name!r}: {len(jobs)} runs on {spec.workers} workers")
    rows = run_jobs(jobs, spec.workers, run_fn)
    failed = sum(r["status"] == "failed" for r in rows)
    if failed:
        logger.warning(f"Sweep {spec.name!r}: {failed} of {len(rows)} runs failed")
    return write_sweep_csv(Path(runs_root) / spec.name / "sweep.csv", rows, list(spec.axes))


def read_sweep_csv(path: Path | str) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
