"""
Does accessible memory or parameter count predict in-context learning?

Ranks finished runs by state size N_S and by parameter count and
correlates each with the final unseen-task accuracy gain.
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from scipy.stats import spearmanr

from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.curves import read_summary_json, write_summary_json
from gpicl_lab.experiments.plots import emit_plot
from gpicl_lab.schemas import PlotSpec

logger = logging.getLogger(__name__)

MIN_RUNS = 6
MIN_FAMILIES = 2
STUDY_COLUMNS = ("run", "family", "state_size", "param_count", "delta_unseen_task")


@dataclass(frozen=True)
class StudyRun:
    run: str
    family: str
    state_size: int
    param_count: int
    delta_unseen_task: float


@dataclass(frozen=True)
class StudyReport:
    n_runs: int
    families: tuple[str, ...]
    rho_state_size: float
    rho_param_count: float

    @property
    def state_size_wins(self) -> bool:
        return self.rho_state_size > self.rho_param_count

    def to_dict(self) -> dict:
        return dict(asdict(self), state_size_wins=self.state_size_wins)


def collect_runs(run_dirs: Sequence[Path | str]) -> list[StudyRun]:
    runs = []
    for d in run_dirs:
        path = Path(d) / "summary.json"
        if not path.is_file():
            logger.warning(f"Skipping {d}: no summary.json")
            continue
        summary = read_summary_json(path)
        report = summary["state_report"]
        runs.append(
            StudyRun(
                run=Path(d).name,
                family=report["family"],
                state_size=int(report["state_size"]),
                param_count=int(report["param_count"]),
                delta_unseen_task=float(summary["deltas"]["unseen_task"]),
            )
        )
    return runs


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties; NaN when either side is constant."""
    if len(set(a)) < 2 or len(set(b)) < 2:
        return math.nan
    return float(spearmanr(a, b).statistic)


def state_size_study(runs: Sequence[StudyRun], out_dir: Path | str | None = None) -> StudyReport:
    families = tuple(sorted({r.family for r in runs}))
    if len(runs) < MIN_RUNS or len(families) < MIN_FAMILIES:
        raise ConfigError(
            f"State-size study needs >= {MIN_RUNS} runs over >= {MIN_FAMILIES} families, "
            f"got {len(runs)} runs over {len(families)}"
        )
    deltas = [r.delta_unseen_task for r in runs]
    report = StudyReport(
        n_runs=len(runs),
        families=families,
        rho_state_size=spearman([r.state_size for r in runs], deltas),
        rho_param_count=spearman([r.param_count for r in runs], deltas),
    )
    logger.info(
        f"State-size study over {report.n_runs} runs: rho(N_S)={report.rho_state_size:.3f}, "
        f"rho(params)={report.rho_param_count:.3f}"
    )
    if out_dir is not None:
        write_study(Path(out_dir), runs, report)
    return report


def write_study(out_dir: Path, runs: Sequence[StudyRun], report: StudyReport) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / "state_study.csv"
    with open(table, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=STUDY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(asdict(r) for r in runs)
    write_summary_json(out_dir / "state_study.json", report.to_dict())
    for column, label in (("state_size", "state size N_S"), ("param_count", "parameter count")):
        spec = PlotSpec(
            kind="scatter",
            x=column,
            y="delta_unseen_task",
            series="family",
            x_log2=all(getattr(r, column) > 0 for r in runs),
            x_label=label,
            y_label="unseen-task accuracy gain",
        )
        emit_plot(spec, table, out_dir / f"state_study-{column}.svg")
    return table
