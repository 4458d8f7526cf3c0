"""
Run metrics: the record stream, its CSV/JSONL sinks and plateau detection.

Records carry no wall-clock values, so a rerun with the same config and
seed reproduces metrics.csv byte for byte.
"""
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from gpicl_lab.utils.converters import format_float

logger = logging.getLogger(__name__)

COLUMNS = ("step", "series", "dataset", "metric", "value")

TRAIN = "train"
DIAG = "diag"

DEFAULT_ESCAPE_MARGIN = 0.3
SENSITIVITY_MARGINS = (0.2, 0.3, 0.5)


@dataclass(frozen=True)
class MetricRecord:
    step: int
    series: str
    dataset: str
    metric: str
    value: float

    def csv_row(self) -> list[str]:
        return [str(self.step), self.series, self.dataset, self.metric, format_float(self.value)]

    def json_line(self) -> str:
        payload = dict(asdict(self), value=float(format_float(self.value)))
        return json.dumps(payload, allow_nan=True)


@dataclass
class RunMetrics:
    records: list[MetricRecord] = field(default_factory=list)

    def add(self, record: MetricRecord) -> None:
        self.records.append(record)

    def select(self, series: str, metric: str, dataset: str | None = None) -> tuple[list[int], list[float]]:
        steps, values = [], []
        for r in self.records:
            if r.series == series and r.metric == metric and (dataset is None or r.dataset == dataset):
                steps.append(r.step)
                values.append(r.value)
        return steps, values

    def train_loss(self) -> tuple[list[int], list[float]]:
        return self.select(TRAIN, "loss")

    def last(self, series: str, metric: str, dataset: str | None = None) -> float | None:
        _, values = self.select(series, metric, dataset)
        return values[-1] if values else None

    def eval_steps(self) -> list[int]:
        return sorted({r.step for r in self.records if r.series not in (TRAIN, DIAG)})

    @classmethod
    def read_csv(cls, path: Path | str) -> "RunMetrics":
        metrics = cls()
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                metrics.add(
                    MetricRecord(int(row["step"]), row["series"], row["dataset"], row["metric"], float(row["value"]))
                )
        return metrics


class MetricsWriter:
    """Append-only single writer for metrics.csv and metrics.jsonl."""

    def __init__(self, run_dir: Path | str | None, metrics: RunMetrics | None = None):
        self.metrics = metrics if metrics is not None else RunMetrics()
        self._csv = self._jsonl = self._writer = None
        if run_dir is not None:
            run_dir = Path(run_dir)
            run_dir.mkdir(parents=True, exist_ok=True)
            self._csv = open(run_dir / "metrics.csv", "w", newline="")
            self._jsonl = open(run_dir / "metrics.jsonl", "w")
            self._writer = csv.writer(self._csv, lineterminator="\n")
            self._writer.writerow(COLUMNS)

    def write(self, record: MetricRecord) -> None:
        self.metrics.add(record)
        if self._writer is not None:
            self._writer.writerow(record.csv_row())
            self._jsonl.write(record.json_line() + "\n")

    def write_many(self, step: int, series: str, dataset: str, values: dict[str, float]) -> None:
        for metric, value in values.items():
            self.write(MetricRecord(step, series, dataset, metric, float(value)))

    def flush(self) -> None:
        for f in (self._csv, self._jsonl):
            if f is not None:
                f.flush()

    def close(self) -> None:
        for f in (self._csv, self._jsonl):
            if f is not None:
                f.close()
        self._csv = self._jsonl = self._writer = None

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass(frozen=True)
class PlateauStats:
    """
    plateau_length_steps is None when the loss never escaped.
    plateau_tasks_seen counts sequences (one task each) consumed on the plateau.
    """

    plateau_length_steps: int | None
    plateau_tasks_seen: int | None
    escape_threshold: float
    batch_size: int

    @property
    def escaped(self) -> bool:
        return self.plateau_length_steps is not None

    def to_dict(self) -> dict:
        return asdict(self)


def plateau_length(
    steps: Iterable[int],
    losses: Iterable[float],
    num_classes: int,
    batch_size: int = 1,
    margin: float = DEFAULT_ESCAPE_MARGIN,
    decay: float = 0.99,
    persistence: int = 100,
) -> PlateauStats:
    """
    First logged step from which EMA(loss) stays at or below ln(C) - margin
    for `persistence` consecutive steps. The EMA starts at the first loss.
    """
    threshold = math.log(num_classes) - margin
    ema = None
    run_start = None
    for step, loss in zip(steps, losses):
        ema = loss if ema is None else decay * ema + (1.0 - decay) * loss
        if ema <= threshold:
            if run_start is None:
                run_start = step
            if step - run_start + 1 >= persistence:
                return PlateauStats(run_start, run_start * batch_size, threshold, batch_size)
        else:
            run_start = None
    return PlateauStats(None, None, threshold, batch_size)


def plateau_sensitivity(
    steps: list[int], losses: list[float], num_classes: int, batch_size: int = 1
) -> dict[float, PlateauStats]:
    return {m: plateau_length(steps, losses, num_classes, batch_size, margin=m) for m in SENSITIVITY_MARGINS}
