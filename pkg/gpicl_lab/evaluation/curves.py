import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable

from gpicl_lab.evaluation.meta_test import LearningCurve
from gpicl_lab.utils.converters import format_float

CURVE_COLUMNS = ("method", "dataset", "regime", "position", "acc", "ci95", "loss")


def curve_rows(method: str, dataset: str, regime: str, curve: LearningCurve) -> list[dict[str, str]]:
    """Positions are 1-based, as in the accuracy-vs-examples plots."""
    return [
        {
            "method": method,
            "dataset": dataset,
            "regime": regime,
            "position": str(j + 1),
            "acc": format_float(curve.accuracy_by_position[j]),
            "ci95": format_float(curve.ci95_halfwidth[j]),
            "loss": format_float(curve.loss_by_position[j]),
        }
        for j in range(curve.seq_len)
    ]


def write_curves_csv(path: Path | str, entries: Iterable[tuple[str, str, str, LearningCurve]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CURVE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for method, dataset, regime, curve in entries:
            writer.writerows(curve_rows(method, dataset, regime, curve))
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, float):
        return None if math.isnan(value) else ("inf" if math.isinf(value) else float(format_float(value)))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def write_summary_json(path: Path | str, summary: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return path


def read_summary_json(path: Path | str) -> dict[str, Any]:
    return json.loads(Path(path).read_text())
