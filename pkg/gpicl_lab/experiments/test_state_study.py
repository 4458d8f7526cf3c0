import csv
import math

import numpy as np
import pytest

from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.curves import read_summary_json, write_summary_json
from gpicl_lab.experiments.state_study import StudyRun, collect_runs, spearman, state_size_study


def average_ranks(values):
    order = sorted(values)
    return [np.mean([i + 1 for i, v in enumerate(order) if v == x]) for x in values]


def brute_spearman(a, b):
    ra, rb = np.array(average_ranks(a)), np.array(average_ranks(b))
    ra, rb = ra - ra.mean(), rb - rb.mean()
    return float((ra * rb).sum() / math.sqrt((ra**2).sum() * (rb**2).sum()))


def study_runs(deltas_follow="state_size"):
    sizes = [(12, 5000), (24, 4000), (48, 3000), (80, 2000), (160, 1000), (320, 500)]
    families = ["lstm", "lstm", "lstm", "transformer", "transformer", "transformer"]
    runs = []
    for i, ((n_s, params), family) in enumerate(zip(sizes, families)):
        delta = (i + 1) / 8 if deltas_follow == "state_size" else (6 - i) / 8
        runs.append(StudyRun(f"run{i}", family, n_s, params, delta))
    return runs


def test_ordered_runs_give_perfect_correlation():
    report = state_size_study(study_runs())
    assert report.rho_state_size == pytest.approx(1.0)
    assert report.rho_param_count == pytest.approx(-1.0)
    assert report.state_size_wins
    assert report.families == ("lstm", "transformer")


def test_parameter_count_can_win():
    report = state_size_study(study_runs(deltas_follow="param_count"))
    assert not report.state_size_wins


@pytest.mark.parametrize("seed", range(12))
def test_spearman_matches_average_rank_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    # small integer ranges force ties
    a = [int(v) for v in rng.integers(0, 4, size=n)]
    b = [float(v) for v in rng.integers(0, 5, size=n)]
    if len(set(a)) < 2 or len(set(b)) < 2:
        assert math.isnan(spearman(a, b))
    else:
        assert spearman(a, b) == pytest.approx(brute_spearman(a, b), abs=1e-12)


def test_constant_input_is_nan():
    assert math.isnan(spearman([1, 1, 1], [1, 2, 3]))


@pytest.mark.parametrize(
    "runs",
    [
        study_runs()[:5],
        [StudyRun(f"r{i}", "lstm", 10 * (i + 1), 100, 0.1 * i) for i in range(8)],
    ],
)
def test_too_few_runs_or_families(runs):
    with pytest.raises(ConfigError, match="families"):
        state_size_study(runs)


def test_collect_and_write(tmp_path):
    run_dirs = []
    for run in study_runs():
        d = tmp_path / run.run
        write_summary_json(
            d / "summary.json",
            {
                "state_report": {"family": run.family, "state_size": run.state_size, "param_count": run.param_count},
                "deltas": {"seen": 0.0, "unseen_task": run.delta_unseen_task, "unseen_dataset": None},
            },
        )
        run_dirs.append(d)
    run_dirs.append(tmp_path / "unfinished")

    runs = collect_runs(run_dirs)
    assert runs == study_runs()

    out = tmp_path / "study"
    state_size_study(runs, out)
    rows = list(csv.DictReader((out / "state_study.csv").read_text().splitlines()))
    assert [r["state_size"] for r in rows] == ["12", "24", "48", "80", "160", "320"]
    report = read_summary_json(out / "state_study.json")
    assert report["state_size_wins"] is True
    assert report["n_runs"] == 6
    for column in ("state_size", "param_count"):
        assert (out / f"state_study-{column}.svg").read_text().count("<circle") == 6
