import threading

import pytest

from gpicl_lab.errors import ConfigError
from gpicl_lab.evaluation.curves import write_summary_json
from gpicl_lab.experiments.sweep import expand_jobs, load_sweep_spec, outcome_label, read_sweep_csv, run_sweep
from gpicl_lab.schemas import SweepSpec

BASE_KEYS = {"family": "lstm", "hidden_size": "4", "steps": "10", "seed": "7"}


def fake_summary(cfg):
    escaped = cfg.batch_size > 16
    return {
        "phase": "general_learning" if cfg.num_tasks > 4 else "memorization",
        "deltas": {"seen": 0.3, "unseen_task": 0.2 if cfg.num_tasks > 4 else 0.0, "unseen_dataset": 0.1},
        "regimes": {"unseen_task": {"acc_last": 0.5}},
        "final_train_loss": 1.0,
        "plateau": {"plateau_length_steps": 100 if escaped else None, "plateau_tasks_seen": 100 * cfg.batch_size if escaped else None},
    }


class FakeRunner:
    def __init__(self, fail_cell=None):
        self.calls = []
        self.fail_cell = fail_cell
        self.lock = threading.Lock()

    def __call__(self, cfg, run_dir):
        with self.lock:
            self.calls.append(cfg.name)
        if self.fail_cell is not None and f"-c{self.fail_cell}-" in cfg.name:
            raise ConfigError("boom")
        write_summary_json(run_dir / "summary.json", fake_summary(cfg))
        return run_dir


def toy_spec(**overrides):
    values = dict(
        name="toy",
        base_keys=BASE_KEYS,
        axes={"batch_size": [16, 64], "num_tasks": [4, 1024]},
        repeats=1,
    )
    values.update(overrides)
    return SweepSpec(**values)


def test_two_by_two_sweep(tmp_path):
    runner = FakeRunner()
    path = run_sweep(toy_spec(workers=2), runs_root=tmp_path, run_fn=runner)
    assert path == tmp_path / "toy" / "sweep.csv"
    rows = read_sweep_csv(path)
    assert len(rows) == 4
    assert [(r["axis.batch_size"], r["axis.num_tasks"]) for r in rows] == [
        ("16", "4"),
        ("16", "1024"),
        ("64", "4"),
        ("64", "1024"),
    ]
    assert [r["label"] for r in rows] == ["plateau", "plateau", "memorized", "generalized"]
    assert {r["seed"] for r in rows} == {"7"}
    assert len(runner.calls) == 4


def test_repeats_step_the_seed(tmp_path):
    jobs = expand_jobs(toy_spec(axes={"batch_size": [16]}, repeats=3), tmp_path)
    assert [j.config.seed for j in jobs] == [7, 8, 9]
    assert len({j.run_dir for j in jobs}) == 3


def test_finished_sweep_is_not_retrained(tmp_path):
    run_sweep(toy_spec(), runs_root=tmp_path, run_fn=FakeRunner())
    second = FakeRunner()
    rows = read_sweep_csv(run_sweep(toy_spec(), runs_root=tmp_path, run_fn=second))
    assert second.calls == []
    assert len(rows) == 4
    assert all(r["status"] == "ok" for r in rows)


def test_failed_cell_is_recorded_and_sweep_continues(tmp_path):
    rows = read_sweep_csv(run_sweep(toy_spec(), runs_root=tmp_path, run_fn=FakeRunner(fail_cell=1)))
    assert [r["status"] for r in rows] == ["ok", "failed", "ok", "ok"]
    assert "boom" in rows[1]["error"]
    # the failed cell has no summary, so the next run retries only it
    retry = FakeRunner()
    run_sweep(toy_spec(), runs_root=tmp_path, run_fn=retry)
    assert retry.calls == ["toy-c1-r0"]


def test_budget_refusal_reports_an_estimate(tmp_path):
    with pytest.raises(ConfigError, match="8 runs"):
        expand_jobs(toy_spec(repeats=2, max_runs=6), tmp_path)


def test_load_sweep_spec(tmp_path):
    (tmp_path / "base.txt").write_text("family = lstm\nhidden_size = 4\n")
    (tmp_path / "sweep.txt").write_text(
        "name = bk\nbase = base.txt\nrepeats = 2\nworkers = 3\nsteps = 5\naxis.batch_size = 16, 64\naxis.eps = 1e-8, 1e-12\n"
    )
    spec = load_sweep_spec(tmp_path / "sweep.txt")
    assert spec.name == "bk"
    assert (spec.repeats, spec.workers, spec.cell_count) == (2, 3, 4)
    assert spec.axes == {"batch_size": [16, 64], "eps": [1e-8, 1e-12]}
    assert spec.base_keys == {"family": "lstm", "hidden_size": "4", "steps": "5"}
    jobs = expand_jobs(spec, tmp_path)
    assert jobs[2].config.eps == 1e-12
    assert jobs[0].config.model.family == "lstm"


def test_missing_base_config(tmp_path):
    (tmp_path / "sweep.txt").write_text("base = nowhere.txt\n")
    with pytest.raises(ConfigError):
        load_sweep_spec(tmp_path / "sweep.txt")


def test_outcome_label():
    assert outcome_label({"plateau": {"plateau_length_steps": None}, "phase": "general_learning"}) == "plateau"
    assert outcome_label({"plateau": {"plateau_length_steps": 5}, "phase": "task_identification"}) == "memorized"
    assert outcome_label({"plateau": {"plateau_length_steps": 5}, "phase": "general_learning"}) == "generalized"
