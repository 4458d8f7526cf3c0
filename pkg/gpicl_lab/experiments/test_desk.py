"""
Desk-scale reproductions. Each takes minutes to hours on a CPU and needs
the real datasets under GPICL_DATA_DIR; run with GPICL_DESK=1.
"""
import os
from pathlib import Path

import pytest

from gpicl_lab.data_tasks.datasets import IDX_FILES, load_base
from gpicl_lab.evaluation.curves import read_summary_json
from gpicl_lab.evaluation.meta_test import meta_test
from gpicl_lab.evaluation.protocol import load_predictor
from gpicl_lab.experiments.config_file import parse_run_config
from gpicl_lab.experiments.grokking import grokking_probe
from gpicl_lab.experiments.runner import run_experiment
from gpicl_lab.experiments.state_study import collect_runs, state_size_study
from gpicl_lab.meta_optim.trainer import resolve_run_data

pytestmark = pytest.mark.desk

SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    root = Path(os.environ.get("GPICL_DATA_DIR", "data"))
    for name in ("mnist", "fashion_mnist"):
        if not (root / name / IDX_FILES["train"][0]).exists():
            pytest.skip(f"{name} not found under {root}")
    return tmp_path_factory.mktemp("desk")


def run(runs_root, **keys):
    return read_summary_json(run_experiment(parse_run_config(keys), runs_root=runs_root) / "summary.json")


def plateau_steps(summary):
    length = summary["plateau"]["plateau_length_steps"]
    return summary["steps"] + 1 if length is None else length


def majority(pairs):
    return sum(pairs) > len(pairs) / 2


@pytest.fixture(scope="module")
def gpicl_mnist(desk_runs):
    return run(desk_runs, preset="desk-mnist")


def test_learning_to_learn_emerges(gpicl_mnist):
    assert gpicl_mnist["phase"] == "general_learning"
    assert gpicl_mnist["deltas"]["unseen_task"] >= 0.15
    assert gpicl_mnist["deltas"]["unseen_dataset"] >= 0.10


def test_few_tasks_memorize(desk_runs):
    summary = run(desk_runs, preset="desk-mnist", name="desk-mnist-k4", num_tasks="4", steps="20000")
    assert summary["phase"] in ("memorization", "task_identification")
    assert summary["deltas"]["unseen_dataset"] < 0.05
    assert summary["regimes"]["seen"]["acc_mean"] >= 0.5


@pytest.mark.parametrize(
    "faster, slower",
    [
        ({"batch_size": "64"}, {"batch_size": "16"}),
        ({"bias_fraction": "0.9"}, {"bias_fraction": "0.0"}),
        ({"eps": "1e-12"}, {"eps": "1e-8"}),
    ],
    ids=["batch-size", "biased-permutations", "adam-epsilon"],
)
def test_intervention_shortens_plateau(desk_runs, faster, slower):
    wins = []
    for seed in SEEDS:
        a = run(desk_runs, preset="desk-fashion-plateau", name=f"fast-{'-'.join(faster.values())}-s{seed}", seed=str(seed), **faster)
        b = run(desk_runs, preset="desk-fashion-plateau", name=f"slow-{'-'.join(slower.values())}-s{seed}", seed=str(seed), **slower)
        wins.append(plateau_steps(a) < plateau_steps(b))
    assert majority(wins)


def test_more_tasks_do_not_shorten_plateau(desk_runs):
    wins = []
    for seed in SEEDS:
        many = run(desk_runs, preset="desk-fashion-plateau", name=f"k14-s{seed}", num_tasks="2^14", seed=str(seed))
        few = run(desk_runs, preset="desk-fashion-plateau", name=f"k10-s{seed}", num_tasks="2^10", seed=str(seed))
        wins.append(plateau_steps(many) >= plateau_steps(few))
    assert majority(wins)


def test_sign_ema_is_no_slower_than_adam(desk_runs):
    wins = []
    for seed in SEEDS:
        sign = run(desk_runs, preset="desk-fashion-plateau", name=f"sign-s{seed}", optimizer="sign_ema", seed=str(seed))
        adam = run(desk_runs, preset="desk-fashion-plateau", name=f"adam-s{seed}", eps="1e-8", seed=str(seed))
        wins.append(plateau_steps(sign) <= plateau_steps(adam))
    assert majority(wins)


def test_state_size_predicts_learning(desk_runs):
    configs = [
        {"preset": "desk-mnist", "model_size": "32", "key_size": "8", "layers": "1"},
        {"preset": "desk-mnist", "model_size": "64", "key_size": "16", "layers": "2"},
        {"preset": "desk-mnist", "model_size": "64", "key_size": "32", "layers": "2"},
        {"preset": "desk-lstm", "hidden_size": "32"},
        {"preset": "desk-lstm", "hidden_size": "128"},
        {"preset": "desk-lstm", "hidden_size": "256"},
        {"preset": "desk-outer-lstm", "outer_size": "8"},
        {"preset": "desk-outer-lstm", "outer_size": "16"},
    ]
    run_dirs = []
    for i, keys in enumerate(configs):
        cfg = parse_run_config(dict(keys, name=f"state-{i}", steps="20000"))
        run_dirs.append(run_experiment(cfg, runs_root=desk_runs))
    report = state_size_study(collect_runs(run_dirs), desk_runs / "state-study")
    assert report.rho_state_size > report.rho_param_count


def test_random_labels_are_learned_in_context(desk_runs, gpicl_mnist):
    cfg = parse_run_config({"preset": "desk-mnist"})
    model_config = resolve_run_data(cfg).model_config
    base = load_base(cfg.data, "random", "test", input_dim=model_config.input_dim - 10, seed=cfg.seed)
    predictor = load_predictor(desk_runs / "desk-mnist" / "ckpt-final.gpck", model_config)
    curve = meta_test(predictor, base, "unseen_task", 32, 16, cfg.seq_len, global_seed=cfg.seed, with_replacement=True)
    assert curve.acc_last >= 0.90


def test_transformer_beats_lstm(desk_runs, gpicl_mnist):
    lstm = run(desk_runs, preset="desk-lstm")
    gap = gpicl_mnist["regimes"]["unseen_task"]["acc_last"] - lstm["regimes"]["unseen_task"]["acc_last"]
    assert gap >= 0.10


def test_rerun_reproduces_metrics(desk_runs):
    cfg = parse_run_config({"preset": "desk-mnist", "name": "repro", "steps": "1000"})
    a = run_experiment(cfg, run_dir=desk_runs / "repro-a")
    b = run_experiment(cfg, run_dir=desk_runs / "repro-b")
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()


def test_no_grokking_at_four_tasks(desk_runs):
    cfg = parse_run_config({"preset": "desk-mnist", "name": "grok", "num_tasks": "4", "steps": "20000"})
    grokking_probe(cfg, (0.0, 0.01, 0.1, 1.0), runs_root=desk_runs)
    summary = read_summary_json(desk_runs / "grok-grok" / "grok_summary.json")
    assert summary["detector_self_test"] is True
    assert summary["signature_found"] is False
