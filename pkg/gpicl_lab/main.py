import argparse
import json
import logging
import sys
from pathlib import Path

from gpicl_lab.data_tasks.datasets import NUM_CLASSES, load_base
from gpicl_lab.errors import ConfigError, GpiclError, NumericsError
from gpicl_lab.evaluation.curves import write_curves_csv
from gpicl_lab.evaluation.meta_test import REGIMES, meta_test
from gpicl_lab.evaluation.protocol import load_predictor
from gpicl_lab.experiments.baseline_table import baseline_table
from gpicl_lab.experiments.config_file import load_run_config, read_key_values
from gpicl_lab.experiments.gradcheck import gradient_check_suite
from gpicl_lab.experiments.grokking import DEFAULT_WEIGHT_DECAYS, grokking_probe
from gpicl_lab.experiments.plots import emit_plot, load_plot_spec
from gpicl_lab.experiments.runner import DEFAULT_RUNS_ROOT, run_experiment
from gpicl_lab.experiments.state_study import collect_runs, state_size_study
from gpicl_lab.experiments.sweep import read_sweep_csv, run_sweep
from gpicl_lab.meta_optim.trainer import resolve_run_data
from gpicl_lab.utils.converters import parse_list

logger = logging.getLogger(__name__)


def _overrides(pairs: list[str]) -> dict[str, str]:
    return read_key_values("\n".join(pairs), source="--set")


def cmd_meta_train(args) -> None:
    cfg = load_run_config(args.config, _overrides(args.set))
    run_dir = run_experiment(cfg, runs_root=args.runs_root)
    print(run_dir)


def cmd_meta_test(args) -> None:
    ckpt = Path(args.ckpt)
    cfg = load_run_config(args.config or ckpt.parent / "config.txt")
    model_config = resolve_run_data(cfg).model_config
    base = load_base(cfg.data, args.dataset, "test", input_dim=model_config.input_dim - NUM_CLASSES, seed=cfg.seed)
    predictor = load_predictor(ckpt, model_config, name=cfg.name)
    curve = meta_test(
        predictor,
        base,
        args.regime,
        args.n_tasks,
        args.n_seq_per_task,
        args.seq_len or cfg.seq_len,
        num_tasks=cfg.num_tasks,
        dist=cfg.dist,
        global_seed=cfg.seed,
        with_replacement=cfg.data.with_replacement,
    )
    out = ckpt.parent / f"meta_test-{base.name.replace(':', '_')}-{args.regime}.csv"
    write_curves_csv(out, [(predictor.name, base.name, args.regime, curve)])
    print(json.dumps(dict(curve.summary(), n_sequences=curve.n_sequences, curves=str(out)), indent=2))


def cmd_sweep(args) -> None:
    print(run_sweep(args.spec, runs_root=args.runs_root))


def cmd_grad_check(args) -> None:
    results = gradient_check_suite(seeds=range(args.seeds))
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"FAIL {r.family} seed={r.seed} err={r.max_rel_error:.3e}")
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks passed")
    if failed:
        raise NumericsError(f"{len(failed)} gradient checks exceeded tolerance")


def cmd_state_study(args) -> None:
    paths = [Path(p) for p in args.inputs]
    if len(paths) == 1 and paths[0].is_file():
        sweep_csv = run_sweep(paths[0], runs_root=args.runs_root)
        run_dirs = [row["run_dir"] for row in read_sweep_csv(sweep_csv) if row["status"] == "ok"]
        out_dir = args.out or sweep_csv.parent
    else:
        run_dirs = paths
        out_dir = args.out or Path(args.runs_root) / "state-study"
    report = state_size_study(collect_runs(run_dirs), out_dir)
    print(json.dumps(report.to_dict(), indent=2))


def cmd_plot(args) -> None:
    print(emit_plot(load_plot_spec(args.spec), args.csv, args.out))


def cmd_table1(args) -> None:
    cfg = load_run_config(args.config, _overrides(args.set))
    lengths = [int(v) for v in parse_list(args.lengths)] if args.lengths else None
    print(
        baseline_table(
            cfg,
            [str(v) for v in parse_list(args.datasets)],
            seeds=[int(v) for v in parse_list(args.seeds)],
            lengths=lengths,
            maml_steps=args.maml_steps,
            n_tasks=args.n_tasks,
            n_seq_per_task=args.n_seq_per_task,
            runs_root=args.runs_root,
        )
    )


def cmd_grok_probe(args) -> None:
    cfg = load_run_config(args.config, _overrides(args.set))
    decays = [float(v) for v in parse_list(args.weight_decays)]
    print(grokking_probe(cfg, decays, runs_root=args.runs_root))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpicl", description="General-purpose in-context learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--runs-root", default=str(DEFAULT_RUNS_ROOT), help="root of run directories")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meta-train", help="meta-train one config and meta-test it")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_meta_train)

    p = sub.add_parser("meta-test", help="meta-test a checkpoint without gradient updates")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--regime", choices=REGIMES, default="unseen_task")
    p.add_argument("--config", help="run config; defaults to config.txt next to the checkpoint")
    p.add_argument("--seq-len", type=int)
    p.add_argument("--n-tasks", type=int, default=64)
    p.add_argument("--n-seq-per-task", type=int, default=8)
    p.set_defaults(func=cmd_meta_test)

    p = sub.add_parser("sweep", help="run or resume a sweep")
    p.add_argument("spec")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grad-check", help="finite-difference check of every model family")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("state-study", help="rank-correlate state size and parameter count with learning")
    p.add_argument("inputs", nargs="+", help="a sweep spec, or finished run directories")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_state_study)

    p = sub.add_parser("plot", help="render an SVG from a plot spec")
    p.add_argument("spec")
    p.add_argument("--csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("table1", help="in-context learners against SGD and MAML on several test datasets")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--datasets", default="mnist,fashion_mnist,kmnist,cifar10,svhn,random")
    p.add_argument("--seeds", default="0", help="meta-training seeds, e.g. 0,1,2,3")
    p.add_argument("--lengths", help="evaluation lengths for the sequence-length report")
    p.add_argument("--maml-steps", type=int, default=1000)
    p.add_argument("--n-tasks", type=int, default=16)
    p.add_argument("--n-seq-per-task", type=int, default=16)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("grok-probe", help="look for late generalization across weight decays")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--weight-decays", default=",".join(f"{w:g}" for w in DEFAULT_WEIGHT_DECAYS))
    p.set_defaults(func=cmd_grok_probe)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    # Configures logging; --verbose switches to debug level
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        args.func(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return e.exit_code
    except GpiclError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
