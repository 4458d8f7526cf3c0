"""
Shipped run presets, as flat key -> value maps.

`preset = <name>` in a config file loads one of these first; later keys
override it.
"""
from gpicl_lab.errors import ConfigError

_DESK_TRANSFORMER = {
    "family": "transformer",
    "model_size": 64,
    "heads": 4,
    "key_size": 16,
    "layers": 2,
    "mlp_ratio": 4,
}

_DESK_RUN = {
    "resolution": 8,
    "grayscale": True,
    "seq_len": 25,
    "batch_size": 32,
    "optimizer": "adam",
    "lr": 1e-3,
    "eval_every": 500,
    "eval_tasks": 32,
    "eval_seq_per_task": 16,
}

PRESETS: dict[str, dict[str, object]] = {
    # 8x8 MNIST, the scale at which learning-to-learn emerges on a laptop
    "desk-mnist": {
        "name": "desk-mnist",
        "dataset": "mnist",
        "num_tasks": 2**13,
        "steps": 50_000,
        **_DESK_RUN,
        **_DESK_TRANSFORMER,
    },
    # FashionMNIST with fully permuted labels: the long-plateau setting
    "desk-fashion-plateau": {
        "name": "desk-fashion-plateau",
        "dataset": "fashion_mnist",
        "num_tasks": 2**14,
        "steps": 20_000,
        "bias_fraction": 0.0,
        **_DESK_RUN,
        **_DESK_TRANSFORMER,
        "lr": 1e-4,
    },
    "desk-lstm": {
        "name": "desk-lstm",
        "dataset": "mnist",
        "num_tasks": 2**13,
        "steps": 50_000,
        **_DESK_RUN,
        "family": "lstm",
        "hidden_size": 128,
    },
    "desk-outer-lstm": {
        "name": "desk-outer-lstm",
        "dataset": "mnist",
        "num_tasks": 2**13,
        "steps": 50_000,
        **_DESK_RUN,
        "family": "outer_lstm",
        "outer_heads": 4,
        "outer_size": 16,
    },
    "desk-mlp": {
        "name": "desk-mlp",
        "dataset": "mnist",
        "num_tasks": 2**4,
        "steps": 20_000,
        **_DESK_RUN,
        "seq_len": 1,
        "family": "mlp",
        "hidden_size": 64,
        "mlp_hidden_layers": 2,
    },
    # Full-scale values; needs accelerators and native-resolution inputs
    "paper-scale": {
        "name": "paper-scale",
        "dataset": "mnist",
        "resolution": None,
        "num_tasks": 2**25,
        "bias_fraction": 0.9,
        "batch_size": 128,
        "seq_len": 100,
        "steps": 500_000,
        "optimizer": "adam",
        "lr": 1e-4,
        "family": "transformer",
        "model_size": 256,
        "heads": 8,
        "key_size": 32,
        "layers": 4,
        "mlp_ratio": 4,
        "eval_every": 5_000,
        "eval_tasks": 64,
        "eval_seq_per_task": 8,
    },
}


def get_preset(name: str) -> dict[str, object]:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"Unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
