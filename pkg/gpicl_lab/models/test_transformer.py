import math

import numpy as np
import pytest

from gpicl_lab.errors import ConfigError
from gpicl_lab.models.accounting import state_report
from gpicl_lab.models.registry import build_model
from gpicl_lab.schemas import ModelConfig
from gpicl_lab.tensor_engine.autodiff import finite_difference_check
from gpicl_lab.tensor_engine.checkpoint import decode_checkpoint, encode_checkpoint
from gpicl_lab.tensor_engine.losses import cross_entropy_loss
from gpicl_lab.tensor_engine.tensor import Graph


def tiny_config(**overrides):
    values = dict(
        family="transformer",
        model_size=8,
        layers=2,
        heads=2,
        key_size=3,
        mlp_ratio=2,
        input_dim=7,
        output_dim=4,
        max_seq=6,
    )
    values.update(overrides)
    return ModelConfig(**values)


def random_params(model, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return {name: rng.normal(scale=scale, size=shape) for name, shape in model.param_shapes().items()}


def layer_norm(x):
    mu = x.mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(((x - mu) ** 2).mean(-1, keepdims=True) + 1e-5)


def naive_transformer(params, tokens, cfg):
    """Position-by-position reference with explicit loops over heads and keys."""
    b, t, _ = tokens.shape
    hk = cfg.key_size
    x = tokens @ params["embed.w"] + params["embed.b"] + params["pos.e"][:t]
    for layer in range(cfg.layers):
        p = f"block{layer}"
        a = layer_norm(x) * params[f"{p}.ln1.g"] + params[f"{p}.ln1.b"]
        attn = np.zeros((b, t, cfg.heads * hk))
        for n in range(b):
            for h in range(cfg.heads):
                cols = slice(h * hk, (h + 1) * hk)
                for i in range(t):
                    q = a[n, i] @ params[f"{p}.attn.q"][:, cols]
                    scores = []
                    for j in range(i + 1):
                        k = a[n, j] @ params[f"{p}.attn.k"][:, cols]
                        scores.append(float(q @ k) / math.sqrt(hk))
                    top = max(scores)
                    weights = [math.exp(s - top) for s in scores]
                    total = sum(weights)
                    for j, w in enumerate(weights):
                        attn[n, i, cols] += (w / total) * (a[n, j] @ params[f"{p}.attn.v"][:, cols])
        x = x + attn @ params[f"{p}.attn.o"]
        m = layer_norm(x) * params[f"{p}.ln2.g"] + params[f"{p}.ln2.b"]
        x = x + np.maximum(m @ params[f"{p}.mlp.w1"] + params[f"{p}.mlp.b1"], 0) @ params[f"{p}.mlp.w2"] + params[f"{p}.mlp.b2"]
    x = layer_norm(x) * params["final_ln.g"] + params["final_ln.b"]
    return x @ params["head.w"] + params["head.b"]


def test_zero_head_gives_chance_loss():
    model = build_model(tiny_config(output_dim=10))
    params = model.init_params(0)
    params["head.w"][:] = 0.0
    tokens = np.random.default_rng(0).normal(size=(3, 5, 7))
    g = Graph()
    logits = model.forward(g, g.add_parameters(params), g.constant(tokens))
    loss = cross_entropy_loss(logits, np.zeros((3, 5), dtype=int))
    assert float(loss.data) == pytest.approx(math.log(10), abs=1e-5)


def test_matches_naive_attention():
    cfg = tiny_config(model_size=64, heads=4, key_size=16, layers=2, mlp_ratio=4, max_seq=8, input_dim=20, output_dim=10)
    model = build_model(cfg)
    params = random_params(model, 1, scale=0.1)
    tokens = np.random.default_rng(2).normal(size=(2, 8, 20))
    got = model.logits(params, tokens, dtype=np.float64)
    np.testing.assert_allclose(got, naive_transformer(params, tokens, cfg), atol=1e-5)


def test_causality():
    model = build_model(tiny_config())
    params = model.init_params(3)
    tokens = np.random.default_rng(4).normal(size=(2, 6, 7)).astype(np.float32)
    base = model.logits(params, tokens)
    for j in range(6):
        bumped = tokens.copy()
        bumped[:, j] += 3.0
        out = model.logits(params, bumped)
        np.testing.assert_allclose(out[:, :j], base[:, :j], atol=1e-6)


def test_batch_permutation_equivariance():
    model = build_model(tiny_config())
    params = model.init_params(5)
    tokens = np.random.default_rng(6).normal(size=(4, 5, 7))
    order = np.array([2, 0, 3, 1])
    np.testing.assert_allclose(
        model.logits(params, tokens)[order], model.logits(params, tokens[order]), atol=1e-6
    )


def test_sequence_longer_than_table():
    model = build_model(tiny_config(max_seq=4))
    with pytest.raises(ConfigError):
        model.logits(model.init_params(0), np.zeros((1, 5, 7)))


@pytest.mark.parametrize("seed", range(20))
def test_gradients(seed):
    model = build_model(tiny_config(layers=2 if seed % 2 else 1))
    params = random_params(model, seed)
    rng = np.random.default_rng(100 + seed)
    tokens = rng.normal(size=(2, 4, 7))
    targets = rng.integers(0, 4, size=(2, 4))

    def loss_fn(graph):
        return cross_entropy_loss(model.forward(graph, graph.parameters, graph.constant(tokens)), targets)

    assert finite_difference_check(loss_fn, params, coords_per_param=16, seed=seed) < 1e-4


def test_state_report_defaults():
    report = state_report(ModelConfig(input_dim=74))
    assert report.state_size == 2 * 8 * 32 * 4 * 100 == 204800


def test_param_count_matches_checkpoint():
    model = build_model(tiny_config())
    decoded = decode_checkpoint(encode_checkpoint(model.init_params(0)))
    assert state_report(model.config).param_count == sum(v.size for v in decoded.values())


def test_init_is_deterministic_and_shaped():
    model = build_model(tiny_config())
    a, b = model.init_params(7), model.init_params(7)
    for name, shape in model.param_shapes().items():
        assert a[name].shape == shape
        np.testing.assert_array_equal(a[name], b[name])
    assert np.all(a["block0.ln1.g"] == 1.0)
    assert np.all(a["head.b"] == 0.0)
    assert np.abs(a["embed.w"]).max() <= 0.04 + 1e-7
