"""
Reverse-mode differentiation over a recorded Graph and its central-difference check.
"""
import logging
from typing import Callable, Mapping

import numpy as np

from gpicl_lab.errors import NumericsError, ShapeError
from gpicl_lab.tensor_engine.ops import OPS
from gpicl_lab.tensor_engine.rng import philox_generator
from gpicl_lab.tensor_engine.tensor import LEAF_KINDS, Graph, Tensor

logger = logging.getLogger(__name__)

LossFn = Callable[[Graph], Tensor]


def backward(graph: Graph, loss: Tensor) -> dict[str, np.ndarray]:
    """
    Gradient of a scalar node with respect to every registered parameter.

    Nodes are visited in reverse recording order, which reverses a valid
    topological order; contributions are summed in that fixed order.
    Parameters the loss does not depend on receive zeros. A non-finite
    parameter gradient raises NumericsError naming the parameter.
    """
    if loss.graph is not graph:
        raise ValueError("Loss tensor belongs to a different graph")
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: list[np.ndarray | None] = [None] * len(graph.nodes)
    grads[loss.node_id] = np.ones_like(loss.data)

    for i in range(loss.node_id, -1, -1):
        g = grads[i]
        record = graph.nodes[i]
        if g is None or record.kind in LEAF_KINDS:
            continue
        arrays = tuple(graph.values[j] for j in record.inputs)
        in_grads = OPS[record.kind].backward(g, arrays, graph.values[i], record.saved, record.attrs)
        for j, gj in zip(record.inputs, in_grads):
            if gj is None:
                continue
            grads[j] = gj if grads[j] is None else grads[j] + gj

    out: dict[str, np.ndarray] = {}
    for name, t in graph.parameters.items():
        g = grads[t.node_id]
        value = graph.values[t.node_id]
        out[name] = np.zeros_like(value) if g is None else np.asarray(g, dtype=value.dtype).reshape(value.shape)
        if not np.all(np.isfinite(out[name])):
            raise NumericsError(f"Non-finite gradient for parameter {name}")
    return out


def value_and_grad(
    loss_fn: LossFn, params: Mapping[str, np.ndarray], dtype=np.float32
) -> tuple[float, dict[str, np.ndarray]]:
    graph = Graph(dtype=dtype)
    graph.add_parameters(params)
    loss = loss_fn(graph)
    return float(loss.data), backward(graph, loss)


def finite_difference_check(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    h: float = 1e-6,
    coords_per_param: int = 64,
    seed: int = 0,
    floor: float = 0.0,
) -> float:
    """
    Max relative error between analytic and central-difference gradients.

    Runs in double precision. Each parameter contributes up to
    coords_per_param randomly chosen coordinates (all of them when smaller).
    The error per coordinate is |a - c| / (|a| + |c| + 1e-12). A positive
    floor lower-bounds that denominator; it is off unless a caller asks.
    """
    params64 = {name: np.array(value, dtype=np.float64) for name, value in params.items()}

    def evaluate(trial: Mapping[str, np.ndarray]) -> float:
        graph = Graph(dtype=np.float64)
        graph.add_parameters(trial)
        return float(loss_fn(graph).data)

    _, analytic = value_and_grad(loss_fn, params64, dtype=np.float64)

    rng = philox_generator(seed)
    worst = 0.0
    for name, value in params64.items():
        n = value.size
        coords = np.arange(n) if n <= coords_per_param else rng.choice(n, coords_per_param, replace=False)
        for i in coords:
            trial = dict(params64)
            bumped = value.copy()
            bumped.flat[i] = value.flat[i] + h
            trial[name] = bumped
            f_plus = evaluate(trial)
            bumped = value.copy()
            bumped.flat[i] = value.flat[i] - h
            trial[name] = bumped
            f_minus = evaluate(trial)

            central = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[name].flat[i])
            err = abs(a - central) / max(abs(a) + abs(central) + 1e-12, floor)
            worst = max(worst, err)

    logger.debug(f"finite_difference_check: max relative error {worst:.3e}")
    return worst
