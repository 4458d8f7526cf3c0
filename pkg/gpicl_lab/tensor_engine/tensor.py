"""
Graph-recording tensors.

A Graph owns every value computed while building one loss: parameter
leaves, constants and op outputs, appended in evaluation order so the node
list is always a valid topological order. Tensor is a thin handle
(graph, node id) with operator sugar; all arithmetic goes through
Graph.op(), which is the engine's forward_op.
"""
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from gpicl_lab.errors import NumericsError
from gpicl_lab.tensor_engine.ops import OPS

LEAF_KINDS = ("parameter", "constant")


@dataclass
class OpRecord:
    kind: str
    inputs: tuple[int, ...] = ()
    attrs: dict[str, Any] = field(default_factory=dict)
    saved: Any = None
    name: str | None = None


class Graph:
    def __init__(self, dtype: Any = np.float32, check_finite: bool = True):
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        self.nodes: list[OpRecord] = []
        self.values: list[np.ndarray] = []
        self.parameters: dict[str, Tensor] = {}

    def _append(self, value: np.ndarray, record: OpRecord) -> "Tensor":
        self.nodes.append(record)
        self.values.append(value)
        return Tensor(self, len(self.nodes) - 1)

    def parameter(self, name: str, value: np.ndarray) -> "Tensor":
        if name in self.parameters:
            raise ValueError(f"Parameter {name!r} registered twice")
        arr = np.array(value, dtype=self.dtype)
        t = self._append(arr, OpRecord(kind="parameter", name=name))
        self.parameters[name] = t
        return t

    def add_parameters(self, params: Mapping[str, np.ndarray]) -> dict[str, "Tensor"]:
        return {name: self.parameter(name, value) for name, value in params.items()}

    def constant(self, value: Any) -> "Tensor":
        return self._append(np.asarray(value, dtype=self.dtype), OpRecord(kind="constant"))

    def op(self, kind: str, *inputs: "Tensor", **attrs: Any) -> "Tensor":
        """Evaluates one op eagerly and records it (the engine's forward_op)."""
        impl = OPS[kind]
        for t in inputs:
            if t.graph is not self:
                raise ValueError("Tensor belongs to a different graph")
        arrays = tuple(self.values[t.node_id] for t in inputs)
        impl.check(arrays, attrs)
        out, saved = impl.forward(arrays, attrs)
        if self.check_finite and not np.all(np.isfinite(out)):
            raise NumericsError(f"Non-finite output from {kind}")
        record = OpRecord(kind=kind, inputs=tuple(t.node_id for t in inputs), attrs=attrs, saved=saved)
        return self._append(out, record)

    def lift(self, value: Any) -> "Tensor":
        return value if isinstance(value, Tensor) else self.constant(value)


def forward_op(graph: Graph, kind: str, inputs: Sequence["Tensor"], **attrs: Any) -> "Tensor":
    return graph.op(kind, *inputs, **attrs)


class Tensor:
    __slots__ = ("graph", "node_id")

    def __init__(self, graph: Graph, node_id: int):
        self.graph = graph
        self.node_id = node_id

    @property
    def data(self) -> np.ndarray:
        return self.graph.values[self.node_id]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        kind = self.graph.nodes[self.node_id].kind
        return f"Tensor(node={self.node_id}, kind={kind}, shape={self.shape})"

    # --- operator sugar ---
    def __matmul__(self, other: Any) -> "Tensor":
        return self.graph.op("matmul", self, self.graph.lift(other))

    def __add__(self, other: Any) -> "Tensor":
        return self.graph.op("add", self, self.graph.lift(other))

    def __radd__(self, other: Any) -> "Tensor":
        return self.graph.op("add", self.graph.lift(other), self)

    def __mul__(self, other: Any) -> "Tensor":
        return self.graph.op("mul", self, self.graph.lift(other))

    def __rmul__(self, other: Any) -> "Tensor":
        return self.graph.op("mul", self.graph.lift(other), self)

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other: Any) -> "Tensor":
        return self + (-self.graph.lift(other))

    def __rsub__(self, other: Any) -> "Tensor":
        return self.graph.lift(other) + (-self)

    # --- shape ops ---
    def reshape(self, *shape: int) -> "Tensor":
        return self.graph.op("reshape", self, shape=tuple(shape))

    def transpose(self, *axes: int) -> "Tensor":
        return self.graph.op("transpose", self, axes=tuple(axes) if axes else None)

    def slice(self, axis: int, start: int, stop: int) -> "Tensor":
        return self.graph.op("slice", self, axis=axis, start=start, stop=stop)

    # --- pointwise ---
    def tanh(self) -> "Tensor":
        return self.graph.op("tanh", self)

    def sigmoid(self) -> "Tensor":
        return self.graph.op("sigmoid", self)

    def softplus(self) -> "Tensor":
        return self.graph.op("softplus", self)

    def relu(self) -> "Tensor":
        return self.graph.op("relu", self)

    def softmax(self) -> "Tensor":
        return self.graph.op("softmax", self)

    def layer_norm(self, eps: float = 1e-5) -> "Tensor":
        return self.graph.op("layer_norm", self, eps=eps)

    def sum(self, axis: int | None = None) -> "Tensor":
        return self.graph.op("sum", self, axis=axis)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    return tensors[0].graph.op("concat", *tensors, axis=axis)
