"""
Common lifecycle of the sequence models.

A model object is a pure description: it knows its parameter shapes, how
to initialize them and how to record a forward pass on a Graph. Parameter
values live outside it, in plain name -> ndarray maps (the GPCK contents).
"""
import logging
from abc import ABC, abstractmethod
from typing import Mapping

import numpy as np
from scipy.stats import truncnorm

from gpicl_lab.errors import ConfigError, ShapeError
from gpicl_lab.schemas import ModelConfig
from gpicl_lab.tensor_engine.rng import stream_generator
from gpicl_lab.tensor_engine.tensor import Graph, Tensor

logger = logging.getLogger(__name__)

Params = dict[str, np.ndarray]
ParamTensors = Mapping[str, Tensor]

INIT_STD = 0.02


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = x @ w
    return y if b is None else y + b


def affine_norm(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    return x.layer_norm() * g + b


class SequenceModel(ABC):
    """
    Abstract base for a learner mapping tokens [B, T, N_x + N_y] to logits [B, T, N_y].

    Lifecycle:
        1. param_shapes(): canonical names and shapes.
        2. init_params(seed): values drawn per name from their own stream.
        3. forward(graph, params, tokens): records the computation.
    """

    family: str = ""

    def __init__(self, config: ModelConfig):
        if config.input_dim is None:
            raise ConfigError("ModelConfig.input_dim must be set before building a model")
        self.config = config

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    @abstractmethod
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        pass

    @abstractmethod
    def forward(self, graph: Graph, params: ParamTensors, tokens: Tensor) -> Tensor:
        pass

    @abstractmethod
    def state_size(self) -> int:
        """Per-sequence memory scalars carried between examples (N_S)."""
        pass

    def init_std(self, name: str, shape: tuple[int, ...]) -> float:
        return INIT_STD

    def init_params(self, seed: int) -> Params:
        """
        Layer-norm gains start at one; biases, shifts and scalars at zero;
        every matrix is a 2-sigma truncated normal.
        """
        params: Params = {}
        for name, shape in self.param_shapes().items():
            leaf = name.rsplit(".", 1)[-1]
            if leaf == "g":
                value = np.ones(shape)
            elif leaf.startswith("b") or len(shape) < 2:
                value = np.zeros(shape)
            else:
                rng = stream_generator(seed, "init", name)
                value = truncnorm.rvs(-2.0, 2.0, scale=self.init_std(name, shape), size=shape, random_state=rng)
            params[name] = np.asarray(value, dtype=np.float32)
        return params

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for shape in self.param_shapes().values())

    def check_tokens(self, tokens: Tensor) -> None:
        if tokens.ndim != 3 or tokens.shape[-1] != self.input_dim:
            raise ShapeError(
                f"{self.family}: expected tokens [B, T, {self.input_dim}], got {tokens.shape}"
            )

    def check_params(self, params: Mapping[str, np.ndarray]) -> None:
        shapes = self.param_shapes()
        missing = sorted(set(shapes) - set(params))
        if missing:
            raise ConfigError(f"{self.family}: checkpoint lacks {', '.join(missing)}")
        for name, shape in shapes.items():
            if tuple(np.shape(params[name])) != tuple(shape):
                raise ShapeError(f"{name}: expected {shape}, got {np.shape(params[name])}")

    def logits(self, params: Mapping[str, np.ndarray], tokens: np.ndarray, dtype=np.float32) -> np.ndarray:
        """Forward pass without keeping the graph around."""
        graph = Graph(dtype=dtype)
        handles = graph.add_parameters(params)
        return self.forward(graph, handles, graph.constant(tokens)).data.copy()
