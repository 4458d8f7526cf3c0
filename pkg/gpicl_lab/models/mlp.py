import math

from gpicl_lab.errors import ConfigError
from gpicl_lab.models.base import ParamTensors, SequenceModel, linear
from gpicl_lab.tensor_engine.tensor import Graph, Tensor


class MultiTaskMlp(SequenceModel):
    """
    Relu MLP on single datapoints, the no-context control.

    hidden_size 0 or mlp_hidden_layers 0 leaves only the affine head.
    """

    family = "mlp"

    @property
    def widths(self) -> list[int]:
        c = self.config
        if c.hidden_size == 0:
            return []
        return [c.hidden_size] * c.mlp_hidden_layers

    def param_shapes(self):
        shapes = {}
        fan_in = self.input_dim
        for l, width in enumerate(self.widths, start=1):
            shapes[f"mlp.w{l}"] = (fan_in, width)
            shapes[f"mlp.b{l}"] = (width,)
            fan_in = width
        shapes["head.w"] = (fan_in, self.output_dim)
        shapes["head.b"] = (self.output_dim,)
        return shapes

    def init_std(self, name, shape):
        return math.sqrt(2.0 / shape[0])

    def state_size(self) -> int:
        return 0

    def forward(self, graph: Graph, params: ParamTensors, tokens: Tensor) -> Tensor:
        self.check_tokens(tokens)
        if tokens.shape[1] != 1:
            raise ConfigError(f"The MLP takes one datapoint per sequence, got N_T={tokens.shape[1]}")
        x = tokens
        for l in range(1, len(self.widths) + 1):
            x = linear(x, params[f"mlp.w{l}"], params[f"mlp.b{l}"]).relu()
        return linear(x, params["head.w"], params["head.b"])
