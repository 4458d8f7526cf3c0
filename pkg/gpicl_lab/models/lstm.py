import math

import numpy as np

from gpicl_lab.models.base import ParamTensors, SequenceModel, linear
from gpicl_lab.tensor_engine.tensor import Graph, Tensor, concat


class LstmModel(SequenceModel):
    """
    Stacked LSTM over tokens with a linear head at every step.

    Gate order inside the 4*N_H projections: input, forget, cell, output.
    """

    family = "lstm"

    def param_shapes(self):
        c = self.config
        n_h = c.hidden_size
        shapes = {}
        fan_in = self.input_dim
        for l in range(c.lstm_layers):
            shapes[f"lstm{l}.wx"] = (fan_in, 4 * n_h)
            shapes[f"lstm{l}.wh"] = (n_h, 4 * n_h)
            shapes[f"lstm{l}.b"] = (4 * n_h,)
            fan_in = n_h
        shapes["head.w"] = (n_h, self.output_dim)
        shapes["head.b"] = (self.output_dim,)
        return shapes

    def init_std(self, name, shape):
        return 1.0 / math.sqrt(shape[0])

    def state_size(self) -> int:
        return 2 * self.config.hidden_size * self.config.lstm_layers

    @staticmethod
    def cell(z: Tensor, c: Tensor, n_h: int) -> tuple[Tensor, Tensor]:
        """One step from pre-activations z = x Wx + h Wh + b."""
        i = z.slice(-1, 0, n_h).sigmoid()
        f = z.slice(-1, n_h, 2 * n_h).sigmoid()
        g = z.slice(-1, 2 * n_h, 3 * n_h).tanh()
        o = z.slice(-1, 3 * n_h, 4 * n_h).sigmoid()
        c = f * c + i * g
        return o * c.tanh(), c

    def forward(self, graph: Graph, params: ParamTensors, tokens: Tensor) -> Tensor:
        self.check_tokens(tokens)
        b, t, _ = tokens.shape
        n_h = self.config.hidden_size

        x = tokens
        for l in range(self.config.lstm_layers):
            xz = linear(x, params[f"lstm{l}.wx"], params[f"lstm{l}.b"])
            h = graph.constant(np.zeros((b, n_h)))
            c = graph.constant(np.zeros((b, n_h)))
            outputs = []
            for step in range(t):
                z = xz.slice(1, step, step + 1).reshape(b, 4 * n_h) + h @ params[f"lstm{l}.wh"]
                h, c = self.cell(z, c, n_h)
                outputs.append(h.reshape(b, 1, n_h))
            x = concat(outputs, axis=1)

        return linear(x, params["head.w"], params["head.b"])
