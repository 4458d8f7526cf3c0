"""
LSTM whose cell is a per-head size x size matrix.

Each step projects concat(x, h) to 8 * size values per head and splits
them into two key triples (3 * size each), a query and an output gate.
The input, cell and forget gates are outer products of the tanh'd key
triples, the first scaled by a learnable softplus factor. The forget gate
carries a +1 bias. The hidden output reads the cell with the query.
"""
import math

import numpy as np

from gpicl_lab.models.base import ParamTensors, SequenceModel, linear
from gpicl_lab.tensor_engine.tensor import Graph, Tensor, concat


class OuterProductLstm(SequenceModel):
    family = "outer_lstm"

    @property
    def hidden_dim(self) -> int:
        return self.config.outer_heads * self.config.outer_size

    def param_shapes(self):
        s, h = self.config.outer_size, self.config.outer_heads
        return {
            "olstm.w": (self.input_dim + self.hidden_dim, 8 * s * h),
            "olstm.b": (8 * s * h,),
            "olstm.key_scale": (),
            "head.w": (self.hidden_dim, self.output_dim),
            "head.b": (self.output_dim,),
        }

    def init_std(self, name, shape):
        return 1.0 / math.sqrt(shape[0])

    def state_size(self) -> int:
        return self.config.outer_heads * self.config.outer_size**2 + self.hidden_dim

    def cell(self, params: ParamTensors, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        """x [B, N_x+N_y], h [B, heads*size], c [B, heads, size, size]."""
        b = x.shape[0]
        heads, s = self.config.outer_heads, self.config.outer_size

        gated = linear(concat([x, h], axis=-1), params["olstm.w"], params["olstm.b"]).reshape(b, heads, 8 * s)
        k1 = gated.slice(2, 0, 3 * s).reshape(b, heads, 3, s)
        k2 = gated.slice(2, 3 * s, 6 * s).reshape(b, heads, 3, s)
        q = gated.slice(2, 6 * s, 7 * s)
        o = gated.slice(2, 7 * s, 8 * s)

        left = k1.tanh() * params["olstm.key_scale"].softplus()
        right = k2.tanh()

        def outer(n: int) -> Tensor:
            col = left.slice(2, n, n + 1).reshape(b, heads, s, 1)
            row = right.slice(2, n, n + 1)
            return col @ row

        i, g, f = outer(0), outer(1), outer(2)
        f = (f + 1.0).sigmoid()
        c = f * c + i.sigmoid() * g
        read = (q.reshape(b, heads, 1, s) @ c).reshape(b, heads, s)
        h = (o.sigmoid() * read.tanh()).reshape(b, heads * s)
        return h, c

    def forward(self, graph: Graph, params: ParamTensors, tokens: Tensor) -> Tensor:
        self.check_tokens(tokens)
        b, t, d = tokens.shape
        heads, s = self.config.outer_heads, self.config.outer_size

        h = graph.constant(np.zeros((b, heads * s)))
        c = graph.constant(np.zeros((b, heads, s, s)))
        outputs = []
        for step in range(t):
            h, c = self.cell(params, tokens.slice(1, step, step + 1).reshape(b, d), h, c)
            outputs.append(h.reshape(b, 1, heads * s))

        return linear(concat(outputs, axis=1), params["head.w"], params["head.b"])
