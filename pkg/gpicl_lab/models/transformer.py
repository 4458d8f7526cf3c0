import math

from gpicl_lab.errors import ConfigError
from gpicl_lab.models.base import ParamTensors, SequenceModel, affine_norm, linear
from gpicl_lab.tensor_engine.tensor import Graph, Tensor


class GpiclTransformer(SequenceModel):
    """
    Decoder-only transformer over (input, previous label) tokens.

    Pre-norm residual blocks of causal multi-head attention (queries, keys
    and values of width N_K per head, projected from N_M explicitly) and a
    relu MLP of width mlp_ratio * N_M, then a final norm and a linear head.
    """

    family = "transformer"

    def param_shapes(self):
        c = self.config
        m, hk = c.model_size, c.heads * c.key_size
        shapes = {
            "embed.w": (self.input_dim, m),
            "embed.b": (m,),
            "pos.e": (c.max_seq, m),
        }
        for i in range(c.layers):
            p = f"block{i}"
            shapes.update(
                {
                    f"{p}.ln1.g": (m,),
                    f"{p}.ln1.b": (m,),
                    f"{p}.attn.q": (m, hk),
                    f"{p}.attn.k": (m, hk),
                    f"{p}.attn.v": (m, hk),
                    f"{p}.attn.o": (hk, m),
                    f"{p}.ln2.g": (m,),
                    f"{p}.ln2.b": (m,),
                    f"{p}.mlp.w1": (m, c.mlp_ratio * m),
                    f"{p}.mlp.b1": (c.mlp_ratio * m,),
                    f"{p}.mlp.w2": (c.mlp_ratio * m, m),
                    f"{p}.mlp.b2": (m,),
                }
            )
        shapes.update(
            {
                "final_ln.g": (m,),
                "final_ln.b": (m,),
                "head.w": (m, self.output_dim),
                "head.b": (self.output_dim,),
            }
        )
        return shapes

    def state_size(self) -> int:
        # Cached keys and values of every head, layer and position
        c = self.config
        return 2 * c.heads * c.key_size * c.layers * c.max_seq

    def attention(self, params: ParamTensors, prefix: str, x: Tensor) -> Tensor:
        c = self.config
        b, t, _ = x.shape
        h, k = c.heads, c.key_size

        def heads(w: Tensor) -> Tensor:
            return (x @ w).reshape(b, t, h, k).transpose(0, 2, 1, 3)

        q = heads(params[f"{prefix}.attn.q"])
        keys = heads(params[f"{prefix}.attn.k"])
        v = heads(params[f"{prefix}.attn.v"])

        scores = (q @ keys.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(k))
        weights = x.graph.op("causal_masked_fill", scores).softmax()
        mixed = (weights @ v).transpose(0, 2, 1, 3).reshape(b, t, h * k)
        return mixed @ params[f"{prefix}.attn.o"]

    def forward(self, graph: Graph, params: ParamTensors, tokens: Tensor) -> Tensor:
        self.check_tokens(tokens)
        t = tokens.shape[1]
        if t > self.config.max_seq:
            raise ConfigError(f"Sequence of {t} exceeds the positional table ({self.config.max_seq})")

        x = linear(tokens, params["embed.w"], params["embed.b"]) + params["pos.e"].slice(0, 0, t)
        for i in range(self.config.layers):
            p = f"block{i}"
            x = x + self.attention(params, p, affine_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"]))
            hidden = linear(
                affine_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"]),
                params[f"{p}.mlp.w1"],
                params[f"{p}.mlp.b1"],
            ).relu()
            x = x + linear(hidden, params[f"{p}.mlp.w2"], params[f"{p}.mlp.b2"])

        x = affine_norm(x, params["final_ln.g"], params["final_ln.b"])
        return linear(x, params["head.w"], params["head.b"])
