from dataclasses import asdict, dataclass

from gpicl_lab.models.registry import build_model
from gpicl_lab.schemas import ModelConfig


@dataclass(frozen=True)
class StateReport:
    family: str
    state_size: int
    param_count: int

    def to_dict(self) -> dict:
        return asdict(self)


def state_report(config: ModelConfig) -> StateReport:
    """
    N_S and exact parameter count of a configuration.

    transformer: 2 * H * N_K * N_L * N_T (cached keys and values)
    lstm:        2 * N_H per layer (hidden and cell)
    outer_lstm:  heads * size^2 + heads * size
    mlp:         0
    """
    model = build_model(config)
    return StateReport(family=config.family, state_size=model.state_size(), param_count=model.param_count())
