from gpicl_lab.errors import ConfigError
from gpicl_lab.models.base import SequenceModel
from gpicl_lab.models.lstm import LstmModel
from gpicl_lab.models.mlp import MultiTaskMlp
from gpicl_lab.models.outer_lstm import OuterProductLstm
from gpicl_lab.models.transformer import GpiclTransformer
from gpicl_lab.schemas import ModelConfig

MODEL_FAMILIES: dict[str, type[SequenceModel]] = {
    cls.family: cls for cls in (GpiclTransformer, LstmModel, OuterProductLstm, MultiTaskMlp)
}


def build_model(config: ModelConfig) -> SequenceModel:
    try:
        cls = MODEL_FAMILIES[config.family]
    except KeyError:
        raise ConfigError(f"Unknown model family {config.family!r}; expected one of {sorted(MODEL_FAMILIES)}")
    return cls(config)
