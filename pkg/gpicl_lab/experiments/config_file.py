"""
Flat key=value run configs.

    # comment
    preset = desk-mnist
    num_tasks = 2^10
    eps = 1e-12

Keys are the field names of TrainRunConfig and of its nested model, data
and permutation-distribution configs. The canonical echo written to
config.txt parses back to the same config.
"""
import hashlib
import logging
from pathlib import Path
from typing import Any, Mapping

from pydantic import ValidationError

from gpicl_lab.errors import ConfigError
from gpicl_lab.experiments.presets import get_preset
from gpicl_lab.schemas import DataConfig, ModelConfig, PermutationDistribution, TrainRunConfig
from gpicl_lab.utils.converters import parse_list, parse_scalar

logger = logging.getLogger(__name__)

SECTIONS = {"model": ModelConfig, "data": DataConfig, "dist": PermutationDistribution}

KEY_SECTION: dict[str, str | None] = {
    **{k: None for k in TrainRunConfig.model_fields if k not in SECTIONS},
    **{k: section for section, cls in SECTIONS.items() for k in cls.model_fields},
}

# Values kept as text even when they look like numbers
TEXT_KEYS = {"name", "dataset", "eval_dataset", "data_dir", "family", "optimizer"}


def valid_keys() -> list[str]:
    return sorted(KEY_SECTION)


def read_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _convert(key: str, value: Any) -> Any:
    if key in TEXT_KEYS:
        return value if value is None else str(value).strip()
    if key == "fixed_permutation":
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
            return None
        return tuple(parse_list(value))
    return parse_scalar(value)


def validation_message(error: ValidationError) -> str:
    parts = []
    for e in error.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "config"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_run_config(pairs: Mapping[str, Any]) -> TrainRunConfig:
    """
    Builds a TrainRunConfig from flat pairs.

    A `preset` key is applied first. When max_seq is not given it follows
    seq_len, so the positional table matches the training length.
    """
    values: dict[str, Any] = {}
    if "preset" in pairs:
        values.update(get_preset(str(pairs["preset"]).strip()))
    values.update({k: v for k, v in pairs.items() if k != "preset"})

    unknown = sorted(set(values) - set(KEY_SECTION))
    if unknown:
        raise ConfigError(f"Unknown config keys {', '.join(unknown)}; valid keys: {', '.join(valid_keys())}")

    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {section: {} for section in SECTIONS}
    for key, raw in values.items():
        section = KEY_SECTION[key]
        (nested[section] if section else top)[key] = _convert(key, raw)

    if "max_seq" not in nested["model"]:
        nested["model"]["max_seq"] = top.get("seq_len", TrainRunConfig.model_fields["seq_len"].default)

    try:
        return TrainRunConfig.model_validate({**top, **nested})
    except ValidationError as e:
        raise ConfigError(f"Invalid run config: {validation_message(e)}") from e


def load_run_config(path: Path | str, overrides: Mapping[str, Any] | None = None) -> TrainRunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    pairs = read_key_values(path.read_text(), source=str(path))
    pairs.update(overrides or {})
    cfg = parse_run_config(pairs)
    logger.info(f"Loaded run config {cfg.name!r} from {path}")
    return cfg


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def flatten_run_config(cfg: TrainRunConfig) -> dict[str, Any]:
    dumped = cfg.model_dump()
    flat = {k: v for k, v in dumped.items() if k not in SECTIONS}
    for section in SECTIONS:
        flat.update(dumped[section])
    return flat


def canonical_echo(cfg: TrainRunConfig) -> str:
    flat = flatten_run_config(cfg)
    return "".join(f"{key} = {format_value(flat[key])}\n" for key in sorted(flat))


def config_digest(cfg: TrainRunConfig) -> str:
    return hashlib.sha256(canonical_echo(cfg).encode("utf-8")).hexdigest()
