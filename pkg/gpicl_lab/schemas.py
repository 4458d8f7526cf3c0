from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StringConstraints,
    field_validator,
    model_validator,
)

# Enforces stripped strings to ensure clean config values
StrippedString = Annotated[str, StringConstraints(strip_whitespace=True)]

Family = Literal["transformer", "lstm", "outer_lstm", "mlp"]
OptimizerKind = Literal["adam", "adamw", "sign_ema", "sgd"]


class ModelConfig(BaseModel):
    """
    Architecture of one black-box learner.

    attributes:
        model_size (N_M): token width of the transformer.
        key_size (N_K): per-head query/key/value width; H * N_K need not equal N_M.
        hidden_size (N_H): LSTM hidden width, or MLP hidden width (0 = affine).
        outer_heads / outer_size: outer-product LSTM memory layout.
        input_dim: N_x + N_y; filled in from the data config when left empty.
        max_seq (N_T): length of the learned positional table.
    """

    family: Family = "transformer"
    model_size: int = Field(256, ge=1)
    layers: int = Field(4, ge=1)
    heads: int = Field(8, ge=1)
    key_size: int = Field(32, ge=1)
    mlp_ratio: int = Field(4, ge=1)
    hidden_size: int = Field(256, ge=0)
    lstm_layers: int = Field(1, ge=1)
    mlp_hidden_layers: int = Field(2, ge=0)
    outer_heads: int = Field(4, ge=1)
    outer_size: int = Field(16, ge=1)
    input_dim: int | None = Field(None, ge=2)
    output_dim: int = Field(10, ge=2)
    max_seq: int = Field(100, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_family(self) -> "ModelConfig":
        if self.family == "lstm" and self.hidden_size < 1:
            raise ValueError("An LSTM needs hidden_size >= 1")
        return self


class PermutationDistribution(BaseModel):
    """
    Distribution over output permutations.

    A deterministic hash-coin per task index picks fixed_permutation with
    probability bias_fraction; otherwise a uniform permutation is drawn.
    fixed_permutation defaults to the identity.
    """

    bias_fraction: float = Field(0.0, ge=0.0, le=1.0)
    fixed_permutation: tuple[int, ...] | None = None

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("fixed_permutation")
    @classmethod
    def validate_bijection(cls, v: tuple[int, ...] | None) -> tuple[int, ...] | None:
        if v is not None and sorted(v) != list(range(len(v))):
            raise ValueError(f"fixed_permutation {v} is not a bijection on 0..{len(v) - 1}")
        return v

    def resolved_fixed(self, num_classes: int) -> tuple[int, ...]:
        if self.fixed_permutation is None:
            return tuple(range(num_classes))
        if len(self.fixed_permutation) != num_classes:
            raise ValueError(
                f"fixed_permutation has {len(self.fixed_permutation)} entries, expected {num_classes}"
            )
        return self.fixed_permutation


class DataConfig(BaseModel):
    """
    Where base datasets come from and how they are preprocessed.

    eval_dataset "auto" picks the unseen-dataset base from the training base
    (MNIST <-> FashionMNIST); "none" disables that regime.
    """

    data_dir: StrippedString = "data"
    dataset: StrippedString = "mnist"
    eval_dataset: StrippedString = "auto"
    resolution: int | None = Field(8, ge=1)
    grayscale: bool = True
    normalize: bool = True
    with_replacement: bool | None = None

    model_config = ConfigDict(frozen=True, extra="forbid")


class TrainRunConfig(BaseModel):
    name: StrippedString = "run"
    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    dist: PermutationDistribution = Field(default_factory=PermutationDistribution)

    num_tasks: int = Field(2**13, ge=1)
    batch_size: int = Field(32, ge=1)
    seq_len: int = Field(25, ge=1)
    steps: int = Field(50_000, ge=0)

    optimizer: OptimizerKind = "adam"
    lr: float = Field(1e-4, gt=0.0)
    eps: float = Field(1e-8, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    weight_decay: float = Field(0.0, ge=0.0)
    clip_norm: float | None = Field(None, gt=0.0)

    seed: int = Field(0, ge=0)
    eval_every: int = Field(500, ge=1)
    eval_tasks: int = Field(32, ge=1)
    eval_seq_per_task: int = Field(16, ge=1)
    diagnostics_every: int = Field(50, ge=1)
    checkpoint_every: int = Field(0, ge=0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_lengths(self) -> "TrainRunConfig":
        if self.model.family == "mlp" and self.seq_len != 1:
            raise ValueError("The multi-task MLP only sees single datapoints: seq_len must be 1")
        if self.model.family == "transformer" and self.seq_len > self.model.max_seq:
            raise ValueError(
                f"seq_len {self.seq_len} exceeds the positional table (max_seq={self.model.max_seq})"
            )
        return self


class SweepSpec(BaseModel):
    """
    A grid of meta-training runs.

    attributes:
        base_keys: flat run-config keys shared by every cell.
        axes: ordered mapping key -> values; cells are their cartesian product.
        max_runs: refusal threshold for cells * repeats.
    """

    name: StrippedString = "sweep"
    base_keys: dict[str, Any] = Field(default_factory=dict)
    axes: dict[str, list[Any]] = Field(default_factory=dict)
    repeats: int = Field(1, ge=1)
    max_runs: int = Field(64, ge=1)
    workers: int = Field(1, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("axes")
    @classmethod
    def validate_axes(cls, v: dict[str, list[Any]]) -> dict[str, list[Any]]:
        for key, values in v.items():
            if not values:
                raise ValueError(f"Axis {key!r} has no values")
        return v

    @property
    def cell_count(self) -> int:
        count = 1
        for values in self.axes.values():
            count *= len(values)
        return count


class PlotSpec(BaseModel):
    """
    One SVG figure drawn from a CSV file.

    line: one polyline per `series` value, CI band from `ci` when present.
    heatmap: `x` and `y` are categorical, `value` colors each cell.
    scatter: one circle per row.
    `where` keeps only rows whose columns equal the given text.
    """

    kind: Literal["line", "heatmap", "scatter"]
    csv: StrippedString = ""
    x: StrippedString
    y: StrippedString
    series: StrippedString | None = None
    value: StrippedString | None = None
    ci: StrippedString | None = None
    where: dict[str, str] = Field(default_factory=dict)
    title: str = ""
    x_label: str | None = None
    y_label: str | None = None
    x_log2: bool = False
    y_log2: bool = False
    width: int = Field(640, ge=100)
    height: int = Field(420, ge=100)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_kind(self) -> "PlotSpec":
        if self.kind == "heatmap" and not self.value:
            raise ValueError("A heatmap needs a 'value' column")
        return self

    @property
    def columns(self) -> list[str]:
        cols = [self.x, self.y, self.series, self.value, self.ci, *self.where]
        return [c for c in cols if c]
