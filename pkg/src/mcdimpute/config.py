"""Resolved experiment configuration, shared by the CLI and the service.

One model covers every command; commands read the fields they need.
`dataset`, `model_kinds`, and `missing_rates` accept a single value or a
list and are stored as tuples. Validation failures surface as UsageError
naming the offending key.
"""

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import UsageError
from .imputer import MODEL_KINDS


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())

    dataset: tuple[str, ...] = ()  # builtin ids or CSV paths
    class_column: int | str | None = None
    model_kinds: tuple[str, ...] = MODEL_KINDS
    missing_rates: tuple[float, ...] = (0.1, 0.3, 0.5)
    epochs: int = Field(300, ge=1)
    dropout_p: float = Field(0.2, ge=0.0, lt=1.0)
    mc_samples: int = Field(100, ge=1)  # T
    folds: int = Field(5, ge=2)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    # calibrated for [0,1]-normalized data: the per-cell reconstruction
    # term needs roughly 1000x the weight of the per-instance KL term or
    # the posterior collapses onto the prior (imputations degenerate to
    # column means)
    kl_weight: float = Field(1e-3, gt=0.0)
    seed: int = 0
    jobs: int = Field(1, ge=1)
    out: str | None = None
    data_dir: str = "data"

    @field_validator("dataset", "model_kinds", "missing_rates", mode="before")
    @classmethod
    def _single_to_tuple(cls, v):
        if isinstance(v, (str, int, float)):
            return (v,)
        return tuple(v)

    @field_validator("model_kinds")
    @classmethod
    def _known_kinds(cls, v):
        bad = [k for k in v if k not in MODEL_KINDS]
        if bad:
            raise ValueError(f"unknown model kind(s) {bad}, choose from {list(MODEL_KINDS)}")
        if not v:
            raise ValueError("at least one model kind required")
        if len(set(v)) != len(v):
            raise ValueError("duplicate model kinds")
        return v

    @field_validator("missing_rates")
    @classmethod
    def _rates_in_open_unit(cls, v):
        if not v:
            raise ValueError("at least one missing rate required")
        for r in v:
            if not 0.0 < r < 1.0:
                raise ValueError(f"missing rate {r} outside (0, 1)")
        return v


def make_config(overrides):
    """Build an ExperimentConfig, turning validation errors into UsageError."""
    try:
        return ExperimentConfig(**overrides)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"]) or "config"
        raise UsageError(f"invalid {key}: {first['msg']}") from None


def config_items(cfg):
    """(key, value) pairs in declaration order, for echoing into reports."""
    return [(name, getattr(cfg, name)) for name in type(cfg).model_fields]
