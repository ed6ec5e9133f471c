"""Request and response bodies for the service endpoints."""

from pydantic import BaseModel, ConfigDict

from ..config import ExperimentConfig


class TrainRequest(BaseModel):
    config: ExperimentConfig
    train_csv: str | None = None  # CSV text; otherwise config.dataset is loaded


class TrainResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model: dict  # serialized network, reusable via /impute model_json
    history: list[float]  # per-epoch mean training loss


class ImputeRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    config: ExperimentConfig
    input_csv: str
    model_json: dict | None = None
    train_csv: str | None = None


class UncertaintyCell(BaseModel):
    row: int  # zero-based data row
    column: str
    std: float  # spread of the MC samples, in original units


class ImputeResponse(BaseModel):
    completed_csv: str
    uncertainty: list[UncertaintyCell] | None = None  # MCD kinds only
    imputed_cells: int


class ReproduceRequest(BaseModel):
    config: ExperimentConfig


class ReproduceResponse(BaseModel):
    table_text: str
    kv_text: str


class HealthResponse(BaseModel):
    status: str = "ok"


class ErrorBody(BaseModel):
    code: str  # usage | data | divergence
    message: str
