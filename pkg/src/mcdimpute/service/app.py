"""FastAPI application: one endpoint per command plus a health probe.

Package errors map to stable JSON bodies ({code, message}) so clients can
translate them back into exit codes: usage -> 400, data -> 422,
divergence -> 409.
"""

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import workflows
from ..errors import DataError, DivergenceError, UsageError
from .schemas import (
    ErrorBody,
    HealthResponse,
    ImputeRequest,
    ImputeResponse,
    ReproduceRequest,
    ReproduceResponse,
    TrainRequest,
    TrainResponse,
)

app = FastAPI(title="mcdimpute", description="autoencoder imputation service")

_ERROR_STATUS = (
    (UsageError, 400, "usage"),
    (DataError, 422, "data"),
    (DivergenceError, 409, "divergence"),
)


def _make_handler(status, code):
    async def handler(request, exc):
        body = ErrorBody(code=code, message=str(exc))
        return JSONResponse(status_code=status, content=body.model_dump())

    return handler


for _exc, _status, _code in _ERROR_STATUS:
    app.add_exception_handler(_exc, _make_handler(_status, _code))


@app.get("/health", response_model=HealthResponse)
async def health():
    return HealthResponse()


@app.post("/train", response_model=TrainResponse)
def train(req: TrainRequest):
    return TrainResponse(**workflows.run_train(req.config, train_csv=req.train_csv))


@app.post("/impute", response_model=ImputeResponse)
def impute(req: ImputeRequest):
    out = workflows.run_impute(req.config, req.input_csv,
                               model_json=req.model_json, train_csv=req.train_csv)
    return ImputeResponse(**out)


@app.post("/reproduce", response_model=ReproduceResponse)
def reproduce(req: ReproduceRequest):
    return ReproduceResponse(**workflows.run_reproduce(req.config))
