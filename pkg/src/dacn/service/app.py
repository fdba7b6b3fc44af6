"""FastAPI application exposing the pipeline.

Error mapping: ConfigError/ContractError (caller mistakes) -> 422,
DimensionError/FormatError/missing files (bad runtime inputs) -> 400,
anything unexpected -> 500. The CLI translates 422 into exit code 2 and
other failures into exit code 1.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import ConfigError, ContractError, DimensionError, FormatError
from . import ops, schemas

API_VERSION = "0.1.0"


def create_app() -> FastAPI:
    app = FastAPI(title="dacn", version=API_VERSION)

    @app.exception_handler(ConfigError)
    @app.exception_handler(ContractError)
    async def _usage_error(request: Request, exc: Exception):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(DimensionError)
    @app.exception_handler(FormatError)
    @app.exception_handler(FileNotFoundError)
    async def _input_error(request: Request, exc: Exception):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": API_VERSION}

    @app.post("/v1/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        return ops.run_synth(req)

    @app.post("/v1/degrade", response_model=schemas.DegradeResponse)
    def degrade(req: schemas.DegradeRequest):
        return ops.run_degrade(req)

    @app.post("/v1/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        return ops.run_train(req)

    @app.post("/v1/eval", response_model=schemas.EvalResponse)
    def eval_(req: schemas.EvalRequest):
        return ops.run_eval(req)

    @app.post("/v1/sr", response_model=schemas.SrResponse)
    def sr(req: schemas.SrRequest):
        return ops.run_sr(req)

    @app.post("/v1/gradcheck", response_model=schemas.GradcheckResponse)
    def gradcheck(req: schemas.GradcheckRequest):
        return ops.run_gradcheck(req)

    return app


app = create_app()
