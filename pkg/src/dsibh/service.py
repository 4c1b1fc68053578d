"""HTTP front end over the pipeline.

Errors surface as {"detail": {"kind": ..., "message": ...}} where kind
is one of usage, io, numeric, mirroring the CLI exit-code taxonomy.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import pipeline, schemas
from .errors import DSIBHError

_STATUS_BY_KIND = {"usage": 400, "io": 404, "numeric": 500}


def create_app() -> FastAPI:
    app = FastAPI(title="dsibh", version="0.1.0")

    @app.exception_handler(DSIBHError)
    async def handle_dsibh_error(request: Request, exc: DSIBHError):
        return _error_response(exc.kind, str(exc))

    @app.exception_handler(OSError)
    async def handle_os_error(request: Request, exc: OSError):
        return _error_response("io", str(exc))

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
        return pipeline.run_synth(req)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
        return pipeline.run_train(req.config, threads=req.threads)

    @app.post("/encode", response_model=schemas.EncodeResponse)
    def encode(req: schemas.EncodeRequest) -> schemas.EncodeResponse:
        return pipeline.run_encode(req)

    @app.post("/retrieve", response_model=schemas.RetrieveResponse)
    def retrieve(req: schemas.RetrieveRequest) -> schemas.RetrieveResponse:
        return pipeline.run_retrieve(req)

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest) -> schemas.EvalResponse:
        return pipeline.run_eval(req)

    return app


def _error_response(kind: str, message: str) -> JSONResponse:
    status = _STATUS_BY_KIND.get(kind, 500)
    return JSONResponse(
        status_code=status, content={"detail": {"kind": kind, "message": message}}
    )


app = create_app()
