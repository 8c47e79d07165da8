"""FastAPI application over the run-directory operations.

Every domain failure (bad paths, invalid configs, solver errors) maps to a
400 with a single-line detail string; request-shape problems are FastAPI's
usual 422s.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..rundir import eval_op, gen_data_op, report_op, train_op
from .schemas import (CnnTrainRequest, EvalRequest, EvalResponse,
                      GenDataRequest, GenDataResponse, HealthResponse,
                      MulticlassTrainRequest, ReportRequest, ReportResponse,
                      TrainRequest, TrainResponse)

_DOMAIN_ERRORS = (ValueError, FileExistsError, FileNotFoundError,
                  RuntimeError, FloatingPointError)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _DOMAIN_ERRORS as exc:
        detail = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        raise HTTPException(status_code=400, detail=detail) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="lmfcn", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/datasets", response_model=GenDataResponse)
    def gen_data(req: GenDataRequest):
        specs = ([s.model_dump() for s in req.specs]
                 if req.specs is not None else None)
        return _guard(gen_data_op, req.out_dir, n_per_class=req.n_per_class,
                      size=req.size, seed=req.seed, specs=specs)

    def _train(kind: str, req: TrainRequest, **extra):
        return _guard(train_op, kind, req.data_dir, req.out_dir,
                      hp_overrides=req.hyperparams.overrides(),
                      val_ratio=req.val_ratio, split_seed=req.split_seed,
                      debug_dump=req.debug_dump, **extra)

    @app.post("/runs/train", response_model=TrainResponse,
              response_model_exclude_none=True)
    def train(req: TrainRequest):
        return _train("binary", req)

    @app.post("/runs/train-multiclass", response_model=TrainResponse,
              response_model_exclude_none=True)
    def train_multiclass(req: MulticlassTrainRequest):
        return _train("multiclass", req, sub_epochs=req.sub_epochs)

    @app.post("/runs/train-cnn-baseline", response_model=TrainResponse,
              response_model_exclude_none=True)
    def train_cnn(req: CnnTrainRequest):
        return _train("cnn", req, stop_when_val_perfect=req.stop_when_val_perfect)

    @app.post("/runs/train-lbp-baseline", response_model=TrainResponse,
              response_model_exclude_none=True)
    def train_lbp(req: TrainRequest):
        return _train("lbp", req)

    @app.post("/evaluations", response_model=EvalResponse)
    def evaluations(req: EvalRequest):
        return _guard(eval_op, req.run_dir, req.data_dir, out_path=req.out_path)

    @app.post("/reports", response_model=ReportResponse)
    def reports(req: ReportRequest):
        return ReportResponse(rows=_guard(report_op, req.run_dir,
                                          out_path=req.out_path))

    return app


app = create_app()
