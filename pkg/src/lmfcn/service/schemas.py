"""Request and response bodies for the HTTP API.

Hyperparameter fields are all optional; only the ones a client actually
sends are passed through, so the trainer's own defaults stay the single
source of truth.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class StripeSpecBody(BaseModel):
    angle_mean: float
    angle_std: float = Field(ge=0.0)
    period_mean: float = Field(gt=0.0)
    period_std: float = Field(ge=0.0)
    phase_jitter: float = Field(default=1.0, ge=0.0, le=1.0)
    noise_std: float = Field(default=0.05, ge=0.0)


class HyperparamsBody(BaseModel):
    phi: int | None = Field(default=None, ge=1)
    c_in: int | None = Field(default=None, ge=1)
    gamma: float | None = Field(default=None, gt=0.0)
    c: float | None = Field(default=None, gt=0.0)
    sv_close: int | None = Field(default=None, ge=0)
    wr_close: int | None = Field(default=None, ge=0)
    sh_close: int | None = Field(default=None, ge=0)
    lr: float | None = Field(default=None, gt=0.0)
    max_epochs: int | None = Field(default=None, ge=1)
    seed: int | None = None
    smo_tol: float | None = Field(default=None, gt=0.0)
    widths: list[int] | None = None

    def overrides(self) -> dict:
        return self.model_dump(exclude_none=True)


class GenDataRequest(BaseModel):
    out_dir: str
    n_per_class: int = Field(default=100, ge=1)
    size: int = Field(default=64, ge=4)
    seed: int = 0
    specs: list[StripeSpecBody] | None = None


class GenDataResponse(BaseModel):
    out_dir: str
    n_images: int
    n_classes: int
    n_per_class: int
    size: int
    seed: int
    specs: list[StripeSpecBody]


class TrainRequest(BaseModel):
    data_dir: str
    out_dir: str
    hyperparams: HyperparamsBody = HyperparamsBody()
    val_ratio: float = Field(default=0.2, gt=0.0, lt=1.0)
    split_seed: int | None = None
    debug_dump: bool = False


class MulticlassTrainRequest(TrainRequest):
    sub_epochs: int = Field(default=10, ge=1)


class CnnTrainRequest(TrainRequest):
    stop_when_val_perfect: bool = False


class TrainResponse(BaseModel):
    kind: str
    run_dir: str
    train_bacc: float
    val_bacc: float
    best_epoch: int | None = None
    epochs_run: int | None = None
    sub_best_epochs: list[int] | None = None
    latent_width: int | None = None


class EvalRequest(BaseModel):
    run_dir: str
    data_dir: str
    out_path: str | None = None


class EvalResponse(BaseModel):
    balanced_accuracy: float
    confusion_matrix: list[list[int]]
    per_class_recall: list[float | None]
    n_instances: int
    meta: dict


class ReportRow(BaseModel):
    epoch: int
    l_sv: float
    l_mc: float
    l_cc: float
    total: float
    n_sv: int
    train_bacc: float
    val_bacc: float


class ReportRequest(BaseModel):
    run_dir: str
    out_path: str | None = None


class ReportResponse(BaseModel):
    rows: list[ReportRow]


class HealthResponse(BaseModel):
    status: str
    version: str
