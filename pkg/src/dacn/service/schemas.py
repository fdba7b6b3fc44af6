"""Pydantic request/response models for the HTTP API.

Requests reference cubes and checkpoints by filesystem path (the service
and its clients share a filesystem); responses carry small summaries, the
heavy artifacts stay on disk.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class CubeSummary(BaseModel):
    path: str
    height: int
    width: int
    bands: int


class SynthRequest(BaseModel):
    out: str
    height: int = 96
    width: int = 96
    bands: int = 24
    rank: int = 4
    noise: float = 0.0
    seed: int = 0


class SynthResponse(BaseModel):
    cube: CubeSummary
    manifest: str


class DegradeRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    in_path: str = Field(alias="in")
    out: str
    scale: int


class DegradeResponse(BaseModel):
    cube: CubeSummary
    manifest: str


class TrainRequest(BaseModel):
    data_dir: str
    config: str  # path to a key = value config file
    out_checkpoint: str
    history: str
    seed: int | None = None  # overrides both model and shuffle seeds


class TrainResponse(BaseModel):
    checkpoint: str
    history: str
    manifest: str
    epochs: int
    best_val_loss: float
    final_train_loss: float


class EvalRequest(BaseModel):
    ref: str
    test: str
    report: str


class EvalResponse(BaseModel):
    report: str
    manifest: str
    mpsnr: float
    mssim: float
    sam: float


class SrRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    in_path: str = Field(alias="in")
    checkpoint: str
    out: str


class SrResponse(BaseModel):
    cube: CubeSummary
    manifest: str


class GradcheckRequest(BaseModel):
    tolerance: float = 1e-4
    seed: int = 0
    config: str | None = None  # model config file for the full-model check
    report: str | None = None
    corrupt_op: str | None = None  # negative-control hook


class OpCheckResult(BaseModel):
    name: str
    max_rel_error: float
    passed: bool


class GradcheckResponse(BaseModel):
    passed: bool
    checks: list[OpCheckResult]
    report: str | None = None
    manifest: str | None = None
