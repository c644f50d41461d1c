"""Request/response models for the experiment service."""

from typing import Optional

from pydantic import BaseModel, Field

from ..harness import METHODS


class TaskGenRequest(BaseModel):
    domain: str = "navigation2d"
    tasks: int = Field(20, ge=1)
    seed: int = 0
    structure: str = "uniform"


class TaskGenResponse(BaseModel):
    domain: str
    seed: int
    tasks: list[list[float]]


class PretrainRequest(BaseModel):
    domain: str = "navigation2d"
    num_tasks: int = Field(8, ge=1)
    episodes_per_task: int = Field(50, ge=1)
    seed: int = 0
    hidden_width: int = Field(64, ge=1)
    lr: float = Field(1e-3, gt=0)
    gamma: float = Field(0.99, ge=0, lt=1)
    tau: float = Field(0.2, ge=0, le=1)
    batch_size: int = Field(64, ge=1)
    buffer_capacity: int = Field(50_000, ge=1)
    optimizer: str = "adam"
    out_dir: str


class RunRequest(BaseModel):
    domain: str = "navigation2d"
    method: str = "dpmm_robust"
    tasks: int = Field(20, ge=1)
    episodes_per_task: int = Field(100, ge=1)
    seed: int = 0
    xi: float = Field(1.0, gt=0)
    sigma: float = Field(1.0, gt=0)
    hidden_width: int = Field(64, ge=1)
    lr: float = Field(1e-3, gt=0)
    gamma: float = Field(0.99, ge=0, lt=1)
    tau: float = Field(0.2, ge=0, le=1)
    noise_std: Optional[float] = Field(None, ge=0)
    batch_size: int = Field(64, ge=1)
    buffer_capacity: int = Field(50_000, ge=1)
    prior_path: Optional[str] = None
    structure: str = "uniform"
    out_dir: str
    optimizer: str = "adam"
    em_eps: float = Field(1e-4, gt=0)
    em_max_iters: int = Field(1, ge=1)
    disable_spawn: bool = False

    def method_known(self) -> bool:
        return self.method in METHODS


class SummarizeRequest(BaseModel):
    run_dir: str


class JobSubmitted(BaseModel):
    job_id: str


class JobProgress(BaseModel):
    task: int = 0
    episode: int = 0
    total_tasks: int = 0
    episodes_per_task: int = 0


class JobStatus(BaseModel):
    job_id: str
    kind: str
    state: str  # queued | running | succeeded | failed
    error_kind: Optional[str] = None  # config | numeric | internal
    error: Optional[str] = None
    progress: Optional[JobProgress] = None
    result: Optional[dict] = None


class ErrorBody(BaseModel):
    error_kind: str
    detail: str
