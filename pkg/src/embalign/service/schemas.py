"""Pydantic request/response models for the pipeline service."""

from __future__ import annotations

from pydantic import BaseModel, model_validator


class StageRequest(BaseModel):
    """One pipeline stage invocation.

    Exactly one of config_path / config_text must be given; the paths inside
    the config are resolved on the service host's filesystem.
    """

    config_path: str | None = None
    config_text: str | None = None
    seed: int | None = None
    out_dir: str | None = None

    @model_validator(mode="after")
    def _one_config_source(self):
        if (self.config_path is None) == (self.config_text is None):
            raise ValueError("provide exactly one of config_path or config_text")
        return self


class StageResponse(BaseModel):
    stage: str
    outputs: list[str]
    manifest_path: str
    elapsed_s: float


class ErrorBody(BaseModel):
    message: str
    exit_code: int


class HealthResponse(BaseModel):
    status: str
    version: str
