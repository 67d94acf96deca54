"""Request/response schemas for the HTTP service."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    code: str
    message: str
    hint: str = ""


class PreprocessRequest(BaseModel):
    image_b64: str = Field(description="base64 PNG or JPEG bytes")
    sensitivity: float = Field(default=0.0, ge=0.0, le=1.0)
    target_size: int = Field(default=224, ge=16, le=1024)


class PreprocessReportModel(BaseModel):
    content_score: float
    threshold: Optional[float]
    bbox: Optional[list[int]]
    rejected: bool
    reason: Optional[str] = None


class PreprocessResponse(BaseModel):
    upload_id: str
    preview_png_b64: str
    mask_png_b64: str
    report: PreprocessReportModel


class ClassifyRequest(BaseModel):
    upload_id: str
    ensemble_config_id: str = "default"
    top_k: int = Field(default=5, ge=1)


class RankedPrediction(BaseModel):
    label: str
    confidence: float


class ClassifyResponse(BaseModel):
    predictions: list[RankedPrediction]
    provider_vectors: dict[str, list[float]]
    combined_provider_id: str
    labels: list[str]


class MatchRequest(BaseModel):
    upload_id: str
    candidate_volume_ids: Optional[list[str]] = None
    axes: Optional[list[str]] = None
    top_k_coarse: int = Field(default=50, ge=1)
    top_n: int = Field(default=5, ge=1, le=50)


class MatchResultModel(BaseModel):
    volume_id: str
    axis: str
    slice_index: int
    best_rotation: float
    dice: float
    hu_dist: float
    ssim: float
    ncc: float
    orb: float
    combined: float
    thumbnail_png_b64: str = ""


class JobHandleModel(BaseModel):
    job_id: str
    kind: str
    state: str
    progress: float = 0.0


class MatchStatusResponse(BaseModel):
    job_id: str
    kind: str
    state: str
    progress: float
    results: Optional[list[MatchResultModel]] = None
    matched_context: Optional[dict] = None
    error: Optional[str] = None
    timing: Optional[dict] = None


class VolumeSummaryModel(BaseModel):
    id: str
    species: str
    slice_count: int
    per_axis: dict[str, int]


class VolumesResponse(BaseModel):
    volumes: list[VolumeSummaryModel]
    species_totals: dict[str, int]
