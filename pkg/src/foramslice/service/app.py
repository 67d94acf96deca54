"""FastAPI application exposing preprocessing, classification and matching.

The service holds three pieces of state: an immutable corpus index (shared
read-only once built), a TTL-bounded upload store, and a job table for
long-running match jobs executed on a bounded worker pool. Everything else
is stateless; identical requests against the same index produce identical
responses.
"""
from __future__ import annotations

import base64
import binascii
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..classify import (
    ClassProbabilities,
    EnsembleConfig,
    combine_patch_ensemble,
    top_k,
)
from ..errors import (
    ContractViolation,
    EmptyCorpus,
    EmptyForeground,
    MissingProvider,
    ProviderUnavailable,
)
from ..matcher import CorpusIndex, MatchParams, match_query
from ..pngio import decode_image, encode_png
from ..preprocess import PreprocessParams, preprocess_pipeline
from .models import (
    ClassifyRequest,
    ClassifyResponse,
    ErrorBody,
    JobHandleModel,
    MatchRequest,
    MatchResultModel,
    MatchStatusResponse,
    PreprocessReportModel,
    PreprocessRequest,
    PreprocessResponse,
    RankedPrediction,
    VolumesResponse,
    VolumeSummaryModel,
)

UPLOAD_TTL_SECONDS = 15 * 60


@dataclass
class ServiceConfig:
    labels: list[str] = field(default_factory=list)
    index: Optional[CorpusIndex] = None
    index_loader: Optional[Callable[[], CorpusIndex]] = None
    providers: dict = field(default_factory=dict)
    ensembles: dict[str, EnsembleConfig] = field(default_factory=dict)
    max_upload_bytes: int = 10 * 1024 * 1024
    upload_ttl_seconds: float = UPLOAD_TTL_SECONDS
    workers: int = 2
    queue_limit: int = 8
    host: str = "127.0.0.1"
    port: int = 8501
    # directory of built dashboard assets to serve at /; ignored when unset
    static_dir: Optional[str] = None


def _error(status: int, code: str, message: str, hint: str = "") -> JSONResponse:
    body = ErrorBody(code=code, message=message, hint=hint)
    return JSONResponse(status_code=status, content=body.model_dump())


class _ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, hint: str = ""):
        self.status = status
        self.code = code
        self.message = message
        self.hint = hint


class _UploadStore:
    """Scratch slots for preprocessed uploads, expiring after a TTL."""

    def __init__(self, ttl: float):
        self.ttl = ttl
        self._lock = threading.Lock()
        self._slots: dict[str, tuple[float, object, object, object]] = {}

    def put(self, image, mask, report) -> str:
        upload_id = uuid.uuid4().hex
        with self._lock:
            self._purge()
            self._slots[upload_id] = (time.monotonic() + self.ttl, image, mask, report)
        return upload_id

    def get(self, upload_id: str):
        with self._lock:
            self._purge()
            slot = self._slots.get(upload_id)
        if slot is None:
            raise _ApiError(
                404, "unknown_upload", f"no upload {upload_id!r}",
                "uploads expire after 15 minutes; preprocess again",
            )
        return slot[1], slot[2], slot[3]

    def _purge(self) -> None:
        now = time.monotonic()
        for key in [k for k, v in self._slots.items() if v[0] < now]:
            del self._slots[key]


class _Job:
    def __init__(self, kind: str):
        self.job_id = uuid.uuid4().hex
        self.kind = kind
        self.state = "queued"
        self.progress = 0.0
        self.results = None
        self.context = None
        self.timing = None
        self.error = None
        self._lock = threading.Lock()

    def advance(self, fraction: float) -> None:
        with self._lock:
            # progress is monotone even if workers report out of order
            self.progress = max(self.progress, min(1.0, fraction))


class _JobTable:
    def __init__(self, workers: int, queue_limit: int):
        self.queue_limit = queue_limit
        self._lock = threading.Lock()
        self._jobs: dict[str, _Job] = {}
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def submit(self, kind: str, fn) -> _Job:
        with self._lock:
            active = sum(
                1 for j in self._jobs.values() if j.state in ("queued", "running")
            )
            if active >= self.queue_limit:
                raise _ApiError(
                    409, "queue_full", "job queue is full", "retry after a job finishes"
                )
            job = _Job(kind)
            self._jobs[job.job_id] = job

        def run():
            job.state = "running"
            try:
                fn(job)
                job.advance(1.0)
                job.state = "done"
            except Exception as e:  # no stack traces over the wire
                job.error = str(e)
                job.state = "failed"

        self._pool.submit(run)
        return job

    def get(self, job_id: str) -> _Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise _ApiError(
                410, "unknown_job", f"no job {job_id!r}", "job ids expire with the process"
            )
        return job


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="foramslice service", openapi_url="/api/openapi.json")
    uploads = _UploadStore(config.upload_ttl_seconds)
    jobs = _JobTable(config.workers, config.queue_limit)
    state = {"index": config.index, "index_error": None}

    if config.index is None and config.index_loader is not None:
        def load():
            try:
                state["index"] = config.index_loader()
            except Exception as e:
                state["index_error"] = str(e)

        threading.Thread(target=load, daemon=True).start()

    @app.exception_handler(_ApiError)
    async def api_error_handler(request: Request, exc: _ApiError):
        return _error(exc.status, exc.code, exc.message, exc.hint)

    def require_index() -> CorpusIndex:
        index = state["index"]
        if index is None:
            raise _ApiError(
                503, "index_not_ready",
                state["index_error"] or "corpus index is still building",
                "retry shortly",
            )
        return index

    @app.get("/api/volumes", response_model=VolumesResponse)
    def get_volumes():
        index = require_index()
        summary = index.volume_summary()
        totals: dict[str, int] = {}
        for entry in summary:
            totals[entry["species"]] = (
                totals.get(entry["species"], 0) + entry["slice_count"]
            )
        return VolumesResponse(
            volumes=[VolumeSummaryModel(**entry) for entry in summary],
            species_totals=totals,
        )

    @app.post("/api/preprocess", response_model=PreprocessResponse)
    def post_preprocess(req: PreprocessRequest):
        try:
            raw = base64.b64decode(req.image_b64, validate=True)
        except (binascii.Error, ValueError):
            raise _ApiError(400, "bad_payload", "image_b64 is not valid base64")
        if len(raw) > config.max_upload_bytes:
            raise _ApiError(
                413, "too_large",
                f"upload exceeds {config.max_upload_bytes} bytes",
            )
        try:
            image = decode_image(raw)
        except Exception:
            raise _ApiError(400, "undecodable", "payload is not a PNG or JPEG image")
        params = PreprocessParams(
            sensitivity=req.sensitivity, target_size=req.target_size
        )
        result = preprocess_pipeline(image, params)
        if result.image is None:
            if result.report.reason == "empty foreground":
                raise _ApiError(
                    422, "empty_foreground", "no foreground at this sensitivity",
                    "sensitivity too high",
                )
            raise _ApiError(
                422, "rejected", result.report.reason or "slice rejected",
                "try a different image",
            )
        upload_id = uploads.put(result.image, result.mask, result.report)
        return PreprocessResponse(
            upload_id=upload_id,
            preview_png_b64=base64.b64encode(encode_png(result.image)).decode(),
            mask_png_b64=base64.b64encode(encode_png(result.mask.bits)).decode(),
            report=PreprocessReportModel(**result.report.to_dict()),
        )

    @app.post("/api/classify", response_model=ClassifyResponse)
    def post_classify(req: ClassifyRequest):
        image, mask, _report = uploads.get(req.upload_id)
        ensemble = config.ensembles.get(req.ensemble_config_id)
        if ensemble is None:
            raise _ApiError(
                404, "unknown_ensemble",
                f"no ensemble config {req.ensemble_config_id!r}",
            )
        predictions: dict[str, ClassProbabilities] = {}
        for provider_id, provider in config.providers.items():
            try:
                predictions[provider_id] = provider.predict(image)
            except (ProviderUnavailable, ContractViolation):
                continue
        if not predictions:
            raise _ApiError(
                424, "no_providers", "all classifier providers are unavailable",
                "check provider configuration",
            )
        try:
            combined = combine_patch_ensemble(predictions, ensemble)
        except MissingProvider as e:
            raise _ApiError(
                424, "missing_provider", f"provider {e} did not produce a prediction",
            )
        k = min(req.top_k, len(ensemble.labels))
        ranked = top_k(combined, k, ensemble.labels)
        return ClassifyResponse(
            predictions=[
                RankedPrediction(label=l, confidence=c) for l, c in ranked
            ],
            provider_vectors={
                pid: p.probs.tolist() for pid, p in predictions.items()
            },
            combined_provider_id=combined.provider_id,
            labels=ensemble.labels,
        )

    @app.post("/api/match", response_model=JobHandleModel)
    def post_match(req: MatchRequest):
        index = require_index()
        image, mask, _report = uploads.get(req.upload_id)
        try:
            params = MatchParams(
                top_k_coarse=req.top_k_coarse,
                candidate_volume_ids=(
                    frozenset(req.candidate_volume_ids)
                    if req.candidate_volume_ids is not None
                    else None
                ),
                axes=tuple(req.axes) if req.axes is not None else None,
            )
        except ValueError as e:
            raise _ApiError(400, "bad_params", str(e))

        def run(job: _Job):
            try:
                results, timing = match_query(
                    image, mask, index, params, progress=job.advance
                )
            except (EmptyCorpus, EmptyForeground) as e:
                raise RuntimeError(str(e))
            rows = []
            for r in results[: req.top_n]:
                pos = np.nonzero(
                    (index.volume_ids == r.volume_id)
                    & (index.axes == r.axis)
                    & (index.indices == r.slice_index)
                )[0]
                thumb = ""
                if pos.size:
                    thumb = base64.b64encode(
                        encode_png(index.crops[int(pos[0])])
                    ).decode()
                rows.append(
                    MatchResultModel(**r.to_dict(), thumbnail_png_b64=thumb)
                )
            job.results = rows
            job.timing = timing.to_dict()
            if rows:
                best = rows[0]
                job.context = {
                    "volume_id": best.volume_id,
                    "species": index.volume_species.get(best.volume_id, ""),
                    "axis": best.axis,
                    "slice_index": best.slice_index,
                    "dims": list(index.volume_dims.get(best.volume_id, ())),
                }

        job = jobs.submit("match", run)
        return JobHandleModel(
            job_id=job.job_id, kind=job.kind, state=job.state, progress=job.progress
        )

    @app.get("/api/match/{job_id}", response_model=MatchStatusResponse)
    def get_match(job_id: str):
        job = jobs.get(job_id)
        return MatchStatusResponse(
            job_id=job.job_id,
            kind=job.kind,
            state=job.state,
            progress=job.progress,
            results=job.results,
            matched_context=job.context,
            error=job.error,
            timing=job.timing,
        )

    @app.get("/api/spec")
    def get_spec():
        return app.openapi()

    if config.static_dir:
        from pathlib import Path

        from fastapi.staticfiles import StaticFiles

        static = Path(config.static_dir)
        if static.is_dir():
            # mounted last so /api/* keeps priority
            app.mount("/", StaticFiles(directory=static, html=True), name="dashboard")

    return app
