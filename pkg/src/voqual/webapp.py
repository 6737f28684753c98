"""HTTP surface over the annotation service.

JSON errors use a problem object {"code", "message"}; audio is streamed as
the original WAV bytes. The rater UI's static build can be mounted at /.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .errors import ServiceError, VoqualError
from .pq import PerceptualQuality
from .service import AnnotationService

PathLike = Union[str, Path]


def create_app(service: AnnotationService,
               static_dir: Optional[PathLike] = None) -> FastAPI:
    app = FastAPI(title="voqual annotation service", docs_url=None,
                  redoc_url=None)

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": str(exc)})

    @app.exception_handler(VoqualError)
    async def _voqual_error(request: Request, exc: VoqualError):
        return JSONResponse(status_code=400,
                            content={"code": exc.code, "message": str(exc)})

    @app.get("/api/session/next")
    def session_next(rater: str = ""):
        assignment = service.next_clip(rater)
        if assignment is None:
            return {"status": "done"}
        return assignment

    @app.get("/api/session/progress")
    def session_progress(rater: str = ""):
        if not rater:
            raise ServiceError("rater id must be non-empty", code="bad-request")
        return service.progress(rater)

    @app.get("/api/clips/{clip_id}/audio")
    def clip_audio(clip_id: str):
        path = service.audio_path(clip_id)
        if not path.is_file():
            raise ServiceError(f"audio file missing for clip {clip_id!r}",
                               code="missing-audio", status=404)
        return FileResponse(path, media_type="audio/wav")

    @app.get("/api/anchors")
    def anchors():
        return [
            {"pq": a.pq.value, "pole": a.pole, "clip_id": a.clip_id,
             "caption": a.caption}
            for a in service.anchors
        ]

    @app.get("/api/anchors/{pq}/{pole}/audio")
    def anchor_audio(pq: str, pole: str):
        try:
            quality = PerceptualQuality(pq)
        except ValueError:
            raise ServiceError(f"unknown PQ {pq!r}", code="unknown-anchor",
                               status=404) from None
        anchor = service.anchor(quality, pole)
        path = service.audio_path(anchor.clip_id)
        if not path.is_file():
            raise ServiceError(f"audio file missing for anchor {pq}/{pole}",
                               code="missing-audio", status=404)
        return FileResponse(path, media_type="audio/wav")

    @app.post("/api/ratings")
    async def post_rating(request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            raise ServiceError("body must be JSON", code="bad-request") from None
        if not isinstance(payload, dict):
            raise ServiceError("body must be a JSON object", code="bad-request")
        return service.submit_rating(payload)

    @app.get("/api/stats/agreement")
    def stats_agreement():
        return service.live_agreement()

    @app.get("/api/export/ratings.csv")
    def export_ratings():
        return PlainTextResponse(service.export_csv(), media_type="text/csv")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app
