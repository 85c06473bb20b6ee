"""HTTP extraction service.

Endpoints (all JSON unless noted, coordinates in cell units):

- ``POST /images`` — raw PNG body; responds with the image id and kicks
  off feature precomputation in a worker thread.
- ``GET /images/{id}/preview`` — PNG render of the stored image.
- ``GET /images/{id}/orientation?x=..&y=..`` — raw and enhanced
  orientation-score profiles plus detected peak bins for one pixel
  (``202`` with code ``precompute-pending`` while features are building).
- ``POST /extract`` — ordered point list and config overrides; returns
  the path, its traversed-cell rasterization, and diagnostics.

Errors are ``{"code": ..., "message": ...}`` with matching HTTP status.
Feature bundles are immutable and shared read-only across requests.
"""

from __future__ import annotations

import io
import secrets
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import __version__
from .errors import (
    ConfigurationError,
    InvalidInputError,
    InvalidSeedError,
    MaskTooTightError,
    TubetraceError,
    UnreachableTargetError,
)
from .grid import ScalarImage, save_image
from .pipeline import (
    ExtractionConfig,
    FeatureBundle,
    compute_features,
    extract_centerline_afc,
    extract_radius_lifted_rc,
    rasterize_path,
)

__all__ = ["create_app"]

_STATUS = {
    InvalidInputError.code: 422,
    InvalidSeedError.code: 422,
    ConfigurationError.code: 422,
    UnreachableTargetError.code: 409,
    MaskTooTightError.code: 409,
    "not-found": 404,
    "precompute-pending": 202,
    "precompute-failed": 500,
}


def _error(code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS.get(code, 400),
        content={"code": code, "message": message},
    )


@dataclass
class _ImageEntry:
    image: ScalarImage
    config: ExtractionConfig
    future: Future
    lock: threading.Lock = field(default_factory=threading.Lock)


class _Store:
    def __init__(self, workers: int = 2):
        self.images: dict[str, _ImageEntry] = {}
        self.pool = ThreadPoolExecutor(max_workers=workers)

    def add(self, image: ScalarImage, config: ExtractionConfig) -> str:
        image_id = "img_" + secrets.token_hex(6)
        future = self.pool.submit(compute_features, image, config)
        self.images[image_id] = _ImageEntry(image, config, future)
        return image_id

    def entry(self, image_id: str) -> _ImageEntry | None:
        return self.images.get(image_id)

    def features(self, entry: _ImageEntry, wait: bool) -> FeatureBundle | None:
        if not wait and not entry.future.done():
            return None
        return entry.future.result()


def create_app(config: ExtractionConfig | None = None, workers: int = 2) -> FastAPI:
    """Build the service application (one feature store per app)."""
    base_config = config or ExtractionConfig()
    app = FastAPI(title="tubetrace", version=__version__)
    store = _Store(workers=workers)
    app.state.store = store

    @app.exception_handler(TubetraceError)
    async def _domain_error(_request, exc: TubetraceError):
        return _error(exc.code, str(exc))

    @app.post("/images")
    async def upload_image(request: Request):
        body = await request.body()
        if not body:
            return _error("invalid-input", "empty request body")
        try:
            from PIL import Image

            pil = Image.open(io.BytesIO(body))
            pil.load()
        except Exception:
            return _error("invalid-input", "body is not a decodable image")
        if pil.mode in ("RGB", "RGBA"):
            arr = np.asarray(pil, dtype=np.float64)[..., 1] / 255.0
        elif pil.mode in ("I;16", "I;16B", "I;16L"):
            arr = np.asarray(pil, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(pil.convert("L"), dtype=np.float64) / 255.0
        image = ScalarImage(arr)
        image_id = store.add(image, base_config)
        return {
            "id": image_id,
            "width": image.width,
            "height": image.height,
        }

    @app.get("/images/{image_id}/preview")
    def preview(image_id: str):
        entry = store.entry(image_id)
        if entry is None:
            return _error("not-found", f"unknown image {image_id}")
        buf = io.BytesIO()
        save_image(entry.image, buf)
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/images/{image_id}/orientation")
    def orientation(image_id: str, x: int, y: int):
        entry = store.entry(image_id)
        if entry is None:
            return _error("not-found", f"unknown image {image_id}")
        if not (0 <= x < entry.image.width and 0 <= y < entry.image.height):
            return _error("invalid-input", "pixel outside the image")
        features = store.features(entry, wait=False)
        if features is None:
            return _error("precompute-pending", "features are still building")
        return {
            "x": x,
            "y": y,
            "angles": features.enhanced.angles.tolist(),
            "raw": features.raw.values[y, x].tolist(),
            "enhanced": features.enhanced.values[y, x].tolist(),
            "peaks": [int(b) for b in features.peaks.bins_at(x, y)],
        }

    @app.post("/extract")
    async def extract(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error("invalid-input", "body must be JSON")
        image_id = payload.get("image_id")
        entry = store.entry(image_id) if image_id else None
        if entry is None:
            return _error("not-found", f"unknown image {image_id!r}")
        points = payload.get("points")
        if not isinstance(points, list) or len(points) < 2:
            return _error("invalid-input", "need an ordered list of >= 2 points")
        overrides = payload.get("config") or {}
        try:
            config = entry.config.replace(**overrides) if overrides else entry.config
        except (ConfigurationError, TypeError) as exc:
            return _error("configuration-error", str(exc))
        features = store.features(entry, wait=True)
        if config is not entry.config:
            # overrides invalidate the cached feature bundle only when they
            # touch the feature stages
            feature_keys = {
                "sigma1", "sigma2", "w", "n_theta", "peak_window", "eps1",
                "eps2", "alpha", "xi_ident", "oof_sigma", "r_min", "r_max",
                "n_r", "invert",
            }
            if any(
                getattr(config, k) != getattr(entry.config, k)
                for k in feature_keys
            ):
                features = compute_features(entry.image, config)

        result = extract_centerline_afc(entry.image, points, config, features)
        radius_payload = None
        if payload.get("radius_lift"):
            rc = extract_radius_lifted_rc(
                entry.image, result.path, points[0], points[-1], config, features
            )
            radius_payload = [
                [round(float(v), 4) for v in row] for row in rc.path.as_array()
            ]
        cells = rasterize_path(result.path.points)
        return {
            "path": [[round(float(x), 4), round(float(y), 4)]
                     for x, y in result.path.points],
            "radius_path": radius_payload,
            "cells": [[int(cx), int(cy)] for cx, cy in cells],
            "diagnostics": {
                "mode": result.mode,
                "timings": {k: round(v, 4) for k, v in result.timings.items()},
                **{k: v for k, v in result.diagnostics.items() if k != "segments"},
                "segments": result.diagnostics.get("segments", []),
            },
        }

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "images": len(store.images)}

    return app


app = create_app()
