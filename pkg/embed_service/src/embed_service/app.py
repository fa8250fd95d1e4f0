"""FastAPI app for the embedding sidecar.

POST /embed {"texts": [...]} -> {"vectors": [[...], ...], "dim": D, "model": NAME}
GET  /health -> {"status": "ok", "model": NAME, "dim": D}

Texts longer than the configured limit are truncated and reported in a
response `warnings` field. Error responses carry {"error": "..."} with the
HTTP status: 400 for bad requests, 503 when the encoder failed to load.
"""
from __future__ import annotations

import os
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .encoders import DEFAULT_MODEL, Encoder, EncoderError, load_encoder

DEFAULT_MAX_CHARS = 10_000


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(
    encoder: Optional[Encoder] = None,
    model_spec: Optional[str] = None,
    max_chars: int = DEFAULT_MAX_CHARS,
) -> FastAPI:
    """Build the service; the encoder loads eagerly so /health is truthful.

    A load failure keeps the app serving 503s instead of crashing, so
    orchestration can probe /health while the model directory heals.
    """
    app = FastAPI(title="embed-service")
    load_error: Optional[str] = None
    if encoder is None:
        spec = model_spec or os.environ.get("EMBED_MODEL", DEFAULT_MODEL)
        try:
            encoder = load_encoder(spec)
        except EncoderError as exc:
            load_error = str(exc)

    @app.get("/health")
    def health():
        if encoder is None:
            return _error(503, f"encoder unavailable: {load_error}")
        return {"status": "ok", "model": encoder.name, "dim": encoder.dim}

    @app.post("/embed")
    async def embed(request: Request):
        if encoder is None:
            return _error(503, f"encoder unavailable: {load_error}")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body must be JSON")
        if not isinstance(body, dict) or "texts" not in body:
            return _error(400, 'request body must be {"texts": [...]}')
        texts = body["texts"]
        if not isinstance(texts, list) or not texts:
            return _error(400, "texts must be a nonempty list")
        if not all(isinstance(t, str) and t.strip() for t in texts):
            return _error(400, "every text must be a nonempty string")

        warnings = []
        prepared = []
        for i, text in enumerate(texts):
            if len(text) > max_chars:
                warnings.append(f"text {i} truncated to {max_chars} chars")
                text = text[:max_chars]
            prepared.append(text)

        vectors = encoder.encode(prepared)
        response = {
            "vectors": vectors.tolist(),
            "dim": encoder.dim,
            "model": encoder.name,
        }
        if warnings:
            response["warnings"] = warnings
        return response

    return app
