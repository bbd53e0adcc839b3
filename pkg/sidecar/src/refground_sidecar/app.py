"""FastAPI application implementing the scorer wire protocol.

Endpoints: GET /info, POST /score, plus the POST /parse and POST /gradcam
extensions. Malformed payloads return HTTP 400; per-request image decode
failures come back as error objects so one bad image never aborts a batch.
"""

from __future__ import annotations

import base64
import binascii
import io
import logging

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field

from .config import SidecarConfig
from .model import ToyScorer, region_score

log = logging.getLogger(__name__)


class ScoreItem(BaseModel):
    id: str = Field(min_length=1)
    image_png_base64: str = Field(min_length=1)
    text: str = Field(min_length=1)


class ScoreBatch(BaseModel):
    requests: list[ScoreItem] = Field(min_length=1)


class ParseBody(BaseModel):
    expression: str


class GradcamBody(BaseModel):
    image_png_base64: str = Field(min_length=1)
    text: str = Field(min_length=1)
    proposals: list[list[float]] = Field(min_length=1)
    alpha: float | None = None


def _decode_image(payload: str) -> Image.Image:
    try:
        raw = base64.b64decode(payload, validate=True)
        image = Image.open(io.BytesIO(raw))
        image.load()
        return image
    except (binascii.Error, UnidentifiedImageError, OSError, ValueError) as exc:
        raise ValueError(f"image decode failed: {exc}") from exc


def _load_spacy(model_name: str):
    try:
        import spacy
    except ImportError:
        return None
    try:
        return spacy.load(model_name)
    except OSError:
        return None


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    config = config or SidecarConfig()
    scorers = [ToyScorer(spec, device=config.device) for spec in config.models]
    app = FastAPI(title="refground-sidecar")
    app.state.config = config
    app.state.parser = None
    app.state.parser_checked = False

    @app.exception_handler(RequestValidationError)
    async def malformed(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/info")
    def info() -> dict:
        return {
            "name": config.name,
            "models": [
                {
                    "name": s.spec.name,
                    "input_width": s.spec.input_width,
                    "input_height": s.spec.input_height,
                }
                for s in scorers
            ],
        }

    @app.post("/score")
    def score(batch: ScoreBatch) -> dict:
        responses = []
        for item in batch.requests:
            try:
                image = _decode_image(item.image_png_base64)
            except ValueError as exc:
                log.warning("request %s: %s", item.id, exc)
                responses.append({"id": item.id, "error": str(exc)})
                continue
            logits = [scorer.logit(image, item.text) for scorer in scorers]
            responses.append({"id": item.id, "logits": logits})
        return {"responses": responses}

    @app.post("/gradcam", response_model=None)
    def gradcam(body: GradcamBody) -> JSONResponse | dict:
        for box in body.proposals:
            if len(box) != 4:
                return JSONResponse(
                    status_code=400,
                    content={"detail": "proposals must be [x1, y1, x2, y2] boxes"},
                )
        try:
            image = _decode_image(body.image_png_base64)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        alpha = config.gradcam_alpha if body.alpha is None else body.alpha
        maps = [scorer.saliency(image, body.text) for scorer in scorers]
        scores = [
            [region_score(m, tuple(box), alpha) for m in maps]
            for box in body.proposals
        ]
        return {"scores": scores, "alpha": alpha}

    @app.post("/parse", response_model=None)
    def parse(body: ParseBody) -> JSONResponse | dict:
        if not body.expression.strip():
            return JSONResponse(
                status_code=400, content={"detail": "expression must be non-empty"}
            )
        if not app.state.parser_checked:
            app.state.parser = _load_spacy(config.parser_model)
            app.state.parser_checked = True
        nlp = app.state.parser
        if nlp is None:
            return JSONResponse(
                status_code=501,
                content={
                    "detail": f"dependency parser {config.parser_model!r} is not "
                    "installed on this sidecar"
                },
            )
        doc = nlp(body.expression)
        tokens = [tok.text for tok in doc]
        heads = [-1 if tok.head is tok else tok.head.i for tok in doc]
        chunks = [
            {"start": chunk.start, "end": chunk.end, "head": chunk.root.i}
            for chunk in doc.noun_chunks
        ]
        return {"tokens": tokens, "heads": heads, "noun_chunks": chunks}

    return app
