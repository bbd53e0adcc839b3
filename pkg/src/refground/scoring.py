"""Scorer backends and the region-scoring methods built on them.

A backend maps (image, text) queries to one raw logit per model in its
ensemble. Region scoring turns box proposals into visual prompts (crop / blur
/ red shade), queries the backend, and combines logits into a categorical
distribution over proposals.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import math
import struct
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .geometry import Box, area_fraction
from .imaging import BlurConfig, EmptyRegionError

log = logging.getLogger(__name__)

IPS_MODES = ("crop+blur", "crop", "blur", "max")


class BackendError(RuntimeError):
    """A scorer backend failed at the transport level."""


class AllMaskedError(ValueError):
    """Every proposal was masked out; no distribution can be formed."""


@dataclass(frozen=True)
class ModelInfo:
    name: str
    input_width: int
    input_height: int


@dataclass
class ScoreRequest:
    """One image-text scoring query.

    ``trace`` is opaque key/value metadata: real backends ignore it, the mock
    uses it to key its lookup table.
    """

    image: np.ndarray
    text: str
    trace: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("score request text must be non-empty")


@dataclass
class ScoreResponse:
    """Raw logits, one per model; ``error`` set instead when the query failed."""

    logits: list[float] = field(default_factory=list)
    error: str | None = None


@dataclass(frozen=True)
class PromptConfig:
    """Text prompt construction for the two scoring styles."""

    prefix: str = "a photo of"
    cpt_template: str = "{} is in red color."

    def __post_init__(self) -> None:
        if self.cpt_template.count("{}") != 1:
            raise ValueError("cpt_template must contain exactly one {} placeholder")

    def full_prompt(self, text: str) -> str:
        return f"{self.prefix} {text}" if self.prefix else text

    def cpt_prompt(self, expression: str) -> str:
        return self.cpt_template.replace("{}", expression)


class ScorerBackend(ABC):
    """Deterministic image-text scorer: identical requests yield identical logits."""

    name: str = "backend"

    @property
    @abstractmethod
    def models(self) -> list[ModelInfo]:
        ...

    @abstractmethod
    def score(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        ...

    def info_dict(self) -> dict:
        return {
            "name": self.name,
            "models": [
                {"name": m.name, "input_width": m.input_width, "input_height": m.input_height}
                for m in self.models
            ],
        }


def normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


def _trace_keys(trace: dict[str, str]) -> list[str]:
    """Region keys to try in order, most specific first.

    With instance "e7", region "3", variant "crop":
    "e7/3:crop", "e7/3", "3:crop", "3".
    """
    region = trace.get("region", "")
    instance = trace.get("instance", "")
    variant = trace.get("variant", "")
    bases = [f"{instance}/{region}", region] if instance else [region]
    keys = []
    for base in bases:
        if variant:
            keys.append(f"{base}:{variant}")
        keys.append(base)
    return keys


class MockBackend(ScorerBackend):
    """Table-driven offline scorer for byte-deterministic tests.

    The table maps (region key, normalized text) to a logit (or one logit per
    model); unknown keys score ``default``. Region keys are matched most
    specific first: "instance/region:variant", then "instance/region" (the
    instance prefix is dropped when requests carry no instance id). Every
    request is appended to ``request_log``.
    """

    def __init__(
        self,
        table: dict[tuple[str, str], float | list[float]] | None = None,
        *,
        default: float = 0.0,
        n_models: int = 1,
        name: str = "mock",
    ) -> None:
        if n_models < 1:
            raise ValueError("backend needs at least one model")
        self.name = name
        self.default = float(default)
        self.n_models = n_models
        self.table = dict(table or {})
        self.request_log: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_entries(cls, entries: list[dict], **kwargs) -> "MockBackend":
        """Build from JSON-style entries: {"region": str, "text": str, "logits": [...]}"""
        table: dict[tuple[str, str], float | list[float]] = {}
        n_models = kwargs.pop("n_models", None)
        for e in entries:
            logits = e["logits"] if "logits" in e else e["logit"]
            table[(e["region"], normalize_text(e["text"]))] = logits
            if isinstance(logits, list):
                n_models = n_models or len(logits)
        return cls(table, n_models=n_models or 1, **kwargs)

    @property
    def models(self) -> list[ModelInfo]:
        return [ModelInfo(f"mock-{i}", 224, 224) for i in range(self.n_models)]

    def _lookup(self, trace: dict[str, str], text: str) -> list[float]:
        for key in _trace_keys(trace):
            if (key, text) in self.table:
                value = self.table[(key, text)]
                if isinstance(value, (int, float)):
                    return [float(value)] * self.n_models
                if len(value) != self.n_models:
                    raise ValueError(f"table entry for {key!r} has {len(value)} logits, "
                                     f"backend has {self.n_models} models")
                return [float(v) for v in value]
        return [self.default] * self.n_models

    def score(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        responses = []
        for req in requests:
            text = normalize_text(req.text)
            with self._lock:
                self.request_log.append((_trace_keys(req.trace)[0], text))
            responses.append(ScoreResponse(logits=self._lookup(req.trace, text)))
        return responses

    def reset_log(self) -> None:
        with self._lock:
            self.request_log.clear()


class RandomLogitBackend(ScorerBackend):
    """Seeded hash scorer: uniform logits in [0, 1), stable per request content."""

    def __init__(self, seed: int = 0, *, n_models: int = 1, name: str = "random") -> None:
        self.seed = seed
        self.n_models = n_models
        self.name = name

    @property
    def models(self) -> list[ModelInfo]:
        return [ModelInfo(f"random-{i}", 224, 224) for i in range(self.n_models)]

    def score(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        responses = []
        for req in requests:
            logits = []
            for m in range(self.n_models):
                h = hashlib.blake2b(digest_size=8)
                h.update(struct.pack("<qq", self.seed, m))
                h.update(repr(req.image.shape).encode())
                h.update(np.ascontiguousarray(req.image).tobytes())
                h.update(req.text.encode("utf-8"))
                value = int.from_bytes(h.digest(), "little") / 2.0**64
                logits.append(value)
            responses.append(ScoreResponse(logits=logits))
        return responses


class RemoteBackend(ScorerBackend):
    """Client for the HTTP wire protocol: POST /score, GET /info.

    Images are sent as base64 PNG at full resolution; the server resizes to
    each model's declared input. Retries are off: determinism over
    availability. Per-request errors from the server become error responses;
    transport failures raise BackendError.
    """

    def __init__(self, url: str, *, timeout: float = 60.0, max_batch_size: int = 16) -> None:
        import requests

        self.url = url.rstrip("/")
        self.timeout = timeout
        self.max_batch_size = max_batch_size
        self._session = requests.Session()
        self._info: dict | None = None

    def _fetch_info(self) -> dict:
        if self._info is None:
            import requests

            try:
                resp = self._session.get(f"{self.url}/info", timeout=self.timeout)
                resp.raise_for_status()
                self._info = resp.json()
            except requests.RequestException as exc:
                raise BackendError(f"cannot reach scorer at {self.url}: {exc}") from exc
        return self._info

    @property
    def name(self) -> str:  # type: ignore[override]
        return str(self._fetch_info().get("name", "remote"))

    @property
    def models(self) -> list[ModelInfo]:
        return [
            ModelInfo(m["name"], int(m["input_width"]), int(m["input_height"]))
            for m in self._fetch_info()["models"]
        ]

    def score(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        import requests as requests_lib

        n_models = len(self.models)
        out: list[ScoreResponse] = []
        for start in range(0, len(requests), self.max_batch_size):
            batch = requests[start:start + self.max_batch_size]
            payload = {
                "requests": [
                    {
                        "id": f"r{start + i}",
                        "image_png_base64": base64.b64encode(
                            imaging.encode_png(req.image)
                        ).decode("ascii"),
                        "text": req.text,
                    }
                    for i, req in enumerate(batch)
                ]
            }
            try:
                resp = self._session.post(
                    f"{self.url}/score", json=payload, timeout=self.timeout
                )
                resp.raise_for_status()
                body = resp.json()
            except requests_lib.RequestException as exc:
                raise BackendError(f"score request failed: {exc}") from exc
            by_id = {r["id"]: r for r in body.get("responses", [])}
            for i in range(len(batch)):
                entry = by_id.get(f"r{start + i}")
                if entry is None:
                    out.append(ScoreResponse(error="missing response"))
                elif "error" in entry:
                    out.append(ScoreResponse(error=str(entry["error"])))
                else:
                    logits = [float(v) for v in entry["logits"]]
                    if len(logits) != n_models:
                        out.append(ScoreResponse(error="logit count mismatch"))
                    else:
                        out.append(ScoreResponse(logits=logits))
        return out


def build_isolations(
    img: np.ndarray,
    proposals: list[Box],
    blur: BlurConfig,
    *,
    need_crop: bool = True,
    need_blur: bool = True,
) -> list[tuple[np.ndarray | None, np.ndarray | None] | None]:
    """Precompute (crop, blur) visual prompts per proposal; None for empty boxes.

    The full-image blur runs once and is reused across proposals.
    """
    img = imaging.validate_image(img)
    blurred_full = imaging.gaussian_blur(img, blur) if need_blur else None
    isolations: list[tuple[np.ndarray | None, np.ndarray | None] | None] = []
    for box in proposals:
        try:
            crop = imaging.crop_isolate(img, box) if need_crop else None
            blur_iso = (
                imaging.blur_isolate(img, box, blur, blurred=blurred_full)
                if need_blur
                else None
            )
            isolations.append((crop, blur_iso))
        except EmptyRegionError:
            isolations.append(None)
    return isolations


def ips_scores(
    img: np.ndarray,
    proposals: list[Box],
    text: str,
    backend: ScorerBackend,
    prompts: PromptConfig,
    blur: BlurConfig,
    *,
    mode: str = "crop+blur",
    region_ids: list[str] | None = None,
    trace_extra: dict[str, str] | None = None,
    isolations: list[tuple[np.ndarray | None, np.ndarray | None] | None] | None = None,
) -> list[list[float]]:
    """Isolated proposal scoring: one logit list (per model) per proposal.

    Each proposal is scored through its crop isolation and its blur isolation
    against the prefixed text; ``mode`` selects crop-only, blur-only, their
    sum (default), or their elementwise max. Empty or failed proposals score
    -inf so they are never selected.
    """
    if mode not in IPS_MODES:
        raise ValueError(f"mode must be one of {IPS_MODES}, got {mode!r}")
    if not proposals:
        raise ValueError("at least one proposal required")
    if region_ids is None:
        region_ids = [str(i) for i in range(len(proposals))]
    need_crop = mode != "blur"
    need_blur = mode != "crop"
    if isolations is None:
        isolations = build_isolations(img, proposals, blur,
                                      need_crop=need_crop, need_blur=need_blur)

    prompt = prompts.full_prompt(text)
    requests: list[ScoreRequest] = []
    slots: list[dict[str, int]] = []  # per proposal: variant -> request index
    for p, iso in enumerate(isolations):
        slot: dict[str, int] = {}
        if iso is not None:
            crop, blur_iso = iso
            for variant, image in (("crop", crop), ("blur", blur_iso)):
                if (variant == "crop" and need_crop) or (variant == "blur" and need_blur):
                    if image is None:
                        raise ValueError(f"isolations missing {variant} images for mode {mode!r}")
                    trace = {"region": region_ids[p], "variant": variant}
                    trace.update(trace_extra or {})
                    slot[variant] = len(requests)
                    requests.append(ScoreRequest(image=image, text=prompt, trace=trace))
        slots.append(slot)

    responses = backend.score(requests) if requests else []
    n_models = len(backend.models)
    neg_inf = [-math.inf] * n_models

    def variant_logits(slot: dict[str, int], variant: str) -> list[float] | None:
        resp = responses[slot[variant]]
        if resp.error is not None:
            log.warning("scoring %s failed: %s", variant, resp.error)
            return None
        return resp.logits

    scores: list[list[float]] = []
    for p, slot in enumerate(slots):
        if not slot:
            log.warning("proposal %s rasterizes to an empty region; masking", region_ids[p])
            scores.append(list(neg_inf))
            continue
        per_variant: dict[str, list[float]] = {}
        failed = False
        for variant in slot:
            logits = variant_logits(slot, variant)
            if logits is None:
                failed = True
                break
            per_variant[variant] = logits
        if failed:
            scores.append(list(neg_inf))
        elif mode == "crop":
            scores.append(per_variant["crop"])
        elif mode == "blur":
            scores.append(per_variant["blur"])
        elif mode == "max":
            scores.append([max(c, b) for c, b in zip(per_variant["crop"], per_variant["blur"])])
        else:
            scores.append([c + b for c, b in zip(per_variant["crop"], per_variant["blur"])])
    return scores


def cpt_scores(
    img: np.ndarray,
    proposals: list[Box],
    text: str,
    backend: ScorerBackend,
    prompts: PromptConfig,
    *,
    region_ids: list[str] | None = None,
    trace_extra: dict[str, str] | None = None,
) -> list[list[float]]:
    """Red-shading scores: each proposal shaded red in a copy of the full image."""
    if not proposals:
        raise ValueError("at least one proposal required")
    img = imaging.validate_image(img)
    if region_ids is None:
        region_ids = [str(i) for i in range(len(proposals))]
    prompt = prompts.cpt_prompt(text)
    n_models = len(backend.models)

    requests: list[ScoreRequest] = []
    request_of: list[int | None] = []
    for p, box in enumerate(proposals):
        try:
            shaded = imaging.shade_red(img, box)
        except EmptyRegionError:
            log.warning("proposal %s rasterizes to an empty region; masking", region_ids[p])
            request_of.append(None)
            continue
        trace = {"region": region_ids[p], "variant": "shade"}
        trace.update(trace_extra or {})
        request_of.append(len(requests))
        requests.append(ScoreRequest(image=shaded, text=prompt, trace=trace))

    responses = backend.score(requests) if requests else []
    scores: list[list[float]] = []
    for p, ridx in enumerate(request_of):
        if ridx is None:
            scores.append([-math.inf] * n_models)
            continue
        resp = responses[ridx]
        if resp.error is not None:
            log.warning("scoring shade failed: %s", resp.error)
            scores.append([-math.inf] * n_models)
        else:
            scores.append(resp.logits)
    return scores


def ensemble_softmax(per_proposal_logits: list[list[float]]) -> np.ndarray:
    """Sum logits across models per proposal, then take a stable softmax.

    -inf entries (masked proposals) map to probability 0. Raises
    AllMaskedError when every proposal is masked.
    """
    arr = np.asarray(per_proposal_logits, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("expected a (proposals, models) logit array")
    if np.any(np.isnan(arr)) or np.any(arr == np.inf):
        raise ValueError("logits must be finite or -inf")
    combined = arr.sum(axis=1)
    finite = np.isfinite(combined)
    if not finite.any():
        raise AllMaskedError("every proposal is masked")
    shifted = combined - combined[finite].max()
    exp = np.where(finite, np.exp(np.where(finite, shifted, 0.0)), 0.0)
    return exp / exp.sum()


def filter_size_prior(
    proposals: list[Box],
    image_w: float,
    image_h: float,
    threshold: float = 0.05,
) -> list[int]:
    """Indices of proposals covering at least ``threshold`` of the image area.

    Falls back to keeping everything when the filter would empty the set.
    """
    kept = [
        i for i, b in enumerate(proposals)
        if area_fraction(b, image_w, image_h) >= threshold
    ]
    return kept if kept else list(range(len(proposals)))
