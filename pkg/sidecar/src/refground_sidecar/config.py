"""Sidecar configuration with content-hash pinning of model weights."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

DEFAULT_GRADCAM_ALPHA = 0.5


@dataclass(frozen=True)
class ModelSpec:
    """One scorer model: its weights file and declared input resolution."""

    name: str
    weights: str  # path, or bare filename resolved against the bundled weights
    sha256: str
    input_width: int
    input_height: int
    patch: int = 8
    beta: float = 20.0  # logit scale on the cosine similarity

    def resolve_weights(self) -> Path:
        path = Path(self.weights)
        if path.is_file():
            return path
        bundled = resources.files("refground_sidecar") / "weights" / self.weights
        with resources.as_file(bundled) as p:
            if p.is_file():
                return p
        raise FileNotFoundError(f"weights file not found: {self.weights}")

    def verified_bytes(self) -> bytes:
        """Weight bytes, refused when the content hash does not match the pin."""
        blob = self.resolve_weights().read_bytes()
        digest = hashlib.sha256(blob).hexdigest()
        if digest != self.sha256:
            raise RuntimeError(
                f"weights hash mismatch for {self.name}: expected {self.sha256}, "
                f"got {digest}"
            )
        return blob


@dataclass
class SidecarConfig:
    models: list[ModelSpec] = field(default_factory=lambda: list(DEFAULT_MODELS))
    name: str = "toy-sidecar"
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8233
    gradcam_alpha: float = DEFAULT_GRADCAM_ALPHA
    parser_model: str = "en_core_web_sm"

    @classmethod
    def from_json_file(cls, path: str | Path) -> SidecarConfig:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        models = [ModelSpec(**m) for m in data.pop("models", [])]
        cfg = cls(**data)
        if models:
            cfg.models = models
        return cfg


# Bundled deterministic toy models (generated by tools/make_weights.py).
DEFAULT_MODELS = (
    ModelSpec(
        name="toy-64",
        weights="toy-64.npz",
        sha256="8e5116df8bd9d63c3459a25ac83305dc7b650026505177f039339ae1f96aa8a8",
        input_width=64,
        input_height=64,
    ),
    ModelSpec(
        name="toy-48",
        weights="toy-48.npz",
        sha256="ecc003f9ed6492caaadc0bb4bb0918a942bf3298dfcd4ef7a05bfbcd5ea9b374",
        input_width=48,
        input_height=48,
    ),
)
