"""HTTP scorer sidecar: deterministic toy models behind the shared wire protocol."""

__version__ = "0.1.0"

from .app import create_app
from .config import ModelSpec, SidecarConfig
from .model import ToyScorer, region_score

__all__ = ["create_app", "SidecarConfig", "ModelSpec", "ToyScorer", "region_score", "__version__"]
