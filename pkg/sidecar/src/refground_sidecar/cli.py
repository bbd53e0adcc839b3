"""Serve the sidecar over HTTP."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import uvicorn

from .app import create_app
from .config import SidecarConfig


@click.command(name="refground-sidecar")
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              help="JSON config with model specs and pinned weight hashes.")
@click.option("--host", default=None, help="Override the configured bind host.")
@click.option("--port", default=None, type=int, help="Override the configured port.")
def serve(config_path: Path | None, host: str | None, port: int | None) -> None:
    """Run the scorer sidecar with the bundled deterministic toy models."""
    config = (
        SidecarConfig.from_json_file(config_path) if config_path else SidecarConfig()
    )
    uvicorn.run(
        create_app(config),
        host=host or config.host,
        port=port if port is not None else config.port,
        log_level="info",
    )


def run() -> None:
    sys.exit(serve())
