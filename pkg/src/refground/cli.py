"""Command-line surface: ground one instance, evaluate manifests, run probes."""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, harness, imaging, probe
from .expression import (
    ExternalParse,
    NoNounChunksError,
    ParseSchemaError,
    extract_tree,
    extract_tree_heuristic,
)
from .geometry import Box
from .harness import ManifestError
from .imaging import BlurConfig
from .pipeline import GroundingConfig, GroundingInstance, GroundingMethod, ground
from .scoring import (
    BackendError,
    MockBackend,
    PromptConfig,
    RandomLogitBackend,
    RemoteBackend,
)

REMOTE_URL_ENV = "REFGROUND_REMOTE_URL"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

_DATA_ERRORS = (
    ManifestError,
    ParseSchemaError,
    NoNounChunksError,
    json.JSONDecodeError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
)

log = logging.getLogger(__name__)


def _backend_options(fn):
    fn = click.option("--backend", "backend_kind", default="mock",
                      type=click.Choice(["mock", "mock-oracle", "random", "remote"]),
                      show_default=True, help="Scorer backend.")(fn)
    fn = click.option("--mock-table", type=click.Path(path_type=Path),
                      help="JSON logit table for the mock backend.")(fn)
    fn = click.option("--models", "n_models", default=1, show_default=True,
                      help="Model count for mock/random backends.")(fn)
    fn = click.option("--remote-url", default=None,
                      help=f"Scorer URL (or set {REMOTE_URL_ENV}).")(fn)
    return fn


def _config_options(fn):
    fn = click.option("--sigma", default=100.0, show_default=True,
                      help="Gaussian blur standard deviation.")(fn)
    fn = click.option("--prefix", default="a photo of", show_default=True,
                      help="Text prompt prefix.")(fn)
    fn = click.option("--cpt-template", default="{} is in red color.",
                      show_default=True, help="Red-shade prompt template.")(fn)
    fn = click.option("--ips-mode", default="crop+blur", show_default=True,
                      type=click.Choice(["crop+blur", "crop", "blur", "max"]),
                      help="Isolation combination mode.")(fn)
    fn = click.option("--size-prior", "size_prior", default=None, type=float,
                      help="Keep only proposals covering at least this image fraction.")(fn)
    return fn


def _make_backend(backend_kind: str, mock_table: Path | None, n_models: int,
                  remote_url: str | None, seed: int = 0):
    if backend_kind == "remote":
        url = remote_url or os.environ.get(REMOTE_URL_ENV)
        if not url:
            raise click.UsageError(
                f"--backend remote needs --remote-url or {REMOTE_URL_ENV}"
            )
        return RemoteBackend(url)
    if backend_kind == "random":
        return RandomLogitBackend(seed=seed, n_models=n_models)
    if backend_kind == "mock-oracle":
        return None  # constructed later from generated tasks
    if mock_table is not None:
        entries = json.loads(Path(mock_table).read_text(encoding="utf-8"))
        return MockBackend.from_entries(entries, n_models=n_models)
    return MockBackend(n_models=n_models)


def _make_config(sigma: float, prefix: str, cpt_template: str, ips_mode: str,
                 size_prior: float | None) -> GroundingConfig:
    return GroundingConfig(
        prompts=PromptConfig(prefix=prefix, cpt_template=cpt_template),
        blur=BlurConfig(sigma=sigma),
        ips_mode=ips_mode,
        size_prior_threshold=size_prior,
    )


def _config_echo(config: GroundingConfig, extra: dict | None = None) -> dict:
    echo = {
        "version": __version__,
        "sigma": config.blur.sigma,
        "prompt_prefix": config.prompts.prefix,
        "cpt_template": config.prompts.cpt_template,
        "ips_mode": config.ips_mode,
        "size_prior_threshold": config.size_prior_threshold,
    }
    echo.update(extra or {})
    return echo


@click.group(name="refground")
@click.version_option(version=__version__, prog_name="refground")
def cli() -> None:
    """Zero-shot referring-expression grounding over box proposals."""


@cli.command("ground")
@click.argument("image", type=click.Path(path_type=Path))
@click.argument("expression")
@click.option("--proposals", "proposals_path", required=True,
              type=click.Path(path_type=Path),
              help="JSON file: list of [x1, y1, x2, y2] boxes.")
@click.option("--parse", "parse_path", type=click.Path(path_type=Path),
              help="External dependency parse JSON.")
@click.option("--method", default="relational", show_default=True,
              type=click.Choice([m.value for m in GroundingMethod]))
@click.option("--dump-tree", is_flag=True, help="Print the semantic tree JSON.")
@click.option("--dump-dists", is_flag=True, help="Print per-node distributions.")
@click.option("--dump-images", type=click.Path(path_type=Path),
              help="Write the transformed proposal images as PNGs here.")
@click.option("--out", "out_path", type=click.Path(path_type=Path),
              help="Also write the result JSON to this path.")
@click.option("--seed", default=0, show_default=True)
@_backend_options
@_config_options
def cmd_ground(image, expression, proposals_path, parse_path, method, dump_tree,
               dump_dists, dump_images, out_path, seed, backend_kind, mock_table,
               n_models, remote_url, sigma, prefix, cpt_template, ips_mode,
               size_prior) -> None:
    """Ground EXPRESSION in IMAGE against a proposals file."""
    raw = json.loads(Path(proposals_path).read_text(encoding="utf-8"))
    if isinstance(raw, dict):
        raw = raw["proposals"]
    proposals = [Box(*(float(v) for v in b)) for b in raw]
    parse = None
    if parse_path is not None:
        parse = ExternalParse.from_json_dict(
            json.loads(Path(parse_path).read_text(encoding="utf-8"))
        )
    backend = _make_backend(backend_kind, mock_table, n_models, remote_url, seed)
    if backend is None:
        raise click.UsageError("mock-oracle is only available for `probe`")
    config = _make_config(sigma, prefix, cpt_template, ips_mode, size_prior)
    instance = GroundingInstance(
        image=str(image), expression=expression, proposals=proposals,
        external_parse=parse, id=Path(image).stem,
    )
    result = ground(instance, GroundingMethod(method), backend, config)

    if dump_images:
        out_dir = Path(dump_images)
        out_dir.mkdir(parents=True, exist_ok=True)
        pixels = instance.load_pixels()
        for i, box in enumerate(proposals):
            try:
                imaging.save_png(imaging.crop_isolate(pixels, box), out_dir / f"crop-{i}.png")
                imaging.save_png(
                    imaging.blur_isolate(pixels, box, config.blur), out_dir / f"blur-{i}.png"
                )
                imaging.save_png(imaging.shade_red(pixels, box), out_dir / f"shade-{i}.png")
            except imaging.EmptyRegionError:
                log.warning("proposal %d is empty; skipping dumps", i)

    payload = {
        "chosen_index": result.chosen_index,
        "chosen_box": list(proposals[result.chosen_index].as_tuple()),
        "distribution": [float(p) for p in result.distribution],
        "method": result.method,
        "config": _config_echo(config, {"backend": backend.info_dict(), "seed": seed}),
    }
    if dump_tree and result.tree is not None:
        payload["tree"] = result.tree.to_json_dict()
    if dump_dists and result.node_distributions is not None:
        payload["node_distributions"] = [
            [float(p) for p in dist] for dist in result.node_distributions
        ]
    text = json.dumps(payload, sort_keys=True, indent=2)
    click.echo(text)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")


@cli.command("evaluate")
@click.argument("manifest", type=click.Path(path_type=Path))
@click.option("--method", "methods", multiple=True, default=("relational",),
              show_default=True, type=click.Choice([m.value for m in GroundingMethod]))
@click.option("--proposal-source", default="unknown", show_default=True,
              help="Provenance tag echoed into the report.")
@click.option("--workers", default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path),
              help="Report JSON path (default: <manifest>.report.json).")
@click.option("--seed", default=0, show_default=True)
@_backend_options
@_config_options
def cmd_evaluate(manifest, methods, proposal_source, workers, out_path, seed,
                 backend_kind, mock_table, n_models, remote_url, sigma, prefix,
                 cpt_template, ips_mode, size_prior) -> None:
    """Evaluate grounding accuracy over a JSONL manifest."""
    backend = _make_backend(backend_kind, mock_table, n_models, remote_url, seed)
    if backend is None:
        raise click.UsageError("mock-oracle is only available for `probe`")
    config = _make_config(sigma, prefix, cpt_template, ips_mode, size_prior)
    split = harness.load_split(Path(manifest), proposal_source=proposal_source)
    if split.missing_images:
        log.warning("missing image files for instances: %s", split.missing_images)
    reports = [
        harness.evaluate(split, GroundingMethod(m), backend, config, workers=workers)
        for m in methods
    ]
    report = harness.merge_reports(reports)
    report.config = _config_echo(config, {"methods": sorted(methods), "seed": seed})
    out = Path(out_path) if out_path else Path(manifest).with_suffix(".report.json")
    harness.save_report(report, out)
    click.echo(report.render_markdown())
    click.echo(f"\nreport written to {out}")


@cli.command("probe")
@click.option("--kind", default="all", show_default=True,
              type=click.Choice(list(probe.PROBE_KINDS) + ["all"]))
@click.option("--count", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@_backend_options
def cmd_probe(kind, count, seed, out_dir, backend_kind, mock_table, n_models,
              remote_url) -> None:
    """Generate spatial-probe tasks and score a backend on them."""
    kinds = list(probe.PROBE_KINDS) if kind == "all" else [kind]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    all_tasks: list[probe.ProbeTask] = []
    for i, k in enumerate(kinds):
        all_tasks.extend(probe.generate_tasks(k, count, seed + i))
    probe.write_tasks(all_tasks, out)

    if backend_kind == "mock-oracle":
        backend = MockBackend(probe.oracle_table(all_tasks), name="mock-oracle")
    else:
        backend = _make_backend(backend_kind, mock_table, n_models, remote_url, seed)
    report = probe.run_probe(all_tasks, backend)
    body = {
        "config": {
            "version": __version__,
            "kinds": kinds,
            "count": count,
            "seed": seed,
            "backend": backend.info_dict(),
        },
        "results": report.to_json_dict(),
    }
    report_path = out / "probe_report.json"
    report_path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n",
                           encoding="utf-8")
    for k in kinds:
        entry = report.counts.get(k, {"correct": 0, "total": 0})
        acc = entry["correct"] / entry["total"] if entry["total"] else 0.0
        click.echo(f"{k}: {acc:.4f} ({entry['correct']}/{entry['total']})")
    click.echo(f"report written to {report_path}")


@cli.command("parse")
@click.argument("expression")
@click.option("--parse", "parse_path", type=click.Path(path_type=Path),
              help="External dependency parse JSON (heuristic otherwise).")
def cmd_parse(expression, parse_path) -> None:
    """Print the semantic tree extracted from EXPRESSION."""
    if parse_path is not None:
        parse = ExternalParse.from_json_dict(
            json.loads(Path(parse_path).read_text(encoding="utf-8"))
        )
        tree = extract_tree(parse)
    else:
        tree = extract_tree_heuristic(expression)
    payload = {"version": __version__, **tree.to_json_dict()}
    click.echo(json.dumps(payload, sort_keys=True, indent=2))


@cli.command("make-synthetic")
@click.option("--count", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@click.option("--prefix", default="a photo of", show_default=True)
def cmd_make_synthetic(count, seed, out_dir, prefix) -> None:
    """Generate a synthetic grounding manifest plus its oracle mock table."""
    manifest, table = probe.generate_grounding_set(
        count, seed, out_dir, prompt_prefix=prefix
    )
    click.echo(f"manifest written to {manifest}")
    click.echo(f"mock table written to {table}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit codes (1 usage, 2 data, 3 backend)."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except _DATA_ERRORS as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_OK


def run() -> None:
    sys.exit(main())
