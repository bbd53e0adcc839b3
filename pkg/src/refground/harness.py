"""Dataset loading, accuracy computation, and report emission.

Datasets are JSONL manifests, one instance per line:

    {"id": str, "image": path, "expression": str,
     "proposals": [[x1, y1, x2, y2], ...], "gt": [x1, y1, x2, y2],
     "parse": {...optional external parse...}}

Image paths are resolved relative to the manifest file. A prediction is
correct when its IoU with the ground-truth box is at least 0.5.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .expression import ExternalParse, ParseSchemaError
from .geometry import Box, iou
from .pipeline import (
    GroundingConfig,
    GroundingInstance,
    GroundingMethod,
    ground,
)
from .scoring import BackendError, ScorerBackend

IOU_CORRECT_THRESHOLD = 0.5


class ManifestError(ValueError):
    """A dataset manifest violates the schema; message names the line."""


@dataclass
class DatasetSplit:
    name: str
    instances: list[GroundingInstance]
    proposal_source: str = "unknown"
    missing_images: list[str] = field(default_factory=list)


@dataclass
class EvalReport:
    """Accuracy per method over one split, plus the configuration that produced it."""

    split: str
    proposal_source: str
    total: int
    methods: dict[str, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    backend: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "split": self.split,
            "proposal_source": self.proposal_source,
            "total": self.total,
            "methods": self.methods,
            "config": self.config,
            "backend": self.backend,
        }

    def render_markdown(self) -> str:
        lines = [
            f"## {self.split} ({self.total} instances, proposals: {self.proposal_source})",
            "",
            "| method | accuracy | correct / total |",
            "|--------|----------|-----------------|",
        ]
        for name, entry in sorted(self.methods.items()):
            lines.append(
                f"| {name} | {entry['accuracy']:.4f} | {entry['correct']} / {entry['total']} |"
            )
        return "\n".join(lines)


def _require(line_data: dict, key: str, where: str):
    if key not in line_data:
        raise ManifestError(f"{where}: missing required field {key!r}")
    return line_data[key]


def _parse_box(raw, where: str) -> Box:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ManifestError(f"{where}: box must be [x1, y1, x2, y2], got {raw!r}")
    try:
        return Box(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"{where}: invalid box {raw!r}: {exc}") from exc


def load_split(
    manifest_path: str | Path,
    *,
    name: str | None = None,
    proposal_source: str = "unknown",
) -> DatasetSplit:
    """Load a JSONL manifest; schema violations abort naming the line.

    Instances referencing missing image files load anyway and are listed in
    ``missing_images`` by instance id.
    """
    path = Path(manifest_path)
    base = path.parent
    instances: list[GroundingInstance] = []
    missing: list[str] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(data, dict):
                raise ManifestError(f"{where}: expected an object")
            instance_id = str(_require(data, "id", where))
            image = str(_require(data, "image", where))
            expression = _require(data, "expression", where)
            if not isinstance(expression, str) or not expression.strip():
                raise ManifestError(f"{where}: expression must be a non-empty string")
            raw_proposals = _require(data, "proposals", where)
            if not isinstance(raw_proposals, list) or not raw_proposals:
                raise ManifestError(f"{where}: proposals must be a non-empty list")
            proposals = [
                _parse_box(b, f"{where} proposal {i}") for i, b in enumerate(raw_proposals)
            ]
            gt = _parse_box(data["gt"], f"{where} gt") if "gt" in data else None
            parse = None
            if "parse" in data:
                try:
                    parse = ExternalParse.from_json_dict(data["parse"])
                except ParseSchemaError as exc:
                    raise ManifestError(f"{where}: {exc}") from exc
            image_path = Path(image)
            if not image_path.is_absolute():
                image_path = base / image_path
            if not image_path.is_file():
                missing.append(instance_id)
            instances.append(
                GroundingInstance(
                    image=str(image_path),
                    expression=expression,
                    proposals=proposals,
                    ground_truth=gt,
                    external_parse=parse,
                    id=instance_id,
                )
            )
    return DatasetSplit(
        name=name or path.stem,
        instances=instances,
        proposal_source=proposal_source,
        missing_images=missing,
    )


def evaluate(
    split: DatasetSplit,
    method: GroundingMethod,
    backend: ScorerBackend,
    config: GroundingConfig = GroundingConfig(),
    *,
    workers: int = 1,
) -> EvalReport:
    """Ground every instance and report accuracy at IoU >= 0.5.

    Instances whose backend or image access fails count as incorrect and are
    listed with their error. Instance results keep manifest order regardless
    of worker count.
    """
    missing_gt = [inst.id for inst in split.instances if inst.ground_truth is None]
    if missing_gt:
        raise ValueError(f"instances lack ground truth: {missing_gt[:5]}")

    def run_one(inst: GroundingInstance) -> dict:
        record: dict = {"id": inst.id}
        try:
            result = ground(inst, method, backend, config)
        except (BackendError, OSError) as exc:
            record.update(correct=False, error=f"{type(exc).__name__}: {exc}")
            return record
        chosen_box = inst.proposals[result.chosen_index]
        overlap = iou(chosen_box, inst.ground_truth)
        record.update(
            chosen=result.chosen_index,
            iou=round(overlap, 6),
            correct=overlap >= IOU_CORRECT_THRESHOLD,
        )
        return record

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_one, split.instances))
    else:
        records = [run_one(inst) for inst in split.instances]

    correct = sum(1 for r in records if r["correct"])
    total = len(records)
    report = EvalReport(
        split=split.name,
        proposal_source=split.proposal_source,
        total=total,
        backend=backend.info_dict(),
        config={
            "method": method.value,
            "sigma": config.blur.sigma,
            "prompt_prefix": config.prompts.prefix,
            "cpt_template": config.prompts.cpt_template,
            "ips_mode": config.ips_mode,
            "size_prior_threshold": config.size_prior_threshold,
        },
    )
    report.methods[method.value] = {
        "accuracy": correct / total if total else 0.0,
        "correct": correct,
        "total": total,
        "instances": records,
        "errors": [r["id"] for r in records if "error" in r],
    }
    return report


def merge_reports(reports: list[EvalReport]) -> EvalReport:
    """Combine per-method reports over the same split into one."""
    if not reports:
        raise ValueError("no reports to merge")
    merged = EvalReport(
        split=reports[0].split,
        proposal_source=reports[0].proposal_source,
        total=reports[0].total,
        config={k: v for k, v in reports[0].config.items() if k != "method"},
        backend=reports[0].backend,
    )
    for rep in reports:
        merged.methods.update(rep.methods)
    return merged


def save_report(report: EvalReport, path: str | Path) -> None:
    """Write the canonical JSON body; identical configs yield identical bytes."""
    body = json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(body, encoding="utf-8")
