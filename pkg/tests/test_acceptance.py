"""Acceptance suite: one test per release criterion, each printing a verdict line.

Run with ``pytest tests/test_acceptance.py -v`` (or -s for the verdict lines).
"""

from __future__ import annotations

import json
import math
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from refground.expression import (
    ChunkSpan,
    ExternalParse,
    extract_tree,
    extract_tree_heuristic,
    keyword_tables,
)
from refground.geometry import Box, RelationType, relation_prob
from refground.harness import evaluate, load_split
from refground.imaging import BlurConfig, blur_isolate, gaussian_blur, shade_red
from refground.pipeline import GroundingConfig, GroundingMethod, ground
from refground.probe import generate_grounding_set, generate_tasks, option_truth, run_probe
from refground.resolver import resolve
from refground.scoring import (
    MockBackend,
    PromptConfig,
    RandomLogitBackend,
    ensemble_softmax,
    ips_scores,
    normalize_text,
)

from .conftest import random_box, random_image
from .test_pipeline import flip_scene, make_instance
from .test_resolver import naive_resolve, random_distribution, random_tree

STRICT = (
    RelationType.LEFT,
    RelationType.RIGHT,
    RelationType.ABOVE,
    RelationType.BELOW,
    RelationType.BIGGER,
    RelationType.SMALLER,
)


def verdict(ok: bool, label: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}")
    assert ok, label


def test_criterion_geometry_property_suite():
    rng = random.Random(20240501)
    start = time.perf_counter()
    for _ in range(10_000):
        a = random_box(rng)
        b = random_box(rng)
        if a.center[0] != b.center[0]:
            assert relation_prob(RelationType.LEFT, a, b) == 1.0 - relation_prob(
                RelationType.RIGHT, a, b
            )
        if a.center[1] != b.center[1]:
            assert relation_prob(RelationType.ABOVE, a, b) == 1.0 - relation_prob(
                RelationType.BELOW, a, b
            )
        for r in STRICT:
            assert relation_prob(r, a, a) == 0.0
        if a.area != b.area:
            assert relation_prob(RelationType.BIGGER, a, b) + relation_prob(
                RelationType.SMALLER, a, b
            ) == 1.0
        if a.area > 0:
            contained = (
                a.x1 >= b.x1 and a.y1 >= b.y1 and a.x2 <= b.x2 and a.y2 <= b.y2
            )
            assert (relation_prob(RelationType.INSIDE, a, b) == 1.0) == contained
    elapsed = time.perf_counter() - start
    verdict(elapsed < 5.0, f"geometry properties on 10,000 box pairs in {elapsed:.2f}s (< 5s)")


def test_criterion_resolver_oracle_equivalence():
    rng = random.Random(99)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1_000):
        n_nodes = rng.randint(1, 4)
        n_boxes = rng.randint(2, 6)
        boxes = [random_box(rng) for _ in range(n_boxes)]
        tree = random_tree(rng, n_nodes)
        dists = [random_distribution(rng, n_boxes) for _ in range(n_nodes)]
        full = random_distribution(rng, n_boxes)
        got = resolve(tree, dists, boxes, full)
        want = np.array(naive_resolve(tree, dists, boxes, full))
        worst = max(worst, float(np.max(np.abs(got - want))))
        assert abs(got.sum() - 1.0) < 1e-9
        assert np.all(got >= 0)
    elapsed = time.perf_counter() - start
    verdict(
        worst < 1e-9 and elapsed < 10.0,
        f"resolver equals naive reference on 1,000 trees (max |diff| {worst:.2e}, "
        f"{elapsed:.2f}s < 10s)",
    )


def test_criterion_flip_scene_reconstruction():
    boxes, expression, _, backend = flip_scene()
    instance = make_instance(boxes, expression)
    config = GroundingConfig(blur=BlurConfig(sigma=2.0))
    with_relations = ground(instance, GroundingMethod.RELATIONAL, backend, config)
    without = ground(instance, GroundingMethod.IPS, backend, config)
    verdict(
        with_relations.chosen_index == 3 and without.chosen_index == 2,
        "constructed 4-box scene: relation resolution flips the argmax from the "
        "scorer favorite (index 2) to the spatially correct box (index 3)",
    )


def test_criterion_end_to_end_synthetic_grounding(tmp_path):
    manifest, table = generate_grounding_set(200, seed=17, out_dir=tmp_path)
    split = load_split(manifest)
    backend = MockBackend.from_entries(json.loads(table.read_text()))
    config = GroundingConfig(blur=BlurConfig(sigma=4.0))
    relational = evaluate(split, GroundingMethod.RELATIONAL, backend, config)
    plain = evaluate(split, GroundingMethod.IPS, backend, config)
    acc_rel = relational.methods["relational"]["accuracy"]
    acc_plain = plain.methods["ips"]["accuracy"]
    verdict(
        acc_rel == 1.0 and acc_plain < acc_rel,
        f"200 synthetic scenes: relational accuracy {acc_rel:.3f} == 1.000, "
        f"plain scoring strictly lower at {acc_plain:.3f}",
    )


def test_criterion_ips_combination_ablation():
    rng = random.Random(4)
    img = random_image(rng, width=30, height=20)
    boxes = [Box(0, 0, 10, 10), Box(10, 0, 20, 20), Box(5, 5, 28, 18)]
    prompts = PromptConfig()
    blur = BlurConfig(sigma=2.0)
    text = normalize_text(prompts.full_prompt("the dog"))
    table = {}
    for p in range(len(boxes)):
        table[(f"{p}:crop", text)] = [rng.uniform(-3, 3), rng.uniform(-3, 3)]
        table[(f"{p}:blur", text)] = [rng.uniform(-3, 3), rng.uniform(-3, 3)]
    backend = MockBackend(table, n_models=2)

    def run(mode):
        return ips_scores(img, boxes, "the dog", backend, prompts, blur, mode=mode)

    combined, crop, blur_only, max_mode = (
        run("crop+blur"), run("crop"), run("blur"), run("max")
    )
    sums_exact = all(
        combined[p] == [c + b for c, b in zip(crop[p], blur_only[p])]
        for p in range(len(boxes))
    )
    max_exact = all(
        max_mode[p] == [max(c, b) for c, b in zip(crop[p], blur_only[p])]
        for p in range(len(boxes))
    )
    verdict(
        sums_exact and max_exact,
        "crop+blur equals crop plus blur elementwise (exact); max mode equals "
        "elementwise max (exact)",
    )


def test_criterion_imaging_bit_exactness():
    rng = random.Random(8)
    img = random_image(rng, width=24, height=18)
    box = Box(5, 4, 16, 13)
    out = blur_isolate(img, box, BlurConfig(sigma=3.0))
    interior_exact = np.array_equal(out[4:13, 5:16], img[4:13, 5:16])

    golden = np.zeros((1, 3, 3), dtype=np.uint8)
    golden[0, 0] = (0, 0, 0)
    golden[0, 1] = (240, 0, 30)
    golden[0, 2] = (255, 255, 255)
    shaded = shade_red(golden, Box(0, 0, 3, 1))
    shade_ok = (
        tuple(shaded[0, 0]) == (120, 0, 15)
        and tuple(shaded[0, 1]) == (240, 0, 30)
        and tuple(shaded[0, 2]) == (248, 128, 143)
    )

    constant = np.full((7, 9, 3), 201, dtype=np.uint8)
    constant_ok = np.array_equal(gaussian_blur(constant, BlurConfig(sigma=5.0)), constant)
    verdict(
        interior_exact and shade_ok and constant_ok,
        "blur preserves box-interior pixels bit-exactly; red-shade blend matches "
        "the 3-pixel golden case; constant-image blur is the identity",
    )


def test_criterion_parser_goldens(golden_dir):
    golden = json.loads((golden_dir / "keyword_tables.json").read_text())
    tables_ok = keyword_tables() == golden

    heuristic = extract_tree_heuristic("a cat to the left of a dog")
    parse = ExternalParse(
        tokens=["a", "cat", "to", "the", "left", "of", "a", "dog"],
        heads=[1, -1, 1, 4, 2, 4, 7, 5],
        noun_chunks=[ChunkSpan(0, 2, 1), ChunkSpan(6, 8, 7)],
    )
    parsed = extract_tree(parse)
    both_ok = all(
        tree.edges == [(0, 1, RelationType.LEFT)]
        and [n.text for n in tree.nodes] == ["a cat", "a dog"]
        and tree.root == 0
        for tree in (heuristic, parsed)
    )
    verdict(
        tables_ok and both_ok,
        "keyword tables match the checked-in golden dump token-for-token; the "
        "left-edge tree comes out of both the heuristic and the canned parse",
    )


def test_criterion_probe_construction():
    tasks = generate_tasks("text_pair_spatial", 1_000, seed=23)
    construction_ok = all(
        option_truth(t, 0) is True and option_truth(t, 1) is False for t in tasks
    )
    report = run_probe(tasks, RandomLogitBackend(seed=23))
    acc = report.accuracy("text_pair_spatial")
    verdict(
        construction_ok and abs(acc - 0.5) <= 0.05,
        f"1,000 spatial tasks: correct caption relation holds (1) and distractor "
        f"fails (0) for every task; random-logit accuracy {acc:.3f} within 0.50 +/- 0.05",
    )


def test_criterion_cli_determinism(tmp_path):
    def run_cli(*args):
        proc = subprocess.run(
            [sys.executable, "-m", "refground", *args],
            capture_output=True, text=True, timeout=600,
        )
        assert proc.returncode == 0, proc.stderr
        return proc

    data_dir = tmp_path / "data"
    run_cli("make-synthetic", "--count", "30", "--seed", "11",
            "--out-dir", str(data_dir))
    manifest = data_dir / "manifest.jsonl"
    table = data_dir / "mock_table.json"

    eval_reports = []
    for name in ("e1.json", "e2.json"):
        out = tmp_path / name
        run_cli("evaluate", str(manifest), "--method", "relational", "--method", "ips",
                "--backend", "mock", "--mock-table", str(table),
                "--sigma", "4", "--seed", "11", "--out", str(out))
        eval_reports.append(out.read_bytes())

    probe_reports = []
    probe_manifests = []
    for sub in ("p1", "p2"):
        out_dir = tmp_path / sub
        run_cli("probe", "--kind", "all", "--count", "10", "--seed", "13",
                "--backend", "mock-oracle", "--out-dir", str(out_dir))
        probe_reports.append((out_dir / "probe_report.json").read_bytes())
        probe_manifests.append((out_dir / "tasks.jsonl").read_bytes())

    verdict(
        eval_reports[0] == eval_reports[1]
        and probe_reports[0] == probe_reports[1]
        and probe_manifests[0] == probe_manifests[1],
        "two CLI runs (evaluate + probe) with identical seeds produce "
        "byte-identical report bodies",
    )
