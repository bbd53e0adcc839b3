"""Synthetic spatial-reasoning probes and scene-based grounding sets.

Scenes hold flat 2-D shapes (circle / square / triangle standing in for
sphere / cube / cylinder) in eight named colors on a light-gray background.
Every object's box is recorded, so ground truth for any spatial statement is
computable from geometry alone.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .expression import extract_tree_heuristic
from .geometry import Box, RelationType, relation_prob
from .scoring import ScoreRequest, ScorerBackend, normalize_text

log = logging.getLogger(__name__)

SCENE_WIDTH = 320
SCENE_HEIGHT = 240
BACKGROUND_RGB = (200, 200, 200)
MIN_OBJECTS = 3
MAX_OBJECTS = 8
# Pairwise box overlap must stay below this fraction of the smaller box.
MAX_OVERLAP_FRACTION = 0.10
MAX_PLACEMENT_ATTEMPTS = 1000

COLOR_RGB: dict[str, tuple[int, int, int]] = {
    "gray": (87, 87, 87),
    "blue": (42, 75, 215),
    "green": (29, 105, 20),
    "cyan": (41, 208, 208),
    "yellow": (255, 238, 51),
    "purple": (129, 38, 192),
    "brown": (129, 74, 25),
    "red": (173, 35, 35),
}
COLORS = tuple(COLOR_RGB)
SHAPES = ("sphere", "cube", "cylinder")

PROBE_KINDS = (
    "text_pair_spatial",
    "text_pair_control",
    "image_pair_spatial",
    "image_pair_control",
)

# Caption phrasing is frozen; the golden test pins these exact strings.
SPATIAL_TEMPLATES: dict[str, str] = {
    "left": "A {c1} {s1} to the left of a {c2} {s2}.",
    "right": "A {c1} {s1} to the right of a {c2} {s2}.",
    "front": "A {c1} {s1} in front of a {c2} {s2}.",
    "behind": "A {c1} {s1} behind a {c2} {s2}.",
}
CONTROL_TEMPLATE = "a {c1} {s1} and a {c2} {s2}"
OPPOSITE_WORD = {"left": "right", "right": "left", "front": "behind", "behind": "front"}
# Scene-geometry meaning of each caption word; front/behind map to the
# vertical image axis (front = lower in the image).
RELATION_OF_WORD = {
    "left": RelationType.LEFT,
    "right": RelationType.RIGHT,
    "front": RelationType.BELOW,
    "behind": RelationType.ABOVE,
}


class AmbiguousSceneError(ValueError):
    """No object pair supports an unambiguous probe statement."""


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    box: Box


@dataclass
class SyntheticScene:
    objects: list[SceneObject]
    seed: int
    width: int = SCENE_WIDTH
    height: int = SCENE_HEIGHT

    def combos(self) -> set[tuple[str, str]]:
        return {(o.color, o.shape) for o in self.objects}


@dataclass
class ProbeTask:
    """A two-option matching task; option 0 is always the correct one.

    For text-pair kinds there is one image and two candidate texts; for
    image-pair kinds one text and two candidate images.
    """

    kind: str
    task_id: str
    images: list[np.ndarray] = field(repr=False)
    texts: list[str]
    correct_option: int
    metadata: dict = field(default_factory=dict)


def _derive_seed(seed: int) -> int:
    return (seed * 1000003 + 1) % (2**31 - 1)


def _try_place_objects(rng: random.Random) -> list[SceneObject] | None:
    count = rng.randint(MIN_OBJECTS, MAX_OBJECTS)
    objects: list[SceneObject] = []
    for _ in range(count):
        placed = False
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            half = rng.uniform(12.0, 30.0)
            cx = rng.uniform(half + 2, SCENE_WIDTH - half - 2)
            cy = rng.uniform(half + 2, SCENE_HEIGHT - half - 2)
            box = Box(cx - half, cy - half, cx + half, cy + half)
            if all(
                box.intersection_area(o.box) < MAX_OVERLAP_FRACTION * min(box.area, o.box.area)
                for o in objects
            ):
                objects.append(
                    SceneObject(shape=rng.choice(SHAPES), color=rng.choice(COLORS), box=box)
                )
                placed = True
                break
        if not placed:
            return None
    return objects


def generate_scene(seed: int) -> tuple[SyntheticScene, np.ndarray]:
    """Deterministically generate and render a scene for a seed.

    Placement uses rejection sampling; if an object cannot be placed within
    the attempt budget the whole scene is regenerated from a derived seed.
    """
    attempt_seed = seed
    while True:
        rng = random.Random(attempt_seed)
        objects = _try_place_objects(rng)
        if objects is not None:
            scene = SyntheticScene(objects=objects, seed=seed)
            return scene, render_scene(scene)
        attempt_seed = _derive_seed(attempt_seed)


def render_scene(scene: SyntheticScene) -> np.ndarray:
    canvas = np.full((scene.height, scene.width, 3), BACKGROUND_RGB, dtype=np.uint8)
    for obj in scene.objects:
        _draw_object(canvas, obj)
    return canvas


def _draw_object(canvas: np.ndarray, obj: SceneObject) -> None:
    b = obj.box
    x1, y1 = int(np.floor(b.x1)), int(np.floor(b.y1))
    x2, y2 = int(np.ceil(b.x2)), int(np.ceil(b.y2))
    x1, y1 = max(x1, 0), max(y1, 0)
    x2, y2 = min(x2, canvas.shape[1]), min(y2, canvas.shape[0])
    ys, xs = np.mgrid[y1:y2, x1:x2]
    px = xs + 0.5  # pixel centers
    py = ys + 0.5
    cx, cy = b.center
    if obj.shape == "sphere":  # drawn as a circle
        r = min(b.width, b.height) / 2.0
        mask = (px - cx) ** 2 + (py - cy) ** 2 <= r**2
    elif obj.shape == "cube":  # drawn as a square
        mask = (px >= b.x1) & (px < b.x2) & (py >= b.y1) & (py < b.y2)
    else:  # cylinder, drawn as an upward triangle
        inside_y = (py >= b.y1) & (py < b.y2)
        half_width = (py - b.y1) / max(b.height, 1e-9) * (b.width / 2.0)
        mask = inside_y & (np.abs(px - cx) <= half_width)
    canvas[y1:y2, x1:x2][mask] = COLOR_RGB[obj.color]


def _unique_attr_indices(scene: SyntheticScene) -> list[int]:
    counts: dict[tuple[str, str], int] = {}
    for o in scene.objects:
        counts[(o.color, o.shape)] = counts.get((o.color, o.shape), 0) + 1
    return [
        i for i, o in enumerate(scene.objects) if counts[(o.color, o.shape)] == 1
    ]


def _absent_combo_by_single_swap(
    scene: SyntheticScene, obj: SceneObject, rng: random.Random
) -> tuple[str, str] | None:
    present = scene.combos()
    candidates = [(c, obj.shape) for c in COLORS if c != obj.color]
    candidates += [(obj.color, s) for s in SHAPES if s != obj.shape]
    candidates = [combo for combo in candidates if combo not in present]
    if not candidates:
        return None
    return rng.choice(sorted(candidates))


def _pick_spatial_pair(
    scene: SyntheticScene, rng: random.Random
) -> tuple[int, int, str]:
    """A (subject, object, relation-word) triple that holds strictly and uniquely."""
    unique = set(_unique_attr_indices(scene))
    words = sorted(RELATION_OF_WORD)
    rng.shuffle(words)
    for word in words:
        rel = RELATION_OF_WORD[word]
        pairs = [
            (i, j)
            for i in unique
            for j in unique
            if i != j and relation_prob(rel, scene.objects[i].box, scene.objects[j].box) == 1.0
        ]
        if pairs:
            return (*rng.choice(sorted(pairs)), word)
    raise AmbiguousSceneError(f"scene {scene.seed} has no usable object pair")


def _pick_control_pair(scene: SyntheticScene, rng: random.Random) -> tuple[int, int]:
    unique = _unique_attr_indices(scene)
    if len(unique) < 2:
        raise AmbiguousSceneError(f"scene {scene.seed} lacks two unique objects")
    return tuple(rng.sample(sorted(unique), 2))  # type: ignore[return-value]


def _mirror_scene(scene: SyntheticScene, axis: str) -> SyntheticScene:
    objects = []
    for o in scene.objects:
        b = o.box
        if axis == "horizontal":
            box = Box(scene.width - b.x2, b.y1, scene.width - b.x1, b.y2)
        else:
            box = Box(b.x1, scene.height - b.y2, b.x2, scene.height - b.y1)
        objects.append(SceneObject(shape=o.shape, color=o.color, box=box))
    return SyntheticScene(objects=objects, seed=scene.seed,
                          width=scene.width, height=scene.height)


def make_task(scene: SyntheticScene, kind: str, seed: int) -> ProbeTask:
    """Build one probe task over a generated scene.

    Spatial tasks state a relation between two attribute-unique objects; the
    distractor flips the relation word (text pair) or mirrors the scene
    (image pair). Control tasks list two objects; the distractor swaps one
    for an attribute combination absent from the scene.
    """
    if kind not in PROBE_KINDS:
        raise ValueError(f"kind must be one of {PROBE_KINDS}, got {kind!r}")
    rng = random.Random(seed)
    rendered = render_scene(scene)
    task_id = f"{kind}-{seed}"

    if kind.endswith("_spatial"):
        si, oi, word = _pick_spatial_pair(scene, rng)
        subj, obj = scene.objects[si], scene.objects[oi]
        caption = SPATIAL_TEMPLATES[word].format(
            c1=subj.color, s1=subj.shape, c2=obj.color, s2=obj.shape
        )
        distractor = SPATIAL_TEMPLATES[OPPOSITE_WORD[word]].format(
            c1=subj.color, s1=subj.shape, c2=obj.color, s2=obj.shape
        )
        metadata = {
            "relation_word": word,
            "subject_box": list(subj.box.as_tuple()),
            "object_box": list(obj.box.as_tuple()),
        }
        if kind == "text_pair_spatial":
            return ProbeTask(kind, task_id, [rendered], [caption, distractor], 0, metadata)
        mirrored = _mirror_scene(
            scene, "horizontal" if word in ("left", "right") else "vertical"
        )
        metadata["mirrored_subject_box"] = list(mirrored.objects[si].box.as_tuple())
        metadata["mirrored_object_box"] = list(mirrored.objects[oi].box.as_tuple())
        return ProbeTask(
            kind, task_id, [rendered, render_scene(mirrored)], [caption], 0, metadata
        )

    # Control (non-spatial) tasks.
    ia, ib = _pick_control_pair(scene, rng)
    a, b = scene.objects[ia], scene.objects[ib]
    caption = CONTROL_TEMPLATE.format(c1=a.color, s1=a.shape, c2=b.color, s2=b.shape)
    swap_first = rng.random() < 0.5
    target_idx, keep_idx = (ia, ib) if swap_first else (ib, ia)
    swapped = _absent_combo_by_single_swap(scene, scene.objects[target_idx], rng)
    if swapped is None:
        swapped = _absent_combo_by_single_swap(scene, scene.objects[keep_idx], rng)
        target_idx, keep_idx = keep_idx, target_idx
    if swapped is None:
        present = scene.combos()
        absent = sorted(
            (c, s) for c in COLORS for s in SHAPES if (c, s) not in present
        )
        swapped = rng.choice(absent)
    swapped_pair = [
        {"color": swapped[0], "shape": swapped[1]} if i == target_idx
        else {"color": scene.objects[i].color, "shape": scene.objects[i].shape}
        for i in (ia, ib)
    ]
    distractor = CONTROL_TEMPLATE.format(
        c1=swapped_pair[0]["color"], s1=swapped_pair[0]["shape"],
        c2=swapped_pair[1]["color"], s2=swapped_pair[1]["shape"],
    )
    metadata = {
        "listed": [
            {"color": a.color, "shape": a.shape},
            {"color": b.color, "shape": b.shape},
        ],
        "swapped": swapped_pair,
        "scene_combos": sorted(f"{c}/{s}" for c, s in scene.combos()),
    }
    if kind == "text_pair_control":
        return ProbeTask(kind, task_id, [rendered], [caption, distractor], 0, metadata)
    edited = SyntheticScene(
        objects=[
            SceneObject(shape=swapped[1], color=swapped[0], box=o.box)
            if i == target_idx else o
            for i, o in enumerate(scene.objects)
        ],
        seed=scene.seed, width=scene.width, height=scene.height,
    )
    metadata["edited_combos"] = sorted(f"{c}/{s}" for c, s in edited.combos())
    return ProbeTask(
        kind, task_id, [rendered, render_scene(edited)], [caption], 0, metadata
    )


def generate_tasks(kind: str, count: int, seed: int) -> list[ProbeTask]:
    """Generate ``count`` tasks reproducibly; ambiguous scenes are skipped."""
    master = random.Random(seed)
    tasks = []
    while len(tasks) < count:
        task_seed = master.randrange(2**31 - 1)
        scene, _ = generate_scene(task_seed)
        try:
            tasks.append(make_task(scene, kind, task_seed))
        except AmbiguousSceneError:
            continue
    return tasks


def option_truth(task: ProbeTask, option: int) -> bool:
    """Whether an option is satisfied, judged purely from recorded geometry."""
    md = task.metadata
    if task.kind == "text_pair_spatial":
        word = md["relation_word"] if option == 0 else OPPOSITE_WORD[md["relation_word"]]
        return relation_prob(
            RELATION_OF_WORD[word],
            Box(*md["subject_box"]),
            Box(*md["object_box"]),
        ) == 1.0
    if task.kind == "image_pair_spatial":
        boxes = (
            (Box(*md["subject_box"]), Box(*md["object_box"]))
            if option == 0
            else (Box(*md["mirrored_subject_box"]), Box(*md["mirrored_object_box"]))
        )
        return relation_prob(RELATION_OF_WORD[md["relation_word"]], *boxes) == 1.0
    listed = {f"{o['color']}/{o['shape']}" for o in md["listed"]}
    swapped = {f"{o['color']}/{o['shape']}" for o in md["swapped"]}
    if task.kind == "text_pair_control":
        combos = set(md["scene_combos"])
        return (listed if option == 0 else swapped) <= combos
    combos = set(md["scene_combos"] if option == 0 else md["edited_combos"])
    return listed <= combos


def oracle_table(tasks: list[ProbeTask]) -> dict[tuple[str, str], float]:
    """Mock-backend table answering probe requests from recorded geometry."""
    table: dict[tuple[str, str], float] = {}
    for task in tasks:
        for option in range(2):
            text = task.texts[option] if len(task.texts) == 2 else task.texts[0]
            key = (f"{task.task_id}:{option}", normalize_text(text))
            table[key] = 1.0 if option_truth(task, option) else 0.0
    return table


@dataclass
class ProbeReport:
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def accuracy(self, kind: str) -> float:
        entry = self.counts[kind]
        return entry["correct"] / entry["total"] if entry["total"] else 0.0

    def to_json_dict(self) -> dict:
        return {
            "kinds": {
                kind: {
                    "correct": entry["correct"],
                    "total": entry["total"],
                    "accuracy": self.accuracy(kind),
                }
                for kind, entry in sorted(self.counts.items())
            },
            "failures": list(self.failures),
        }


def run_probe(tasks: list[ProbeTask], backend: ScorerBackend) -> ProbeReport:
    """Score each task's two options; correct iff the right option wins strictly.

    Option scores sum logits across the backend's models; ties count as
    incorrect. Backend failures count as incorrect and are listed.
    """
    report = ProbeReport()
    for task in tasks:
        entry = report.counts.setdefault(task.kind, {"correct": 0, "total": 0})
        entry["total"] += 1
        requests = []
        for option in range(2):
            image = task.images[option] if len(task.images) == 2 else task.images[0]
            text = task.texts[option] if len(task.texts) == 2 else task.texts[0]
            requests.append(
                ScoreRequest(
                    image=image, text=text,
                    trace={"region": f"{task.task_id}:{option}"},
                )
            )
        try:
            responses = backend.score(requests)
        except Exception as exc:  # noqa: BLE001 - probes must survive backend faults
            report.failures.append(f"{task.task_id}: {exc}")
            continue
        if any(r.error is not None for r in responses):
            report.failures.append(
                f"{task.task_id}: " + "; ".join(r.error or "" for r in responses)
            )
            continue
        scores = [sum(r.logits) for r in responses]
        correct, other = task.correct_option, 1 - task.correct_option
        if scores[correct] > scores[other]:
            entry["correct"] += 1
    return report


def write_tasks(tasks: list[ProbeTask], out_dir: str | Path) -> Path:
    """Dump task PNGs plus a JSONL manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    manifest = out / "tasks.jsonl"
    with manifest.open("w", encoding="utf-8") as fh:
        for task in tasks:
            image_paths = []
            for i, image in enumerate(task.images):
                rel = f"images/{task.task_id}-{i}.png"
                imaging.save_png(image, out / rel)
                image_paths.append(rel)
            fh.write(
                json.dumps(
                    {
                        "id": task.task_id,
                        "kind": task.kind,
                        "images": image_paths,
                        "texts": task.texts,
                        "correct": task.correct_option,
                        "metadata": task.metadata,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    return manifest


# ---------------------------------------------------------------------------
# Scene-based grounding sets: relational expressions whose answer is knowable
# from geometry, plus an attribute-matching mock table to drive them offline.
# ---------------------------------------------------------------------------

GROUNDING_TEMPLATES: dict[str, str] = {
    "left": "the {c1} {s1} to the left of the {c2} {s2}",
    "right": "the {c1} {s1} to the right of the {c2} {s2}",
    "above": "the {c1} {s1} above the {c2} {s2}",
    "below": "the {c1} {s1} below the {c2} {s2}",
}
GROUNDING_RELATIONS = {
    "left": RelationType.LEFT,
    "right": RelationType.RIGHT,
    "above": RelationType.ABOVE,
    "below": RelationType.BELOW,
}
_ATTR_MATCH_LOGIT = 10.0


def _place_box(
    rng: random.Random,
    placed: list[Box],
    *,
    x_range: tuple[float, float] | None = None,
    y_range: tuple[float, float] | None = None,
) -> Box | None:
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        half = rng.uniform(12.0, 26.0)
        lo_x, hi_x = x_range or (half + 2, SCENE_WIDTH - half - 2)
        lo_y, hi_y = y_range or (half + 2, SCENE_HEIGHT - half - 2)
        lo_x, hi_x = max(lo_x, half + 2), min(hi_x, SCENE_WIDTH - half - 2)
        lo_y, hi_y = max(lo_y, half + 2), min(hi_y, SCENE_HEIGHT - half - 2)
        if lo_x >= hi_x or lo_y >= hi_y:
            continue
        cx = rng.uniform(lo_x, hi_x)
        cy = rng.uniform(lo_y, hi_y)
        box = Box(cx - half, cy - half, cx + half, cy + half)
        if all(
            box.intersection_area(p) < MAX_OVERLAP_FRACTION * min(box.area, p.area)
            for p in placed
        ):
            return box
    return None


def _build_grounding_scene(seed: int) -> tuple[SyntheticScene, str, int, str]:
    """A scene with a target, a same-attribute distractor, and an anchor.

    Returns (scene, expression, target proposal index, relation word). The
    target satisfies the stated relation to the anchor; the distractor shares
    the target's attributes but sits strictly on the opposite side.
    """
    attempt_seed = seed
    while True:
        rng = random.Random(attempt_seed)
        word = rng.choice(sorted(GROUNDING_RELATIONS))
        axis_x = word in ("left", "right")

        combos = [(c, s) for c in COLORS for s in SHAPES]
        target_attr, anchor_attr = rng.sample(combos, 2)

        # Anchor sits mid-axis; target and distractor flank it strictly.
        margin = 8.0
        anchor = _place_box(
            rng, [],
            x_range=(120.0, 200.0) if axis_x else None,
            y_range=None if axis_x else (90.0, 150.0),
        )
        if anchor is None:
            attempt_seed = _derive_seed(attempt_seed)
            continue
        ax, ay = anchor.center

        def side_ranges(satisfies: bool) -> dict:
            coord = ax if axis_x else ay
            limit = SCENE_WIDTH if axis_x else SCENE_HEIGHT
            before = word in ("left", "above")
            lo, hi = (2.0, coord - margin) if before == satisfies else (coord + margin, limit - 2.0)
            return {"x_range": (lo, hi)} if axis_x else {"y_range": (lo, hi)}

        target = _place_box(rng, [anchor], **side_ranges(True))
        distractor = (
            _place_box(rng, [anchor, target], **side_ranges(False))
            if target is not None else None
        )
        if target is None or distractor is None:
            attempt_seed = _derive_seed(attempt_seed)
            continue

        objects = [
            SceneObject(shape=target_attr[1], color=target_attr[0], box=target),
            SceneObject(shape=target_attr[1], color=target_attr[0], box=distractor),
            SceneObject(shape=anchor_attr[1], color=anchor_attr[0], box=anchor),
        ]
        filler_combos = [c for c in combos if c not in (target_attr, anchor_attr)]
        for _ in range(rng.randint(0, 4)):
            box = _place_box(rng, [o.box for o in objects])
            if box is None:
                continue
            color, shape = rng.choice(sorted(filler_combos))
            objects.append(SceneObject(shape=shape, color=color, box=box))

        order = list(range(len(objects)))
        rng.shuffle(order)
        scene = SyntheticScene(
            objects=[objects[i] for i in order], seed=attempt_seed
        )
        target_index = order.index(0)
        expression = GROUNDING_TEMPLATES[word].format(
            c1=target_attr[0], s1=target_attr[1], c2=anchor_attr[0], s2=anchor_attr[1]
        )
        return scene, expression, target_index, word


def _attribute_logit(obj: SceneObject, text: str) -> float:
    words = set(normalize_text(text).split())
    score = 0.0
    if obj.color in words:
        score += _ATTR_MATCH_LOGIT
    if obj.shape in words:
        score += _ATTR_MATCH_LOGIT
    return score


def generate_grounding_set(
    count: int, seed: int, out_dir: str | Path, *, prompt_prefix: str = "a photo of"
) -> tuple[Path, Path]:
    """Write a synthetic grounding manifest plus its attribute-oracle mock table.

    Every instance has a unique relational reading: the expression's subject
    attributes match exactly two objects, of which only the ground-truth one
    satisfies the relation to the anchor object. Returns (manifest path,
    mock table path).
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    table_path = out / "mock_table.json"

    master = random.Random(seed)
    entries: list[dict] = []
    with manifest_path.open("w", encoding="utf-8") as fh:
        for k in range(count):
            scene, expression, target_index, _word = _build_grounding_scene(
                master.randrange(2**31 - 1)
            )
            instance_id = f"synth-{k:04d}"
            rel_image = f"images/{instance_id}.png"
            imaging.save_png(render_scene(scene), out / rel_image)

            tree = extract_tree_heuristic(expression)
            texts = [f"{prompt_prefix} {node.text}" for node in tree.nodes]
            texts.append(f"{prompt_prefix} {expression}")
            for p, obj in enumerate(scene.objects):
                for text in texts:
                    entries.append(
                        {
                            "region": f"{instance_id}/{p}",
                            "text": normalize_text(text),
                            "logits": [_attribute_logit(obj, text)],
                        }
                    )
            fh.write(
                json.dumps(
                    {
                        "id": instance_id,
                        "image": rel_image,
                        "expression": expression,
                        "proposals": [list(o.box.as_tuple()) for o in scene.objects],
                        "gt": list(scene.objects[target_index].box.as_tuple()),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    table_path.write_text(json.dumps(entries, sort_keys=True, indent=2) + "\n")
    return manifest_path, table_path
