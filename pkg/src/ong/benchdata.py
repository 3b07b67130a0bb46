"""Concept-suppression benchmark data model.

The bundled dataset holds 200 (prompt, suppression target) scenarios across
six categories of prompt/target semantic relationship. A scenario's
``source`` records how the pair was collected where that is known:
``llm_generated``, ``coco_derived``, or ``unknown``. The verification rule
used during benchmark construction (a target counts as genuinely associated
when it appears in at least k of n independently generated images, 2-of-4 by
default) is implemented here as ``cooccurrence_verdict``.

Judge prompt templates for the three evaluation metrics ship as text assets
with ``{suppression target}`` / ``{prompt}`` placeholders so external
harnesses can reuse them; no judge client is included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import ValidationError

__all__ = [
    "CATEGORIES",
    "CATEGORY_LABELS",
    "SOURCES",
    "Scenario",
    "CategoryStats",
    "load_scenarios",
    "parse_scenarios",
    "serialize_scenarios",
    "bundled_dataset_path",
    "category_stats",
    "cooccurrence_verdict",
    "TEMPLATE_NAMES",
    "load_template",
    "render_template",
]

SCHEMA_VERSION = 1

# Category slugs in canonical order, with display labels.
CATEGORIES = (
    "place_scene",
    "event_action",
    "cooccurring_object",
    "dominant_subtype",
    "object_component",
    "occupation_role",
)

CATEGORY_LABELS = {
    "place_scene": "Associated Concept for Place/Scene",
    "event_action": "Associated Concept for Event/Action",
    "cooccurring_object": "Co-occurring Object for an Object",
    "dominant_subtype": "Dominant Subtype of a Supercategory",
    "object_component": "Associated Component of an Object",
    "occupation_role": "Associated Concept for Occupation/Role",
}

SOURCES = ("llm_generated", "coco_derived", "unknown")

TEMPLATE_NAMES = (
    "negative_concept_suppression",
    "prompt_alignment",
    "image_quality",
)


@dataclass(frozen=True)
class Scenario:
    """One suppression scenario: generate ``prompt``, suppress ``target``."""

    prompt: str
    target: str
    category: str
    source: str = "unknown"

    def __post_init__(self):
        if not self.prompt:
            raise ValidationError("scenario prompt must be non-empty", field="prompt")
        if not self.target:
            raise ValidationError("scenario target must be non-empty", field="target")
        if self.category not in CATEGORIES:
            raise ValidationError(
                f"unknown category {self.category!r}; expected one of {CATEGORIES}",
                field="category",
            )
        if self.source not in SOURCES:
            raise ValidationError(
                f"unknown source {self.source!r}; expected one of {SOURCES}",
                field="source",
            )


@dataclass(frozen=True)
class CategoryStats:
    """Scenario counts per category plus the total."""

    counts: dict[str, int]
    total: int

    def proportions(self) -> dict[str, float]:
        """Per-category share of the total, rounded to 4 decimals."""
        if self.total == 0:
            return {name: 0.0 for name in CATEGORIES}
        return {name: round(self.counts[name] / self.total, 4) for name in CATEGORIES}


def parse_scenarios(data: dict, where: str = "dataset") -> list[Scenario]:
    """Validate a parsed dataset document and return its scenarios."""
    if not isinstance(data, dict):
        raise ValidationError(f"{where} must be a JSON object")
    if data.get("version") != SCHEMA_VERSION:
        raise ValidationError(
            f"{where} version must be {SCHEMA_VERSION}, got {data.get('version')!r}",
            field="version",
        )
    raw = data.get("scenarios")
    if not isinstance(raw, list):
        raise ValidationError(f"{where} needs a 'scenarios' list", field="scenarios")
    scenarios = []
    seen: set[tuple[str, str]] = set()
    for i, rec in enumerate(raw):
        path = f"scenarios[{i}]"
        if not isinstance(rec, dict):
            raise ValidationError(f"{path} must be an object", field=path)
        for name in ("prompt", "target", "category", "source"):
            if name not in rec:
                raise ValidationError(f"missing field: {path}.{name}", field=f"{path}.{name}")
            if not isinstance(rec[name], str):
                raise ValidationError(
                    f"{path}.{name} must be a string", field=f"{path}.{name}"
                )
        for extra in set(rec) - {"prompt", "target", "category", "source"}:
            raise ValidationError(f"unknown field: {path}.{extra}", field=f"{path}.{extra}")
        try:
            scenario = Scenario(
                prompt=rec["prompt"],
                target=rec["target"],
                category=rec["category"],
                source=rec["source"],
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}", field=f"{path}.{exc.field}") from exc
        key = (scenario.prompt, scenario.target)
        if key in seen:
            raise ValidationError(
                f"{path}: duplicate (prompt, target) pair {key!r}", field=path
            )
        seen.add(key)
        scenarios.append(scenario)
    return scenarios


def load_scenarios(path) -> list[Scenario]:
    """Load and validate a scenario dataset file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"{path}: not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
            ) from exc
    return parse_scenarios(data, where=str(path))


def serialize_scenarios(scenarios) -> str:
    """Canonical dataset serialisation: UTF-8 JSON, 2-space indent, LF, trailing newline.

    ``serialize_scenarios(load_scenarios(path))`` is byte-identical to a file
    written in this canonical form.
    """
    doc = {
        "version": SCHEMA_VERSION,
        "scenarios": [
            {
                "prompt": s.prompt,
                "target": s.target,
                "category": s.category,
                "source": s.source,
            }
            for s in scenarios
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def bundled_dataset_path():
    """Filesystem path of the dataset shipped inside the package."""
    return resources.files(__package__).joinpath("assets/suppression_scenarios.json")


def category_stats(scenarios) -> CategoryStats:
    """Exact per-category counts for a scenario list."""
    counts = {name: 0 for name in CATEGORIES}
    for s in scenarios:
        counts[s.category] += 1
    return CategoryStats(counts=counts, total=len(scenarios))


def cooccurrence_verdict(detections, required: int = 2, total: int = 4, strict: bool = True) -> bool:
    """k-of-n association verdict over per-image detection flags.

    Default is the 2-of-4 rule: the pair counts as genuinely associated iff
    the target was detected in at least 2 of 4 images. ``strict`` enforces
    that exactly ``total`` flags are supplied.
    """
    flags = [bool(d) for d in detections]
    if required < 0 or total < 1 or required > total:
        raise ValidationError(f"bad verdict rule: {required}-of-{total}")
    if strict and len(flags) != total:
        raise ValidationError(
            f"expected exactly {total} detections, got {len(flags)}"
        )
    return sum(flags) >= required


def load_template(name: str) -> str:
    """Load a judge prompt template by name (see ``TEMPLATE_NAMES``)."""
    if name not in TEMPLATE_NAMES:
        raise ValidationError(f"unknown template {name!r}; expected one of {TEMPLATE_NAMES}")
    return (
        resources.files(__package__)
        .joinpath(f"assets/vlm_templates/{name}.txt")
        .read_text(encoding="utf-8")
    )


def render_template(template: str, substitutions: dict[str, str]) -> str:
    """Fill ``{placeholder}`` slots in a template; unknown keys are an error."""
    out = template
    for key, value in substitutions.items():
        slot = "{" + key + "}"
        if slot not in out:
            raise ValidationError(f"template has no placeholder {slot!r}")
        out = out.replace(slot, value)
    return out
