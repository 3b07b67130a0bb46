#!/usr/bin/env python3
"""Touring the concept-suppression scenario dataset.

Each scenario pairs a generation prompt with a concept that text-to-image
models tend to produce anyway; the fields and the k-of-n verification rule
live in ``ong.benchdata``.
"""

from ong.benchdata import (
    CATEGORIES,
    CATEGORY_LABELS,
    bundled_dataset_path,
    category_stats,
    cooccurrence_verdict,
    load_scenarios,
    load_template,
    render_template,
)

scenarios = load_scenarios(bundled_dataset_path())
stats = category_stats(scenarios)
proportions = stats.proportions()

print(f"=== {stats.total} scenarios across {len(CATEGORIES)} categories ===")
for name in CATEGORIES:
    label = CATEGORY_LABELS[name]
    print(f"  {label:<45} {stats.counts[name]:>3}  ({proportions[name]:.1%})")

print("\n=== one example per category ===")
for name in CATEGORIES:
    example = next(s for s in scenarios if s.category == name)
    print(f"  [{name}]")
    print(f"    prompt: {example.prompt!r}")
    print(f"    suppress: {example.target!r}")

print("\n=== the 2-of-4 verification rule ===")
print("a (prompt, target) pair enters the benchmark only when the target")
print("shows up in at least 2 of 4 independently generated images:")
for flags in ([True, True, False, False], [True, False, False, False], [True] * 4):
    verdict = "kept" if cooccurrence_verdict(flags) else "dropped"
    print(f"  detections {flags} -> {verdict}")

print("\n=== judge prompt templates ===")
template = load_template("negative_concept_suppression")
filled = render_template(
    template, {"suppression target": "bathtub", "Suppression target": "Bathtub"}
)
print("suppression-judge template with the target filled in:")
print("-" * 60)
print(filled)
print("-" * 60)
