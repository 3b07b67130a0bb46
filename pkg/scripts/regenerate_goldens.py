#!/usr/bin/env python3
"""Regenerate the committed golden CSVs from the reference descriptor.

The goldens pin the exact numerical output of the reference configuration;
regenerate them only when a deliberate change to the pipeline is supposed to
move the numbers, and say so in the commit.
"""

import csv
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ong.cli import SWEEP_CSV_HEADER, sweep_rows, write_csv  # noqa: E402
from ong.sampler import load_run_descriptor  # noqa: E402


def main():
    golden_dir = REPO / "tests" / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)
    descriptor = load_run_descriptor(REPO / "configs" / "reference_fast.json")

    write_csv(
        SWEEP_CSV_HEADER,
        sweep_rows(descriptor, [0.0, 1.0, 2.0, 4.0]),
        golden_dir / "reference_sweep.csv",
    )
    print("wrote", golden_dir / "reference_sweep.csv")

    rows = []
    for seed in range(20):
        for alpha, concept, probe, ratio in sweep_rows(descriptor, (0.0, 4.0), seed=seed):
            rows.append((seed, alpha, concept, probe, ratio))
    path = golden_dir / "suppression_20seeds.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("seed", "alpha", "concept", "probe", "ratio"))
        writer.writerows(rows)
    print("wrote", path)


if __name__ == "__main__":
    main()
