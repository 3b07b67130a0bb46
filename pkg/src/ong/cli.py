"""Batch front end: guided toy runs, guidance-scale sweeps, dataset stats.

Subcommands:
  * ``run --config <file> [--out <csv>] [--dump-tensors <dir>] [--pixmap <file>]``
  * ``sweep --config <file> --alphas a,b,c --out <csv>``
  * ``bench-stats --data <file> [--out <csv>]``

Outputs are pure functions of their inputs: all randomness flows from the
seeds in the descriptor, timing information goes to the log (``ONG_LOG``
environment variable: error, info, or debug), never into output files.
Exit codes: 0 success, 2 validation failure, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, benchdata, linalg, toyworld
from .errors import DivergenceError, ValidationError
from .sampler import RunDescriptor, denoise, load_run_descriptor
from .toyworld import ConceptLibrary, ProbeReport

__all__ = [
    "RunReport",
    "execute_run",
    "run_report_rows",
    "sweep_rows",
    "stats_rows",
    "write_csv",
    "main",
]

log = logging.getLogger("ong")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3

RUN_CSV_HEADER = ("run_id", "seed", "alpha", "tau", "mode", "concept", "probe", "ratio", "config_hash")
SWEEP_CSV_HEADER = ("alpha", "concept", "probe", "ratio")
STATS_CSV_HEADER = ("category", "count", "proportion")


def config_hash(descriptor: RunDescriptor) -> str:
    """SHA-256 over the canonical descriptor JSON."""
    canonical = json.dumps(descriptor.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunReport:
    """Everything one run produced: descriptor echo, probes, timing, versions.

    ``alpha``, ``seed``, and ``mode`` are the values that actually ran (they
    may override the descriptor during sweeps).
    """

    descriptor: RunDescriptor
    config_hash: str
    version: str
    alpha: float
    seed: int
    mode: str
    probes: ProbeReport
    wall_time: float
    guided_latent: np.ndarray
    unguided_latent: np.ndarray


def _prompt_embeddings(descriptor: RunDescriptor, library: ConceptLibrary, seed: int):
    # Positive and negative jitter use independent streams spawned from the
    # run seed, so changing one prompt never perturbs the other.
    pos_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    neg_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    pos = toyworld.embed_prompt(
        descriptor.positive_concepts, library, descriptor.dims.n_text, seed=pos_rng
    )
    neg = toyworld.embed_prompt(
        descriptor.negative_concepts, library, descriptor.dims.n_text, seed=neg_rng
    )
    return pos, neg


def _probed_concepts(descriptor: RunDescriptor) -> tuple[str, ...]:
    ordered = []
    for name in (*descriptor.positive_concepts, *descriptor.negative_concepts):
        if name not in ordered:
            ordered.append(name)
    return tuple(ordered)


def execute_run(
    descriptor: RunDescriptor,
    alpha: float | None = None,
    seed: int | None = None,
    mode: str | None = None,
) -> RunReport:
    """Run one guided generation plus its unguided baseline and probe both.

    ``alpha``, ``seed``, and ``mode`` override the descriptor's values
    (sweeps reuse one descriptor across guidance scales and seeds).
    """
    started = time.perf_counter()
    effective_seed = descriptor.seed if seed is None else seed
    model = toyworld.build_toy_model(descriptor.model_seed, descriptor.dims)
    library = toyworld.build_concept_library(descriptor.model_seed, descriptor.dims.d_model)
    pos_text, neg_text = _prompt_embeddings(descriptor, library, effective_seed)
    scfg = descriptor.sampler_config(seed=effective_seed)
    gcfg = descriptor.guidance_config(alpha=alpha, mode=mode)
    guided = denoise(scfg, gcfg, model, pos_text, neg_text, descriptor.dims.n_image)
    unguided = denoise(
        scfg,
        descriptor.guidance_config(alpha=0.0, mode="none"),
        model,
        pos_text,
        None,
        descriptor.dims.n_image,
    )
    probes = toyworld.suppression_report(
        guided.image, unguided.image, library, _probed_concepts(descriptor)
    )
    report = RunReport(
        descriptor=descriptor,
        config_hash=config_hash(descriptor),
        version=__version__,
        alpha=gcfg.alpha,
        seed=effective_seed,
        mode=gcfg.mode,
        probes=probes,
        wall_time=time.perf_counter() - started,
        guided_latent=guided.image,
        unguided_latent=unguided.image,
    )
    log.info(
        "run %s finished in %.3fs (alpha=%s, mode=%s, seed=%s)",
        report.config_hash[:12],
        report.wall_time,
        gcfg.alpha,
        gcfg.mode,
        effective_seed,
    )
    return report


def run_report_rows(report: RunReport):
    """CSV rows for one run: one row per probed concept."""
    rows = []
    for concept, value in report.probes.guided.items():
        ratio = report.probes.ratios.get(concept, "")
        rows.append(
            (
                report.config_hash[:12],
                report.seed,
                report.alpha,
                report.descriptor.tau,
                report.mode,
                concept,
                value,
                ratio,
                report.config_hash,
            )
        )
    return rows


def sweep_rows(descriptor: RunDescriptor, alphas, seed: int | None = None):
    """One run per guidance scale at a fixed seed; rows (alpha, concept, probe, ratio).

    The ratio divides by the unguided baseline, so an ``alpha == 0`` row has
    ratio exactly 1 whenever the probe is defined.
    """
    rows = []
    for alpha in alphas:
        if not np.isfinite(alpha) or alpha < 0:
            raise ValidationError(f"sweep alphas must be finite and >= 0, got {alpha}")
        report = execute_run(descriptor, alpha=float(alpha), seed=seed)
        for concept, value in report.probes.guided.items():
            rows.append((float(alpha), concept, value, report.probes.ratios.get(concept, "")))
    return rows


def stats_rows(scenarios):
    """Category count and proportion rows plus a trailing total row."""
    stats = benchdata.category_stats(scenarios)
    proportions = stats.proportions()
    rows = [
        (name, stats.counts[name], f"{proportions[name]:.4f}")
        for name in benchdata.CATEGORIES
    ]
    rows.append(("total", stats.total, f"{1.0 if stats.total else 0.0:.4f}"))
    return rows


def write_csv(header, rows, out) -> str:
    """Serialise rows with the pinned dialect: comma, header, '.', LF."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    text = buf.getvalue()
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
    return text


def _cmd_run(args) -> int:
    descriptor = load_run_descriptor(args.config)
    report = execute_run(descriptor)
    write_csv(RUN_CSV_HEADER, run_report_rows(report), args.out)
    if args.dump_tensors:
        directory = Path(args.dump_tensors)
        directory.mkdir(parents=True, exist_ok=True)
        linalg.dump_tensor(directory / "guided_latent.ongt", report.guided_latent)
        linalg.dump_tensor(directory / "unguided_latent.ongt", report.unguided_latent)
        library = toyworld.build_concept_library(
            descriptor.model_seed, descriptor.dims.d_model
        )
        pos_text, neg_text = _prompt_embeddings(descriptor, library, descriptor.seed)
        linalg.dump_tensor(directory / "pos_text.ongt", pos_text)
        linalg.dump_tensor(directory / "neg_text.ongt", neg_text)
        log.info("tensors dumped to %s", directory)
    if args.pixmap:
        toyworld.write_pixmap(args.pixmap, report.guided_latent)
        log.info("pixmap written to %s", args.pixmap)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    descriptor = load_run_descriptor(args.config)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"--alphas must be a comma-separated list of reals: {exc}") from exc
    if not alphas:
        raise ValidationError("--alphas must name at least one guidance scale")
    rows = sweep_rows(descriptor, alphas)
    write_csv(SWEEP_CSV_HEADER, rows, args.out)
    return EXIT_OK


def _cmd_bench_stats(args) -> int:
    scenarios = benchdata.load_scenarios(args.data)
    write_csv(STATS_CSV_HEADER, stats_rows(scenarios), args.out)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ong",
        description="Toy attention-guidance runs, sweeps, and benchmark dataset stats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one descriptor and report probes")
    p_run.add_argument("--config", required=True, help="run descriptor JSON file")
    p_run.add_argument("--out", default="-", help="report CSV path (default: stdout)")
    p_run.add_argument("--dump-tensors", default=None, help="directory for tensor dumps")
    p_run.add_argument("--pixmap", default=None, help="write the guided latent as a P6 pixmap")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the descriptor once per guidance scale")
    p_sweep.add_argument("--config", required=True, help="run descriptor JSON file")
    p_sweep.add_argument("--alphas", required=True, help="comma-separated guidance scales")
    p_sweep.add_argument("--out", default="-", help="sweep CSV path (default: stdout)")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_stats = sub.add_parser("bench-stats", help="category statistics for a dataset file")
    p_stats.add_argument("--data", required=True, help="scenario dataset JSON file")
    p_stats.add_argument("--out", default="-", help="stats CSV path (default: stdout)")
    p_stats.set_defaults(fn=_cmd_bench_stats)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("ONG_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level_name, logging.ERROR),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        print(f"error: {exc}{field}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
