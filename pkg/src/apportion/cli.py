"""Command-line surface: simulate, estimate, evaluate, convergence-study.

All numeric CSV output uses 17 significant digits (lossless for float64),
UTF-8, and LF line endings, so identical configs and seeds reproduce
byte-identical files.  Wall-clock timestamps live only in the manifest.
Errors print one machine-parsable line (``Category: detail``) to stderr
and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .estimator import ConcentrationMatrix, EstimatorConfig, apportion
from .evaluation import (
    MetricsRecord,
    StudyDesign,
    align_rows,
    convergence_study,
    nfd,
    nrmse,
    summarize_records,
)
from .exceptions import ApportionError, NegativeValue, NonFinite, ParseError
from .synthgen import RngSpec, make_ground_truth

WORKERS_ENV = "APPORTION_WORKERS"

_FMT = "%.17g"


def _fmt(value: float) -> str:
    return _FMT % value


def _open_write(path: Path):
    return open(path, "w", encoding="utf-8", newline="")


def _write_rows(path: Path, header: list[str], rows) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_matrix(path: Path, matrix: np.ndarray, names) -> None:
    rows = ([_fmt(v) for v in row] for row in np.atleast_2d(matrix))
    _write_rows(path, list(names), rows)


def _write_labeled_matrix(path: Path, matrix: np.ndarray, labels, names) -> None:
    rows = (
        [label] + [_fmt(v) for v in row]
        for label, row in zip(labels, np.atleast_2d(matrix))
    )
    _write_rows(path, ["source"] + list(names), rows)


def _read_labeled_matrix(path: Path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels, rows = [], []
        for row in reader:
            labels.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return labels, header[1:], np.asarray(rows)


def load_concentrations(path: str | Path, format: str = "csv") -> ConcentrationMatrix:
    """Parse a concentration CSV: header of pollutant names, numeric body.

    Rejects negatives and non-finite values with 1-based (line, column)
    coordinates in the error.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ParseError(1, 1, "empty file") from None
        width = len(names)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(line_no, 1, f"expected {width} fields, got {len(row)}")
            parsed = []
            for col_no, cell in enumerate(row, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(line_no, col_no, f"not a number: {cell!r}") from None
                if not np.isfinite(value):
                    raise NonFinite(line_no, col_no)
                if value < 0:
                    raise NegativeValue(line_no, col_no)
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise ParseError(2, 1, "no data rows")
    return ConcentrationMatrix(np.asarray(rows), tuple(names))


def _write_manifest(out_dir: Path, command: str, config: dict, outputs: list[str]):
    manifest = {
        "command": command,
        "config": config,
        "outputs": outputs,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with _open_write(out_dir / "manifest.json") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(arg: str) -> Path:
    path = Path(arg)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _existing_file(arg: str) -> Path:
    path = Path(arg)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"input file not found: {arg}")
    return path


def _cmd_simulate(args) -> int:
    out = _out_dir(args.out)
    rng = RngSpec(args.seed)
    y, truth = make_ground_truth(
        args.n,
        args.J,
        args.K,
        args.process,
        rng,
        n_candidates=args.n_candidates,
        plant_corners=args.plant_corners,
    )
    source_labels = truth.phi_true.source_labels
    _write_matrix(out / "y.csv", y.values, y.pollutant_names)
    _write_matrix(out / "w_true.csv", truth.W, source_labels)
    _write_labeled_matrix(out / "h_true.csv", truth.H, source_labels, y.pollutant_names)
    _write_rows(
        out / "mu_true.csv",
        ["source", "mu"],
        ([lab, _fmt(v)] for lab, v in zip(source_labels, truth.mu)),
    )
    _write_labeled_matrix(
        out / "phi_true.csv", truth.phi_true.values, source_labels, y.pollutant_names
    )
    config = {
        "process": args.process,
        "n": args.n,
        "J": args.J,
        "K": args.K,
        "seed": args.seed,
        "n_candidates": args.n_candidates,
        "plant_corners": args.plant_corners,
    }
    _write_manifest(
        out,
        "simulate",
        config,
        ["y.csv", "w_true.csv", "h_true.csv", "mu_true.csv", "phi_true.csv"],
    )
    return 0


def _estimator_config(args) -> EstimatorConfig:
    return EstimatorConfig(
        K=args.K,
        search=args.search,
        prune=args.prune,
        prune_clusters=args.prune_clusters,
        epsilon_clip=args.epsilon_clip,
        rank_cap=args.rank_cap,
        exhaustive_budget=args.exhaustive_budget,
        max_sweeps=args.max_sweeps,
        mean_method=args.mean_method,
        zero_row_policy=args.zero_row_policy,
    )


def _cmd_estimate(args) -> int:
    out = _out_dir(args.out)
    y = load_concentrations(args.input)
    cfg = _estimator_config(args)
    est = apportion(y, cfg)
    labels = est.phi_hat.source_labels
    _write_labeled_matrix(out / "phi_hat.csv", est.phi_hat.values, labels, y.pollutant_names)
    _write_labeled_matrix(out / "h_star_hat.csv", est.h_star_hat, labels, y.pollutant_names)
    _write_rows(
        out / "m_tilde.csv",
        ["source", "m_tilde"],
        ([lab, _fmt(v)] for lab, v in zip(labels, est.m_tilde)),
    )
    with _open_write(out / "diagnostics.json") as fh:
        json.dump(dataclasses.asdict(est.diagnostics), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = ["phi_hat.csv", "h_star_hat.csv", "m_tilde.csv", "diagnostics.json"]
    if est.candidates is not None:
        cands = est.candidates
        selected = set()
        for k in range(est.h_star_hat.shape[0]):
            matches = np.flatnonzero(
                (cands.ystar == est.h_star_hat[k]).all(axis=1)
            )
            if matches.size:
                selected.add(int(matches[0]))
        header = ["candidate_row"] + [f"z{i + 1}" for i in range(cands.z.shape[1])]
        header.append("selected")
        rows = (
            [int(cands.indices[i])]
            + [_fmt(v) for v in cands.z[i]]
            + [1 if i in selected else 0]
            for i in range(len(cands.indices))
        )
        _write_rows(out / "hull_scatter.csv", header, rows)
        outputs.append("hull_scatter.csv")
    for warning in est.diagnostics.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    config = {"input": str(args.input), **dataclasses.asdict(cfg)}
    _write_manifest(out, "estimate", config, outputs)
    return 0


def _cmd_evaluate(args) -> int:
    out = _out_dir(args.out)
    _, _, phi_hat = _read_labeled_matrix(args.phi_hat)
    _, _, phi_true = _read_labeled_matrix(args.phi_true)
    alignment = align_rows(phi_true, phi_hat)
    aligned = phi_hat[list(alignment.permutation)]
    metrics = {
        "nrmse": nrmse(phi_true, aligned),
        "nfd": nfd(phi_true, aligned),
        "total_sq_distance": alignment.total_sq_distance,
    }
    _write_rows(
        out / "metrics.csv",
        list(metrics),
        [[_fmt(v) for v in metrics.values()]],
    )
    config = {
        "phi_hat": str(args.phi_hat),
        "phi_true": str(args.phi_true),
        "permutation": list(alignment.permutation),
    }
    _write_manifest(out, "evaluate", config, ["metrics.csv"])
    return 0


def _metrics_csv_rows(records: list[MetricsRecord]):
    for r in records:
        if r.error:
            continue
        yield [
            r.n,
            r.replicate,
            _fmt(r.nrmse),
            _fmt(r.nfd),
            _fmt(r.runtime_seconds),
            r.search_used,
        ]


def _cmd_convergence_study(args) -> int:
    out = _out_dir(args.out)
    design = StudyDesign(
        process=args.process,
        J=args.J,
        K=args.K,
        n_grid=tuple(int(v) for v in args.n_grid.split(",")),
        replicates=args.replicates,
        search=args.search,
        master_seed=args.seed,
        n_candidates=args.n_candidates,
        prune=args.prune,
    )
    records = convergence_study(design, workers=args.workers)
    _write_rows(
        out / "metrics.csv",
        ["n", "replicate", "nrmse", "nfd", "runtime_seconds", "search_used"],
        _metrics_csv_rows(records),
    )
    summary = summarize_records(records)
    if summary:
        _write_rows(
            out / "summary.csv",
            list(summary[0]),
            (
                [row["n"], row["search_used"], row["count"]]
                + [_fmt(row[k]) for k in list(row)[3:]]
                for row in summary
            ),
        )
    failures = [
        {"n": r.n, "replicate": r.replicate, "search": r.search_used, "error": r.error}
        for r in records
        if r.error
    ]
    config = dataclasses.asdict(design)
    config["workers"] = args.workers
    config["failures"] = failures
    _write_manifest(out, "convergence-study", config, ["metrics.csv", "summary.csv"])
    return 0


def _default_workers() -> int:
    env = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apportion",
        description="Source attribution percentage matrices from convex geometry",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic data plus ground truth")
    sim.add_argument("--process", choices=["ar1", "mixture"], default="ar1")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--J", type=int, required=True)
    sim.add_argument("--K", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--n-candidates", type=int, default=None)
    sim.add_argument("--plant-corners", action="store_true")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=_cmd_simulate)

    est = sub.add_parser("estimate", help="estimate the attribution matrix")
    est.add_argument("--input", type=_existing_file, required=True)
    est.add_argument("--K", type=int, required=True)
    est.add_argument("--search", choices=["auto", "greedy", "exhaustive"], default="auto")
    est.add_argument("--prune", action="store_true")
    est.add_argument("--prune-clusters", type=int, default=50)
    est.add_argument("--epsilon-clip", type=float, default=1e-10)
    est.add_argument("--rank-cap", type=int, default=None)
    est.add_argument("--exhaustive-budget", type=int, default=2_000_000)
    est.add_argument("--max-sweeps", type=int, default=10)
    est.add_argument(
        "--mean-method", choices=["direct", "projected"], default="direct"
    )
    est.add_argument("--zero-row-policy", choices=["drop", "error"], default="drop")
    est.add_argument("--out", required=True)
    est.set_defaults(func=_cmd_estimate)

    ev = sub.add_parser("evaluate", help="score an estimate against the truth")
    ev.add_argument("--phi-hat", type=_existing_file, required=True)
    ev.add_argument("--phi-true", type=_existing_file, required=True)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=_cmd_evaluate)

    study = sub.add_parser(
        "convergence-study", help="replicated estimation across sample sizes"
    )
    study.add_argument("--process", choices=["ar1", "mixture"], default="ar1")
    study.add_argument("--J", type=int, default=8)
    study.add_argument("--K", type=int, default=3)
    study.add_argument("--n-grid", default="100,300,1500,10000")
    study.add_argument("--replicates", type=int, default=50)
    study.add_argument(
        "--search", choices=["greedy", "exhaustive", "auto", "both"], default="greedy"
    )
    study.add_argument("--seed", type=int, default=0)
    study.add_argument("--n-candidates", type=int, default=None)
    study.add_argument("--prune", action="store_true")
    study.add_argument("--workers", type=int, default=_default_workers())
    study.add_argument("--out", required=True)
    study.set_defaults(func=_cmd_convergence_study)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ApportionError, ValueError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
