"""Command-line interface: study execution, CSV fitting, inference, plot data.

Commands
--------
simulate : run the Monte Carlo study over a grid of (n, rho, sigma2) cells
           and write report.json, replications.csv, the three summary tables,
           and manifest.json.
fit      : ingest long-format functional data CSVs, fit the requested
           estimators with GCV, and write coefficients, GCV traces, and a
           fit summary.
infer    : fit one estimator and report a confidence interval for the linear
           functional defined by direction functions in a CSV.
plotdata : re-emit a study report as tidy long-format CSV for plotting tools.

All floating-point output uses 17 significant digits so that re-reading the
files reproduces the binary values exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .basis import BasisSpec, quad_weights
from .design import BlockLayout, FunctionalDataset, build_design
from .errors import FunridgeError, ValidationError
from .estimators import fit_fre, fit_frfm, fit_frsm, frfm_penalty, uniform_penalty
from .inference import estimate_functional
from .partition import adaptive_ridge_partition
from .simulation import (
    ESTIMATORS,
    EstimatorBases,
    ReplicationRecord,
    SimulationConfig,
    StudyReport,
    run_study,
)
from .tuning import LambdaGrid, tune_fre, tune_frfm

THREADS_ENV_VAR = "FUNRIDGE_THREADS"

# Spacing between per-cell seed offsets; replication indices stay below it.
_CELL_SEED_STRIDE = 1 << 20


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: Path, command: str, config_echo, seed, failed: int) -> Path:
    files = {}
    for p in sorted(out_dir.iterdir()):
        if p.name == "manifest.json" or not p.is_file():
            continue
        files[p.name] = _sha256(p)
    manifest = {
        "command": command,
        "config": config_echo,
        "seed": seed,
        "out_dir": str(out_dir),
        "files": files,
        "failed_replications": failed,
    }
    path = out_dir / "manifest.json"
    _write_json(path, manifest)
    return path


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULT_STUDY_CONFIG = {
    "n": [25, 50, 100],
    "p": 10,
    "p1": 3,
    "grid_points": 100,
    "rho": [0.5, 0.8, 0.99],
    "sigma2": [0.5, 1.0, 10.0],
    "replications": 100,
    "ratio_c": 25.0,
    "seed": 20240501,
    "lambda_grid": {"lo": 1e-4, "hi": 1e4, "num": 50},
    "quadrature": "trapezoid",
    "basis": {
        "order": 4,
        "fre_knots": 7,
        "frfm_relevant_knots": 5,
        "frfm_nuisance_knots": 3,
        "frsm_knots": 5,
        "generation_knots": 12,
        "partition_knots": 12,
    },
}


def load_config(path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_STUDY_CONFIG))
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    return cfg


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _bases_from_config(cfg: dict) -> EstimatorBases:
    b = cfg["basis"]
    q = int(b.get("order", 4))

    def mk(knots):
        L = int(knots)
        return BasisSpec(0.0, 1.0, q, L, L + q)

    return EstimatorBases(
        fre=mk(b["fre_knots"]),
        frfm_relevant=mk(b["frfm_relevant_knots"]),
        frfm_nuisance=mk(b["frfm_nuisance_knots"]),
        frsm=mk(b["frsm_knots"]),
        generation=mk(b["generation_knots"]),
        partition=mk(b["partition_knots"]),
    )


def expand_cells(cfg: dict) -> list[SimulationConfig]:
    """One SimulationConfig per (n, rho, sigma2) cell, with stable per-cell seeds."""
    bases = _bases_from_config(cfg)
    lg = cfg["lambda_grid"]
    grid = LambdaGrid(lo=float(lg["lo"]), hi=float(lg["hi"]), num=int(lg["num"]))
    cells = []
    index = 0
    for n in _as_list(cfg["n"]):
        for rho in _as_list(cfg["rho"]):
            for s2 in _as_list(cfg["sigma2"]):
                cells.append(
                    SimulationConfig(
                        n=int(n),
                        rho=float(rho),
                        sigma2=float(s2),
                        p=int(cfg["p"]),
                        p1=int(cfg["p1"]),
                        M=int(cfg["grid_points"]),
                        bases=bases,
                        ratio_c=float(cfg["ratio_c"]),
                        replications=int(cfg["replications"]),
                        seed=int(cfg["seed"]) + index * _CELL_SEED_STRIDE,
                        lambda_grid=grid,
                        quadrature=cfg["quadrature"],
                    )
                )
                index += 1
    return cells


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_REPL_HEADER = [
    "n", "rho", "sigma2", "replication", "stream_seed",
    "imse_fre", "imse_frfm", "imse_frsm",
    "log10_cn_fre", "log10_cn_frfm", "log10_cn_frsm",
    "tpr", "fpr", "n_relevant_estimated",
    "lambda_fre", "lambda_frfm_1", "lambda_frfm_2", "lambda_frsm", "lambda_partition",
]


def _replication_row(cell: SimulationConfig, rec: ReplicationRecord) -> list:
    return [
        cell.n, cell.rho, cell.sigma2, rec.index, rec.stream_seed,
        rec.imse["fre"], rec.imse["frfm"], rec.imse["frsm"],
        rec.log10_cn["fre"], rec.log10_cn["frfm"], rec.log10_cn["frsm"],
        rec.tpr, rec.fpr, rec.n_relevant_estimated,
        rec.lambdas["fre"], rec.lambdas["frfm_1"], rec.lambdas["frfm_2"],
        rec.lambdas["frsm"], rec.lambdas["partition"],
    ]


def _report_payload(reports: list[tuple[SimulationConfig, StudyReport]]) -> dict:
    cells = []
    for cell, rep in reports:
        cells.append(
            {
                "n": cell.n,
                "rho": cell.rho,
                "sigma2": cell.sigma2,
                "seed": cell.seed,
                "replications": cell.replications,
                "imse_mean": rep.imse_mean,
                "imse_sd": rep.imse_sd,
                "tpr_mean": rep.tpr_mean,
                "fpr_mean": rep.fpr_mean,
                "log10_cn_median": rep.log10_cn_median,
                "failures": [{"replication": i, "error": msg} for i, msg in rep.failures],
            }
        )
    return {"cells": cells}


def cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.replications is not None:
        cfg["replications"] = args.replications
    threads = resolve_threads(args.threads)

    reports = []
    repl_rows = []
    failed = 0
    for cell in expand_cells(cfg):
        report = run_study(cell, max_workers=threads)
        reports.append((cell, report))
        failed += len(report.failures)
        for rec in report.records:
            repl_rows.append(_replication_row(cell, rec))

    _write_csv(out_dir / "replications.csv", _REPL_HEADER, repl_rows)
    _write_json(out_dir / "report.json", _report_payload(reports))

    sigmas = sorted({c.sigma2 for c, _ in reports})
    rhos = sorted({c.rho for c, _ in reports})
    ns = sorted({c.n for c, _ in reports})
    by_key = {(c.n, c.rho, c.sigma2): r for c, r in reports}

    imse_header = ["n", "estimator"] + [f"sigma2_{s}_rho_{r}" for s in sigmas for r in rhos]
    imse_rows = []
    for n in ns:
        for est in ESTIMATORS:
            row: list = [n, est]
            for s in sigmas:
                for r in rhos:
                    rep = by_key.get((n, r, s))
                    row.append(rep.imse_mean[est] if rep else float("nan"))
            imse_rows.append(row)
    _write_csv(out_dir / "imse_table.csv", imse_header, imse_rows)

    part_header = ["n", "sigma2"] + [f"{m}_rho_{r}" for r in rhos for m in ("tpr", "fpr")]
    part_rows = []
    for n in ns:
        for s in sigmas:
            row = [n, s]
            for r in rhos:
                rep = by_key.get((n, r, s))
                row.extend([rep.tpr_mean, rep.fpr_mean] if rep else [float("nan")] * 2)
            part_rows.append(row)
    _write_csv(out_dir / "partition_table.csv", part_header, part_rows)

    cn_rows = []
    for est in ESTIMATORS:
        pooled = float(np.median(np.concatenate(
            [[rec.log10_cn[est] for rec in rep.records] for _, rep in reports]
        )))
        cn_rows.append([est, pooled])
    _write_csv(out_dir / "cn_table.csv", ["estimator", "log10_cn_median"], cn_rows)

    _write_manifest(out_dir, "simulate", cfg, cfg["seed"], failed)
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------
# fit / infer shared ingestion
# ---------------------------------------------------------------------------

def read_long_csv(data_path: str, response_path: str) -> FunctionalDataset:
    """Read long-format trajectories plus a per-subject response file.

    Data columns: subject_id, predictor_id, grid_point, value.
    Response columns: subject_id, y. Every subject must supply every
    (predictor, grid point) pair.
    """
    required = ["subject_id", "predictor_id", "grid_point", "value"]
    cells: dict[tuple[str, int], dict[float, float]] = {}
    grid_points: set[float] = set()
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in required:
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise ValidationError(f"data CSV is missing required column {col!r}")
        for line_no, row in enumerate(reader, start=2):
            try:
                subject = row["subject_id"]
                predictor = int(row["predictor_id"])
                s = float(row["grid_point"])
                value = float(row["value"])
            except (TypeError, KeyError, ValueError) as exc:
                raise ValidationError(f"data CSV row {line_no}: {exc}") from exc
            cells.setdefault((subject, predictor), {})[s] = value
            grid_points.add(s)

    if not cells:
        raise ValidationError("data CSV contains no rows")
    subjects = sorted({subj for subj, _ in cells})
    predictors = sorted({pred for _, pred in cells})
    grid = np.array(sorted(grid_points))

    responses: dict[str, float] = {}
    with open(response_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("subject_id", "y"):
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise ValidationError(f"response CSV is missing required column {col!r}")
        for line_no, row in enumerate(reader, start=2):
            try:
                responses[row["subject_id"]] = float(row["y"])
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"response CSV row {line_no}: {exc}") from exc

    missing = [s for s in subjects if s not in responses]
    if missing:
        raise ValidationError(f"response CSV is missing subjects: {missing[:5]}")

    traj = np.empty((len(subjects), len(predictors), grid.size))
    for i, subj in enumerate(subjects):
        for jj, pred in enumerate(predictors):
            series = cells.get((subj, pred))
            if series is None or len(series) != grid.size:
                raise ValidationError(
                    f"subject {subj!r} predictor {pred} does not cover the full grid"
                )
            traj[i, jj, :] = [series[s] for s in grid]
    y = np.array([responses[s] for s in subjects])
    return FunctionalDataset(grid=grid, trajectories=traj, response=y)


def write_dataset_csv(dataset: FunctionalDataset, data_path: str, response_path: str) -> None:
    """Export a dataset in the long format accepted by ``fit``/``infer``."""
    rows = []
    n, p, M = dataset.trajectories.shape
    for i in range(n):
        for j in range(p):
            for l in range(M):
                rows.append([f"s{i:04d}", j, float(dataset.grid[l]), float(dataset.trajectories[i, j, l])])
    _write_csv(Path(data_path), ["subject_id", "predictor_id", "grid_point", "value"], rows)
    _write_csv(
        Path(response_path),
        ["subject_id", "y"],
        [[f"s{i:04d}", float(dataset.response[i])] for i in range(n)],
    )


def _fit_config_pieces(cfg: dict, data: FunctionalDataset):
    bases = _bases_from_config(cfg)
    lg = cfg["lambda_grid"]
    grid = LambdaGrid(lo=float(lg["lo"]), hi=float(lg["hi"]), num=int(lg["num"]))
    lo, hi = float(data.grid[0]), float(data.grid[-1])

    def respan(spec: BasisSpec) -> BasisSpec:
        return BasisSpec(lo, hi, spec.order_q, spec.interior_knots_L, spec.dim_K)

    bases = EstimatorBases(
        fre=respan(bases.fre),
        frfm_relevant=respan(bases.frfm_relevant),
        frfm_nuisance=respan(bases.frfm_nuisance),
        frsm=respan(bases.frsm),
        generation=respan(bases.generation),
        partition=respan(bases.partition),
    )
    return bases, grid


def _estimate_partition(cfg, data, bases, lam_grid, rule):
    p = data.n_predictors
    explicit = cfg.get("relevant_predictors")
    if explicit:
        relevant = tuple(int(j) for j in explicit)
        nuisance = tuple(j for j in range(p) if j not in set(relevant))
        return relevant, nuisance, None
    sys_part = build_design(data, BlockLayout.uniform(p, bases.partition), rule, center_columns=True)
    part = adaptive_ridge_partition(sys_part, grid=lam_grid)
    return part.relevant, part.nuisance, part


def _fit_one(est: str, data, bases, lam_grid, rule, relevant, nuisance, ratio_c=25.0):
    """Build the estimator's system, tune, and fit. Returns (system, fit, trace, penalty)."""
    p = data.n_predictors
    if est == "fre":
        system = build_design(data, BlockLayout.uniform(p, bases.fre), rule, center_columns=True)
        trace = tune_fre(system, lam_grid)
        fit = fit_fre(system, trace.chosen_lambda)
        penalty = uniform_penalty(system, trace.chosen_lambda)
    elif est == "frfm":
        layout = BlockLayout.partitioned(relevant, nuisance, bases.frfm_relevant, bases.frfm_nuisance, p)
        system = build_design(data, layout, rule, center_columns=True)
        trace = tune_frfm(system, ratio_c=ratio_c, grid=lam_grid)
        lam1 = trace.chosen_lambda
        fit = fit_frfm(system, lam1, ratio_c * lam1)
        penalty = frfm_penalty(system, lam1, ratio_c * lam1)
    elif est == "frsm":
        layout = BlockLayout(blocks=((tuple(relevant), bases.frsm),), p_total=p)
        system = build_design(data, layout, rule, center_columns=True)
        trace = tune_fre(system, lam_grid)
        fit = fit_frsm(system, trace.chosen_lambda)
        penalty = uniform_penalty(system, trace.chosen_lambda)
    else:
        raise ValidationError(f"unknown estimator {est!r}; use one of {ESTIMATORS}")
    return system, fit, trace, penalty


def cmd_fit(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config)
    data = read_long_csv(args.data, args.response)
    bases, lam_grid = _fit_config_pieces(cfg, data)
    rule = cfg["quadrature"]
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]

    relevant, nuisance, part = _estimate_partition(cfg, data, bases, lam_grid, rule)

    coef_rows = []
    trace_rows = []
    summary: dict = {
        "estimators": {},
        "partition": {
            "relevant": list(relevant),
            "nuisance": list(nuisance),
            "from_adaptive_ridge": part is not None,
        },
    }
    if part is not None:
        summary["partition"]["lambda"] = part.lambda_used
        summary["partition"]["iterations"] = part.iterations
        summary["partition"]["converged"] = part.converged

    w = quad_weights(data.grid, rule)
    for est in estimators:
        system, fit, trace, _ = _fit_one(
            est, data, bases, lam_grid, rule, relevant, nuisance, float(cfg["ratio_c"])
        )
        n = system.n
        sigma2 = fit.residual_ss / (n - fit.edf) if fit.edf < n else float("nan")
        influence = {
            str(j): float(np.sum(w * fit.beta_hat_grid[j] ** 2))
            for j in range(data.n_predictors)
        }
        summary["estimators"][est] = {
            "lambdas": [x for x in fit.lambdas],
            "edf": fit.edf,
            "residual_ss": fit.residual_ss,
            "sigma2_hat": sigma2,
            "y_mean": system.y_mean,
            "influence": influence,
        }
        for j in range(data.n_predictors):
            for l, s in enumerate(data.grid):
                coef_rows.append([est, j, float(s), float(fit.beta_hat_grid[j, l])])
        for i, lam in enumerate(trace.grid):
            trace_rows.append([est, float(lam), float(trace.scores[i]), int(i == trace.chosen_index)])

    _write_csv(out_dir / "coefficients.csv", ["estimator", "predictor_id", "grid_point", "beta_hat"], coef_rows)
    _write_csv(out_dir / "gcv_trace.csv", ["estimator", "lambda", "score", "chosen"], trace_rows)
    _write_json(out_dir / "fit.json", summary)
    _write_manifest(out_dir, "fit", cfg, cfg.get("seed"), 0)
    return 0


def read_direction_csv(path: str, p: int, grid: np.ndarray) -> np.ndarray:
    """Direction functions in the same long format (no subject column)."""
    x = np.zeros((p, grid.size))
    grid_index = {float(s): l for l, s in enumerate(grid)}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("predictor_id", "grid_point", "value"):
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise ValidationError(f"direction CSV is missing required column {col!r}")
        for line_no, row in enumerate(reader, start=2):
            j = int(row["predictor_id"])
            s = float(row["grid_point"])
            if s not in grid_index:
                raise ValidationError(
                    f"direction CSV row {line_no}: grid point {s} not in the data grid"
                )
            if not 0 <= j < p:
                raise ValidationError(f"direction CSV row {line_no}: predictor {j} out of range")
            x[j, grid_index[s]] = float(row["value"])
    return x


def cmd_infer(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config)
    data = read_long_csv(args.data, args.response)
    bases, lam_grid = _fit_config_pieces(cfg, data)
    rule = cfg["quadrature"]
    est = args.estimators.split(",")[0].strip()

    relevant, nuisance, _ = _estimate_partition(cfg, data, bases, lam_grid, rule)
    system, fit, _, penalty = _fit_one(
        est, data, bases, lam_grid, rule, relevant, nuisance, float(cfg["ratio_c"])
    )
    x = read_direction_csv(args.x, data.n_predictors, data.grid)
    result = estimate_functional(system, fit, penalty, x, level=args.level)

    _write_json(
        out_dir / "inference.json",
        {
            "estimator": est,
            "psi_hat": result.psi_hat,
            "variance_hat": result.variance_hat,
            "sigma2_hat": result.sigma2_hat,
            "edf": result.edf,
            "level": result.level,
            "ci": [result.ci[0], result.ci[1]],
        },
    )
    _write_manifest(out_dir, "infer", cfg, cfg.get("seed"), 0)
    return 0


# ---------------------------------------------------------------------------
# plotdata
# ---------------------------------------------------------------------------

def cmd_plotdata(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = Path(args.report)
    if report_path.is_dir():
        report_path = report_path / "report.json"
    if not report_path.exists():
        raise ValidationError(f"report file not found: {report_path}")
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)

    rows = []
    for cell in report["cells"]:
        key = [cell["n"], cell["rho"], cell["sigma2"]]
        for est in ESTIMATORS:
            rows.append(key + [est, "imse_mean", cell["imse_mean"][est]])
            rows.append(key + [est, "imse_sd", cell["imse_sd"][est]])
            rows.append(key + [est, "log10_cn_median", cell["log10_cn_median"][est]])
        rows.append(key + ["frfm", "tpr_mean", cell["tpr_mean"]])
        rows.append(key + ["frfm", "fpr_mean", cell["fpr_mean"]])
    _write_csv(
        out_dir / "plot_metrics.csv",
        ["n", "rho", "sigma2", "estimator", "metric", "value"],
        rows,
    )
    _write_manifest(out_dir, "plotdata", {"report": str(report_path)}, None, 0)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def resolve_threads(cli_value: int | None) -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    if cli_value is not None:
        return max(1, cli_value)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from exc
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="funridge",
        description="Partitioned functional ridge regression toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the Monte Carlo study")
    sim.add_argument("--config", default=None, help="JSON config path (defaults built in)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--replications", type=int, default=None)
    sim.add_argument("--threads", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit estimators to CSV data")
    fit.add_argument("--data", required=True, help="long-format trajectory CSV")
    fit.add_argument("--response", required=True, help="per-subject response CSV")
    fit.add_argument("--config", default=None)
    fit.add_argument("--out", required=True)
    fit.add_argument("--estimators", default="fre,frfm,frsm")
    fit.set_defaults(func=cmd_fit)

    inf = sub.add_parser("infer", help="confidence interval for a linear functional")
    inf.add_argument("--data", required=True)
    inf.add_argument("--response", required=True)
    inf.add_argument("--x", required=True, help="direction functions CSV")
    inf.add_argument("--config", default=None)
    inf.add_argument("--out", required=True)
    inf.add_argument("--estimators", default="fre")
    inf.add_argument("--level", type=float, default=0.95)
    inf.set_defaults(func=cmd_infer)

    plot = sub.add_parser("plotdata", help="tidy long-format export of a study report")
    plot.add_argument("--report", required=True, help="report.json path or its directory")
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plotdata)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FunridgeError, OSError, json.JSONDecodeError) as exc:
        # JSONDecodeError messages carry line/column anchors for bad configs
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
