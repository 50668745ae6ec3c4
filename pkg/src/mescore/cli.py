"""Command-line interface: ``mescore fit | separation | simulate | report``.

Exit codes: 0 success (converged / not separated), 1 input or usage error,
2 fit finished without converging, 3 data are separated.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import FitConfig, RankError, fit_logistic_firth, fit_logistic_nr
from .datasets import InputError, read_dataset
from .entropy_solver import NoRootError, SolverConfig, solve_me_score, solve_normal_closed_form
from .models import FAMILIES, make_model
from .separation import detect_separation
from .simplex_core import SupportGrid, build_support
from .simulation import SimulationDesign, run_design, write_outputs

__all__ = ["main", "build_parser", "RunConfig", "read_fit_record", "EXIT_OK", "EXIT_INPUT", "EXIT_NONCONVERGED", "EXIT_SEPARATED"]

log = logging.getLogger("mescore")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2
EXIT_SEPARATED = 3

OUTPUT_ENV = "MESCORE_OUTPUT_DIR"
METHODS = ("me", "nr", "nrf", "closed-form")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated options for one subcommand invocation."""

    subcommand: str
    input_path: Path | None = None
    family: str = "normal"
    method: str = "me"
    supports: tuple[tuple[float, float, int], ...] = ()
    K: int | None = None
    bound: float | None = None
    sigma2: float = 1.0
    tol: float | None = None
    log_predictors: bool = False
    seed: int = 1
    Q: int = 200
    cells: tuple[tuple[int, int], ...] = ()
    workers: int = 1
    output: Path | None = None
    fmt: str = "json"

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise UsageError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.method in ("nr", "nrf") and self.family != "logistic":
            raise UsageError(f"method {self.method} applies to the logistic family only")
        if self.method == "closed-form" and self.family != "normal":
            raise UsageError("closed-form solution exists for the normal family only")
        if self.K is not None and self.K < 2:
            raise UsageError(f"need K >= 2, got {self.K}")
        if self.tol is not None and not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.fmt not in ("csv", "json"):
            raise UsageError(f"unknown format {self.fmt!r}")


def _default_outdir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "mescore-output"))


def _parse_support(text: str) -> tuple[float, float, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"support must be lower,upper,K; got {text!r}")
    try:
        lo, hi, K = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"support must be lower,upper,K; got {text!r}") from None
    return lo, hi, K


def _parse_cell(text: str) -> tuple[int, int]:
    try:
        n, p = text.lower().split("x")
        return int(n), int(p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cell must look like 200x1, got {text!r}") from None


def _sig(v) -> str:
    return f"{float(v):.6g}"


def _vec(values) -> str:
    return "(" + ", ".join(_sig(v) for v in values) + ")"


# ---------------------------------------------------------------- fit


def _support_grid(cfg: RunConfig, model) -> SupportGrid:
    names = model.param_names
    if not cfg.supports:
        K = cfg.K or 7
        if model.family == "logistic":
            return model.default_support(K, cfg.bound if cfg.bound is not None else 10.0)
        if cfg.bound is not None:
            return SupportGrid.symmetric(cfg.bound, K, model.J, names)
        return model.default_support(K)
    if len(cfg.supports) not in (1, model.J):
        raise UsageError(f"give one --support for all parameters or {model.J} (one each), got {len(cfg.supports)}")
    specs = cfg.supports * model.J if len(cfg.supports) == 1 else cfg.supports
    return SupportGrid(np.vstack([build_support(lo, hi, cfg.K or K) for lo, hi, K in specs]), names)


def _fit_record(cfg: RunConfig, model, estimate) -> dict:
    record = {
        "record": "fit",
        "family": cfg.family,
        "method": cfg.method,
        "input": str(cfg.input_path),
        "param_names": list(model.param_names),
        "version": __version__,
    }
    record.update(estimate)
    return record


def cmd_fit(cfg: RunConfig) -> int:
    kwargs = {"sigma0sq": cfg.sigma2} if cfg.family == "normal" else {}
    data = read_dataset(cfg.input_path, cfg.family, cfg.log_predictors)
    model = make_model(cfg.family, data, **kwargs)
    if cfg.method in ("nr", "nrf"):
        fc = FitConfig() if cfg.tol is None else FitConfig(tol=cfg.tol)
        fit = (fit_logistic_nr if cfg.method == "nr" else fit_logistic_firth)(data, fc)
        out = fit.as_dict()
        out["theta"] = out.pop("beta")
        converged = fit.converged
    else:
        grid = _support_grid(cfg, model)
        if cfg.method == "closed-form":
            est, lam1 = solve_normal_closed_form(data.y, grid.points[0], cfg.sigma2)
            out = est.as_dict()
            out["lambda1"] = lam1
        else:
            sc = SolverConfig() if cfg.tol is None else SolverConfig(constraint_tolerance=cfg.tol, optimality_tolerance=cfg.tol)
            est = solve_me_score(model, grid, sc)
            out = est.as_dict()
        converged = est.converged
    record = _fit_record(cfg, model, out)
    path = cfg.output or _default_outdir() / f"fit-{cfg.family}-{cfg.method}.{cfg.fmt}"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_fit_record(record, path, cfg.fmt)

    print(f"{cfg.family} / {cfg.method}: {'converged' if converged else 'NOT converged'}")
    for name, v in zip(model.param_names, record["theta"]):
        print(f"  {name:>12s} = {_sig(v)}")
    if "lambda1" in record:
        print(f"  {'lambda1':>12s} = {_sig(record['lambda1'])}")
    if "weights" in record:
        for name, row in zip(model.param_names, record["weights"]):
            print(f"  p[{name}] = {_vec(row)}")
        print(f"  score residual = {_sig(record['score_residual'])}, status = {record['status']}")
    if record.get("diverged"):
        print("  coefficients diverged (possible separation)")
    print(f"record written to {path}")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def write_fit_record(record: dict, path: Path, fmt: str) -> None:
    """Write a fit record as JSON or as a long ``section,name,value`` CSV."""
    if fmt == "json":
        path.write_text(json.dumps(record, indent=2) + "\n")
        return
    names = record["param_names"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section", "name", "value"])
        for key in ("record", "family", "method", "input", "status", "converged", "diverged", "iterations"):
            if key in record:
                w.writerow(["meta", key, record[key]])
        for name, v in zip(names, record["theta"]):
            w.writerow(["theta", name, repr(float(v))])
        for name, row in zip(names, record.get("weights", [])):
            for k, v in enumerate(row):
                w.writerow(["weights", f"{name}[{k}]", repr(float(v))])
        for key in ("lambda1", "entropy", "score_residual", "kkt_residual", "max_abs_score"):
            if key in record:
                w.writerow(["diagnostics", key, repr(float(record[key]))])


def read_fit_record(path) -> dict:
    """Read back a record written by ``fit`` (either format)."""
    path = Path(path)
    if path.suffix == ".json":
        rec = json.loads(path.read_text())
        if rec.get("record") != "fit":
            raise InputError(f"{path}: not a fit record")
        return rec
    rec: dict = {"param_names": [], "theta": []}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["section", "name", "value"]:
            raise InputError(f"{path}: not a fit record (bad header)")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected 3")
            section, name, value = row
            if section == "meta":
                rec[name] = value
            elif section == "theta":
                rec["param_names"].append(name)
                rec["theta"].append(float(value))
            elif section == "diagnostics":
                rec[name] = float(value)
    if rec.get("record") != "fit":
        raise InputError(f"{path}: not a fit record")
    return rec


# ---------------------------------------------------------- separation


def cmd_separation(cfg: RunConfig) -> int:
    data = read_dataset(cfg.input_path, "logistic", cfg.log_predictors)
    rep = detect_separation(data)
    if rep.separated:
        kind = "complete" if rep.complete else "quasi-complete"
        print(f"separated ({kind}); certificate b = {_vec(rep.certificate)}")
        print(f"  columns: {', '.join(data.columns)}")
    else:
        print("not separated")
    if cfg.output is not None:
        cfg.output.parent.mkdir(parents=True, exist_ok=True)
        cfg.output.write_text(json.dumps(rep.as_dict(), indent=2) + "\n")
    return EXIT_SEPARATED if rep.separated else EXIT_OK


# ------------------------------------------------------------ simulate


def cmd_simulate(cfg: RunConfig) -> int:
    base = SimulationDesign()
    try:
        design = replace(base, Q=cfg.Q, master_seed=cfg.seed)
        if cfg.K is not None or cfg.bound is not None:
            design = replace(design, me_K=cfg.K or base.me_K, me_bound=cfg.bound or base.me_bound)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cells = list(cfg.cells) or design.cells
    if any(n < 1 or p < 1 for n, p in cells):
        raise UsageError("cells need positive n and p")
    outdir = cfg.output or _default_outdir()
    results = run_design(design, cells, workers=cfg.workers)
    paths = write_outputs(results, design, outdir)
    print(f"{'n':>5s} {'p':>3s} {'sep':>8s} " + " ".join(f"{'MSE_' + m:>10s}" for m in ("NR", "NRF", "ME")))
    for c in results:
        mses = " ".join(f"{_sig(c.methods[m].MSE):>10s}" for m in ("NR", "NRF", "ME"))
        print(f"{c.n:>5d} {c.p:>3d} {_sig(c.separation_rate):>8s} {mses}")
    print(f"tables written to {paths['table3'].parent}")
    return EXIT_OK


# -------------------------------------------------------------- report


def _read_rows(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg: RunConfig) -> int:
    """Plots and a combined summary from a simulation directory and/or fit records."""
    src = cfg.input_path
    if src is None or not src.is_dir():
        raise InputError(f"{src}: not a directory")
    summary_path, rb_path = src / "summary.csv", src / "rb.csv"
    fit_paths = sorted(p for p in src.glob("fit-*") if p.suffix in (".json", ".csv"))
    has_sim = summary_path.exists() and rb_path.exists()
    if not has_sim and not fit_paths:
        raise InputError(f"{src}: no simulation tables (summary.csv, rb.csv) or fit records found")
    outdir = cfg.output or src
    outdir.mkdir(parents=True, exist_ok=True)
    combined = [["source", "n", "p", "method", "quantity", "value"]]

    if has_sim:
        summary = _read_rows(summary_path)
        rb = _read_rows(rb_path)
        if not summary:
            raise InputError(f"{summary_path}: no data rows")
        for row in summary:
            for q in ("n_used", "nonconvergence", "B", "V", "B2", "MSE", "r"):
                combined.append(["simulation", row["n"], row["p"], row["method"], q, row[q]])
        mse_svg, rb_svg = _plot_simulation(summary, rb, outdir)
        print(f"MSE plot: {mse_svg}")
        print(f"RB histograms: {rb_svg}")

    for path in fit_paths:
        rec = read_fit_record(path)
        print(f"{path.name}: {rec['family']} / {rec['method']}")
        for name, v in zip(rec["param_names"], rec["theta"]):
            print(f"  {name:>12s} = {_sig(v)}")
            combined.append([path.name, "", "", rec["method"], f"theta[{name}]", repr(float(v))])

    out = outdir / "report_summary.csv"
    with out.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(combined)
    print(f"summary written to {out}")
    return EXIT_OK


def _plot_simulation(summary: list[dict], rb: list[dict], outdir: Path) -> tuple[Path, Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # svg output is stable across runs only with a fixed hash salt
    plt.rcParams["svg.hashsalt"] = "mescore"
    methods = list(dict.fromkeys(r["method"] for r in summary))
    cells = list(dict.fromkeys((r["n"], r["p"]) for r in summary))
    lookup = {(r["n"], r["p"], r["method"]): float(r["MSE"]) for r in summary}

    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(cells)), 3.5))
    width = 0.8 / len(methods)
    x = np.arange(len(cells))
    for i, m in enumerate(methods):
        vals = np.array([lookup.get((n, p, m), math.nan) for n, p in cells])
        # log scale cannot show non-positive or missing MSE
        vals = np.where(vals > 0, vals, np.nan)
        ax.bar(x + (i - (len(methods) - 1) / 2) * width, vals, width, label=m)
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels([f"n={n}\np={p}" for n, p in cells])
    ax.set_ylabel("MSE (log scale)")
    ax.legend()
    fig.tight_layout()
    mse_svg = outdir / "mse_by_cell.svg"
    fig.savefig(mse_svg, metadata={"Date": None})
    plt.close(fig)

    fig, axes = plt.subplots(1, len(methods), figsize=(3.2 * len(methods), 3.0), squeeze=False)
    for ax, m in zip(axes[0], methods):
        vals = np.array([float(r["rb"]) for r in rb if r["method"] == m])
        vals = vals[np.isfinite(vals)]
        if vals.size:
            ax.hist(vals, bins=40)
        else:
            ax.text(0.5, 0.5, "no converged fits", ha="center", va="center", transform=ax.transAxes)
        ax.set_title(m)
        ax.set_xlabel("relative bias")
    fig.tight_layout()
    rb_svg = outdir / "rb_histograms.svg"
    fig.savefig(rb_svg, metadata={"Date": None})
    plt.close(fig)
    return mse_svg, rb_svg


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mescore", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fit", help="fit a model by ME-score, NR, Firth NR or the normal closed form")
    p.add_argument("input", type=Path, help="CSV with a header row; response column 'y'")
    p.add_argument("--family", choices=sorted(FAMILIES), required=True)
    p.add_argument("--method", choices=METHODS, default="me")
    p.add_argument(
        "--support",
        type=_parse_support,
        action="append",
        default=[],
        metavar="LO,HI,K",
        help="support bounds and size; give once for all parameters or once per parameter",
    )
    p.add_argument("--k", type=int, dest="K", help="number of support points (overrides K in --support)")
    p.add_argument("--bound", type=float, help="symmetric support bound when --support is absent")
    p.add_argument("--sigma2", type=float, default=1.0, help="known variance for the normal family")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--log-predictors", action="store_true", help="log-transform logistic predictors")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="json")
    p.add_argument("--out", type=Path, dest="output", help=f"record path (default: ${OUTPUT_ENV}/fit-FAMILY-METHOD.FMT)")

    p = sub.add_parser("separation", help="LP check for complete or quasi-complete separation")
    p.add_argument("input", type=Path)
    p.add_argument("--log-predictors", action="store_true")
    p.add_argument("--out", type=Path, dest="output", help="optional JSON report path")

    p = sub.add_parser("simulate", help="run the NR / NRF / ME simulation design")
    p.add_argument("--q", type=int, dest="Q", default=200, help="replications per cell")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--cells", type=_parse_cell, nargs="+", default=[], metavar="NxP")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--k", type=int, dest="K")
    p.add_argument("--bound", type=float)
    p.add_argument("--out", type=Path, dest="output", help=f"output directory (default: ${OUTPUT_ENV})")

    p = sub.add_parser("report", help="plots and combined summary from simulate/fit outputs")
    p.add_argument("input", type=Path, help="directory holding simulate and/or fit outputs")
    p.add_argument("--out", type=Path, dest="output", help="directory for plots (default: input)")
    return parser


COMMANDS = {"fit": cmd_fit, "separation": cmd_separation, "simulate": cmd_simulate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 means non-convergence here
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    opts = {k: v for k, v in vars(args).items() if k not in ("verbose", "input")}
    opts["input_path"] = getattr(args, "input", None)
    opts["supports"] = tuple(opts.pop("support", ()))
    opts["cells"] = tuple(opts.get("cells", ()))
    if args.subcommand == "separation":
        opts["family"] = "logistic"
    try:
        cfg = RunConfig(**opts)
        return COMMANDS[cfg.subcommand](cfg)
    except (InputError, UsageError, NoRootError, RankError, ValueError, OSError) as exc:
        print(f"mescore {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
