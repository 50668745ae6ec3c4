"""Monte-Carlo comparison of NR, Firth-NR and ME-score on logistic data.

A design cell ``(n, p)`` fixes one design matrix and one coefficient
vector, then redraws the binary response ``Q`` times. Random streams are
numpy ``PCG64`` generators seeded by ``SeedSequence([master, n, p])`` for
the cell truth and ``SeedSequence([master, n, p, q + 1])`` for replicate
``q``, so serial and parallel runs agree bit for bit.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import __version__
from .baselines import FitConfig, fit_logistic_firth, fit_logistic_nr
from .entropy_solver import MAX_ITER, SolverConfig, solve_me_score
from .models import Dataset, LogisticModel
from .separation import detect_separation
from .simplex_core import SupportGrid

__all__ = [
    "METHODS",
    "SimulationDesign",
    "MethodMetrics",
    "CellMetrics",
    "generate_cell_truth",
    "run_cell",
    "run_design",
    "compute_metrics",
    "emit_tables",
    "write_outputs",
    "TABLE3_HEADER",
    "TABLE4_HEADER",
    "RB_HEADER",
]

log = logging.getLogger(__name__)

METHODS = ("NR", "NRF", "ME")
RB_ZERO = 1e-12


@dataclass(frozen=True)
class SimulationDesign:
    n_levels: tuple[int, ...] = (15, 50, 200)
    p_levels: tuple[int, ...] = (1, 5, 10)
    Q: int = 200
    sigma_beta: float = 2.5
    master_seed: int = 1
    me_bound: float = 10.0
    me_K: int = 7
    solver: SolverConfig = field(default_factory=SolverConfig)
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self) -> None:
        if not self.n_levels or not self.p_levels:
            raise ValueError("design needs at least one n and one p level")
        if any(int(v) != v or v < 1 for v in (*self.n_levels, *self.p_levels)):
            raise ValueError("design levels must be positive integers")
        if self.Q < 2:
            raise ValueError(f"need Q >= 2 replications, got {self.Q}")
        if not self.sigma_beta > 0:
            raise ValueError("sigma_beta must be positive")
        if self.me_K < 2 or not self.me_bound > 0:
            raise ValueError("ME support needs K >= 2 and a positive bound")

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(n, p) for p in self.p_levels for n in self.n_levels]


@dataclass(frozen=True)
class MethodMetrics:
    nonconvergence_rate: float
    n_used: int
    B: float
    V: float
    B2: float
    MSE: float
    r: float
    rb: np.ndarray
    note: str = ""


@dataclass(frozen=True)
class CellMetrics:
    n: int
    p: int
    Q: int
    separation_rate: float
    methods: dict[str, MethodMetrics]
    truth: np.ndarray


def generate_cell_truth(n: int, p: int, seed, sigma: float = 2.5):
    """Draw ``X = [1 | N(0, I)]``, ``beta ~ N(0, sigma^2 I)`` and ``pi``.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`.
    """
    if n < 1 or p < 1:
        raise ValueError(f"need positive n and p, got ({n}, {p})")
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p))])
    beta = rng.normal(0.0, sigma, size=p + 1)
    return X, beta, expit(X @ beta)


def compute_metrics(estimates, truth) -> dict:
    """Bias, variance and relative-bias summaries over replications.

    Bias follows the ``truth - estimate`` sign convention; ``V`` averages
    the per-parameter sample variances (ddof=1). Relative bias is
    ``(estimate - truth) / |truth|``; parameters with ``|truth| < 1e-12``
    are dropped from it and named in ``note``.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float).ravel()
    if est.shape[0] < 2:
        raise ValueError(f"need at least 2 replications, got {est.shape[0]}")
    if est.shape[1] != truth.size:
        raise ValueError(f"estimates have {est.shape[1]} columns, truth has {truth.size}")
    if not np.all(np.isfinite(est)):
        raise ValueError("estimates must be finite")
    bias = (truth - est).mean(axis=0)
    B = float(bias.mean())
    B2 = float(np.mean(bias**2))
    V = float(est.var(axis=0, ddof=1).mean())
    keep = np.abs(truth) >= RB_ZERO
    note = ""
    if not keep.all():
        note = f"relative bias undefined for parameters {np.flatnonzero(~keep).tolist()} (zero truth)"
    rb = (est[:, keep] - truth[keep]) / np.abs(truth[keep])
    pos, neg = int(np.sum(rb > 0)), int(np.sum(rb < 0))
    if neg:
        r = pos / neg
    else:
        r = math.inf if pos else math.nan
    return {"B": B, "B2": B2, "V": V, "MSE": V + B2, "rb": rb, "r": r, "note": note}


def _replicate(args):
    master, n, p, q, X, pi, grid_points, solver, fit = args
    rng = np.random.default_rng(np.random.SeedSequence([master, n, p, q + 1]))
    y = (rng.random(n) < pi).astype(float)
    d = Dataset(y=y, X=X)
    sep = detect_separation(d).separated
    nr = fit_logistic_nr(d, fit)
    nrf = fit_logistic_firth(d, fit)
    me = solve_me_score(LogisticModel(d), SupportGrid(grid_points), solver)
    return (
        sep,
        (nr.beta, nr.converged),
        (nrf.beta, nrf.converged),
        (me.theta, me.status != MAX_ITER),
    )


def run_cell(design: SimulationDesign, n: int, p: int, workers: int = 1) -> CellMetrics:
    """Simulate one design cell.

    A method's estimate enters the bias/variance summaries only when the
    method converged; ME counts as non-converged only when it runs out of
    outer iterations (an infeasible score, as under separation, still ends
    the solve normally).
    """
    X, beta, pi = generate_cell_truth(
        n, p, np.random.SeedSequence([design.master_seed, n, p]), design.sigma_beta
    )
    grid = SupportGrid.symmetric(design.me_bound, design.me_K, p + 1)
    jobs = [
        (design.master_seed, n, p, q, X, pi, grid.points, design.solver, design.fit)
        for q in range(design.Q)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs, chunksize=max(1, design.Q // (4 * workers))))
    else:
        results = [_replicate(job) for job in jobs]
    sep_rate = float(np.mean([r[0] for r in results]))
    methods = {}
    for m, name in enumerate(METHODS, start=1):
        flags = np.array([r[m][1] for r in results])
        est = np.array([r[m][0] for r in results])
        ok = flags & np.all(np.isfinite(est), axis=1)
        nc = float(1.0 - flags.mean())
        try:
            s = compute_metrics(est[ok], beta)
            methods[name] = MethodMetrics(nc, int(ok.sum()), s["B"], s["V"], s["B2"], s["MSE"], s["r"], s["rb"], s["note"])
        except ValueError as exc:
            methods[name] = MethodMetrics(nc, int(ok.sum()), *([math.nan] * 5), np.empty((0, p + 1)), str(exc))
    log.info("cell n=%d p=%d: separation %.3f", n, p, sep_rate)
    return CellMetrics(n, p, design.Q, sep_rate, methods, beta)


def run_design(design: SimulationDesign, cells=None, workers: int = 1) -> list[CellMetrics]:
    return [run_cell(design, n, p, workers) for n, p in (cells or design.cells)]


TABLE3_HEADER = ["n", "p", "separation"] + [f"nc_{m}" for m in METHODS]
TABLE4_HEADER = ["n", "p"] + [f"{stat}_{m}" for m in METHODS for stat in ("B", "V", "B2", "MSE")]
RB_HEADER = ["n", "p", "method", "replicate", "parameter", "rb"]
SUMMARY_HEADER = ["n", "p", "method", "n_used", "nonconvergence", "B", "V", "B2", "MSE", "r", "note"]


def emit_tables(cells: list[CellMetrics]) -> dict[str, list[list]]:
    """Rows (header first) for the separation, accuracy, RB and summary tables."""
    t3 = [TABLE3_HEADER]
    t4 = [TABLE4_HEADER]
    rb = [RB_HEADER]
    summary = [SUMMARY_HEADER]
    for c in cells:
        t3.append([c.n, c.p, c.separation_rate] + [c.methods[m].nonconvergence_rate for m in METHODS])
        row = [c.n, c.p]
        for m in METHODS:
            mm = c.methods[m]
            row += [mm.B, mm.V, mm.B2, mm.MSE]
            summary.append([c.n, c.p, m, mm.n_used, mm.nonconvergence_rate, mm.B, mm.V, mm.B2, mm.MSE, mm.r, mm.note])
            for q, vals in enumerate(mm.rb):
                for j, v in enumerate(vals):
                    rb.append([c.n, c.p, m, q, j, v])
        t4.append(row)
    return {"table3": t3, "table4": t4, "rb": rb, "summary": summary}


def _write_csv(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_outputs(cells: list[CellMetrics], design: SimulationDesign, outdir) -> dict[str, Path]:
    """Write the tables as CSV plus ``manifest.json`` into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, rows in emit_tables(cells).items():
        paths[name] = outdir / f"{name}.csv"
        _write_csv(paths[name], rows)
    manifest = {
        "design": {
            "n_levels": list(design.n_levels),
            "p_levels": list(design.p_levels),
            "Q": design.Q,
            "sigma_beta": design.sigma_beta,
            "cells": [[c.n, c.p] for c in cells],
        },
        "seeds": {
            "master_seed": design.master_seed,
            "cell_truth": "SeedSequence([master_seed, n, p])",
            "replicate": "SeedSequence([master_seed, n, p, q + 1])",
            "bit_generator": "PCG64",
        },
        "config": {
            "me_support": {"bound": design.me_bound, "K": design.me_K},
            "solver": asdict(design.solver),
            "fit": asdict(design.fit),
        },
        "version": {
            "mescore": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    paths["manifest"] = outdir / "manifest.json"
    paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n")
    return paths
