"""Experiment harness.

Subcommands:
    gen               write a synthetic dataset to a scores file
    ingest            score a transaction file and write it as scores
    sweep             run variant x epsilon x traverses x repetition cells
    correction-table  optimal vs mean correction terms across epsilon
    plot-series       x/y series (variance, accuracy, correction-sweep,
                      traverses) for external plotting

Every result is CSV; plotting is out of scope. Runs are deterministic:
each sweep cell derives its own random stream from the root seed plus the
cell's identity (epsilon, variant, traverses, repetition), so any row can
be reproduced standalone and re-runs are byte-identical apart from the
wall_time_ms column.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from . import allocation, correction, data, metrics, noise
from .allocation import Variant
from .svt import SvtConfig, run_svt

UPPER_BOUND = "upper"  # pseudo-variant: rank by exponentially perturbed scores

VARIANT_TOKENS = tuple(v.value for v in Variant) + (UPPER_BOUND,)

SWEEP_COLUMNS = ("dataset", "variant", "eps", "eps1", "eps2", "c", "alpha",
                 "k_est", "traverses", "repetition", "seed", "ncr", "f1",
                 "n_c", "n_a", "halt_reason", "r_op", "wall_time_ms")

PLOT_KINDS = ("variance", "accuracy", "correction-sweep", "traverses")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: dataset x variants x eps_values x traverses x repetitions.

    dataset is "binary", "zipf", or a path to a scores file. k_est of None
    applies the default rule floor(n_items / c). append + traverses control
    the re-enqueueing of negatives; every variant at a given traverse count
    consumes the same privacy budget, so traverse series are comparable.
    """

    dataset: str
    variants: tuple[str, ...]
    eps_values: tuple[float, ...]
    c: int = 50
    alpha: float = 0.0
    k_est: Optional[int] = None
    traverses: tuple[int, ...] = (1,)
    repetitions: int = 1
    seed: int = 0
    resample: bool = False
    append: bool = False
    monotonic: bool = False
    delta: float = 1.0
    n_items: int = 10000
    n_positive: int = 100
    output: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.variants or not self.eps_values:
            raise ValueError("variants and eps_values must be nonempty")
        unknown = [v for v in self.variants if v not in VARIANT_TOKENS]
        if unknown:
            raise ValueError(f"unknown variants {unknown}; "
                             f"choose from {VARIANT_TOKENS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if any(e <= 0 for e in self.eps_values):
            raise ValueError("eps values must be positive")
        if any(t < 1 for t in self.traverses):
            raise ValueError("traverses must be at least 1")


def load_dataset(cfg: ExperimentConfig) -> data.ScoredDataset:
    if cfg.dataset == "binary":
        return data.gen_binary(cfg.n_items, cfg.n_positive)
    if cfg.dataset == "zipf":
        return data.gen_zipf(cfg.n_items)
    return data.read_scores(cfg.dataset)


_VARIANT_KEY = {token: i for i, token in enumerate(VARIANT_TOKENS)}


def cell_rng(seed: int, eps: float, variant: str, traverses: int,
             repetition: int) -> np.random.Generator:
    """Independent stream for one sweep cell, derived from its identity.

    Keyed by the cell's values (not loop indices), so a single-cell re-run
    of any row reproduces it exactly.
    """
    entropy = (int(seed), _VARIANT_KEY[variant], int(round(eps * 1e9)),
               int(traverses), int(repetition))
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def _noisy_ranking(ds: data.ScoredDataset, eps2: float, delta: float, c: int,
                   truth: metrics.GroundTruth,
                   rng: np.random.Generator) -> tuple[float, float]:
    """Non-interactive reference: top-c of scores + Exp(delta/eps2) noise."""
    scores = np.array([s for _, s in ds.items])
    perturbed = scores + noise.sample(noise.exponential(delta / eps2), rng,
                                      size=ds.n_items)
    order = np.argsort(-perturbed, kind="stable")[:c]
    chosen = [ds.items[i][0] for i in order]
    return metrics.ncr(chosen, truth), metrics.f1(chosen, truth)


def run_sweep(cfg: ExperimentConfig, out: Optional[IO[str]] = None) -> list[dict]:
    """Run every sweep cell, returning (and optionally writing) result rows.

    Rows stream to ``out`` (or to ``cfg.output`` when set) as they finish,
    flushed per row so an aborted sweep keeps its partial results.
    """
    ds = load_dataset(cfg)
    truth = metrics.GroundTruth.from_items(ds.items, ds.threshold, cfg.c)
    k_est = cfg.k_est if cfg.k_est is not None else max(1, ds.n_items // cfg.c)

    close_out = False
    if out is None and cfg.output:
        out = open(cfg.output, "w", encoding="utf-8", newline="")
        close_out = True
    writer = None
    if out is not None:
        writer = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        out.flush()

    rows: list[dict] = []
    try:
        for eps in cfg.eps_values:
            for token in cfg.variants:
                for trav in cfg.traverses:
                    for rep in range(cfg.repetitions):
                        rng = cell_rng(cfg.seed, eps, token, trav, rep)
                        start = time.perf_counter()
                        row = _run_cell(cfg, ds, truth, k_est, eps, token,
                                        trav, rep, rng)
                        row["wall_time_ms"] = round(
                            (time.perf_counter() - start) * 1e3, 3)
                        rows.append(row)
                        if writer is not None:
                            writer.writerow(row)
                            out.flush()
    finally:
        if close_out:
            out.close()
    return rows


def _run_cell(cfg: ExperimentConfig, ds: data.ScoredDataset,
              truth: metrics.GroundTruth, k_est: int, eps: float, token: str,
              trav: int, rep: int, rng: np.random.Generator) -> dict:
    base = {"dataset": ds.name, "variant": token, "eps": eps, "c": cfg.c,
            "alpha": cfg.alpha, "k_est": k_est, "traverses": trav,
            "repetition": rep, "seed": cfg.seed}
    if token == UPPER_BOUND:
        split = allocation.split(eps, Variant.EXP_OPT_CORR, cfg.c,
                                 cfg.monotonic)
        ncr_val, f1_val = _noisy_ranking(ds, split.eps2, cfg.delta, cfg.c,
                                         truth, rng)
        base.update(eps1=split.eps1, eps2=split.eps2, ncr=ncr_val, f1=f1_val,
                    n_c=cfg.c, n_a=ds.n_items, halt_reason="", r_op="")
        return base
    variant = Variant(token)
    split = allocation.split(eps, variant, cfg.c, cfg.monotonic)
    svt_cfg = SvtConfig(
        delta=cfg.delta, eps1=split.eps1, eps2=split.eps2, c=cfg.c,
        k_max=ds.n_items * trav, variant=variant, resample=cfg.resample,
        append=cfg.append, max_traverses=trav, monotonic=cfg.monotonic,
        alpha=cfg.alpha, k_est=k_est,
        delta_dp=1.0 / ds.n_items if variant is Variant.GAU else None)
    stream = data.shuffle_and_stream(ds, rng)
    outcome = run_svt(stream, svt_cfg, rng)
    base.update(eps1=split.eps1, eps2=split.eps2,
                ncr=metrics.ncr(outcome.positives, truth),
                f1=metrics.f1(outcome.positives, truth),
                n_c=outcome.n_c, n_a=outcome.n_a,
                halt_reason=outcome.halt_reason.value,
                r_op=outcome.correction_used)
    return base


def emit_correction_table(eps_values: Sequence[float], c: int, alpha: float,
                          k_est: int = 200, delta: float = 1.0,
                          monotonic: bool = False,
                          m: int = correction.DEFAULT_MESH_COUNT,
                          e: float = correction.DEFAULT_TAIL_MASS) -> list[dict]:
    """Optimal vs mean correction terms per epsilon, fully parameterized."""
    rows = []
    for eps in eps_values:
        split = allocation.split(eps, Variant.EXP_OPT_CORR, c, monotonic)
        lam = split.eps2 / ((c if monotonic else 2 * c) * delta)
        query = correction.CorrectionQuery(b=delta / split.eps1, lam=lam,
                                           alpha=alpha, k=k_est, m=m, e=e)
        r_op, p_op = correction.optimal_correction(query)
        rows.append({"eps": eps, "w": split.w, "eps1": split.eps1,
                     "eps2": split.eps2, "lambda": lam, "k": k_est,
                     "alpha": alpha, "mean_correction": 1.0 / lam,
                     "optimal_correction": r_op, "success_probability": p_op})
    return rows


def emit_plot_series(kind: str, **params) -> list[dict]:
    """Plot-ready series for one figure family.

    Kinds: "variance" (comparison variance vs epsilon per noise family),
    "accuracy" (empirical failure rate vs tolerance per variant on a
    near-threshold worst-case stream), "correction-sweep" (success
    probability vs correction term), "traverses" (mean ncr vs traverse
    budget per variant).
    """
    if kind == "variance":
        return _series_variance(**params)
    if kind == "accuracy":
        return _series_accuracy(**params)
    if kind == "correction-sweep":
        return _series_correction_sweep(**params)
    if kind == "traverses":
        return _series_traverses(**params)
    raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")


_FAMILY_VARIANT = {"exp": Variant.EXP_OPT_CORR, "gum": Variant.GUM,
                   "lap": Variant.LAP, "gau": Variant.GAU}


def _series_variance(c: int = 50, delta: float = 1.0, monotonic: bool = False,
                     delta_dp: float = 1e-4, eps_min: float = 0.01,
                     eps_max: float = 2.0, points: int = 50) -> list[dict]:
    rows = []
    for eps in np.geomspace(eps_min, eps_max, points):
        for family, variant in _FAMILY_VARIANT.items():
            split = allocation.split(float(eps), variant, c, monotonic)
            v = allocation.comparison_variance(
                variant, split.eps1, split.eps2, c, delta, monotonic,
                delta_dp=delta_dp if family == "gau" else None)
            rows.append({"kind": "variance", "variant": family,
                         "eps": float(eps), "variance": v})
    return rows


def near_threshold_stream(k: int, threshold: float, alpha: float,
                          margin: float = 1e-6):
    """Worst-case accuracy stream: k negatives just below threshold - alpha,
    then one positive just above threshold + alpha, queried last."""
    scored = [(i, threshold - alpha - margin) for i in range(1, k + 1)]
    scored.append((k + 1, threshold + alpha + margin))
    from .svt import QueryStream
    return QueryStream.with_threshold(scored, threshold)


def _series_accuracy(k: int = 50, eps: float = 1.0, delta: float = 1.0,
                     alphas: Sequence[float] = (5.0, 10.0, 20.0, 30.0, 40.0),
                     trials: int = 500, seed: int = 0,
                     variants: Sequence[str] = ("exp-opt", "exp-mean",
                                                "exp-none", "lap", "gau",
                                                "gum"),
                     threshold: float = 1000.0) -> list[dict]:
    # Even split: the convention of the accuracy bound this series is
    # compared against.
    rows = []
    for token in variants:
        variant = Variant(token)
        for alpha in alphas:
            stream = near_threshold_stream(k, threshold, alpha)
            truth = metrics.GroundTruth.from_items(
                [(e.query_id, e.score) for e in stream], threshold, c=1)
            cfg = SvtConfig(
                delta=delta, eps1=eps / 2, eps2=eps / 2, c=1, k_max=k + 1,
                variant=variant, alpha=alpha, k_est=k,
                delta_dp=1.0 / (k + 1) if variant is Variant.GAU else None)
            rng = cell_rng(seed, eps, token, 1, 0)
            beta_hat = metrics.alpha_beta_estimate(
                lambda r: run_svt(stream, cfg, r), alpha, truth, trials, rng)
            rows.append({"kind": "accuracy", "variant": token, "eps": eps,
                         "alpha": alpha, "beta_hat": beta_hat,
                         "trials": trials})
    return rows


def _series_correction_sweep(eps: float = 0.1, c: int = 50,
                             delta: float = 1.0, alpha: float = 0.0,
                             k: int = 200, monotonic: bool = False,
                             r_min: Optional[float] = None,
                             r_max: Optional[float] = None,
                             points: int = 501) -> list[dict]:
    split = allocation.split(eps, Variant.EXP_OPT_CORR, c, monotonic)
    lam = split.eps2 / ((c if monotonic else 2 * c) * delta)
    mean = 1.0 / lam
    query = correction.CorrectionQuery(b=delta / split.eps1, lam=lam,
                                       alpha=alpha, k=k)
    grid = np.linspace(-2 * mean if r_min is None else r_min,
                       8 * mean if r_max is None else r_max, points)
    return [{"r": r, "p": p} for r, p in correction.correction_sweep(query, grid)]


def _series_traverses(dataset: str = "zipf", eps: float = 0.5, c: int = 50,
                      variants: Sequence[str] = ("exp-opt", "exp-mean", "lap"),
                      traverses: Sequence[int] = (1, 2, 5, 10),
                      repetitions: int = 20, seed: int = 0,
                      alpha: float = 0.0, delta: float = 1.0,
                      n_items: int = 10000,
                      n_positive: int = 100) -> list[dict]:
    cfg = ExperimentConfig(dataset=dataset, variants=tuple(variants),
                           eps_values=(eps,), c=c, alpha=alpha,
                           traverses=tuple(traverses),
                           repetitions=repetitions, seed=seed, append=True,
                           delta=delta, n_items=n_items,
                           n_positive=n_positive)
    cells = run_sweep(cfg)
    rows = []
    for token in variants:
        for trav in traverses:
            vals = np.array([r["ncr"] for r in cells
                             if r["variant"] == token
                             and r["traverses"] == trav])
            rows.append({"kind": "traverses", "variant": token,
                         "traverses": trav, "mean_ncr": float(vals.mean()),
                         "stderr_ncr": float(vals.std(ddof=1)
                                             / np.sqrt(len(vals))),
                         "repetitions": repetitions})
    return rows


def _write_rows(rows: list[dict], out_path: Optional[str],
                columns: Optional[Sequence[str]] = None) -> None:
    if not rows:
        raise ValueError("nothing to write")
    if columns is None:
        columns = list(rows[0].keys())
    handle = sys.stdout if out_path in (None, "-") else open(
        out_path, "w", encoding="utf-8", newline="")
    try:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if handle is not sys.stdout:
            handle.close()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _tokens(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svtkit",
        description="Sparse-vector experiment harness (CSV in, CSV out)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="write a synthetic dataset")
    p_gen.add_argument("--dataset", choices=("binary", "zipf"), required=True)
    p_gen.add_argument("--n-items", type=int, default=10000)
    p_gen.add_argument("--n-positive", type=int, default=100)
    p_gen.add_argument("--out", required=True)

    p_ing = sub.add_parser("ingest", help="score a transaction file")
    p_ing.add_argument("--path", required=True)
    p_ing.add_argument("--threshold", type=float, required=True)
    p_ing.add_argument("--out", required=True)

    p_sweep = sub.add_parser("sweep", help="run an experiment sweep")
    p_sweep.add_argument("--config", help="JSON file with config fields; "
                         "explicit flags override it")
    p_sweep.add_argument("--dataset")
    p_sweep.add_argument("--variants", type=_tokens)
    p_sweep.add_argument("--eps", type=_floats, dest="eps_values")
    p_sweep.add_argument("--c", type=int)
    p_sweep.add_argument("--alpha", type=float)
    p_sweep.add_argument("--k-est", type=int, dest="k_est")
    p_sweep.add_argument("--traverses", type=_ints)
    p_sweep.add_argument("--reps", type=int, dest="repetitions")
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--resample", action="store_true", default=None)
    p_sweep.add_argument("--append", action="store_true", default=None)
    p_sweep.add_argument("--monotonic", action="store_true", default=None)
    p_sweep.add_argument("--delta", type=float)
    p_sweep.add_argument("--n-items", type=int, dest="n_items")
    p_sweep.add_argument("--n-positive", type=int, dest="n_positive")
    p_sweep.add_argument("--out", dest="output")

    p_tab = sub.add_parser("correction-table",
                           help="optimal vs mean correction terms")
    p_tab.add_argument("--eps", type=_floats, default=(0.01, 0.05, 0.1, 1, 2),
                       dest="eps_values")
    p_tab.add_argument("--c", type=int, default=50)
    p_tab.add_argument("--alpha", type=float, default=0.0)
    p_tab.add_argument("--k-est", type=int, default=200, dest="k_est")
    p_tab.add_argument("--delta", type=float, default=1.0)
    p_tab.add_argument("--monotonic", action="store_true")
    p_tab.add_argument("--out")

    p_plot = sub.add_parser("plot-series", help="emit plot-ready series")
    p_plot.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p_plot.add_argument("--params", default="{}",
                        help="JSON object of series parameters")
    p_plot.add_argument("--out")
    return parser


def _sweep_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            values.update(json.load(fh))
    for f in fields(ExperimentConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    for key in ("variants", "eps_values", "traverses"):
        if key in values and values[key] is not None:
            values[key] = tuple(values[key])
    if "dataset" not in values:
        raise ValueError("a dataset is required (flag --dataset or config)")
    return ExperimentConfig(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            ds = (data.gen_binary(args.n_items, args.n_positive)
                  if args.dataset == "binary" else data.gen_zipf(args.n_items))
            data.write_scores(ds, args.out)
        elif args.command == "ingest":
            ds = data.ingest_transactions(args.path, args.threshold)
            data.write_scores(ds, args.out)
        elif args.command == "sweep":
            cfg = _sweep_config(args)
            if cfg.output:
                run_sweep(cfg)
            else:
                _write_rows(run_sweep(cfg), None, columns=SWEEP_COLUMNS)
        elif args.command == "correction-table":
            rows = emit_correction_table(args.eps_values, args.c, args.alpha,
                                         k_est=args.k_est, delta=args.delta,
                                         monotonic=args.monotonic)
            _write_rows(rows, args.out)
        elif args.command == "plot-series":
            rows = emit_plot_series(args.kind, **json.loads(args.params))
            _write_rows(rows, args.out)
    except Exception as exc:  # surface a clean message, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
