"""End-to-end fitting: region MLEs, chains over an (h, J) grid, posterior summaries."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .graph import SpatialGraph, weight_matrix
from .posterior import PosteriorSummary, cluster_report, select_h, summarize
from .sampler import ChainTrace, GwcrpConfig, run_chain
from .survival import HazardPartition, RegionData, SurvivalDataset, fit_region_mle

log = logging.getLogger(__name__)

DEFAULT_H_GRID = tuple([round(0.2 * k, 1) for k in range(11)] + [float(h) for h in range(3, 11)])


@dataclass(eq=False)
class FitResult:
    h: float
    partition: HazardPartition
    kernel: str
    config: GwcrpConfig
    region_ids: tuple
    trace: ChainTrace
    summary: PosteriorSummary

    @property
    def J(self) -> int:
        return self.partition.pieces


@dataclass(eq=False)
class GridCell:
    h: float
    J: int
    cutpoints: tuple
    lpml: float | None
    k_hat: int | None
    status: str


@dataclass(eq=False)
class SelectResult:
    cells: list
    best: FitResult
    fits: dict  # (h, J) -> FitResult for successful cells when kept


def align(dataset: SurvivalDataset, graph: SpatialGraph) -> tuple:
    """Check that data and graph name the same regions; return ids in graph order."""
    data_ids = set(dataset.region_ids)
    graph_ids = set(graph.region_ids)
    missing = sorted(data_ids - graph_ids)
    if missing:
        raise DataError(f"regions in the data but not in the graph: {', '.join(map(str, missing))}")
    empty = sorted(graph_ids - data_ids)
    if empty:
        raise DataError(f"regions in the graph without any subjects: {', '.join(map(str, empty))}")
    return graph.region_ids


def fit_summaries(regions: Sequence[RegionData], partition: HazardPartition, max_iter: int = 100, tol: float = 1e-8):
    """Per-region MLE and covariance; every failing region is named in one error."""
    out, errors = [], []
    for reg in regions:
        try:
            out.append(fit_region_mle(reg, partition, max_iter=max_iter, tol=tol, region=reg.region))
        except DataError as exc:
            errors.append(str(exc))
    if errors:
        raise DataError("region fits failed:\n  " + "\n  ".join(errors))
    return out


def auto_cutpoints(dataset: SurvivalDataset, J: int) -> tuple:
    """Cut points splitting ``[0, median event time]`` at even quantiles of event times.

    The last cut point is the median observed event time; interior ones are
    quantiles of the event times below it.  Returns ``()`` for ``J == 1``.
    """
    if J < 1:
        raise DataError("number of pieces must be >= 1")
    if J == 1:
        return ()
    ev = np.sort(dataset.time[dataset.event])
    if ev.size == 0:
        raise DataError("no observed events to place cut points")
    anchor = float(np.median(ev))
    below = ev[ev < anchor]
    if J > 2 and below.size == 0:
        raise DataError("not enough distinct event times for automatic cut points")
    cuts = [float(np.quantile(below, k / (J - 1))) for k in range(1, J - 1)] + [anchor]
    cuts = tuple(cuts)
    if any(b <= a for a, b in zip((0.0,) + cuts, cuts)):
        raise DataError(f"automatic cut points are not strictly increasing: {cuts}")
    for rid, reg in zip(dataset.region_ids, dataset.region_data(HazardPartition(cuts))):
        empty = np.flatnonzero(reg.counts == 0)
        if empty.size:
            raise DataError(f"automatic cut points {cuts} leave region {rid!r} without events in piece {empty[0] + 1}")
    return cuts


def fit(dataset: SurvivalDataset, graph: SpatialGraph, partition: HazardPartition, config: GwcrpConfig,
        kernel: str = "exponential", summaries=None, level: float = 0.95) -> FitResult:
    """Region MLEs, one chain at ``config.h``, Dahl summary and LPML."""
    ids = align(dataset, graph)
    regions = dataset.region_data(partition, ids)
    if summaries is None:
        summaries = fit_summaries(regions, partition)
    W = weight_matrix(graph.distances, config.h, kernel)
    trace = run_chain(summaries, W, config, regions=regions)
    return FitResult(config.h, partition, W.kernel, config, ids, trace, summarize(trace, level))


def _grid_task(args):
    dataset, graph, partition, config, kernel, summaries = args
    return fit(dataset, graph, partition, config, kernel, summaries=summaries)


def select(dataset: SurvivalDataset, graph: SpatialGraph, h_grid: Sequence[float], partitions: Sequence[HazardPartition],
           config: GwcrpConfig, kernel: str = "exponential", threads: int = 1, keep_fits: bool = False) -> SelectResult:
    """Run every (h, J) cell and pick the largest LPML.

    Duplicate grid values are dropped.  A cell whose region fits or chain
    fail is recorded with its error and excluded from the selection.
    """
    h_values = sorted(set(float(h) for h in h_grid))
    parts = list({p.cutpoints: p for p in partitions}.values())
    if not h_values or not parts:
        raise DataError("h grid and J grid must be non-empty")
    ids = align(dataset, graph)
    cells, tasks, keys = [], [], []
    for part in parts:
        try:
            sums = fit_summaries(dataset.region_data(part, ids), part)
        except DataError as exc:
            log.warning("J=%d failed: %s", part.pieces, exc)
            cells += [GridCell(h, part.pieces, part.cutpoints, None, None, f"failed: {exc}") for h in h_values]
            continue
        for h in h_values:
            tasks.append((dataset, graph, part, replace(config, h=h), kernel, sums))
            keys.append((h, part))
    results = _map(_grid_task, tasks, threads)
    fits = {}
    best = None
    for (h, part), res in zip(keys, results):
        if isinstance(res, Exception):
            cells.append(GridCell(h, part.pieces, part.cutpoints, None, None, f"failed: {res}"))
            continue
        cells.append(GridCell(h, part.pieces, part.cutpoints, res.summary.lpml, res.summary.k_hat, "ok"))
        fits[(h, part.pieces)] = res
    ok = [c for c in cells if c.status == "ok"]
    if not ok:
        raise DataError("every grid cell failed")
    # largest LPML; ties to the smallest J, then the smallest h
    best_cell = max(ok, key=lambda c: (c.lpml, -c.J, -c.h))
    best = fits[(best_cell.h, best_cell.J)]
    cells.sort(key=lambda c: (c.J, c.h))
    return SelectResult(cells, best, fits if keep_fits else {(best_cell.h, best_cell.J): best})


def _safe(fn, arg):
    try:
        return fn(arg)
    except (DataError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return exc


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [_safe(fn, it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_safe, [fn] * len(items), items))


def select_h_table(select_result: SelectResult, J: int) -> tuple:
    """``select_h`` restricted to one J: returns ``(h_star, [(h, lpml), ...])``."""
    return select_h({c.h: c.lpml for c in select_result.cells if c.J == J})


def summary_json(result: FitResult) -> dict:
    """Serializable summary; labels and cluster numbers are 1-based."""
    s = result.summary
    p = s.p
    ids = [str(r) for r in result.region_ids]
    regions = []
    for i, rid in enumerate(ids):
        est = s.estimates[i]
        regions.append({
            "region": rid,
            "cluster": int(s.dahl_labels[i]) + 1,
            "beta": est[:p],
            "log_lambda": est[p:],
            "lambda": np.exp(est[p:]),
            "beta_hpd": s.hpd[i, :p],
            "log_lambda_hpd": s.hpd[i, p:],
            "lambda_hpd": s.hpd_lambda[i],
        })
    clusters = []
    for c in cluster_report(s):
        clusters.append({
            "cluster": c["cluster"] + 1,
            "members": [ids[m] for m in c["members"]],
            "representative": ids[c["representative"]],
            "beta": c["estimate"][:p],
            "lambda": np.exp(c["estimate"][p:]),
            "beta_hpd": c["hpd"][:p],
            "lambda_hpd": c["hpd_lambda"],
        })
    ks, counts = np.unique(result.trace.k, return_counts=True)
    cfg = result.config
    return {
        "region_ids": ids,
        "h": float(result.h),
        "J": result.J,
        "cutpoints": list(result.partition.cutpoints),
        "kernel": result.kernel,
        "alpha": cfg.alpha,
        "prior_variance": cfg.prior_variance,
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "seed": cfg.seed,
        "hpd_level": s.level,
        "k_hat": s.k_hat,
        "dahl_labels": (s.dahl_labels + 1).tolist(),
        "dahl_iteration": int(cfg.burn_in + s.dahl_index + 1),
        "lpml": s.lpml,
        "log_cpo": s.cpo,
        "k_posterior": {str(int(k)): float(c) / result.trace.draws for k, c in zip(ks, counts)},
        "regions": regions,
        "clusters": clusters,
    }
