"""Replicated simulation studies: per-h clustering and estimation metrics."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .pipeline import DEFAULT_H_GRID, fit, fit_summaries
from .posterior import select_h
from .sampler import GwcrpConfig
from .simulation import SimulationDesign, ab_amse_report, generate_dataset, rand_index, replicate_rng

log = logging.getLogger(__name__)


@dataclass(eq=False)
class ReplicateResult:
    replicate: int
    censoring_rate: float
    h_values: tuple
    lpml: np.ndarray  # (H,)
    k_hat: np.ndarray  # (H,)
    rand: np.ndarray  # (H,)
    estimates: np.ndarray  # (H, n, d)
    h_star: float

    @property
    def star(self) -> int:
        return self.h_values.index(self.h_star)


@dataclass(eq=False)
class StudyResult:
    design: SimulationDesign
    h_values: tuple
    replicates: list
    failures: list = field(default_factory=list)
    requested: int = 0

    def method_rows(self):
        """``(method, h or None, index into h_values or None)`` for each reported method."""
        rows = [(f"h={h:g}", h, k) for k, h in enumerate(self.h_values)]
        rows.append(("optimal", None, None))
        if 0.0 in self.h_values:
            rows.append(("CRP", 0.0, self.h_values.index(0.0)))
        return rows

    def _pick(self, r: ReplicateResult, k):
        return r.star if k is None else k

    def k_hats(self, k=None) -> np.ndarray:
        return np.array([r.k_hat[self._pick(r, k)] for r in self.replicates])

    def rands(self, k=None) -> np.ndarray:
        return np.array([r.rand[self._pick(r, k)] for r in self.replicates])

    def estimates(self, k=None) -> np.ndarray:
        return np.array([r.estimates[self._pick(r, k)] for r in self.replicates])

    def selected_h(self) -> np.ndarray:
        return np.array([r.h_star for r in self.replicates])

    def metrics(self, k=None) -> dict:
        if not self.replicates:
            return {"k_hat_counts": {}, "prob_true_k": None, "rand_index_mean": None, "amse_beta_mean": None,
                    "amse_log_lambda_mean": None, "ab_beta_mean": None, "ab_lambda_mean": None}
        kh = self.k_hats(k)
        rep = ab_amse_report(self.estimates(k), self.design)
        out = {
            "k_hat_counts": {str(int(a)): int(b) for a, b in sorted(Counter(kh.tolist()).items())},
            "prob_true_k": float(np.mean(kh == self.design.k)),
            "rand_index_mean": float(self.rands(k).mean()),
        }
        out.update({key: val for key, val in rep.items()})
        return out

    def report(self) -> dict:
        return {
            "design": self.design.name or "custom",
            "replicates_requested": self.requested,
            "replicates_completed": len(self.replicates),
            "failures": self.failures,
            "true_k": self.design.k,
            "h_grid": list(self.h_values),
            "censoring_rate_mean": float(np.mean([r.censoring_rate for r in self.replicates])) if self.replicates else None,
            "selected_h_mean": float(self.selected_h().mean()) if self.replicates else None,
            "methods": {name: self.metrics(k) for name, _, k in self.method_rows()},
        }


def run_replicate(design: SimulationDesign, replicate: int, master_seed: int, h_grid: Sequence[float],
                  config: GwcrpConfig, kernel: str = "exponential") -> ReplicateResult:
    """Generate one dataset, fit every h, and pick h by LPML."""
    data = generate_dataset(design, replicate_rng(master_seed, replicate))
    part = design.partition
    h_values = tuple(sorted(set(float(h) for h in h_grid)))
    summaries = fit_summaries(data.region_data(part, design.graph.region_ids), part)
    seed = int(np.random.SeedSequence([master_seed, replicate, 1]).generate_state(1)[0])
    lpml, kh, ri, est = [], [], [], []
    for h in h_values:
        res = fit(data, design.graph, part, replace(config, h=h, seed=seed), kernel, summaries=summaries)
        s = res.summary
        lpml.append(s.lpml)
        kh.append(s.k_hat)
        ri.append(rand_index(s.dahl_labels, design.true_labels))
        est.append(s.estimates)
    h_star, _ = select_h(dict(zip(h_values, lpml)))
    return ReplicateResult(replicate, data.censoring_rate(), h_values, np.array(lpml), np.array(kh),
                           np.array(ri), np.array(est), h_star)


def _task(args):
    try:
        return run_replicate(*args)
    except (DataError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return exc


def run_study(design: SimulationDesign, replicates: int, master_seed: int = 0, h_grid=DEFAULT_H_GRID,
              config: GwcrpConfig | None = None, kernel: str = "exponential", threads: int = 1,
              progress=None) -> StudyResult:
    """Replicates share nothing but the design; failures are collected, not raised."""
    config = config or GwcrpConfig()
    h_values = tuple(sorted(set(float(h) for h in h_grid)))
    tasks = [(design, r, master_seed, h_values, config, kernel) for r in range(replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_task(t))
            if progress:
                progress(len(results), replicates)
    done, failures = [], []
    for r, res in enumerate(results):
        if isinstance(res, Exception):
            log.warning("replicate %d failed: %s", r, res)
            failures.append({"replicate": r, "error": str(res)})
        else:
            done.append(res)
    return StudyResult(design, h_values, done, failures, replicates)
