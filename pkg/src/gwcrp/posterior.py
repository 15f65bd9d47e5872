"""Posterior summaries: Dahl's representative partition, CPO/LPML and HPD intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .survival import ParamVector


@dataclass(eq=False)
class PosteriorSummary:
    dahl_index: int
    dahl_labels: np.ndarray
    k_hat: int
    estimates: np.ndarray  # (n, d) parameters of each region's cluster in the Dahl draw
    hpd: np.ndarray  # (n, d, 2) per-region HPD bounds on the (beta, log lambda) scale
    hpd_lambda: np.ndarray  # (n, J, 2) per-region HPD bounds for lambda on its natural scale
    posterior_mean: np.ndarray  # (n, d)
    cpo: np.ndarray
    lpml: float
    p: int
    level: float = 0.95

    @property
    def param_estimates(self) -> list:
        return [ParamVector.from_theta(t, self.p) for t in self.estimates]


def membership_matrix(labels) -> np.ndarray:
    z = np.asarray(labels)
    return (z[:, None] == z[None, :]).astype(float)


def dahl_partition(label_draws):
    """Index and labels of the draw closest to the mean co-clustering matrix.

    Distances are computed exactly in integers, scaled by ``B**2``, so ties
    are real ties; they go to the smallest draw index.
    """
    Z = np.asarray(label_draws)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ValueError("need a non-empty (B, n) array of label draws")
    B = Z.shape[0]
    counts = np.zeros((Z.shape[1], Z.shape[1]), dtype=np.int64)
    for z in Z:
        counts += z[:, None] == z[None, :]
    dist = np.empty(B, dtype=np.int64)
    for b, z in enumerate(Z):
        dist[b] = np.sum((B * (z[:, None] == z[None, :]) - counts) ** 2)
    best = int(np.argmin(dist))
    return best, Z[best].copy()


def cpo_lpml(per_region_loglik):
    """Harmonic-mean CPO per region (returned on the log scale) and LPML."""
    L = np.asarray(per_region_loglik, dtype=float)
    if L.ndim != 2 or L.shape[0] == 0:
        raise ValueError("need a non-empty (B, n) log-likelihood matrix")
    B = L.shape[0]
    log_cpo = -(logsumexp(-L, axis=0) - math.log(B))
    return log_cpo, float(log_cpo.sum())


def select_h(lpml_by_h: Mapping[float, float]):
    """Grid point with the largest LPML (smallest ``h`` on ties) and the sorted table.

    Values may be LPML floats or objects with an ``lpml`` attribute; ``None``
    or NaN entries count as failed cells and are skipped.
    """
    table = []
    for h, v in lpml_by_h.items():
        val = getattr(v, "lpml", v)
        table.append((float(h), None if val is None else float(val)))
    table.sort(key=lambda r: r[0])
    valid = [(h, v) for h, v in table if v is not None and np.isfinite(v)]
    if not valid:
        raise ValueError("no grid point has a finite LPML")
    best = max(v for _, v in valid)
    h_star = min(h for h, v in valid if v == best)
    return h_star, table


def hpd_interval(samples, level: float = 0.95):
    """Shortest interval covering ``ceil(level * B)`` sorted samples."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    B = x.size
    if B < 20:
        raise ValueError(f"need at least 20 samples for an HPD interval, got {B}")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    m = int(math.ceil(level * B))
    widths = x[m - 1 :] - x[: B - m + 1]
    lo = int(np.argmin(widths))
    return float(x[lo]), float(x[lo + m - 1])


def summarize(trace, level: float = 0.95) -> PosteriorSummary:
    """Dahl estimate, per-region HPD intervals and LPML of a chain trace."""
    idx, labels = dahl_partition(trace.labels)
    P = trace.region_params
    n, d = P.shape[1], P.shape[2]
    p = trace.p
    hpd = np.empty((n, d, 2))
    hpd_lam = np.empty((n, d - p, 2))
    for i in range(n):
        for a in range(d):
            hpd[i, a] = hpd_interval(P[:, i, a], level)
        for j in range(d - p):
            hpd_lam[i, j] = hpd_interval(np.exp(P[:, i, p + j]), level)
    if trace.loglik is not None:
        cpo, lpml = cpo_lpml(trace.loglik)
    else:
        cpo, lpml = np.full(n, np.nan), float("nan")
    return PosteriorSummary(
        dahl_index=idx,
        dahl_labels=labels,
        k_hat=int(labels.max()) + 1,
        estimates=P[idx].copy(),
        hpd=hpd,
        hpd_lambda=hpd_lam,
        posterior_mean=P.mean(axis=0),
        cpo=cpo,
        lpml=lpml,
        p=p,
        level=level,
    )


def cluster_report(summary: PosteriorSummary) -> list:
    """Per-cluster estimates with the interval of a representative region.

    The representative is the member region whose posterior mean is
    closest (Euclidean) to the average posterior mean over the cluster.
    """
    out = []
    for c in range(summary.k_hat):
        members = np.flatnonzero(summary.dahl_labels == c)
        avg = summary.posterior_mean[members].mean(axis=0)
        dist = np.linalg.norm(summary.posterior_mean[members] - avg, axis=1)
        rep = int(members[int(np.argmin(dist))])
        out.append({
            "cluster": c,
            "members": members.tolist(),
            "representative": rep,
            "estimate": summary.estimates[members[0]].copy(),
            "hpd": summary.hpd[rep].copy(),
            "hpd_lambda": summary.hpd_lambda[rep].copy(),
        })
    return out
