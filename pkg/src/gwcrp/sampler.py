"""Gibbs sampler for cluster labels and cluster parameters under the gwCRP prior.

The sampler works on per-region normal approximations: region ``i`` enters
only through its MLE ``theta_hat[i]`` and covariance ``Sigma_hat[i]``.
Each sweep visits regions in index order and redraws the label from

* existing cluster ``c``: ``(sum_{j != i} w_ij 1[z_j = c]) * N(theta_hat_i; theta_c, Sigma_hat_i)``
* new cluster: ``alpha * N(theta_hat_i; 0, Sigma_hat_i + v0 I)``

then refreshes every cluster parameter from its conjugate Gaussian
posterior under the ``N(0, v0 I)`` base measure.

Random draws come from one ``numpy.random.Generator`` over a Philox
(counter-based) bit generator, consumed in this order per iteration:
for each region one uniform for the label, plus ``d`` standard normals if
the region opens a new cluster; then ``d`` standard normals per cluster,
in cluster order, for the parameter refresh.  Clusters are renumbered by
first appearance in the label vector at the end of every sweep.

Labels are 0-based in Python objects and 1-based in files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .survival import ParamVector, RegionSummary, region_log_likelihoods

_LOG_2PI = math.log(2.0 * math.pi)
INITS = ("singletons", "one")


@dataclass(frozen=True)
class GwcrpConfig:
    alpha: float = 1.0
    h: float = 0.0
    prior_variance: float = 100.0
    iterations: int = 2000
    burn_in: int = 500
    seed: int = 0
    init: str = "singletons"

    def __post_init__(self):
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.h >= 0:
            raise ValueError("h must be nonnegative")
        if not self.prior_variance > 0:
            raise ValueError("prior variance must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(eq=False)
class ChainState:
    labels: np.ndarray
    thetas: np.ndarray
    p: int = 0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).copy()
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float)).copy()
        k = self.thetas.shape[0]
        present = np.unique(self.labels)
        if self.labels.size and not np.array_equal(present, np.arange(k)):
            raise ValueError(f"labels must cover 0..{k - 1} exactly, got {present.tolist()}")

    @property
    def k(self) -> int:
        return self.thetas.shape[0]

    @property
    def cluster_params(self) -> list:
        return [ParamVector.from_theta(t, self.p) for t in self.thetas]


@dataclass(eq=False)
class ChainTrace:
    """Post-burn-in draws; all arrays share the leading draw axis."""

    labels: np.ndarray  # (B, n)
    region_params: np.ndarray  # (B, n, d): theta of each region's cluster
    k: np.ndarray  # (B,)
    loglik: np.ndarray | None  # (B, n) exact per-region log-likelihoods
    p: int
    burn_in: int
    k_all: np.ndarray = field(default=None, repr=False)  # (iterations,)

    @property
    def draws(self) -> int:
        return self.labels.shape[0]

    def cluster_params(self, b: int) -> list:
        lab = self.labels[b]
        out = []
        for c in range(int(self.k[b])):
            i = int(np.flatnonzero(lab == c)[0])
            out.append(ParamVector.from_theta(self.region_params[b, i], self.p))
        return out


@dataclass(frozen=True, eq=False)
class _Cache:
    theta_hat: np.ndarray
    prec: np.ndarray
    logdet: np.ndarray
    log_new: np.ndarray
    prec_theta: np.ndarray
    new_mean: np.ndarray
    new_chol: np.ndarray
    inv_v0: float


def _mvn_logpdf(x, mean, cov) -> float:
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, x - mean)
    return float(-0.5 * (x.size * _LOG_2PI + 2.0 * np.log(np.diag(L)).sum() + z @ z))


def conjugate_posterior(theta_hats, sigma_hats, prior_variance: float):
    """Mean and covariance of ``theta`` given Gaussian pseudo-observations.

    ``V = (I / v0 + sum Sigma_i^{-1})^{-1}`` and ``mean = V sum Sigma_i^{-1} theta_hat_i``.
    """
    theta_hats = np.atleast_2d(np.asarray(theta_hats, dtype=float))
    d = theta_hats.shape[1]
    P = np.eye(d) / prior_variance
    m = np.zeros(d)
    for th, S in zip(theta_hats, sigma_hats):
        Si = np.linalg.inv(np.asarray(S, dtype=float))
        P += Si
        m += Si @ th
    V = np.linalg.inv(P)
    V = 0.5 * (V + V.T)
    return V @ m, V


def _build_cache(summaries: Sequence[RegionSummary], config: GwcrpConfig) -> _Cache:
    n = len(summaries)
    d = summaries[0].dim
    theta_hat = np.array([s.theta_hat.theta for s in summaries])
    prec = np.empty((n, d, d))
    logdet = np.empty(n)
    log_new = np.empty(n)
    new_mean = np.empty((n, d))
    new_chol = np.empty((n, d, d))
    v0 = config.prior_variance
    for i, s in enumerate(summaries):
        S = np.asarray(s.sigma_hat, dtype=float)
        L = np.linalg.cholesky(S)
        Linv = np.linalg.inv(L)
        prec[i] = Linv.T @ Linv
        logdet[i] = 2.0 * np.log(np.diag(L)).sum()
        log_new[i] = math.log(config.alpha) + _mvn_logpdf(theta_hat[i], np.zeros(d), S + v0 * np.eye(d))
        mean, V = conjugate_posterior(theta_hat[i : i + 1], [S], v0)
        new_mean[i] = mean
        new_chol[i] = np.linalg.cholesky(V)
    prec_theta = np.einsum("nij,nj->ni", prec, theta_hat)
    return _Cache(theta_hat, prec, logdet, log_new, prec_theta, new_mean, new_chol, 1.0 / v0)


@numba.njit(cache=True)
def _log_masses(i, labels, k, thetas, W, theta_hat, prec, logdet, log_new, out):
    """Unnormalized log label masses for region ``i``; ``labels[i]`` is ignored."""
    n = labels.shape[0]
    d = theta_hat.shape[1]
    for c in range(k):
        out[c] = 0.0
    for j in range(n):
        if j != i:
            c = labels[j]
            if c >= 0:
                out[c] += W[i, j]
    diff = np.empty(d)
    for c in range(k):
        s = out[c]
        if s > 0.0:
            for a in range(d):
                diff[a] = theta_hat[i, a] - thetas[c, a]
            q = 0.0
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += prec[i, a, b] * diff[b]
                q += diff[a] * acc
            out[c] = math.log(s) - 0.5 * (d * 1.8378770664093453 + logdet[i] + q)
        else:
            out[c] = -np.inf
    out[k] = log_new[i]


@numba.njit(cache=True)
def _normalize_inplace(logm, m):
    mx = -np.inf
    for c in range(m):
        if logm[c] > mx:
            mx = logm[c]
    tot = 0.0
    for c in range(m):
        v = math.exp(logm[c] - mx) if logm[c] > -np.inf else 0.0
        logm[c] = v
        tot += v
    for c in range(m):
        logm[c] /= tot


@numba.njit(cache=True)
def _canonicalize(labels, k, thetas):
    n = labels.shape[0]
    d = thetas.shape[1]
    remap = np.full(k, -1, dtype=np.int64)
    nxt = 0
    for j in range(n):
        c = labels[j]
        if remap[c] < 0:
            remap[c] = nxt
            nxt += 1
    old = thetas[:k].copy()
    for c in range(k):
        for a in range(d):
            thetas[remap[c], a] = old[c, a]
    for j in range(n):
        labels[j] = remap[labels[j]]


@numba.njit(cache=True)
def _sweep(rng, labels, k, thetas, counts, W, theta_hat, prec, logdet, log_new, new_mean, new_chol, work):
    n = labels.shape[0]
    d = theta_hat.shape[1]
    z = np.empty(d)
    for i in range(n):
        c_old = labels[i]
        labels[i] = -1
        counts[c_old] -= 1
        if counts[c_old] == 0:
            for c in range(c_old, k - 1):
                counts[c] = counts[c + 1]
                for a in range(d):
                    thetas[c, a] = thetas[c + 1, a]
            for j in range(n):
                if labels[j] > c_old:
                    labels[j] -= 1
            k -= 1
        _log_masses(i, labels, k, thetas, W, theta_hat, prec, logdet, log_new, work)
        _normalize_inplace(work, k + 1)
        u = rng.random()
        choice = k
        acc = 0.0
        for c in range(k + 1):
            acc += work[c]
            if u < acc and work[c] > 0.0:
                choice = c
                break
        if choice == k:
            for a in range(d):
                z[a] = rng.standard_normal()
            for a in range(d):
                v = new_mean[i, a]
                for b in range(a + 1):
                    v += new_chol[i, a, b] * z[b]
                thetas[k, a] = v
            counts[k] = 0
            k += 1
        labels[i] = choice
        counts[choice] += 1
    _canonicalize(labels, k, thetas)
    for c in range(k):
        counts[c] = 0
    for j in range(n):
        counts[labels[j]] += 1
    return k


@numba.njit(cache=True)
def _refresh(rng, labels, k, thetas, prec, prec_theta, inv_v0):
    n = labels.shape[0]
    d = prec.shape[1]
    P = np.empty((d, d))
    m = np.empty(d)
    z = np.empty(d)
    y = np.empty(d)
    for c in range(k):
        for a in range(d):
            m[a] = 0.0
            for b in range(d):
                P[a, b] = inv_v0 if a == b else 0.0
        for j in range(n):
            if labels[j] == c:
                for a in range(d):
                    m[a] += prec_theta[j, a]
                    for b in range(d):
                        P[a, b] += prec[j, a, b]
        L = np.linalg.cholesky(P)
        # mean = P^{-1} m via L y = m, L' x = y
        for a in range(d):
            s = m[a]
            for b in range(a):
                s -= L[a, b] * y[b]
            y[a] = s / L[a, a]
        for a in range(d):
            z[a] = rng.standard_normal()
        # theta = L'^{-1} (y + z) has mean P^{-1} m and covariance P^{-1}
        for a in range(d):
            y[a] += z[a]
        for a in range(d - 1, -1, -1):
            s = y[a]
            for b in range(a + 1, d):
                s -= L[b, a] * thetas[c, b]
            thetas[c, a] = s / L[a, a]


@numba.njit(cache=True)
def _run(rng, labels, k, thetas, W, theta_hat, prec, logdet, log_new, prec_theta, new_mean, new_chol,
         inv_v0, iterations, burn_in):
    n = labels.shape[0]
    d = theta_hat.shape[1]
    B = iterations - burn_in
    out_labels = np.empty((B, n), dtype=np.int64)
    out_params = np.empty((B, n, d))
    out_k = np.empty(B, dtype=np.int64)
    k_all = np.empty(iterations, dtype=np.int64)
    counts = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        counts[labels[j]] += 1
    work = np.empty(n + 2)
    for it in range(iterations):
        k = _sweep(rng, labels, k, thetas, counts, W, theta_hat, prec, logdet, log_new, new_mean, new_chol, work)
        _refresh(rng, labels, k, thetas, prec, prec_theta, inv_v0)
        k_all[it] = k
        if it >= burn_in:
            b = it - burn_in
            out_k[b] = k
            for j in range(n):
                out_labels[b, j] = labels[j]
                for a in range(d):
                    out_params[b, j, a] = thetas[labels[j], a]
    return out_labels, out_params, out_k, k_all


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _weights_array(weights, n: int) -> np.ndarray:
    W = np.ascontiguousarray(getattr(weights, "weights", weights), dtype=float)
    if W.shape != (n, n):
        raise ValueError(f"weight matrix shape {W.shape} does not match {n} regions")
    return W


def label_full_conditional(i: int, state: ChainState, summaries, weights, config: GwcrpConfig) -> np.ndarray:
    """Probabilities of region ``i`` joining each existing cluster or a new one.

    Returns a vector of length ``k + 1``; the last entry is the new cluster.
    A cluster with zero weighted size for region ``i`` (e.g. the singleton
    holding ``i`` itself) gets probability 0.
    """
    cache = _build_cache(summaries, config)
    return _conditional_from_cache(i, state, cache, _weights_array(weights, len(summaries)))


def _conditional_from_cache(i, state, cache, W):
    labels = state.labels.copy()
    labels[i] = -1
    out = np.empty(state.k + 1)
    _log_masses(i, labels, state.k, np.ascontiguousarray(state.thetas), W, cache.theta_hat, cache.prec,
                cache.logdet, cache.log_new, out)
    mx = out.max()
    probs = np.exp(out - mx)
    return probs / probs.sum()


def update_cluster_params(state: ChainState, summaries, config: GwcrpConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw every cluster's parameter vector from its conjugate posterior."""
    cache = _build_cache(summaries, config)
    thetas = np.ascontiguousarray(state.thetas.copy())
    _refresh(rng, state.labels.copy(), state.k, thetas, cache.prec, cache.prec_theta, cache.inv_v0)
    return thetas


def initial_state(summaries, config: GwcrpConfig) -> ChainState:
    """Starting partition of the chain.

    ``"singletons"`` puts every region in its own cluster at its MLE;
    ``"one"`` puts all regions in one cluster at the precision-weighted mean
    of the MLEs.  Single-site moves rarely split a large cluster, so chains
    started from ``"one"`` can stay under-clustered for thousands of sweeps.
    """
    th = np.array([s.theta_hat.theta for s in summaries])
    p = summaries[0].theta_hat.beta.size
    if config.init == "singletons":
        return ChainState(np.arange(len(summaries), dtype=np.int64), th, p)
    precs = [np.linalg.inv(s.sigma_hat) for s in summaries]
    P = np.sum(precs, axis=0)
    m = np.sum([Pi @ t for Pi, t in zip(precs, th)], axis=0)
    mean = np.linalg.solve(P, m)
    return ChainState(np.zeros(len(summaries), dtype=np.int64), mean[None, :], p)


def run_chain(summaries: Sequence[RegionSummary], weights, config: GwcrpConfig, regions=None) -> ChainTrace:
    """Run one chain and keep the post-burn-in draws.

    When ``regions`` (the :class:`~gwcrp.survival.RegionData` list in the
    same order as ``summaries``) is given, the exact per-region
    log-likelihood of every retained draw is stored for CPO/LPML.
    """
    n = len(summaries)
    if n < 1:
        raise ValueError("need at least one region")
    W = _weights_array(weights, n)
    cache = _build_cache(summaries, config)
    state = initial_state(summaries, config)
    d = cache.theta_hat.shape[1]
    thetas = np.zeros((n + 1, d))
    thetas[: state.k] = state.thetas
    rng = make_rng(config.seed)
    labels, params, k, k_all = _run(
        rng, state.labels.copy(), state.k, thetas, W, cache.theta_hat, cache.prec, cache.logdet, cache.log_new,
        cache.prec_theta, cache.new_mean, cache.new_chol, cache.inv_v0, config.iterations, config.burn_in,
    )
    if not np.all(np.isfinite(params)):
        bad = np.argwhere(~np.isfinite(params))[0]
        raise FloatingPointError(
            f"non-finite cluster parameter at retained draw {bad[0]} (iteration {bad[0] + config.burn_in}), "
            f"region {summaries[bad[1]].region!r}"
        )
    p = summaries[0].theta_hat.beta.size
    loglik = None
    if regions is not None:
        loglik = trace_log_likelihoods(regions, params, p)
    return ChainTrace(labels=labels, region_params=params, k=k, loglik=loglik, p=p,
                      burn_in=config.burn_in, k_all=k_all)


def trace_log_likelihoods(regions, region_params, p: int, chunk: int = 256) -> np.ndarray:
    """Exact per-region log-likelihood for each retained draw, shape ``(B, n)``."""
    B = region_params.shape[0]
    out = np.empty((B, region_params.shape[1]))
    for s in range(0, B, chunk):
        blk = region_params[s : s + chunk]
        out[s : s + chunk] = region_log_likelihoods(regions, blk[:, :, :p], blk[:, :, p:])
    if not np.all(np.isfinite(out)):
        b, i = np.argwhere(~np.isfinite(out))[0]
        raise FloatingPointError(f"non-finite log-likelihood at draw {b}, region index {i}")
    return out
