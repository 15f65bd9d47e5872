"""Piecewise-constant proportional-hazards likelihood and per-region fits.

Parameters of a region are stacked as ``theta = (beta, eta)`` with
``eta = log(lambda)``, so ``theta`` lives in an unconstrained space of
dimension ``p + J``.

Summation order: records of a region are sorted lexicographically by
(time, event, covariates) when a :class:`RegionData` is built, and every
sum runs in that order.  Fits are therefore bit-identical under any
permutation of the input records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, EmptyPieceError, RankDeficiencyError

LINPRED_CLAMP = 500.0
MAX_INFO_CONDITION = 1e8
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SurvivalRecord:
    time: float
    event: bool
    covariates: tuple
    region: object

    def __post_init__(self):
        if not self.time >= 0:
            raise ValueError(f"survival time must be >= 0, got {self.time}")
        object.__setattr__(self, "covariates", tuple(float(x) for x in self.covariates))
        object.__setattr__(self, "event", bool(self.event))


@dataclass(frozen=True)
class HazardPartition:
    """Cut points ``0 < a_1 < ... < a_{J-1}``; ``a_0 = 0`` and ``a_J = inf``."""

    cutpoints: tuple = ()

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cutpoints)
        arr = np.asarray(cuts)
        if arr.size and (not np.all(np.isfinite(arr)) or arr[0] <= 0 or np.any(np.diff(arr) <= 0)):
            raise ValueError(f"cutpoints must be finite, positive and strictly increasing: {cuts}")
        object.__setattr__(self, "cutpoints", cuts)

    @property
    def pieces(self) -> int:
        return len(self.cutpoints) + 1

    @property
    def lower(self) -> np.ndarray:
        return np.concatenate(([0.0], self.cutpoints))

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate((self.cutpoints, [np.inf]))

    def piece_of(self, times) -> np.ndarray:
        """0-based piece index; a time equal to a cut point goes to the later piece."""
        return np.searchsorted(np.asarray(self.cutpoints), np.asarray(times, dtype=float), side="right")

    def exposure_matrix(self, times) -> np.ndarray:
        """``(N, J)`` matrix of exposures ``Delta_j(t)``; rows sum to ``t``."""
        t = np.asarray(times, dtype=float)[:, None]
        lo = self.lower[None, :]
        hi = self.upper[None, :]
        return np.clip(np.minimum(t, hi) - lo, 0.0, None)


def exposure(t: float, j: int, partition: HazardPartition) -> float:
    """Time spent in piece ``j`` (1-based) by a subject followed up to ``t``."""
    if not 1 <= j <= partition.pieces:
        raise ValueError(f"piece index {j} outside 1..{partition.pieces}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    lo = partition.lower[j - 1]
    hi = partition.upper[j - 1]
    if t < lo:
        return 0.0
    if t < hi:
        return float(t - lo)
    return float(hi - lo)


@dataclass(frozen=True)
class ParamVector:
    beta: np.ndarray
    log_lambda: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        eta = np.array(self.log_lambda, dtype=float).reshape(-1)
        beta.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "log_lambda", eta)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate((self.beta, self.log_lambda))

    @property
    def hazards(self) -> np.ndarray:
        return np.exp(self.log_lambda)

    @classmethod
    def from_theta(cls, theta, p: int) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:p], theta[p:])

    def __len__(self):
        return self.beta.size + self.log_lambda.size


@dataclass(frozen=True, eq=False)
class RegionData:
    """Array view of one region's records plus the statistics the likelihood needs."""

    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    partition: HazardPartition
    region: object = None
    expo: np.ndarray = field(init=False, repr=False)
    counts: np.ndarray = field(init=False, repr=False)
    event_x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).reshape(-1)
        event = np.asarray(self.event, dtype=bool).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(time.size, -1)
        if not (time.size == event.size == X.shape[0]):
            raise ValueError("time, event and covariate rows must have equal length")
        if np.any(time < 0) or not np.all(np.isfinite(time)):
            raise ValueError("survival times must be finite and >= 0")
        keys = [X[:, c] for c in range(X.shape[1] - 1, -1, -1)] + [event, time]
        order = np.lexsort(keys) if time.size else np.arange(0)
        time, event, X = time[order], event[order], np.ascontiguousarray(X[order])
        for name, val in (("time", time), ("event", event), ("X", X)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "expo", self.partition.exposure_matrix(time))
        counts = np.zeros(self.partition.pieces, dtype=np.int64)
        np.add.at(counts, self.partition.piece_of(time[event]), 1)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "event_x", X[event].sum(axis=0) if time.size else np.zeros(X.shape[1]))

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord], partition: HazardPartition, p: int | None = None):
        records = list(records)
        regions = {r.region for r in records}
        if len(regions) > 1:
            raise ValueError(f"records span several regions: {sorted(map(str, regions))}")
        if p is None:
            p = len(records[0].covariates) if records else 0
        if any(len(r.covariates) != p for r in records):
            raise ValueError("covariate vectors differ in length")
        X = np.array([r.covariates for r in records], dtype=float).reshape(len(records), p)
        return cls(
            time=[r.time for r in records],
            event=[r.event for r in records],
            X=X,
            partition=partition,
            region=records[0].region if records else None,
        )


def _as_region(data, partition: HazardPartition) -> RegionData:
    if isinstance(data, RegionData):
        if data.partition != partition:
            return RegionData(data.time, data.event, data.X, partition, data.region)
        return data
    return RegionData.from_records(data, partition)


def event_counts(records, partition: HazardPartition) -> np.ndarray:
    """Number of observed events per hazard piece."""
    return _as_region(records, partition).counts.copy()


def _clamped_linpred(X, beta):
    lin = X @ beta
    return np.clip(lin, -LINPRED_CLAMP, LINPRED_CLAMP)


def region_log_likelihood(region: RegionData, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("non-finite parameter entries")
    p = region.p
    beta, eta = theta[:p], theta[p:]
    if region.n == 0:
        return 0.0
    u = np.exp(_clamped_linpred(region.X, beta))
    S = u @ region.expo
    return float(region.counts @ eta + region.event_x @ beta - np.exp(eta) @ S)


def log_likelihood(regions: Iterable, params: Sequence[ParamVector], partition: HazardPartition) -> float:
    """Joint log-likelihood over regions, each with its own ``ParamVector``."""
    regions = list(regions)
    params = list(params)
    if len(regions) != len(params):
        raise ValueError("one ParamVector per region is required")
    total = 0.0
    for recs, par in zip(regions, params):
        reg = _as_region(recs, partition)
        if reg.n and par.beta.size != reg.p:
            raise ValueError(f"beta has length {par.beta.size}, covariates have {reg.p}")
        total += region_log_likelihood(reg, par.theta)
    return total


def region_log_likelihoods(regions: Sequence[RegionData], betas, etas) -> np.ndarray:
    """Per-region log-likelihood for a batch of parameter draws.

    ``betas`` has shape ``(B, n, p)`` and ``etas`` shape ``(B, n, J)``; the
    result has shape ``(B, n)``.
    """
    betas = np.asarray(betas, dtype=float)
    etas = np.asarray(etas, dtype=float)
    out = np.empty(betas.shape[:2])
    for i, reg in enumerate(regions):
        b = betas[:, i, :]
        e = etas[:, i, :]
        if reg.n == 0:
            out[:, i] = 0.0
            continue
        lin = np.clip(b @ reg.X.T, -LINPRED_CLAMP, LINPRED_CLAMP)
        S = np.exp(lin) @ reg.expo
        out[:, i] = e @ reg.counts + b @ reg.event_x - np.sum(np.exp(e) * S, axis=1)
    return out


def score_and_hessian(records, theta, partition: HazardPartition):
    """Gradient and Hessian of a region's log-likelihood in ``(beta, eta)``."""
    reg = _as_region(records, partition)
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("non-finite parameter entries")
    p, J = reg.p, partition.pieces
    beta, eta = theta[:p], theta[p:]
    lam = np.exp(eta)
    u = np.exp(_clamped_linpred(reg.X, beta))
    Du = reg.expo * u[:, None]  # (N, J): Delta_j(T_l) exp(x_l'beta)
    S = Du.sum(axis=0)
    c = Du @ lam  # per-record cumulative hazard
    grad = np.empty(p + J)
    grad[:p] = reg.event_x - reg.X.T @ c
    grad[p:] = reg.counts - lam * S
    H = np.zeros((p + J, p + J))
    H[:p, :p] = -(reg.X.T * c) @ reg.X
    Hbe = -(reg.X.T @ Du) * lam[None, :]
    H[:p, p:] = Hbe
    H[p:, :p] = Hbe.T
    H[p:, p:] = np.diag(-lam * S)
    return grad, H


@dataclass(frozen=True, eq=False)
class RegionSummary:
    event_counts: np.ndarray
    theta_hat: ParamVector
    sigma_hat: np.ndarray
    subject_count: int
    region: object = None
    iterations: int = 0

    @property
    def dim(self) -> int:
        return len(self.theta_hat)


def _default_init(reg: RegionData) -> np.ndarray:
    total_exposure = reg.time.sum()
    rate = reg.counts.sum() / total_exposure if total_exposure > 0 else 1.0
    return np.concatenate((np.zeros(reg.p), np.full(reg.partition.pieces, np.log(rate))))


def fit_region_mle(
    records,
    partition: HazardPartition,
    init: ParamVector | None = None,
    max_iter: int = 100,
    tol: float = 1e-8,
    region=None,
) -> RegionSummary:
    """Newton-Raphson MLE of one region with step halving.

    Raises
    ------
    EmptyPieceError
        Some piece has no observed event.
    RankDeficiencyError
        The negative Hessian is not positive definite.
    ConvergenceError
        Gradient tolerance not reached in ``max_iter`` iterations, step
        halving exhausted, or the optimum sits on the linear-predictor clamp.
    """
    reg = _as_region(records, partition)
    name = region if region is not None else reg.region
    for j, cnt in enumerate(reg.counts):
        if cnt == 0:
            raise EmptyPieceError(name, j + 1)
    theta = _default_init(reg) if init is None else np.asarray(init.theta, dtype=float).copy()
    ll = region_log_likelihood(reg, theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad, H = score_and_hessian(reg, theta, partition)
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        try:
            L = np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError(name, f"negative Hessian not positive definite at iteration {it}")
        step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
        scale = 1.0
        for _ in range(31):
            cand = theta + scale * step
            cand_ll = region_log_likelihood(reg, cand)
            # allow for roundoff in ll once the ascent is below machine precision
            if np.isfinite(cand_ll) and cand_ll >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            scale *= 0.5
        else:
            # no ascent possible along the Newton direction: accept if stationary enough
            grad_norm = np.max(np.abs(grad))
            if grad_norm < max(tol, 1e-6):
                converged = True
                break
            raise ConvergenceError(name, f"step halving exhausted, max|grad|={grad_norm:.3g}")
        theta, ll = cand, cand_ll
    if not converged:
        grad, H = score_and_hessian(reg, theta, partition)
        if np.max(np.abs(grad)) >= tol:
            raise ConvergenceError(name, f"max|grad|={np.max(np.abs(grad)):.3g} after {max_iter} iterations")
    if reg.n and np.max(np.abs(reg.X @ theta[: reg.p])) >= LINPRED_CLAMP:
        raise ConvergenceError(name, "linear predictor reached the overflow clamp")
    _, H = score_and_hessian(reg, theta, partition)
    info = -H
    # scale-free conditioning check: catches parameters drifting to infinity along a ridge
    diag = np.diag(info)
    if not np.all(diag > 0):
        raise RankDeficiencyError(name, f"no information on parameter {int(np.argmin(diag > 0)) + 1}")
    scale = 1.0 / np.sqrt(diag)
    corr_cond = np.linalg.cond(info * scale[:, None] * scale[None, :])
    if not corr_cond < MAX_INFO_CONDITION:
        raise RankDeficiencyError(name, f"information matrix nearly singular (scaled condition {corr_cond:.3g})")
    try:
        L = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(name)
    Linv = np.linalg.inv(L)
    sigma = Linv.T @ Linv
    sigma = 0.5 * (sigma + sigma.T)
    if np.min(np.linalg.eigvalsh(sigma)) <= 0:
        raise RankDeficiencyError(name, "estimated covariance is not positive definite")
    return RegionSummary(
        event_counts=reg.counts.copy(),
        theta_hat=ParamVector.from_theta(theta, reg.p),
        sigma_hat=sigma,
        subject_count=reg.n,
        region=name,
        iterations=it,
    )


def normal_approx_loglik(theta_hat, sigma_hat, theta) -> float:
    """``log MVN(theta_hat | theta, sigma_hat)`` via a Cholesky factor."""
    x = np.asarray(getattr(theta_hat, "theta", theta_hat), dtype=float)
    m = np.asarray(getattr(theta, "theta", theta), dtype=float)
    S = np.asarray(sigma_hat, dtype=float)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise FloatingPointError("covariance matrix is not positive definite")
    z = np.linalg.solve(L, x - m)
    d = x.size
    return float(-0.5 * (d * _LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + z @ z))


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Flat subject-level arrays; ``region`` indexes into ``region_ids``."""

    region: np.ndarray
    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    region_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "region", np.asarray(self.region, dtype=np.int64))
        object.__setattr__(self, "time", np.asarray(self.time, dtype=float))
        object.__setattr__(self, "event", np.asarray(self.event, dtype=bool))
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float).reshape(len(self.time), -1))
        object.__setattr__(self, "region_ids", tuple(self.region_ids))

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def censoring_rate(self) -> float:
        return float(1.0 - self.event.mean())

    def region_data(self, partition: HazardPartition, order=None) -> list:
        """One :class:`RegionData` per region, in ``order`` (region ids) if given."""
        ids = self.region_ids if order is None else tuple(order)
        pos = {r: k for k, r in enumerate(self.region_ids)}
        out = []
        for rid in ids:
            if rid not in pos:
                raise KeyError(rid)
            m = self.region == pos[rid]
            out.append(RegionData(self.time[m], self.event[m], self.X[m], partition, rid))
        return out

    def records(self) -> list:
        return [
            SurvivalRecord(float(t), bool(e), tuple(x), self.region_ids[r])
            for r, t, e, x in zip(self.region, self.time, self.event, self.X)
        ]

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord]) -> "SurvivalDataset":
        ids = list(dict.fromkeys(r.region for r in records))
        pos = {r: k for k, r in enumerate(ids)}
        p = len(records[0].covariates) if records else 0
        if any(len(r.covariates) != p for r in records):
            raise ValueError("covariate vectors differ in length")
        return cls(
            region=[pos[r.region] for r in records],
            time=[r.time for r in records],
            event=[r.event for r in records],
            X=np.array([r.covariates for r in records], dtype=float).reshape(len(records), p),
            region_ids=tuple(ids),
        )
