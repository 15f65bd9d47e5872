"""Region adjacency graphs, graph distances and geographical weights."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KERNELS = ("exponential", "squared-exponential")
_KERNEL_ALIASES = {"exp": "exponential", "sqexp": "squared-exponential"}


def graph_distances(adjacency) -> np.ndarray:
    """All-pairs shortest-path edge counts by breadth-first search.

    Disconnected pairs get ``inf``.
    """
    A = np.asarray(adjacency, dtype=bool)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("adjacency must be square")
    neighbors = [np.flatnonzero(A[i]) for i in range(n)]
    D = np.full((n, n), np.inf)
    for src in range(n):
        row = D[src]
        row[src] = 0.0
        queue = deque([src])
        while queue:
            v = queue.popleft()
            dv = row[v] + 1.0
            for w in neighbors[v]:
                if row[w] == np.inf:
                    row[w] = dv
                    queue.append(w)
    return D


@dataclass(frozen=True, eq=False)
class SpatialGraph:
    region_ids: tuple
    adjacency: np.ndarray
    distances: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = tuple(self.region_ids)
        if len(set(ids)) != len(ids):
            raise ValueError("region ids must be unique")
        A = np.array(self.adjacency, dtype=bool)
        n = len(ids)
        if A.shape != (n, n):
            raise ValueError(f"adjacency shape {A.shape} does not match {n} regions")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A)):
            raise ValueError("adjacency must have a false diagonal")
        A.setflags(write=False)
        D = graph_distances(A)
        D.setflags(write=False)
        object.__setattr__(self, "region_ids", ids)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "distances", D)

    @property
    def n(self) -> int:
        return len(self.region_ids)

    def index(self, region) -> int:
        return self.region_ids.index(region)

    @classmethod
    def from_edges(cls, edges: Sequence, regions: Sequence | None = None) -> "SpatialGraph":
        """Build from an undirected edge list; ``regions`` fixes order and adds isolated vertices."""
        order = list(regions) if regions is not None else []
        seen = set(order)
        for e in edges:
            for r in e:
                if r not in seen:
                    seen.add(r)
                    order.append(r)
        pos = {r: k for k, r in enumerate(order)}
        A = np.zeros((len(order), len(order)), dtype=bool)
        for e in edges:
            if len(e) == 1:
                continue
            a, b = e
            if a == b:
                raise ValueError(f"self-loop on region {a!r}")
            A[pos[a], pos[b]] = A[pos[b], pos[a]] = True
        return cls(tuple(order), A)

    def edges(self) -> list:
        i, j = np.nonzero(np.triu(self.adjacency))
        return [(self.region_ids[a], self.region_ids[b]) for a, b in zip(i, j)]

    def subgraph(self, regions: Sequence) -> "SpatialGraph":
        idx = [self.index(r) for r in regions]
        return SpatialGraph(tuple(regions), self.adjacency[np.ix_(idx, idx)])


def lattice_graph(rows: int, cols: int) -> SpatialGraph:
    """Rook-adjacency lattice with region ids ``r{row}c{col}`` in row-major order."""
    ids = [f"r{r}c{c}" for r in range(rows) for c in range(cols)]
    n = rows * cols
    A = np.zeros((n, n), dtype=bool)
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                A[k, k + 1] = A[k + 1, k] = True
            if r + 1 < rows:
                A[k, k + cols] = A[k + cols, k] = True
    return SpatialGraph(tuple(ids), A)


def normalize_kernel(kernel: str) -> str:
    kernel = _KERNEL_ALIASES.get(kernel, kernel)
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS} or exp/sqexp")
    return kernel


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    weights: np.ndarray
    decay: float
    kernel: str = "exponential"


def weight_matrix(distances, h: float, kernel: str = "exponential") -> WeightMatrix:
    """Geographical weights: 1 within distance 1, kernel decay beyond, 0 if disconnected.

    ``exponential``: ``exp(-d h)``; ``squared-exponential``: ``exp(-d^2 h^2)``.
    """
    if not h >= 0:
        raise ValueError(f"decay h must be nonnegative, got {h}")
    kernel = normalize_kernel(kernel)
    D = np.asarray(getattr(distances, "distances", distances), dtype=float)
    finite = np.isfinite(D)
    Dz = np.where(finite, D, 0.0)
    with np.errstate(over="ignore"):
        if kernel == "exponential":
            W = np.exp(-Dz * h)
        else:
            W = np.exp(-(Dz**2) * h**2)
    W = np.where(Dz <= 1, 1.0, W)
    W = np.where(finite, W, 0.0)
    W.setflags(write=False)
    return WeightMatrix(W, float(h), kernel)
