"""Cyclic graph shift operators and the learnable row-stochastic adjacency.

Vertex ``n`` of a frame graph is linked to its ``K`` cyclic predecessors
``(n - 1) mod N, ..., (n - K) mod N``.  The learnable adjacency keeps one
logit per edge and normalizes each row with a softmax, so rows always sum
to one and entries off the edge set are exactly zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError

__all__ = [
    "GraphTopology",
    "LearnableTopology",
    "build_shift_operator",
    "sparsity_to_k",
    "init_learnable",
    "adjacency",
    "fixed_adjacency",
    "save_topology",
    "load_topology",
    "TABLE_SPARSITIES",
]

#: graph sparsity levels of the sweep protocol, as fractions
TABLE_SPARSITIES = (0.01, 0.04, 0.12, 0.20, 0.40, 1.00)


@dataclass(frozen=True)
class GraphTopology:
    n_vertices: int
    k_neighbors: int

    def __post_init__(self):
        n, k = self.n_vertices, self.k_neighbors
        if n < 2:
            raise ConfigError(f"need at least 2 vertices, got {n}")
        if not 1 <= k <= n - 1:
            raise ConfigError(f"k_neighbors must lie in [1, {n - 1}], got {k}")

    @cached_property
    def columns(self) -> np.ndarray:
        """(N, K) supported column indices, ascending within each row."""
        n, k = self.n_vertices, self.k_neighbors
        cols = (np.arange(n)[:, None] - np.arange(1, k + 1)[None, :]) % n
        cols.sort(axis=1)
        cols.setflags(write=False)
        return cols

    @property
    def support(self) -> list[tuple[int, int]]:
        """Directed edges (n, m) in row-major order."""
        return [(n, int(m)) for n, row in enumerate(self.columns) for m in row]

    @cached_property
    def shift_operator(self) -> np.ndarray:
        w = np.zeros((self.n_vertices, self.n_vertices))
        w[np.arange(self.n_vertices)[:, None], self.columns] = 1.0
        w.setflags(write=False)
        return w

    @cached_property
    def mask(self) -> np.ndarray:
        return self.shift_operator.astype(bool)


def build_shift_operator(n_vertices: int, k_neighbors: int) -> GraphTopology:
    """Cyclic graph with each vertex linked to its ``k_neighbors`` predecessors."""
    return GraphTopology(int(n_vertices), int(k_neighbors))


def sparsity_to_k(p: float, n_vertices: int) -> int:
    """Neighbor count for sparsity fraction ``p``: ``clamp(round(p*N), 1, N-1)``."""
    if not 0 < p <= 1:
        raise ConfigError(f"sparsity p must lie in (0, 1], got {p}")
    # half-up rounding so the map is monotone and platform independent
    k = math.floor(p * n_vertices + 0.5)
    return int(min(max(k, 1), n_vertices - 1))


def _row_softmax(theta):
    z = theta - theta.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class LearnableTopology:
    """Edge logits ``theta`` (N x K, aligned with ``base.columns``) and the
    row-stochastic adjacency they induce.

    The adjacency is cached and recomputed whenever ``theta`` is replaced.
    """

    def __init__(self, base: GraphTopology, theta=None):
        self.base = base
        shape = base.columns.shape
        self._adjacency = None
        self.theta = np.zeros(shape) if theta is None else theta

    @property
    def theta(self) -> np.ndarray:
        return self._theta

    @theta.setter
    def theta(self, value):
        value = np.array(value, dtype=np.float64).reshape(self.base.columns.shape)
        if not np.all(np.isfinite(value)):
            raise ConfigError("edge logits must be finite")
        value.setflags(write=False)
        self._theta = value
        self._adjacency = None

    @property
    def n_vertices(self):
        return self.base.n_vertices

    @property
    def k_neighbors(self):
        return self.base.k_neighbors

    def adjacency(self) -> np.ndarray:
        if self._adjacency is None:
            n = self.base.n_vertices
            a = np.zeros((n, n))
            a[np.arange(n)[:, None], self.base.columns] = _row_softmax(self._theta)
            a.setflags(write=False)
            self._adjacency = a
        return self._adjacency

    def copy(self) -> "LearnableTopology":
        return LearnableTopology(self.base, self._theta)

    def to_dict(self) -> dict:
        return {"n": self.n_vertices, "k": self.k_neighbors,
                "theta": [float(t) for t in self._theta.ravel()]}

    @classmethod
    def from_dict(cls, d) -> "LearnableTopology":
        extra = set(d) - {"n", "k", "theta"}
        if extra:
            raise ConfigError(f"unknown topology fields {sorted(extra)}")
        base = build_shift_operator(int(d["n"]), int(d["k"]))
        theta = np.asarray(d["theta"], dtype=np.float64)
        if theta.size != base.n_vertices * base.k_neighbors:
            raise ConfigError("theta length does not equal n * k")
        return cls(base, theta)

    def __repr__(self):
        return f"LearnableTopology(n={self.n_vertices}, k={self.k_neighbors})"


def init_learnable(base: GraphTopology, init: str = "zeros", seed: int = 0,
                   scale: float = 0.1) -> LearnableTopology:
    """Learnable topology starting from uniform weights (``zeros``) or small
    seeded uniform logits in ``[-scale, scale]`` (``seeded-uniform``)."""
    if init == "zeros":
        return LearnableTopology(base)
    if init == "seeded-uniform":
        rng = np.random.default_rng(seed)
        return LearnableTopology(base, rng.uniform(-scale, scale, base.columns.shape))
    raise ConfigError(f"unknown init {init!r}")


def adjacency(topology: LearnableTopology) -> np.ndarray:
    return topology.adjacency()


def fixed_adjacency(base: GraphTopology, mode: str = "row-normalized") -> np.ndarray:
    """The fixed-topology baseline: ``W`` itself or ``W / K``."""
    if mode == "binary":
        return base.shift_operator
    if mode == "row-normalized":
        return base.shift_operator / base.k_neighbors
    raise ConfigError(f"unknown adjacency mode {mode!r}")


def save_topology(path, topology: LearnableTopology) -> None:
    with open(path, "w") as f:
        json.dump(topology.to_dict(), f)
        f.write("\n")


def load_topology(path) -> LearnableTopology:
    with open(path) as f:
        return LearnableTopology.from_dict(json.load(f))
