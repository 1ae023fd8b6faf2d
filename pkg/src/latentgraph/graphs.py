"""Subject-level graph construction: slice-ordering and kNN topologies.

Edge sets are undirected, self-loop-free, and deterministic, including kNN tie
cases (ties break toward the lower node index). Cosine similarity is exposed
as the dissimilarity 1 - cos so that "smaller is nearer" holds for all four
metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

NUM_SLICES = 64
FEAT_DIM = 1152

SLICE_KINDS = ("fully_connected", "star", "line", "custom")
KNN_METRICS = ("L1", "L2", "Linf", "cosine")


@dataclass(frozen=True)
class TopologySpec:
    """Which of the eight construction strategies to apply.

    Slice-based: kind in {fully_connected, star, line, custom}, k must be None.
    Encoding-based: kind in {L1, L2, Linf, cosine}, k in [1, 63].
    """

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind in SLICE_KINDS:
            if self.k is not None:
                raise ConfigError(f"slice-based topology {self.kind!r} takes no k")
        elif self.kind in KNN_METRICS:
            if self.k is None:
                raise ConfigError(f"encoding-based topology {self.kind!r} requires k")
            if not 1 <= self.k <= NUM_SLICES - 1:
                raise ConfigError(f"k={self.k} outside [1, {NUM_SLICES - 1}]")
        else:
            raise ConfigError(f"unknown topology kind {self.kind!r}")

    @property
    def family(self) -> str:
        return "slice_based" if self.kind in SLICE_KINDS else "encoding_based"

    def label(self) -> str:
        return self.kind if self.k is None else f"{self.kind}-k{self.k}"


class EdgeSet:
    """Immutable undirected edge set over `num_nodes` nodes.

    Edges are stored as sorted (u, v) pairs with u < v; the induced adjacency
    matrix is symmetric with a zero diagonal by construction.
    """

    __slots__ = ("num_nodes", "edges", "_adjacency", "_neighbor_mean", "_self_loop_mask")

    def __init__(self, num_nodes: int, edges):
        pairs = set()
        for u, v in edges:
            if u == v:
                raise ConfigError(f"self-loop ({u}, {v}) rejected")
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ConfigError(f"edge ({u}, {v}) out of range for {num_nodes} nodes")
            pairs.add((min(u, v), max(u, v)))
        self.num_nodes = num_nodes
        self.edges = frozenset(pairs)
        self._adjacency = None
        self._neighbor_mean = None
        self._self_loop_mask = None

    @classmethod
    def from_directed_picks(cls, num_nodes: int, picks) -> "EdgeSet":
        """Symmetrize directed neighbor picks by union: keep (u,v) if either
        endpoint picked the other."""
        return cls(num_nodes, picks)

    def __len__(self):
        return len(self.edges)

    def __eq__(self, other):
        return (isinstance(other, EdgeSet)
                and self.num_nodes == other.num_nodes
                and self.edges == other.edges)

    def __hash__(self):
        return hash((self.num_nodes, self.edges))

    def adjacency(self) -> np.ndarray:
        """Symmetric boolean adjacency without self-loops (cached)."""
        if self._adjacency is None:
            adj = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
            for u, v in self.edges:
                adj[u, v] = True
                adj[v, u] = True
            adj.setflags(write=False)
            self._adjacency = adj
        return self._adjacency

    def neighbor_mean_matrix(self) -> np.ndarray:
        """Row-normalized adjacency; rows of isolated nodes are all zero (cached)."""
        if self._neighbor_mean is None:
            adj = self.adjacency().astype(np.float64)
            deg = adj.sum(axis=1, keepdims=True)
            np.divide(adj, deg, out=adj, where=deg > 0)
            adj.setflags(write=False)
            self._neighbor_mean = adj
        return self._neighbor_mean

    def masked_adjacency_with_self_loops(self) -> np.ndarray:
        """Boolean adjacency with the diagonal forced true (cached)."""
        if self._self_loop_mask is None:
            mask = self.adjacency().copy()
            np.fill_diagonal(mask, True)
            mask.setflags(write=False)
            self._self_loop_mask = mask
        return self._self_loop_mask


@dataclass
class SubjectGraph:
    """One subject: slice features, the undirected edge set, and its label."""

    features: np.ndarray
    edges: EdgeSet
    label: int
    subject_id: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)


def central_node(n: int) -> int:
    """Deterministic center for star/custom graphs: floor((n-1)/2)."""
    return (n - 1) // 2


def build_slice_topology(kind: str, n: int) -> EdgeSet:
    """Edges from slice ordering alone: fully_connected, star, line, or custom."""
    if n < 3:
        raise ConfigError(f"slice topologies need n >= 3, got {n}")
    if kind == "fully_connected":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "line":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "star":
        c = central_node(n)
        edges = [(c, j) for j in range(n) if j != c]
    elif kind == "custom":
        c = central_node(n)
        edges = [(c, j) for j in range(n) if j != c]
        edges += [(i, i + 1) for i in range(n - 1)]
    else:
        raise ConfigError(f"unknown slice-based kind {kind!r}")
    return EdgeSet(n, edges)


def pairwise_distance(metric: str, u: np.ndarray, v: np.ndarray) -> float:
    """Distance (L1/L2/Linf) or cosine dissimilarity 1 - cos(u, v)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ConfigError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if metric == "L1":
        return float(np.sum(np.abs(u - v)))
    if metric == "L2":
        return float(np.sqrt(np.sum((u - v) ** 2)))
    if metric == "Linf":
        return float(np.max(np.abs(u - v)))
    if metric == "cosine":
        nu = float(np.sqrt(np.sum(u * u)))
        nv = float(np.sqrt(np.sum(v * v)))
        if nu == 0.0 or nv == 0.0:
            raise DataError("cosine dissimilarity undefined for a zero vector")
        return 1.0 - float(np.sum(u * v)) / (nu * nv)
    raise ConfigError(f"unknown metric {metric!r}")


def _distance_matrix(features: np.ndarray, metric: str) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if metric == "L1":
        return np.abs(x[:, None, :] - x[None, :, :]).sum(axis=2)
    if metric == "L2":
        return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))
    if metric == "Linf":
        return np.abs(x[:, None, :] - x[None, :, :]).max(axis=2)
    if metric == "cosine":
        norms = np.sqrt((x * x).sum(axis=1))
        if (norms == 0.0).any():
            raise DataError("cosine dissimilarity undefined for a zero vector")
        dots = (x[:, None, :] * x[None, :, :]).sum(axis=2)
        return 1.0 - dots / (norms[:, None] * norms[None, :])
    raise ConfigError(f"unknown metric {metric!r}")


def build_knn_topology(features: np.ndarray, metric: str, k: int) -> EdgeSet:
    """Symmetrized-union kNN over node features.

    Each node picks its k nearest other nodes (ties toward the lower index);
    an edge exists if either endpoint picked the other.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k={k} outside [1, {n - 1}]")
    dist = _distance_matrix(x, metric)
    np.fill_diagonal(dist, np.inf)
    # stable argsort over index order realizes the lower-index tie rule
    order = np.argsort(dist, axis=1, kind="stable")
    picks = [(v, int(u)) for v in range(n) for u in order[v, :k]]
    return EdgeSet.from_directed_picks(n, picks)


def build_topology(spec: TopologySpec, features: np.ndarray) -> EdgeSet:
    n = np.asarray(features).shape[0]
    if spec.family == "slice_based":
        return build_slice_topology(spec.kind, n)
    return build_knn_topology(features, spec.kind, spec.k)


def validate_graph(graph: SubjectGraph, num_classes: int | None = None) -> list[str]:
    """Ingestion-boundary checks; returns a list of violations (empty if ok)."""
    violations = []
    feats = graph.features
    if feats.ndim != 2 or feats.shape[0] != NUM_SLICES:
        violations.append(f"expected {NUM_SLICES} feature rows, got shape {feats.shape}")
    elif feats.shape[1] != FEAT_DIM:
        violations.append(f"expected feature width {FEAT_DIM}, got {feats.shape[1]}")
    if feats.ndim == 2 and not np.isfinite(feats).all():
        violations.append("non-finite feature")
    if graph.edges.num_nodes != feats.shape[0]:
        violations.append(
            f"edge set has {graph.edges.num_nodes} nodes but features have "
            f"{feats.shape[0]} rows")
    for u, v in graph.edges.edges:
        if u == v:
            violations.append(f"self-loop ({u}, {v})")
        if not (0 <= u < graph.edges.num_nodes and 0 <= v < graph.edges.num_nodes):
            violations.append(f"edge ({u}, {v}) out of range")
    if graph.label < 0:
        violations.append(f"negative label {graph.label}")
    if num_classes is not None and graph.label >= num_classes:
        violations.append(f"label {graph.label} >= num_classes {num_classes}")
    return violations
