"""Classification heads: GraphSAGE, single-head GAT, and the conditional MLP.

All heads are two layers with an interleaved ReLU, sized so that the default
configurations land near 300k trainable parameters. GNN heads pool after the
second convolution (feature-wise mean over nodes); the conditional MLP runs
every index-augmented slice row through the same MLP and averages the 64
per-slice logit rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, DataError
from .graphs import EdgeSet, SubjectGraph

ARCHS = ("sage", "gat", "cond_mlp")
DEFAULT_HIDDEN = {"sage": 128, "gat": 256, "cond_mlp": 256}
GAT_NEGATIVE_SLOPE = 0.2


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    num_classes: int
    in_dim: int = 1152
    hidden_dim: int | None = None
    gat_negative_slope: float = GAT_NEGATIVE_SLOPE
    gat_heads: int = 1

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.gat_heads != 1:
            raise ConfigError("only single-head attention is supported")
        if self.hidden_dim is None:
            object.__setattr__(self, "hidden_dim", DEFAULT_HIDDEN[self.arch])
        if self.hidden_dim <= 0:
            raise ConfigError("hidden_dim must be positive")


@dataclass
class GraphLevelOutput:
    logits: np.ndarray   # (num_classes,)
    pooled: np.ndarray   # graph representation before/after head, (num_classes,)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def sage_layer_forward(edges: EdgeSet, h: nn.Tensor, w_root: nn.Tensor,
                       w_neigh: nn.Tensor, b: nn.Tensor) -> nn.Tensor:
    """h'[v] = h[v] W_root + mean_{u in N(v)} h[u] W_neigh + b.

    Isolated nodes contribute a zero neighbor term (their aggregation row is
    all zeros).
    """
    agg = nn.Tensor(edges.neighbor_mean_matrix())
    neigh = nn.matmul(agg, h)
    return nn.add(nn.add(nn.matmul(h, w_root), nn.matmul(neigh, w_neigh)), b)


def gat_layer_forward(edges: EdgeSet, h: nn.Tensor, w: nn.Tensor,
                      a_src: nn.Tensor, a_dst: nn.Tensor, b: nn.Tensor,
                      negative_slope: float = GAT_NEGATIVE_SLOPE) -> nn.Tensor:
    """Single-head graph attention with implicit self-loops.

    score[v, u] = LeakyReLU(a_src . (W h[v]) + a_dst . (W h[u])), normalized by
    a softmax over each closed neighborhood N(v) | {v}; the output row v is the
    attention-weighted sum of transformed neighbors plus bias.
    """
    hw = nn.matmul(h, w)                       # (n, d_out)
    s_src = nn.matmul(hw, a_src)               # (n, 1)
    s_dst = nn.matmul(hw, a_dst)               # (n, 1)
    scores = nn.add(s_src, nn.transpose(s_dst))  # (n, n): row v, col u
    scores = nn.rectify(scores, negative_slope)
    alpha = nn.masked_softmax(scores, edges.masked_adjacency_with_self_loops())
    return nn.add(nn.matmul(alpha, hw), b)


def global_mean_pool(h: nn.Tensor) -> nn.Tensor:
    """Feature-dimension-wise mean over all node rows: (n, d) -> (1, d)."""
    return nn.mean_rows(h)


def augment_with_slice_index(features: np.ndarray) -> np.ndarray:
    """Append the normalized slice index i/(n-1) as a final feature column."""
    n = features.shape[0]
    idx = (np.arange(n, dtype=np.float64) / (n - 1)).reshape(n, 1)
    return np.hstack([np.asarray(features, dtype=np.float64), idx])


class Head:
    """Common surface: parameters plus a graph -> (1, C) logits forward."""

    arch: str

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: list[nn.Parameter] = []

    def _param(self, array: np.ndarray) -> nn.Parameter:
        p = nn.Parameter(array)
        self.params.append(p)
        return p

    def forward(self, graph: SubjectGraph) -> nn.Tensor:
        raise NotImplementedError

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params)

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def load_state(self, arrays: list[np.ndarray]):
        if len(arrays) != len(self.params):
            raise ConfigError(f"expected {len(self.params)} arrays, got {len(arrays)}")
        for p, arr in zip(self.params, arrays):
            if p.data.shape != arr.shape:
                raise ConfigError(f"shape mismatch {p.data.shape} vs {arr.shape}")
            p.data[...] = arr


class SageHead(Head):
    arch = "sage"

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__(config)
        d, h, c = config.in_dim, config.hidden_dim, config.num_classes
        self.w_root1 = self._param(_glorot(rng, d, h))
        self.w_neigh1 = self._param(_glorot(rng, d, h))
        self.b1 = self._param(np.zeros((1, h)))
        self.w_root2 = self._param(_glorot(rng, h, c))
        self.w_neigh2 = self._param(_glorot(rng, h, c))
        self.b2 = self._param(np.zeros((1, c)))

    def forward(self, graph: SubjectGraph) -> nn.Tensor:
        x = nn.Tensor(graph.features)
        h1 = sage_layer_forward(graph.edges, x, self.w_root1, self.w_neigh1, self.b1)
        h1 = nn.rectify(h1)
        h2 = sage_layer_forward(graph.edges, h1, self.w_root2, self.w_neigh2, self.b2)
        return global_mean_pool(h2)


class GatHead(Head):
    arch = "gat"

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__(config)
        d, h, c = config.in_dim, config.hidden_dim, config.num_classes
        self.w1 = self._param(_glorot(rng, d, h))
        self.a_src1 = self._param(_glorot(rng, h, 1))
        self.a_dst1 = self._param(_glorot(rng, h, 1))
        self.b1 = self._param(np.zeros((1, h)))
        self.w2 = self._param(_glorot(rng, h, c))
        self.a_src2 = self._param(_glorot(rng, c, 1))
        self.a_dst2 = self._param(_glorot(rng, c, 1))
        self.b2 = self._param(np.zeros((1, c)))

    def forward(self, graph: SubjectGraph) -> nn.Tensor:
        slope = self.config.gat_negative_slope
        x = nn.Tensor(graph.features)
        h1 = gat_layer_forward(graph.edges, x, self.w1, self.a_src1, self.a_dst1,
                               self.b1, slope)
        h1 = nn.rectify(h1)
        h2 = gat_layer_forward(graph.edges, h1, self.w2, self.a_src2, self.a_dst2,
                               self.b2, slope)
        return global_mean_pool(h2)


class CondMlpHead(Head):
    """Per-slice MLP on index-augmented rows; subject logits are the row mean."""

    arch = "cond_mlp"

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__(config)
        d, h, c = config.in_dim + 1, config.hidden_dim, config.num_classes
        self.w1 = self._param(_glorot(rng, d, h))
        self.b1 = self._param(np.zeros((1, h)))
        self.w2 = self._param(_glorot(rng, h, c))
        self.b2 = self._param(np.zeros((1, c)))

    def forward(self, graph: SubjectGraph) -> nn.Tensor:
        aug = augment_with_slice_index(graph.features)
        return self.forward_augmented(aug)

    def forward_augmented(self, augmented: np.ndarray) -> nn.Tensor:
        x = nn.Tensor(augmented)
        h1 = nn.rectify(nn.affine(x, self.w1, self.b1))
        per_slice = nn.affine(h1, self.w2, self.b2)
        return nn.mean_rows(per_slice)


def build_head(config: ModelConfig, seed_or_rng) -> Head:
    rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
           else np.random.default_rng(seed_or_rng))
    cls = {"sage": SageHead, "gat": GatHead, "cond_mlp": CondMlpHead}[config.arch]
    return cls(config, rng)


def gnn_head_forward(graph: SubjectGraph, head: Head) -> GraphLevelOutput:
    """Run one graph through a frozen head and package the outputs."""
    logits = head.forward(graph).data.ravel()
    if not np.isfinite(logits).all():
        raise DataError("non-finite logits")
    return GraphLevelOutput(logits=logits, pooled=logits.copy())


def cond_mlp_forward(features: np.ndarray, head: CondMlpHead) -> GraphLevelOutput:
    if head.arch != "cond_mlp":
        raise ConfigError("cond_mlp_forward requires a cond_mlp head")
    graph = SubjectGraph(features, EdgeSet(features.shape[0], []), label=0)
    return gnn_head_forward(graph, head)


def count_parameters(config: ModelConfig) -> int:
    """Exact trainable scalar count for the configured head."""
    d, h, c = config.in_dim, config.hidden_dim, config.num_classes
    if config.arch == "sage":
        return 2 * d * h + h + 2 * h * c + c
    if config.arch == "gat":
        return d * h + 3 * h + h * c + 3 * c
    return (d + 1) * h + h + h * c + c
