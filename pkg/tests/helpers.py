"""Shared test oracles: finite differences, brute-force kNN, pair-count AUROC.

These stay deliberately independent of the production code paths they check:
the kNN oracle works node-by-node with per-row distance evaluations and a
Python sort; the AUROC oracle counts pairs explicitly; the gradient oracle is
central finite differences on the scalar loss.
"""

import numpy as np

from latentgraph import nn
from latentgraph.graphs import EdgeSet


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central-difference gradient of loss_fn() w.r.t. every scalar in params."""
    grads = []
    for p in params:
        flat = p.data.ravel()
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            g[i] = (up - down) / (2.0 * h)
        grads.append(g.reshape(p.data.shape))
    return grads


def max_rel_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_head_gradients(head, graph, h=1e-5):
    """Max relative error between backprop and finite differences for one head."""
    labels = np.array([graph.label])

    def loss_value():
        return float(nn.cross_entropy(head.forward(graph), labels).data)

    for p in head.params:
        p.zero_grad()
    loss = nn.cross_entropy(head.forward(graph), labels)
    loss.backward()
    analytic = [p.grad.copy() for p in head.params]
    numeric = finite_difference_grads(loss_value, head.params, h=h)
    return max_rel_error(analytic, numeric)


def oracle_knn(features, metric, k):
    """Brute-force O(n^2 d) kNN with union symmetrization and low-index ties."""
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    picks = []
    for v in range(n):
        if metric == "L1":
            dists = np.abs(x - x[v]).sum(axis=1)
        elif metric == "L2":
            dists = np.sqrt(((x - x[v]) ** 2).sum(axis=1))
        elif metric == "Linf":
            dists = np.abs(x - x[v]).max(axis=1)
        elif metric == "cosine":
            norms = np.sqrt((x * x).sum(axis=1))
            dots = (x * x[v]).sum(axis=1)
            dists = 1.0 - dots / (norms * norms[v])
        else:
            raise ValueError(metric)
        others = [u for u in range(n) if u != v]
        others.sort(key=lambda u: (dists[u], u))
        picks.extend((v, u) for u in others[:k])
    return EdgeSet(n, picks)


def auroc_pair_count(scores, labels):
    """Definition-level AUROC: fraction of (pos, neg) pairs won, ties 0.5."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    if not pos or not neg:
        raise ValueError("need both classes")
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (len(pos) * len(neg))


def random_edge_set(rng, n, edge_prob=0.3):
    """Random undirected graph; may contain isolated nodes."""
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < edge_prob]
    return EdgeSet(n, edges)


def permute_graph(features, edges, perm):
    """Apply a node permutation to features and the edge set together.

    perm[old] = new index.
    """
    n = edges.num_nodes
    new_feats = np.empty_like(features)
    for old in range(n):
        new_feats[perm[old]] = features[old]
    new_edges = EdgeSet(n, [(perm[u], perm[v]) for u, v in edges.edges])
    return new_feats, new_edges
