"""Heads: layer semantics, permutation invariance, gradients, parameter budget."""

import numpy as np
import pytest

from helpers import check_head_gradients, permute_graph, random_edge_set
from latentgraph import nn
from latentgraph.errors import ConfigError
from latentgraph.graphs import EdgeSet, SubjectGraph, build_slice_topology
from latentgraph.models import (CondMlpHead, ModelConfig, augment_with_slice_index,
                                build_head, cond_mlp_forward, count_parameters,
                                gat_layer_forward, global_mean_pool,
                                gnn_head_forward, sage_layer_forward)


def tensor(x):
    return nn.Tensor(np.asarray(x, dtype=np.float64))


class TestSageLayer:
    def test_identity_weights_add_neighbor_mean(self):
        edges = EdgeSet(2, [(0, 1)])
        h = tensor([[1.0, 0.0], [0.0, 1.0]])
        eye = nn.Parameter(np.eye(2))
        out = sage_layer_forward(edges, h, eye, nn.Parameter(np.eye(2)),
                                 nn.Parameter(np.zeros((1, 2))))
        np.testing.assert_allclose(out.data[0], [1.0, 1.0])

    def test_isolated_node_keeps_own_transform(self):
        edges = EdgeSet(2, [])
        h = tensor([[3.0, -1.0], [2.0, 5.0]])
        out = sage_layer_forward(edges, h, nn.Parameter(np.eye(2)),
                                 nn.Parameter(np.eye(2)), nn.Parameter(np.zeros((1, 2))))
        np.testing.assert_allclose(out.data, h.data)

    def test_three_node_line_hand_message_passing(self):
        edges = build_slice_topology("line", 3)
        h = tensor([[1.0], [1.0], [1.0]])
        one = nn.Parameter([[1.0]])
        out = sage_layer_forward(edges, h, one, nn.Parameter([[1.0]]),
                                 nn.Parameter([[0.0]]))
        np.testing.assert_allclose(out.data.ravel(), [2.0, 2.0, 2.0])


class TestGatLayer:
    def _zeros_attention(self, d):
        return (nn.Parameter(np.eye(d)), nn.Parameter(np.zeros((d, 1))),
                nn.Parameter(np.zeros((d, 1))), nn.Parameter(np.zeros((1, d))))

    def test_lonely_node_attends_to_itself(self):
        w, a_src, a_dst, b = self._zeros_attention(2)
        w.data[...] = [[2.0, 0.0], [0.0, 3.0]]
        b.data[...] = [[1.0, 1.0]]
        edges = EdgeSet(2, [])   # self-loops only
        h = tensor([[1.0, 1.0], [2.0, -1.0]])
        out = gat_layer_forward(edges, h, w, a_src, a_dst, b)
        np.testing.assert_allclose(out.data, h.data @ w.data + b.data)

    def test_identical_features_give_uniform_attention(self):
        rng = np.random.default_rng(0)
        d = 3
        w = nn.Parameter(rng.standard_normal((d, d)))
        a_src = nn.Parameter(rng.standard_normal((d, 1)))
        a_dst = nn.Parameter(rng.standard_normal((d, 1)))
        b = nn.Parameter(np.zeros((1, d)))
        edges = build_slice_topology("fully_connected", 5)
        row = rng.standard_normal(d)
        h = tensor(np.tile(row, (5, 1)))
        out = gat_layer_forward(edges, h, w, a_src, a_dst, b)
        # all scores equal -> uniform weights -> output equals W-transformed row
        np.testing.assert_allclose(out.data, np.tile(row @ w.data, (5, 1)), rtol=1e-12)

    def test_zero_attention_two_nodes_averages(self):
        w, a_src, a_dst, b = self._zeros_attention(2)
        edges = EdgeSet(2, [(0, 1)])
        h = tensor([[2.0, 0.0], [0.0, 2.0]])
        out = gat_layer_forward(edges, h, w, a_src, a_dst, b)
        np.testing.assert_allclose(out.data, [[1.0, 1.0], [1.0, 1.0]])


class TestGlobalMeanPool:
    def test_constant_rows(self):
        v = np.array([1.0, -2.0, 3.0])
        out = global_mean_pool(tensor(np.tile(v, (5, 1))))
        np.testing.assert_allclose(out.data.ravel(), v)

    def test_hand_mean(self):
        out = global_mean_pool(tensor([[1.0, 3.0], [3.0, 1.0]]))
        np.testing.assert_allclose(out.data.ravel(), [2.0, 2.0])

    def test_row_permutation_is_bitwise_identical(self):
        rng = np.random.default_rng(5)
        h = rng.standard_normal((64, 7))
        perm = rng.permutation(64)
        a = global_mean_pool(tensor(h)).data
        b = global_mean_pool(tensor(h[perm])).data
        assert (a == b).all()

    def test_empty_rejected(self):
        from latentgraph.errors import DataError
        with pytest.raises(DataError):
            global_mean_pool(tensor(np.zeros((0, 3))))


class TestHeads:
    def _graph(self, rng, n=10, d=16, edge_prob=0.3):
        feats = rng.standard_normal((n, d))
        edges = random_edge_set(rng, n, edge_prob)
        return SubjectGraph(feats, edges, label=int(rng.integers(0, 3)))

    @pytest.mark.parametrize("arch", ["sage", "gat"])
    def test_permutation_invariance(self, arch):
        rng = np.random.default_rng(17)
        cfg = ModelConfig(arch, num_classes=3, in_dim=16, hidden_dim=8)
        for _ in range(10):
            g = self._graph(rng)
            head = build_head(cfg, rng)
            perm = rng.permutation(g.edges.num_nodes)
            pf, pe = permute_graph(g.features, g.edges, perm)
            pg = SubjectGraph(pf, pe, g.label)
            delta = np.abs(head.forward(g).data - head.forward(pg).data).max()
            assert delta < 1e-9

    def test_constant_field_fixed_point_sage(self):
        rng = np.random.default_rng(2)
        cfg = ModelConfig("sage", num_classes=2, in_dim=6, hidden_dim=4)
        head = build_head(cfg, rng)
        row = rng.standard_normal(6)
        g = SubjectGraph(np.tile(row, (64, 1)),
                         build_slice_topology("fully_connected", 64), label=0)
        x = nn.Tensor(g.features)
        h1 = sage_layer_forward(g.edges, x, head.w_root1, head.w_neigh1, head.b1)
        h1 = nn.rectify(h1)
        h2 = sage_layer_forward(g.edges, h1, head.w_root2, head.w_neigh2, head.b2)
        per_node = h2.data
        pooled = head.forward(g).data.ravel()
        # constant field: every node's output equals the pooled logits
        np.testing.assert_allclose(per_node, np.tile(pooled, (64, 1)), rtol=1e-12)
        np.testing.assert_allclose(
            per_node[0],
            (row @ (head.w_root1.data + head.w_neigh1.data) + head.b1.data).clip(0)
            @ (head.w_root2.data + head.w_neigh2.data) + head.b2.data.ravel(),
            rtol=1e-12)

    @pytest.mark.parametrize("arch", ["sage", "gat", "cond_mlp"])
    def test_gradients_match_finite_differences(self, arch):
        rng = np.random.default_rng(23)
        cfg = ModelConfig(arch, num_classes=3, in_dim=16, hidden_dim=8)
        head = build_head(cfg, rng)
        g = self._graph(rng, n=8)
        assert check_head_gradients(head, g) < 1e-4

    def test_gnn_head_forward_output(self):
        rng = np.random.default_rng(4)
        cfg = ModelConfig("sage", num_classes=4, in_dim=8, hidden_dim=6)
        head = build_head(cfg, rng)
        g = self._graph(rng, n=6, d=8)
        out = gnn_head_forward(g, head)
        assert out.logits.shape == (4,)
        assert np.isfinite(out.logits).all()


class TestCondMlp:
    def _head(self, rng, d=8, hidden=6, c=2):
        cfg = ModelConfig("cond_mlp", num_classes=c, in_dim=d, hidden_dim=hidden)
        return build_head(cfg, rng)

    def test_augmentation_appends_normalized_index(self):
        feats = np.zeros((64, 4))
        aug = augment_with_slice_index(feats)
        assert aug.shape == (64, 5)
        assert aug[0, 4] == 0.0
        assert aug[63, 4] == 1.0
        np.testing.assert_allclose(aug[21, 4], 21 / 63)

    def test_identical_slices_zero_index_equals_single_slice(self):
        rng = np.random.default_rng(1)
        head = self._head(rng)
        row = rng.standard_normal(8)
        aug = np.hstack([np.tile(row, (64, 1)), np.zeros((64, 1))])
        subject = head.forward_augmented(aug).data.ravel()
        single = head.forward_augmented(aug[:1]).data.ravel()
        np.testing.assert_allclose(subject, single, rtol=1e-12)

    def test_zero_weights_yield_bias(self):
        rng = np.random.default_rng(2)
        head = self._head(rng)
        for p in (head.w1, head.b1, head.w2):
            p.data[...] = 0.0
        head.b2.data[...] = [[0.25, -0.75]]
        g = SubjectGraph(rng.standard_normal((64, 8)),
                         build_slice_topology("line", 64), label=0)
        np.testing.assert_allclose(head.forward(g).data.ravel(), [0.25, -0.75])

    def test_invariant_when_index_feature_moves_with_rows(self):
        rng = np.random.default_rng(3)
        head = self._head(rng)
        aug = augment_with_slice_index(rng.standard_normal((64, 8)))
        perm = rng.permutation(64)
        a = head.forward_augmented(aug).data
        b = head.forward_augmented(aug[perm]).data
        assert (a == b).all()

    def test_not_invariant_when_index_reassigned_by_position(self):
        rng = np.random.default_rng(4)
        head = self._head(rng)
        feats = rng.standard_normal((64, 8))
        perm = rng.permutation(64)
        a = head.forward(SubjectGraph(feats, build_slice_topology("line", 64), 0)).data
        b = head.forward(SubjectGraph(feats[perm], build_slice_topology("line", 64), 0)).data
        assert np.abs(a - b).max() > 1e-9

    def test_cond_mlp_forward_wrapper(self):
        rng = np.random.default_rng(5)
        head = self._head(rng)
        out = cond_mlp_forward(rng.standard_normal((64, 8)), head)
        assert out.logits.shape == (2,)


class TestParameterCounts:
    def test_sage_example(self):
        cfg = ModelConfig("sage", num_classes=2, hidden_dim=128)
        assert count_parameters(cfg) == 295_554

    def test_cond_mlp_example(self):
        cfg = ModelConfig("cond_mlp", num_classes=2, hidden_dim=256)
        assert count_parameters(cfg) == 295_938

    @pytest.mark.parametrize("arch", ["sage", "gat", "cond_mlp"])
    @pytest.mark.parametrize("classes", [2, 3, 11])
    def test_count_matches_actual_parameters(self, arch, classes):
        cfg = ModelConfig(arch, num_classes=classes)
        head = build_head(cfg, np.random.default_rng(0))
        assert head.num_parameters() == count_parameters(cfg)

    @pytest.mark.parametrize("arch", ["sage", "gat", "cond_mlp"])
    @pytest.mark.parametrize("classes", [2, 11])
    def test_default_budget_window(self, arch, classes):
        cfg = ModelConfig(arch, num_classes=classes)
        assert 250_000 <= count_parameters(cfg) <= 350_000

    def test_every_scalar_updated_by_sgd(self):
        cfg = ModelConfig("gat", num_classes=3, in_dim=12, hidden_dim=5)
        head = build_head(cfg, np.random.default_rng(1))
        before = [p.data.copy() for p in head.params]
        for p in head.params:
            p.grad[...] = 1.0
        nn.sgd_step(head.params, lr=0.01, weight_decay=0.0)
        changed = sum(int((b != p.data).sum()) for b, p in zip(before, head.params))
        assert changed == count_parameters(cfg)

    def test_two_layer_shape(self):
        with pytest.raises(ConfigError):
            ModelConfig("sage", num_classes=1)
        with pytest.raises(ConfigError):
            ModelConfig("dense", num_classes=2)
        with pytest.raises(ConfigError):
            ModelConfig("gat", num_classes=2, gat_heads=4)
