# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

import os
import tempfile
from unittest import TestCase

import numpy as np
import pytest

from floydnet.checks import MODEL_TOL, model_check
from floydnet.errors import (CapabilityError, CheckpointError, ConfigError,
                             DimensionMismatch, SupernodeRequired)
from floydnet.graph import (Graph, NodePermutation, apply_permutation,
                            gen_random_graph, permute_axes)
from floydnet.model import (ModelConfig, ModelParams, activation_size,
                            attach_supernode, init_korder, init_params,
                            init_relationship, model_forward, param_count,
                            predict)
from floydnet.nn import (GradTape, dot, grad_check, parameter_sizes,
                         reduce_sum)

from . import TEST_MODEL_CONFIG


def make_config(**overrides):
    return ModelConfig.from_dict(dict(TEST_MODEL_CONFIG, **overrides))


class TestModelConfig(TestCase):

    def test_defaults(self):
        cfg = ModelConfig()
        self.assertEqual(cfg.init_hidden, 64)
        self.assertEqual(cfg.ffn_hidden, 64)
        self.assertEqual(cfg.input_width, 2 + 3)

    def test_input_width_by_order(self):
        cfg = make_config(order=3, edge_dim=2, graph_dim=1, node_dim=4)
        self.assertEqual(cfg.input_width, 1 + 3 * 4 + 3 * 5)
        self.assertEqual(make_config(order=1).input_width, 1)

    def test_invalid(self):
        for overrides in ({'rel_dim': 6, 'heads': 4}, {'order': 4},
                          {'readout': 'pair'}, {'combine': 'max'},
                          {'kernel': 'streamed', 'order': 3},
                          {'layers': -1}, {'threads': 0}, {'norm': 'batch'}):
            with self.assertRaises(ConfigError):
                make_config(**overrides)

    def test_from_dict_ignores_training_keys(self):
        cfg = ModelConfig.from_dict({'layers': 1, 'lr': 0.1})
        self.assertEqual(cfg.layers, 1)
        self.assertEqual(ModelConfig.from_dict(cfg.to_dict()), cfg)


class TestParameters(TestCase):

    def test_count_closed_form(self):
        for overrides in ({}, {'order': 1}, {'order': 3},
                          {'supernode': False}, {'edge_dim': 2},
                          {'final_norm': False, 'out_dim': 3},
                          {'layers': 0}, {'ffn_hidden': 5}):
            cfg = make_config(**overrides)
            self.assertEqual(
                param_count(cfg),
                parameter_sizes(init_params(cfg).named_parameters()),
                overrides)

    def test_seeded(self):
        a = init_params(make_config()).named_parameters()
        b = init_params(make_config()).named_parameters()
        for (na, ta), (nb, tb) in zip(a, b):
            self.assertEqual(na, nb)
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_activation_size(self):
        self.assertEqual(activation_size(make_config(), 5), 36 * 8)
        self.assertEqual(activation_size(make_config(order=3,
                                                     supernode=False), 5),
                         125 * 8)

    @pytest.mark.fs
    def test_checkpoint(self):
        cfg = make_config()
        params = init_params(cfg)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'model.ckpt')
            params.save(path)
            loaded = ModelParams.load(path, make_config(seed=99))
            for (_, a), (_, b) in zip(params.named_parameters(),
                                      loaded.named_parameters()):
                np.testing.assert_array_equal(a.data, b.data)
            with self.assertRaises(CheckpointError):
                ModelParams.load(path, make_config(layers=3))
            with open(path, 'rb') as f:
                raw = f.read()
            with open(path, 'wb') as f:
                f.write(raw[:-4])
            with self.assertRaises(CheckpointError):
                ModelParams.load(path, cfg)


class TestForward(TestCase):

    def setUp(self):
        self.g = gen_random_graph(6, 0.5, weight_range=(1, 4), seed=1)

    def test_readout_shapes(self):
        cfg = make_config(out_dim=2)
        params = init_params(cfg)
        self.assertEqual(predict(self.g, cfg, params).shape, (6, 6, 2))
        self.assertEqual(predict(self.g, cfg, params, level='node').shape,
                         (6, 2))
        self.assertEqual(predict(self.g, cfg, params, level='graph').shape,
                         (2,))
        self.assertEqual(model_forward(self.g, cfg, params).shape,
                         (7, 7, 8))

    def test_order_three_readouts(self):
        cfg = make_config(order=3)
        params = init_params(cfg)
        self.assertEqual(model_forward(self.g, cfg, params).shape,
                         (7, 7, 7, 8))
        self.assertEqual(predict(self.g, cfg, params).shape, (6, 6, 1))
        self.assertEqual(predict(self.g, cfg, params, level='node').shape,
                         (6, 1))

    def test_readout_capabilities(self):
        cfg = make_config(supernode=False)
        params = init_params(cfg)
        for level in ('node', 'graph'):
            with self.assertRaises(SupernodeRequired):
                predict(self.g, cfg, params, level=level)
        self.assertEqual(predict(self.g, cfg, params).shape, (6, 6, 1))
        cfg = make_config(order=1)
        with self.assertRaises(CapabilityError):
            predict(self.g, cfg, init_params(cfg))
        cfg = make_config(order=3, supernode=False)
        with self.assertRaises(SupernodeRequired):
            predict(self.g, cfg, init_params(cfg))

    def test_dimension_mismatch(self):
        cfg = make_config(edge_dim=2)
        with self.assertRaises(DimensionMismatch):
            predict(self.g, cfg, init_params(cfg))

    def test_edge_equivariance(self):
        pi = NodePermutation.random(6, seed=2)
        h = apply_permutation(self.g, pi)
        idx = pi.as_array()
        for overrides in ({}, {'combine': 'multiplicative'},
                          {'order': 3, 'layers': 1}, {'norm': 'rms'}):
            cfg = make_config(**overrides)
            params = init_params(cfg)
            out = predict(self.g, cfg, params).data
            permuted = predict(h, cfg, params).data
            np.testing.assert_allclose(permuted, out[np.ix_(idx, idx)],
                                       rtol=0, atol=1e-10)
            np.testing.assert_allclose(
                predict(h, cfg, params, level='graph').data,
                predict(self.g, cfg, params, level='graph').data,
                rtol=0, atol=1e-10)
            np.testing.assert_allclose(
                predict(h, cfg, params, level='node').data,
                predict(self.g, cfg, params, level='node').data[idx],
                rtol=0, atol=1e-10)

    def test_relation_tensor_equivariance(self):
        n = self.g.n
        for order in (1, 2, 3):
            cfg = make_config(order=order, layers=1 if order == 3 else 2)
            params = init_params(cfg)
            out = model_forward(self.g, cfg, params).data
            for seed in range(20):
                with self.subTest(order=order, seed=seed):
                    pi = NodePermutation.random(n, seed=100 + seed)
                    # the SuperNode keeps the last slot
                    with_sn = NodePermutation(np.append(pi.as_array(), n))
                    h = apply_permutation(self.g, pi)
                    np.testing.assert_allclose(
                        model_forward(h, cfg, params).data,
                        permute_axes(out, with_sn, order),
                        rtol=0, atol=1e-9)

    def test_first_order_readouts_are_equivariant(self):
        cfg = make_config(order=1)
        params = init_params(cfg)
        nodes = predict(self.g, cfg, params, level='node').data
        total = predict(self.g, cfg, params, level='graph').data
        for seed in range(20):
            pi = NodePermutation.random(self.g.n, seed=seed)
            h = apply_permutation(self.g, pi)
            np.testing.assert_allclose(
                predict(h, cfg, params, level='node').data,
                nodes[pi.as_array()], rtol=0, atol=1e-9)
            np.testing.assert_allclose(
                predict(h, cfg, params, level='graph').data, total,
                rtol=0, atol=1e-9)

    def test_streamed_model_matches_naive(self):
        naive = make_config()
        streamed = make_config(kernel='streamed', tile=2, threads=2)
        params = init_params(naive)
        np.testing.assert_allclose(predict(self.g, streamed, params).data,
                                   predict(self.g, naive, params).data,
                                   rtol=0, atol=1e-10)

    def test_no_layers(self):
        cfg = make_config(layers=0)
        self.assertEqual(predict(self.g, cfg, init_params(cfg)).shape,
                         (6, 6, 1))

    def test_initialization(self):
        cfg = make_config(supernode=False)
        params = init_params(cfg)
        np.testing.assert_array_equal(
            init_relationship(self.g, cfg, params).data,
            init_korder(self.g, cfg, params).data)
        cfg = make_config(order=3)
        with self.assertRaises(CapabilityError):
            init_relationship(self.g, cfg, init_params(cfg))
        r = init_korder(self.g, cfg, init_params(cfg))
        self.assertEqual(r.shape, (6, 6, 6, 8))

    def test_attach_supernode(self):
        cfg = make_config()
        params = init_params(cfg)
        g = attach_supernode(self.g, params)
        self.assertTrue(g.supernode)
        self.assertEqual(g.n, 7)
        self.assertTrue(g.adjacency[6, :6].all())
        self.assertFalse(g.adjacency[6, 6])
        np.testing.assert_array_equal(g.node_feats[6], params.sn_node.data)
        self.assertIs(attach_supernode(g, params), g)
        # explicit and implicit SuperNode give the same prediction
        np.testing.assert_allclose(predict(g, cfg, params).data,
                                   predict(self.g, cfg, params).data,
                                   rtol=0, atol=1e-12)

    def test_supernode_embeddings_receive_gradients(self):
        cfg = make_config()
        params = init_params(cfg)
        tape = GradTape()
        out = reduce_sum(predict(self.g, cfg, params, tape, level='graph'),
                         tape)
        tape.backward(out)
        self.assertGreater(np.abs(params.sn_node.grad).sum(), 0)
        self.assertGreater(np.abs(params.sn_edge.grad).sum(), 0)


class TestModelGradients(TestCase):

    def test_pairwise_model(self):
        rng = np.random.default_rng(0)
        f, params = model_check(rng, seed=0)
        report = grad_check(f, params, tol=MODEL_TOL, max_entries=12)
        self.assertTrue(report.passed, (report.errors, report.diagnostics))

    def test_order_three_model(self):
        rng = np.random.default_rng(1)
        f, params = model_check(rng, seed=1, order=3, n=3)
        report = grad_check(f, params, tol=MODEL_TOL, max_entries=6)
        self.assertTrue(report.passed, (report.errors, report.diagnostics))

    def test_edge_features(self):
        g = Graph.from_edges(4, [(0, 1, 2.0), (1, 2, 1.0), (2, 3, 3.0)],
                             edge_feats={(0, 1): [1.0], (1, 2): [-1.0],
                                         (2, 3): [0.5]},
                             graph_feats=[0.3])
        cfg = make_config(edge_dim=1, graph_dim=1, layers=1)
        params = init_params(cfg)
        w = np.random.default_rng(2).standard_normal((4, 4, 1))

        def f(tape):
            return dot(predict(g, cfg, params, tape), w, tape)

        report = grad_check(f, params.named_parameters(), tol=MODEL_TOL,
                            max_entries=8)
        self.assertTrue(report.passed, (report.errors, report.diagnostics))
