# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

import itertools
import math
from unittest import TestCase

import numpy as np
import pytest

from floydnet.attention import (MAX_NAIVE_ELEMENTS, AttentionParams,
                                KOrderAttentionParams,
                                attend_over_pivots, korder_pivotal_attention,
                                pivotal_attention_naive,
                                pivotal_attention_streamed, random_rotation,
                                rotation_compose_check, rotation_mixers)
from floydnet.bench import kernel_bench, memory_ratios
from floydnet.checks import kernel_equivalence, rotation_trials
from floydnet.errors import CapabilityError, RotationError, ShapeError
from floydnet.graph import NodePermutation, permute_axes
from floydnet.nn import Tensor


def _proj(x, p):
    return x @ p.weight.data + p.bias.data


def _join(parts, kind):
    out = parts[0]
    for part in parts[1:]:
        out = out + part if kind == 'additive' else out * part
    return out


def _softmax_sum(q, keys, values):
    logits = np.array([q @ k for k in keys]) / math.sqrt(len(q))
    w = np.exp(logits - logits.max())
    w /= w.sum()
    return sum(wj * v for wj, v in zip(w, values))


def pairwise_loops(r, p, kind):
    """Pivotal attention written as explicit loops over targets, heads and
    pivots"""
    n, _, d = r.shape
    dh = d // p.heads
    q = _proj(r, p.q_proj)
    kl, kr = _proj(r, p.k_proj_left), _proj(r, p.k_proj_right)
    vl, vr = _proj(r, p.v_proj_left), _proj(r, p.v_proj_right)
    out = np.zeros(r.shape)
    for i, k, h in itertools.product(range(n), range(n), range(p.heads)):
        s = slice(h * dh, (h + 1) * dh)
        keys = [_join([kl[i, j, s], kr[j, k, s]], kind) for j in range(n)]
        values = [_join([vl[i, j, s], vr[j, k, s]], kind) for j in range(n)]
        out[i, k, s] = _softmax_sum(q[i, k, s], keys, values)
    return _proj(out, p.out_proj)


def korder_loops(r, p, kind):
    order = p.order
    n, d = r.shape[0], r.shape[-1]
    dh = d // p.heads
    q = _proj(r, p.q_proj)
    ks = [_proj(r, proj) for proj in p.k_projs]
    vs = [_proj(r, proj) for proj in p.v_projs]
    out = np.zeros(r.shape)
    for e in itertools.product(range(n), repeat=order):
        for h in range(p.heads):
            s = slice(h * dh, (h + 1) * dh)
            keys, values = [], []
            for pivot in range(n):
                subs = [e[:t] + (pivot,) + e[t + 1:] for t in range(order)]
                keys.append(_join([ks[t][subs[t]][s]
                                   for t in range(order)], kind))
                values.append(_join([vs[t][subs[t]][s]
                                     for t in range(order)], kind))
            out[e][s] = _softmax_sum(q[e][s], keys, values)
    return _proj(out, p.out_proj)


class TestPairwiseAttention(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(42)

    def test_kernels_match_loops(self):
        for kind in ('additive', 'multiplicative'):
            for n, d, heads in ((1, 4, 1), (5, 6, 2), (7, 8, 4)):
                p = AttentionParams.init(d, heads, self.rng)
                r = Tensor(self.rng.standard_normal((n, n, d)))
                expected = pairwise_loops(r.data, p, kind)
                np.testing.assert_allclose(
                    pivotal_attention_naive(r, p, kind).data, expected,
                    rtol=0, atol=1e-10)
                for tile in (1, 3, 32):
                    np.testing.assert_allclose(
                        pivotal_attention_streamed(r, p, kind,
                                                   tile=tile).data,
                        expected, rtol=0, atol=1e-10)

    def test_workers_do_not_change_result(self):
        p = AttentionParams.init(8, 2, self.rng)
        r = Tensor(self.rng.standard_normal((9, 9, 8)))
        single = pivotal_attention_streamed(r, p, tile=2, workers=1).data
        threaded = pivotal_attention_streamed(r, p, tile=2, workers=4).data
        np.testing.assert_array_equal(single, threaded)

    def test_general_kernel_coincides_at_order_two(self):
        p = AttentionParams.init(8, 2, self.rng)
        r = Tensor(self.rng.standard_normal((6, 6, 8)))
        general = korder_pivotal_attention(
            r, KOrderAttentionParams.from_pairwise(p), 'multiplicative')
        np.testing.assert_array_equal(
            general.data, pivotal_attention_naive(r, p, 'multiplicative').data)

    def test_permutation_equivariance(self):
        p = AttentionParams.init(8, 2, self.rng)
        r = self.rng.standard_normal((7, 7, 8))
        pi = NodePermutation.random(7, seed=3)
        for kind in ('additive', 'multiplicative'):
            out = pivotal_attention_naive(Tensor(r), p, kind).data
            permuted = pivotal_attention_naive(
                Tensor(permute_axes(r, pi, 2)), p, kind).data
            np.testing.assert_allclose(permuted, permute_axes(out, pi, 2),
                                       rtol=0, atol=1e-12)
            streamed = pivotal_attention_streamed(
                Tensor(permute_axes(r, pi, 2)), p, kind, tile=3).data
            np.testing.assert_allclose(streamed, permute_axes(out, pi, 2),
                                       rtol=0, atol=1e-12)

    def test_pivot_order_irrelevant(self):
        q = self.rng.standard_normal((3, 8))
        keys = self.rng.standard_normal((3, 6, 8))
        values = self.rng.standard_normal((3, 6, 8))
        shuffle = self.rng.permutation(6)
        np.testing.assert_allclose(
            attend_over_pivots(q, keys[:, shuffle], values[:, shuffle], 2),
            attend_over_pivots(q, keys, values, 2), rtol=0, atol=1e-12)

    def test_path_segments_are_ordered(self):
        p = AttentionParams.init(8, 2, self.rng)
        swapped = AttentionParams(p.q_proj, p.k_proj_right, p.k_proj_left,
                                  p.v_proj_right, p.v_proj_left, p.out_proj,
                                  p.heads)
        r = Tensor(self.rng.standard_normal((5, 5, 8)))
        self.assertGreater(
            np.abs(pivotal_attention_naive(r, p).data
                   - pivotal_attention_naive(r, swapped).data).max(), 1e-3)

    def test_invalid_arguments(self):
        with self.assertRaises(ShapeError):
            AttentionParams.init(6, 4, self.rng)
        p = AttentionParams.init(4, 2, self.rng)
        r = Tensor(np.zeros((3, 3, 4)))
        with self.assertRaises(ShapeError):
            pivotal_attention_naive(r, p, 'max')
        with self.assertRaises(ShapeError):
            pivotal_attention_naive(Tensor(np.zeros((3, 4, 4))), p)
        with self.assertRaises(ShapeError):
            pivotal_attention_streamed(r, p, tile=0)

    def test_naive_size_limit(self):
        p = AttentionParams.init(32, 4, self.rng)
        r = Tensor(np.zeros((130, 130, 32)))
        with self.assertRaises(CapabilityError):
            pivotal_attention_naive(r, p)


class TestInfluence(TestCase):

    def test_every_pivot_reaches_the_target(self):
        rng = np.random.default_rng(11)
        n, d_r = 5, 6
        r = rng.standard_normal((n, n, d_r))
        for kind in ('additive', 'multiplicative'):
            p = AttentionParams.init(d_r, 2, rng)
            base = pivotal_attention_naive(Tensor(r), p, kind).data
            for i, k in ((0, 3), (2, 2), (4, 1)):
                for j in range(n):
                    for pair in ((i, j), (j, k)):
                        bumped = r.copy()
                        bumped[pair] += 0.5 * rng.standard_normal(d_r)
                        out = pivotal_attention_naive(Tensor(bumped), p,
                                                      kind).data
                        self.assertGreater(
                            np.abs(out[i, k] - base[i, k]).max(), 1e-12,
                            (kind, i, j, k, pair))

    def test_streamed_kernel_sees_every_pivot(self):
        rng = np.random.default_rng(12)
        n, d_r = 6, 4
        r = rng.standard_normal((n, n, d_r))
        p = AttentionParams.init(d_r, 1, rng)
        base = pivotal_attention_streamed(Tensor(r), p, tile=2).data
        i, k = 1, 4
        for j in range(n):
            for pair in ((i, j), (j, k)):
                bumped = r.copy()
                bumped[pair] += 1.0
                out = pivotal_attention_streamed(Tensor(bumped), p,
                                                 tile=2).data
                self.assertGreater(np.abs(out[i, k] - base[i, k]).max(),
                                   1e-12, (j, pair))


class TestKOrderAttention(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_order_one_and_three_match_loops(self):
        for order, n in ((1, 6), (3, 4)):
            for kind in ('additive', 'multiplicative'):
                p = KOrderAttentionParams.init(order, 4, 2, self.rng)
                r = Tensor(self.rng.standard_normal((n,) * order + (4,)))
                np.testing.assert_allclose(
                    korder_pivotal_attention(r, p, kind).data,
                    korder_loops(r.data, p, kind), rtol=0, atol=1e-10)

    def test_order_three_equivariance(self):
        p = KOrderAttentionParams.init(3, 4, 2, self.rng)
        r = self.rng.standard_normal((4, 4, 4, 4))
        pi = NodePermutation.random(4, seed=5)
        out = korder_pivotal_attention(Tensor(r), p).data
        permuted = korder_pivotal_attention(
            Tensor(permute_axes(r, pi, 3)), p).data
        np.testing.assert_allclose(permuted, permute_axes(out, pi, 3),
                                   rtol=0, atol=1e-12)

    def test_streamed_needs_order_two(self):
        p = KOrderAttentionParams.init(3, 4, 2, self.rng)
        with self.assertRaises(CapabilityError):
            korder_pivotal_attention(Tensor(np.zeros((2, 2, 2, 4))), p,
                                     kernel='streamed')
        with self.assertRaises(ShapeError):
            korder_pivotal_attention(Tensor(np.zeros((2, 2, 4))), p)


class TestKernelEquivalence(TestCase):

    def test_random_configurations(self):
        rows = kernel_equivalence(trials=12, seed=1, max_n=10, max_dr=12)
        self.assertEqual(len(rows), 12)
        for row in rows:
            self.assertLessEqual(row['forward_error'], 1e-10, row)
            self.assertLessEqual(row['gradient_error'], 1e-9, row)

    @pytest.mark.slow
    def test_acceptance_run(self):
        rows = kernel_equivalence(trials=100, seed=0, max_n=24)
        self.assertLessEqual(max(r['forward_error'] for r in rows), 1e-10)
        self.assertLessEqual(max(r['gradient_error'] for r in rows), 1e-9)


@pytest.mark.slow
class TestMemory(TestCase):

    def test_streamed_grows_quadratically(self):
        rows = kernel_bench([64, 128], 8, 2, impls=('streamed',), tile=16)
        [(impl, small, large, ratio, ok)] = memory_ratios(rows)
        self.assertEqual((impl, small, large), ('streamed', 64, 128))
        self.assertTrue(ok, ratio)

    def test_naive_grows_cubically(self):
        rows = kernel_bench([64, 128], 8, 2, impls=('naive',))
        [(impl, small, large, ratio, ok)] = memory_ratios(rows)
        self.assertEqual((impl, small, large), ('naive', 64, 128))
        self.assertTrue(7.0 <= ratio <= 9.0, ratio)
        self.assertTrue(ok)

    def test_both_kernels_at_acceptance_sizes(self):
        rows = kernel_bench([64, 128], 8, 2, tile=16)
        ratios = {impl: ratio for impl, _, _, ratio, _ in memory_ratios(rows)}
        self.assertEqual(sorted(ratios), ['naive', 'streamed'])
        self.assertTrue(7.0 <= ratios['naive'] <= 9.0, ratios)
        self.assertTrue(3.5 <= ratios['streamed'] <= 4.5, ratios)


class TestBench(TestCase):

    def test_rows(self):
        rows = kernel_bench([4, 8], 4, 2)
        self.assertEqual([(r['impl'], r['N']) for r in rows],
                         [('naive', 4), ('streamed', 4),
                          ('naive', 8), ('streamed', 8)])
        for row in rows:
            self.assertGreater(row['peak_bytes'], 0)
        # both kernels compute the same function
        self.assertAlmostEqual(rows[0]['checksum'], rows[1]['checksum'],
                               places=8)

    def test_oversized_naive_is_skipped(self):
        rows = kernel_bench([130], 32, 4)
        self.assertEqual([r['impl'] for r in rows], ['streamed'])

    def test_naive_limit(self):
        self.assertEqual(kernel_bench([8], 4, 1, impls=('naive',),
                                      naive_limit=8 ** 3 * 4 - 1), [])
        rows = kernel_bench([8], 4, 1, impls=('naive',),
                            naive_limit=8 ** 3 * 4)
        self.assertEqual(len(rows), 1)
        r = Tensor(np.zeros((130, 130, 32)))
        params = AttentionParams.init(32, 4, np.random.default_rng(0))
        self.assertGreater(130 ** 3 * 32, MAX_NAIVE_ELEMENTS)
        with self.assertRaises(CapabilityError):
            pivotal_attention_naive(r, params, max_elements=130 ** 3 * 32 - 1)


class TestRotation(TestCase):

    def test_mixers(self):
        for m in rotation_mixers():
            self.assertEqual(m.shape, (9, 27))
            self.assertEqual(m.sum(), 27)
            self.assertTrue(set(np.unique(m)) <= {0.0, 1.0})

    def test_composition(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            t_a, t_b = random_rotation(rng), random_rotation(rng)
            np.testing.assert_allclose(rotation_compose_check(t_a, t_b),
                                       t_a @ t_b, rtol=0, atol=1e-12)
        self.assertLess(rotation_trials(200, seed=1), 1e-12)

    def test_rejects_non_rotations(self):
        with self.assertRaises(RotationError):
            rotation_compose_check(np.eye(2), np.eye(3))
        with self.assertRaises(RotationError):
            rotation_compose_check(2 * np.eye(3), np.eye(3))
        with self.assertRaises(RotationError):
            rotation_compose_check(np.diag([1.0, 1.0, -1.0]), np.eye(3))
