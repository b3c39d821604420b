# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Weisfeiler-Lehman color refinement and the model/oracle alignment
harness.

Colors are dense integer ids assigned by ranking the distinct refinement
rows of a round in lexicographic order. Two graphs whose row histograms
agree round after round therefore receive the same ids, and a running
sha256 over the per-round histograms is a signature comparable across
graphs: it differs as soon as one round differs.
"""

import hashlib
import itertools
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .converters import read_jsonl
from .errors import CapabilityError, DimensionMismatch
from .graph import (Graph, NodePermutation, apply_permutation,
                    bicyclopentyl_graph, circulant_graph,
                    complete_bipartite_graph, cycle_graph, decalin_graph,
                    disjoint_union, gen_random_graph, path_graph,
                    petersen_graph, prism_graph, rook_graph,
                    shrikhande_graph, star_graph)
from .model import ModelConfig, init_params, model_forward


log = logging.getLogger(__name__)

# refinement refuses to enumerate more (tuple, pivot) combinations
MAX_REFINE_ELEMENTS = 1 << 24

ORACLE_SCHEMES = ('1-WL', '2-WL', '3-WL', '1-FWL', '2-FWL', '3-FWL')
MODEL_SCHEMES = ('model-k2', 'model-k3')
SIGNATURE_DECIMALS = 6

# frozen verdicts of the curated suite
GOLDEN_PATH = os.path.join(os.path.dirname(__file__), 'data',
                           'suite_verdicts.jsonl')

# model used by the alignment harness, completed with order and seed
SUITE_MODEL = {
    'layers': 3,
    'rel_dim': 16,
    'heads': 2,
    'supernode': False,
    'node_dim': 1,
}


@dataclass
class ColorPartition:
    """Stable coloring of the ``order``-tuples of a graph"""

    scheme: str
    order: int
    colors: np.ndarray
    rounds: int
    history: str
    classes: Tuple[int, ...]

    @property
    def num_classes(self) -> int:
        return self.classes[-1]


@dataclass(frozen=True)
class GraphSignature:
    scheme: str
    digest: str


@dataclass
class PairVerdict:
    pair_id: str
    scheme: str
    distinguished: bool
    rounds: int
    seed: Optional[int] = None

    def to_record(self):
        return {
            'pair_id': self.pair_id,
            'scheme': self.scheme,
            'distinguished': self.distinguished,
            'rounds': self.rounds,
            'seed': self.seed,
        }


def _canonical(rows, digest):
    """Dense ids of ``rows`` by lexicographic rank; feeds the round
    histogram to ``digest``."""
    uniq, inverse, counts = np.unique(rows, axis=0, return_inverse=True,
                                      return_counts=True)
    digest.update(np.ascontiguousarray(uniq).tobytes())
    digest.update(counts.astype('<i8').tobytes())
    return inverse.reshape(-1), len(uniq)


def _atomic_rows(g: Graph, order):
    """Ordered isomorphism type of every tuple: equality, adjacency,
    weights and edge features of each position pair, node features of each
    position."""
    n = g.n
    idx = np.indices((n,) * order).reshape(order, -1)
    cols = [np.zeros((idx.shape[1], 1))]
    for s, t in itertools.combinations(range(order), 2):
        a, b = idx[s], idx[t]
        cols += [
            (a == b)[:, None],
            g.adjacency[a, b][:, None],
            g.adjacency[b, a][:, None],
            g.weights[a, b][:, None],
            g.weights[b, a][:, None],
            g.edge_feats[a, b],
            g.edge_feats[b, a],
        ]
    for t in range(order):
        cols.append(g.node_feats[idx[t]])
    rows = np.concatenate([np.asarray(c, dtype=np.float64) for c in cols],
                          axis=1)
    return (rows + 0.0).astype('<f8')


def _substituted(colors, t, order):
    return np.expand_dims(np.moveaxis(colors, t, order - 1), t)


def _fwl_rows(colors, order, num):
    """``[C_e, sorted codes of (C_{e[0]<-p}, .., C_{e[k-1]<-p}) over p]``"""
    n = colors.shape[0]
    code = np.zeros((n,) * (order + 1), dtype=np.int64)
    for t in range(order):
        code = code * num + _substituted(colors, t, order)
    code = np.sort(code.reshape(-1, n), axis=1)
    return np.concatenate([colors.reshape(-1, 1), code], axis=1)


def _wl_rows(colors, order, num):
    """``[C_e, {{C_{e[0]<-p}}}, .., {{C_{e[k-1]<-p}}}]``"""
    n = colors.shape[0]
    full = (n,) * (order + 1)
    parts = [colors.reshape(-1, 1)]
    for t in range(order):
        sub = np.broadcast_to(_substituted(colors, t, order), full)
        parts.append(np.sort(sub.reshape(-1, n), axis=1))
    return np.concatenate(parts, axis=1)


def _refine_tuples(g: Graph, order, scheme, step):
    n = g.n
    if n ** (order + 1) * max(order, 1) > MAX_REFINE_ELEMENTS:
        raise CapabilityError('%s refinement of %s nodes is too large'
                              % (scheme, n))
    digest = hashlib.sha256(scheme.encode('ascii'))
    ids, num = _canonical(_atomic_rows(g, order), digest)
    classes = [num]
    rounds = 0
    while True:
        colors = ids.reshape((n,) * order)
        ids, new_num = _canonical(step(colors, order, num).astype('<i8'),
                                  digest)
        rounds += 1
        classes.append(new_num)
        if new_num == num:
            break
        num = new_num
    return ColorPartition(scheme, order, ids.reshape((n,) * order), rounds,
                          digest.hexdigest(), tuple(classes))


def kfwl_refine(g: Graph, k) -> ColorPartition:
    """k-dimensional folklore WL refinement to stability.

    Raises:
        CapabilityError: the ``N^(k+1)`` enumeration is too large
    """
    if k not in (1, 2, 3):
        raise CapabilityError('k-FWL is available for k in 1..3, got %s' % k)
    return _refine_tuples(g, k, '%d-FWL' % k, _fwl_rows)


def kwl_refine(g: Graph, k) -> ColorPartition:
    """k-dimensional (non-folklore) WL refinement: one pivot multiset per
    position."""
    if k not in (2, 3):
        raise CapabilityError('k-WL is available for k in 2..3, got %s' % k)
    return _refine_tuples(g, k, '%d-WL' % k, _wl_rows)


def wl1_refine(g: Graph) -> ColorPartition:
    """Node color refinement; neighbors enter as ``(edge weight, color)``
    pairs (out- and in-neighbors separately for directed graphs)."""
    n = g.n
    digest = hashlib.sha256(b'1-WL')

    def rank(keys):
        distinct = sorted(set(keys))
        index = {key: i for i, key in enumerate(distinct)}
        counts = [keys.count(key) for key in distinct]
        digest.update(repr(list(zip(distinct, counts))).encode('ascii'))
        return [index[key] for key in keys], len(distinct)

    colors, num = rank([tuple(float(x) + 0.0 for x in row)
                        for row in g.node_feats])
    classes = [num]
    rounds = 0
    while True:
        keys = []
        for v in range(n):
            out = sorted((float(g.weights[v, u]), colors[u])
                         for u in np.flatnonzero(g.adjacency[v]))
            key = (colors[v], tuple(out))
            if g.directed:
                inc = sorted((float(g.weights[u, v]), colors[u])
                             for u in np.flatnonzero(g.adjacency[:, v]))
                key += (tuple(inc),)
            keys.append(key)
        colors, new_num = rank(keys)
        rounds += 1
        classes.append(new_num)
        if new_num == num:
            break
        num = new_num
    return ColorPartition('1-WL', 1, np.asarray(colors, dtype=np.int64),
                          rounds, digest.hexdigest(), tuple(classes))


def refine(g: Graph, scheme) -> ColorPartition:
    if scheme == '1-WL':
        return wl1_refine(g)
    if scheme not in ORACLE_SCHEMES:
        raise CapabilityError('unknown refinement scheme %r' % scheme)
    k = int(scheme[0])
    if scheme.endswith('FWL'):
        return kfwl_refine(g, k)
    return kwl_refine(g, k)


def signature(p: ColorPartition) -> GraphSignature:
    """Isomorphism-invariant signature of a stable coloring"""
    return GraphSignature(p.scheme, p.history)


def model_signature(g: Graph, cfg: ModelConfig, params,
                    q=SIGNATURE_DECIMALS) -> GraphSignature:
    """Hash of the multiset of final relation vectors rounded to ``q``
    decimals."""
    r = model_forward(g, cfg, params).data
    rows = np.round(r.reshape(-1, r.shape[-1]), q) + 0.0
    rows = rows[np.lexsort(rows.T[::-1])]
    digest = hashlib.sha256(('model-k%d' % cfg.order).encode('ascii'))
    digest.update(np.asarray(r.shape, dtype='<i8').tobytes())
    digest.update(rows.astype('<f8').tobytes())
    return GraphSignature('model-k%d' % cfg.order, digest.hexdigest())


def distinguishes(g1: Graph, g2: Graph, scheme) -> Tuple[bool, int]:
    """``(distinguished, rounds)`` of an oracle scheme on a pair"""
    p1, p2 = refine(g1, scheme), refine(g2, scheme)
    return signature(p1) != signature(p2), max(p1.rounds, p2.rounds)


def suite_model_config(order, seed, **overrides) -> ModelConfig:
    values = dict(SUITE_MODEL, order=order, seed=seed)
    values.update(overrides)
    return ModelConfig.from_dict(values)


def model_distinguishes(g1: Graph, g2: Graph, cfg: ModelConfig,
                        q=SIGNATURE_DECIMALS) -> bool:
    params = init_params(cfg)
    return model_signature(g1, cfg, params, q) \
        != model_signature(g2, cfg, params, q)


# Curated pairs

@dataclass
class SuitePair:
    pair_id: str
    first: Graph
    second: Graph
    expected: Dict[str, bool]

    @property
    def isomorphic(self) -> bool:
        return not any(self.expected.values())


def _expect(wl1, fwl2, fwl3):
    return {'1-WL': wl1, '2-FWL': fwl2, '3-FWL': fwl3}


def _permuted(g, seed):
    return apply_permutation(g, NodePermutation.random(g.n, seed))


def pair_suite() -> List[SuitePair]:
    """Hard graph pairs with their expected verdicts under 1-WL, 2-FWL and
    3-FWL; isomorphic controls expect no distinction at all."""
    no = _expect(False, False, False)
    return [
        SuitePair('c6-vs-2c3', cycle_graph(6),
                  disjoint_union(cycle_graph(3), cycle_graph(3)),
                  _expect(False, True, True)),
        SuitePair('decalin-vs-bicyclopentyl', decalin_graph(),
                  bicyclopentyl_graph(), _expect(False, True, True)),
        SuitePair('csl11-2-vs-csl11-3', circulant_graph(11, (1, 2)),
                  circulant_graph(11, (1, 3)), _expect(False, True, True)),
        SuitePair('shrikhande-vs-rook', shrikhande_graph(), rook_graph(4),
                  _expect(False, False, True)),
        SuitePair('c8-vs-2c4', cycle_graph(8),
                  disjoint_union(cycle_graph(4), cycle_graph(4)),
                  _expect(False, True, True)),
        SuitePair('c7-vs-c3-c4', cycle_graph(7),
                  disjoint_union(cycle_graph(3), cycle_graph(4)),
                  _expect(False, True, True)),
        SuitePair('star3-vs-p4', star_graph(3), path_graph(4),
                  _expect(True, True, True)),
        SuitePair('k33-vs-prism', complete_bipartite_graph(3, 3),
                  prism_graph(3), _expect(False, True, True)),
        SuitePair('petersen-iso', petersen_graph(),
                  _permuted(petersen_graph(), 1), no),
        SuitePair('c6-iso', cycle_graph(6), _permuted(cycle_graph(6), 2),
                  no),
        SuitePair('shrikhande-iso', shrikhande_graph(),
                  _permuted(shrikhande_graph(), 3), no),
        SuitePair('random-iso', gen_random_graph(10, 0.4, seed=7),
                  _permuted(gen_random_graph(10, 0.4, seed=7), 4), no),
    ]


def expected_scheme(scheme):
    """Oracle scheme whose verdicts a model scheme must reproduce"""
    if scheme in MODEL_SCHEMES:
        return '%s-FWL' % scheme[-1]
    return scheme


def run_suite(schemes=('1-WL', '2-FWL', '3-FWL'), seeds=(0,), pairs=None,
              q=SIGNATURE_DECIMALS, **model_overrides):
    """Run every scheme on every suite pair.

    Oracle schemes yield one verdict per pair (``seed`` is ``None``); model
    schemes (``model-k2``, ``model-k3``) yield one verdict per seed.

    Returns:
        list of PairVerdict
    """
    for scheme in schemes:
        if scheme not in ORACLE_SCHEMES + MODEL_SCHEMES:
            raise CapabilityError('unknown scheme %r' % scheme)
    if pairs is None:
        pairs = pair_suite()
    verdicts = []
    for pair in pairs:
        for scheme in schemes:
            if scheme in MODEL_SCHEMES:
                order = int(scheme[-1])
                for seed in seeds:
                    cfg = suite_model_config(order, seed, **model_overrides)
                    found = model_distinguishes(pair.first, pair.second, cfg,
                                                q)
                    verdicts.append(PairVerdict(pair.pair_id, scheme, found,
                                                cfg.layers, seed))
            else:
                found, rounds = distinguishes(pair.first, pair.second,
                                              scheme)
                verdicts.append(PairVerdict(pair.pair_id, scheme, found,
                                            rounds))
            log.debug('%s on %s: %s' % (scheme, pair.pair_id,
                                        verdicts[-1].distinguished),
                      extra={
                          'floydnet_type': 'suite_verdict',
                          'floydnet_pair': pair.pair_id,
                          'floydnet_scheme': scheme,
                      })
    return verdicts


def aggregate(verdicts):
    """Collapse per-seed verdicts: a pair counts as distinguished by a
    scheme when any seed distinguishes it.

    Returns:
        dict mapping ``(pair_id, scheme)`` to a boolean
    """
    result = {}  # type: Dict[Tuple[str, str], bool]
    for v in verdicts:
        key = (v.pair_id, v.scheme)
        result[key] = result.get(key, False) or v.distinguished
    return result


def compare_verdicts(verdicts, golden):
    """Disagreements between ``verdicts`` and ``golden`` (records with
    ``pair_id``, ``scheme`` and ``distinguished``). Model schemes are held
    to the golden verdict of their oracle counterpart.

    Returns:
        list of ``(pair_id, scheme, found, expected)``
    """
    expected = {(r['pair_id'], r['scheme']): bool(r['distinguished'])
                for r in golden}
    mismatches = []
    for (pair_id, scheme), found in sorted(aggregate(verdicts).items()):
        key = (pair_id, expected_scheme(scheme))
        if key not in expected:
            raise DimensionMismatch('no golden verdict for %s under %s'
                                    % key)
        if expected[key] != found:
            mismatches.append((pair_id, scheme, found, expected[key]))
    return mismatches


def golden_records(pairs=None):
    """Expected verdict records of the curated suite"""
    records = []
    for pair in pairs or pair_suite():
        for scheme, flag in sorted(pair.expected.items()):
            records.append({'pair_id': pair.pair_id, 'scheme': scheme,
                            'distinguished': flag})
    return records


def read_golden(path=GOLDEN_PATH):
    """Verdict records of a frozen JSON-lines file (the shipped suite
    verdicts by default)"""
    return read_jsonl(path)[1]
