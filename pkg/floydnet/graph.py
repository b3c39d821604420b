# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Graph data model, permutations and the generators used by the synthetic
tasks and the expressivity suite.

All arrays held by a :class:`Graph` are read-only: operations return new
graphs and never mutate their input, which makes every function of this
module safe to call from concurrent threads.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, PermutationError


log = logging.getLogger(__name__)


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Graph:
    """A (possibly weighted, possibly featured) graph instance.

    Absent features are stored as zero-width arrays so that every consumer
    can concatenate them without special cases: ``node_feats`` is always
    ``(n, d_n)``, ``edge_feats`` is ``(n, n, d_e)`` and ``graph_feats`` is
    ``(d_g,)``. ``weights`` holds the edge weight where ``adjacency`` is set
    and zero elsewhere.

    When ``supernode`` is set, node ``n - 1`` is the virtual SuperNode
    appended by :func:`floydnet.model.attach_supernode`.
    """

    n: int
    node_feats: np.ndarray
    adjacency: np.ndarray
    weights: np.ndarray
    edge_feats: Optional[np.ndarray] = None
    graph_feats: Optional[np.ndarray] = None
    directed: bool = False
    supernode: bool = False

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise DimensionMismatch('a graph needs at least one node, got %s'
                                    % n)
        set_ = object.__setattr__
        node_feats = np.asarray(self.node_feats, dtype=np.float64)
        if node_feats.ndim == 1 and node_feats.size == 0:
            node_feats = node_feats.reshape(n, 0)
        set_(self, 'node_feats', _frozen(node_feats, np.float64))
        set_(self, 'adjacency', _frozen(self.adjacency, bool))
        set_(self, 'weights', _frozen(self.weights, np.float64))
        if self.edge_feats is None:
            edge_feats = np.zeros((n, n, 0))
        else:
            edge_feats = self.edge_feats
        set_(self, 'edge_feats', _frozen(edge_feats, np.float64))
        if self.graph_feats is None:
            graph_feats = np.zeros(0)
        else:
            graph_feats = self.graph_feats
        set_(self, 'graph_feats', _frozen(graph_feats, np.float64))
        self._check()

    def _check(self):
        n = self.n
        if self.node_feats.ndim != 2 or self.node_feats.shape[0] != n:
            raise DimensionMismatch('node features have shape %s, expected '
                                    '(%s, d_n)' % (self.node_feats.shape, n))
        for name in ('adjacency', 'weights'):
            if getattr(self, name).shape != (n, n):
                raise DimensionMismatch('%s has shape %s, expected (%s, %s)'
                                        % (name, getattr(self, name).shape,
                                           n, n))
        if self.edge_feats.ndim != 3 or self.edge_feats.shape[:2] != (n, n):
            raise DimensionMismatch('edge features have shape %s, expected '
                                    '(%s, %s, d_e)'
                                    % (self.edge_feats.shape, n, n))
        if self.graph_feats.ndim != 1:
            raise DimensionMismatch('graph features must be a vector')
        if not self.directed:
            if not np.array_equal(self.adjacency, self.adjacency.T):
                raise DimensionMismatch('undirected adjacency not symmetric')
            if not np.array_equal(self.weights, self.weights.T):
                raise DimensionMismatch('undirected weights not symmetric')
            if not np.array_equal(self.edge_feats,
                                  self.edge_feats.transpose(1, 0, 2)):
                raise DimensionMismatch('undirected edge features not '
                                        'symmetric')

    @property
    def d_n(self) -> int:
        return self.node_feats.shape[1]

    @property
    def d_e(self) -> int:
        return self.edge_feats.shape[2]

    @property
    def d_g(self) -> int:
        return self.graph_feats.shape[0]

    @classmethod
    def from_edges(cls, n, edges, node_feats=None, edge_feats=None,
                   graph_feats=None, directed=False, self_loops=False):
        """Build a graph from ``(u, v[, w])`` tuples.

        Undirected edges are stored in both triangles. ``edge_feats`` maps
        ``(u, v)`` to a feature vector.
        """
        adjacency = np.zeros((n, n), dtype=bool)
        weights = np.zeros((n, n))
        d_e = 0
        if edge_feats:
            d_e = len(next(iter(edge_feats.values())))
        efeats = np.zeros((n, n, d_e))
        for edge in edges:
            u, v = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) > 2 else 1.0
            if not (0 <= u < n and 0 <= v < n):
                raise DimensionMismatch('edge (%s, %s) out of range for %s '
                                        'nodes' % (u, v, n))
            if u == v and not self_loops:
                raise DimensionMismatch('self-loop on node %s' % u)
            pairs = [(u, v)] if directed else [(u, v), (v, u)]
            for a, b in pairs:
                adjacency[a, b] = True
                weights[a, b] = w
                if edge_feats and (u, v) in edge_feats:
                    efeats[a, b] = edge_feats[(u, v)]
        if node_feats is None:
            node_feats = np.ones((n, 1))
        return cls(n=n, node_feats=node_feats, adjacency=adjacency,
                   weights=weights, edge_feats=efeats,
                   graph_feats=graph_feats, directed=directed)

    def edges(self) -> Iterator[Tuple[int, int, float]]:
        """Iterate over ``(u, v, weight)``; undirected edges once, u < v"""
        us, vs = np.nonzero(self.adjacency)
        for u, v in zip(us.tolist(), vs.tolist()):
            if self.directed or u <= v:
                yield u, v, float(self.weights[u, v])

    def same_as(self, other: 'Graph') -> bool:
        """Exact (bitwise) equality of every field"""
        return (self.n == other.n
                and self.directed == other.directed
                and self.supernode == other.supernode
                and np.array_equal(self.node_feats, other.node_feats)
                and np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.edge_feats, other.edge_feats)
                and np.array_equal(self.graph_feats, other.graph_feats))


def edge_encoding(g: Graph) -> np.ndarray:
    """Per-pair edge input of the model:
    ``[E_ij, w_ij, present_ij, i == j]``.

    Non-edges get a zero vector with the presence channel at 0.
    """
    return np.concatenate([
        g.edge_feats,
        g.weights[:, :, None],
        g.adjacency[:, :, None].astype(np.float64),
        np.eye(g.n)[:, :, None],
    ], axis=-1)


@dataclass(frozen=True)
class NodePermutation:
    """A bijection on ``0..n-1``; ``perm[i]`` is the image of ``i``"""

    perm: Tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(i) for i in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise PermutationError('%s is not a bijection on 0..%s'
                                   % (perm, len(perm) - 1))
        object.__setattr__(self, 'perm', perm)

    def __len__(self):
        return len(self.perm)

    def __getitem__(self, i):
        return self.perm[i]

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(n)))

    @classmethod
    def random(cls, n, seed):
        rng = np.random.default_rng(seed)
        return cls(tuple(rng.permutation(n).tolist()))

    def inverse(self) -> 'NodePermutation':
        inv = [0] * len(self.perm)
        for i, p in enumerate(self.perm):
            inv[p] = i
        return NodePermutation(tuple(inv))

    def compose(self, other: 'NodePermutation') -> 'NodePermutation':
        """``self.compose(other)(i) == self(other(i))``"""
        if len(other) != len(self):
            raise PermutationError('cannot compose permutations of sizes '
                                   '%s and %s' % (len(self), len(other)))
        return NodePermutation(tuple(self.perm[p] for p in other.perm))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.perm, dtype=np.intp)


def permute_axes(array, pi: NodePermutation, naxes: int):
    """Gather ``array`` along its first ``naxes`` axes: the entry at
    ``(i, j, ..)`` of the result is the input entry at
    ``(pi(i), pi(j), ..)``."""
    idx = pi.as_array()
    for axis in range(naxes):
        if array.shape[axis] != len(idx):
            raise PermutationError('axis %s has extent %s, permutation has '
                                   'size %s' % (axis, array.shape[axis],
                                                len(idx)))
        array = np.take(array, idx, axis=axis)
    return array


def apply_permutation(g: Graph, pi: NodePermutation) -> Graph:
    """Relabel the nodes of ``g``: node ``i`` of the result carries the data
    of node ``pi(i)`` of ``g`` (all pairwise arrays permuted on both axes).
    """
    if len(pi) != g.n:
        raise PermutationError('permutation of size %s applied to a graph '
                               'with %s nodes' % (len(pi), g.n))
    return Graph(
        n=g.n,
        node_feats=permute_axes(g.node_feats, pi, 1),
        adjacency=permute_axes(g.adjacency, pi, 2),
        weights=permute_axes(g.weights, pi, 2),
        edge_feats=permute_axes(g.edge_feats, pi, 2),
        graph_feats=g.graph_feats,
        directed=g.directed,
    )


def gen_random_graph(n, p, weight_range=(1, 1), seed=0, node_dim=1):
    """Erdős–Rényi graph with uniform integer weights.

    Args:
        n (int): node count
        p (float): edge probability
        weight_range: inclusive ``(lo, hi)`` integer range of edge weights
        seed (int): generator seed; equal seeds give bit-identical graphs
        node_dim (int): width of the constant (all-ones) node features

    Returns:
        Graph: an undirected graph without self-loops
    """
    lo, hi = int(weight_range[0]), int(weight_range[1])
    if n < 1 or not 0 <= p <= 1 or lo > hi:
        raise DimensionMismatch('invalid generator arguments n=%s p=%s '
                                'range=%s' % (n, p, (lo, hi)))
    rng = np.random.default_rng(seed)
    draws = rng.random((n, n))
    weights = rng.integers(lo, hi + 1, size=(n, n)).astype(np.float64)
    upper = np.triu(draws < p, k=1)
    adjacency = upper | upper.T
    weights = np.triu(weights, k=1)
    weights = (weights + weights.T) * adjacency
    return Graph(n=n, node_feats=np.ones((n, node_dim)),
                 adjacency=adjacency, weights=weights)


# Named families

def cycle_graph(n):
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves):
    """Star with center 0 and ``leaves`` leaves"""
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def complete_graph(n):
    return Graph.from_edges(n, [(i, j) for i in range(n)
                                for j in range(i + 1, n)])


def complete_bipartite_graph(a, b):
    return Graph.from_edges(a + b, [(i, a + j) for i in range(a)
                                    for j in range(b)])


def circulant_graph(n, jumps: Sequence[int]):
    edges = set()
    for i in range(n):
        for s in jumps:
            j = (i + s) % n
            edges.add((min(i, j), max(i, j)))
    return Graph.from_edges(n, sorted(edges))


def disjoint_union(*graphs: Graph) -> Graph:
    n = sum(g.n for g in graphs)
    edges = []
    offset = 0
    for g in graphs:
        edges.extend((u + offset, v + offset, w) for u, v, w in g.edges())
        offset += g.n
    node_feats = np.concatenate([g.node_feats for g in graphs], axis=0)
    return Graph.from_edges(n, edges, node_feats=node_feats)


def rook_graph(m=4):
    """The m x m rook's graph (K_m x K_m); SRG(16, 6, 2, 2) for m=4"""
    return Graph.from_edges(m * m, [
        (u, v) for u in range(m * m) for v in range(u + 1, m * m)
        if u // m == v // m or u % m == v % m
    ])


def shrikhande_graph():
    """Cayley graph on Z4 x Z4 with connection set ±(0,1), ±(1,0), ±(1,1)"""
    steps = {(0, 1), (0, 3), (1, 0), (3, 0), (1, 1), (3, 3)}
    edges = []
    for u in range(16):
        for v in range(u + 1, 16):
            diff = ((v // 4 - u // 4) % 4, (v % 4 - u % 4) % 4)
            if diff in steps:
                edges.append((u, v))
    return Graph.from_edges(16, edges)


def prism_graph(m=3):
    """C_m x K_2"""
    edges = [(i, (i + 1) % m) for i in range(m)]
    edges += [(m + i, m + (i + 1) % m) for i in range(m)]
    edges += [(i, m + i) for i in range(m)]
    return Graph.from_edges(2 * m, edges)


def decalin_graph():
    """Carbon skeleton of decalin: two 6-rings sharing the 0-1 bond"""
    return Graph.from_edges(10, [
        (0, 1),
        (0, 2), (2, 3), (3, 4), (4, 5), (5, 1),
        (0, 6), (6, 7), (7, 8), (8, 9), (9, 1),
    ])


def bicyclopentyl_graph():
    """Carbon skeleton of bicyclopentyl: two 5-rings joined by the 0-5
    bond"""
    return Graph.from_edges(10, [
        (0, 1), (1, 2), (2, 3), (3, 4), (4, 0),
        (5, 6), (6, 7), (7, 8), (8, 9), (9, 5),
        (0, 5),
    ])


def petersen_graph():
    edges = [(i, (i + 1) % 5) for i in range(5)]
    edges += [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    edges += [(i, i + 5) for i in range(5)]
    return Graph.from_edges(10, edges)
