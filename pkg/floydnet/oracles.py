# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Brute-force label oracles for the synthetic tasks"""

import logging

import numpy as np

from .errors import CapabilityError, DimensionMismatch, NegativeWeightError
from .graph import Graph


log = logging.getLogger(__name__)

MAX_CYCLE_NODES = 16
CYCLE_LENGTHS = (3, 4, 5, 6)
LEVELS = ('graph', 'node', 'edge')


def floyd_warshall_oracle(g: Graph) -> np.ndarray:
    """All-pairs shortest path distances of ``g``.

    Returns:
        numpy.ndarray: ``(n, n)`` distances, zero on the diagonal and
        ``+inf`` for unreachable pairs; ``numpy.isfinite`` of the result is
        the reachability flag used to mask training labels.

    Raises:
        NegativeWeightError: an edge has a negative weight
    """
    if np.any(g.weights[g.adjacency] < 0):
        raise NegativeWeightError('negative edge weights are not supported')
    dist = np.where(g.adjacency, g.weights, np.inf)
    np.fill_diagonal(dist, 0.0)
    for j in range(g.n):
        dist = np.minimum(dist, dist[:, j, None] + dist[None, j, :])
    return dist


def _simple_cycles(g: Graph, length):
    """Yield every simple cycle of ``length`` nodes exactly once, as a tuple
    starting at its smallest node and oriented so that its second node is
    smaller than its last one."""
    neighbours = [np.flatnonzero(g.adjacency[v]).tolist() for v in range(g.n)]
    for start in range(g.n):
        stack = [(start, [start])]
        while stack:
            node, path = stack.pop()
            if len(path) == length:
                if start in neighbours[node] and path[1] < path[-1]:
                    yield tuple(path)
                continue
            for nxt in neighbours[node]:
                if nxt > start and nxt not in path:
                    stack.append((nxt, path + [nxt]))


def cycle_count_oracle(g: Graph, cycle_len, level='graph'):
    """Count the simple cycles of ``cycle_len`` nodes of ``g``.

    Args:
        g (Graph): an undirected simple graph with at most
          ``MAX_CYCLE_NODES`` nodes
        cycle_len (int): one of 3, 4, 5, 6
        level (str): ``graph`` (an int), ``node`` (per-node counts of
          cycles through the node) or ``edge`` (symmetric ``(n, n)`` counts
          of cycles using the edge; each unordered edge is counted once in
          the upper triangle, so that triangle sums to ``cycle_len`` times
          the graph count)

    Raises:
        CapabilityError: the graph is too large for exhaustive enumeration
    """
    if cycle_len not in CYCLE_LENGTHS:
        raise DimensionMismatch('cycle length must be one of %s, got %s'
                                % (CYCLE_LENGTHS, cycle_len))
    if level not in LEVELS:
        raise DimensionMismatch('unknown count level %r' % level)
    if g.directed:
        raise DimensionMismatch('cycle counting needs an undirected graph')
    if g.n > MAX_CYCLE_NODES:
        raise CapabilityError('exhaustive cycle enumeration is limited to %s '
                              'nodes, got %s' % (MAX_CYCLE_NODES, g.n))

    total = 0
    per_node = np.zeros(g.n, dtype=np.int64)
    per_edge = np.zeros((g.n, g.n), dtype=np.int64)
    for cycle in _simple_cycles(g, cycle_len):
        total += 1
        for pos, u in enumerate(cycle):
            v = cycle[(pos + 1) % cycle_len]
            per_node[u] += 1
            per_edge[u, v] += 1
            per_edge[v, u] += 1

    if level == 'graph':
        return total
    if level == 'node':
        return per_node
    return per_edge
