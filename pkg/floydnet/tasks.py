# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Synthetic supervised tasks: random graphs labelled by the brute-force
oracles."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import Graph, gen_random_graph
from .oracles import cycle_count_oracle, floyd_warshall_oracle


log = logging.getLogger(__name__)


@dataclass
class Sample:
    """One labelled graph: ``target`` and ``mask`` have the shape of the
    model predictions at ``level``."""

    graph: Graph
    target: np.ndarray
    mask: np.ndarray
    level: str


def shortest_path_sample(g: Graph) -> Sample:
    """All-pairs distances divided by the graph diameter; unreachable
    pairs are masked out."""
    dist = floyd_warshall_oracle(g)
    reachable = np.isfinite(dist)
    diameter = dist[reachable].max()
    if diameter <= 0:
        diameter = 1.0
    target = np.where(reachable, dist, 0.0) / diameter
    return Sample(g, target[:, :, None], reachable[:, :, None], 'edge')


def cycle_count_sample(g: Graph, cycle_len=3) -> Sample:
    """Per-pair count of the ``cycle_len``-cycles through edge ``(i, j)``"""
    counts = cycle_count_oracle(g, cycle_len, level='edge')
    target = counts.astype(np.float64)[:, :, None]
    return Sample(g, target, np.ones(target.shape, dtype=bool), 'edge')


TASKS = {
    'shortest_path': shortest_path_sample,
    'cycle_count': cycle_count_sample,
}


def make_sample(task, n, seed, edge_prob=0.3, max_weight=1, cycle_len=3,
                node_dim=1):
    """Random ``n``-node instance of ``task`` drawn from ``seed``"""
    if task not in TASKS:
        raise ConfigError('unknown task %r (known: %s)'
                          % (task, ', '.join(sorted(TASKS))))
    weights = (1, max_weight) if task == 'shortest_path' else (1, 1)
    g = gen_random_graph(n, edge_prob, weight_range=weights, seed=seed,
                         node_dim=node_dim)
    if task == 'cycle_count':
        return cycle_count_sample(g, cycle_len)
    return shortest_path_sample(g)


def training_sample(task, seed, step, min_nodes, max_nodes, **kwargs):
    """The sample consumed at ``step`` of an online run; a pure function of
    ``(seed, step)``."""
    rng = np.random.default_rng([seed, step])
    n = int(rng.integers(min_nodes, max_nodes + 1))
    return make_sample(task, n, int(rng.integers(1 << 31)), **kwargs)


def eval_set(task, sizes, count, seed, **kwargs):
    """Fixed held-out samples: ``count`` graphs per size in ``sizes``"""
    samples = []
    for n in sizes:
        for i in range(count):
            rng = np.random.default_rng([seed, n, i, 1 << 20])
            samples.append(make_sample(task, n, int(rng.integers(1 << 31)),
                                       **kwargs))
    return samples
