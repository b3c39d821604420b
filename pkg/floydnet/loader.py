# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Text formats for graph instances.

Edge-list format::

    # comments start with '#'
    N [d_n d_e d_g]
    [g1 .. g_dg]                 (one line, only when d_g > 0)
    v f1 .. f_dn                 (exactly N lines, only when d_n > 0)
    u v w [f1 .. f_de]           (one line per edge)

Dense format::

    N
    w_00 .. w_0(N-1)
    ..

In the dense format every off-diagonal entry is an edge unless it reads
``-`` or ``inf``; an asymmetric matrix yields a directed graph. All indices
are 0-based.
"""

import logging
import math

import numpy as np

from .errors import GraphFormatError
from .graph import Graph


log = logging.getLogger(__name__)

FORMATS = ('edge-list', 'dense')

NO_EDGE_TOKENS = ('-', 'inf')


def _data_lines(fileobj):
    """Yield ``(lineno, tokens)`` for every non-blank, non-comment line"""
    for lineno, line in enumerate(fileobj, start=1):
        line = line.split('#', 1)[0].strip()
        if line:
            yield lineno, line.split()


def _floats(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise GraphFormatError('expected numbers, got %r' % ' '.join(tokens),
                               lineno) from None


def _count(token, lineno):
    try:
        return int(token)
    except ValueError:
        raise GraphFormatError('header value %r is not an integer' % token,
                               lineno) from None


def _index(token, n, lineno):
    try:
        index = int(token)
    except ValueError:
        raise GraphFormatError('node index %r is not an integer' % token,
                               lineno) from None
    if not 0 <= index < n:
        raise GraphFormatError('node index %s out of range for %s nodes'
                               % (index, n), lineno)
    return index


def parse_edge_list(fileobj, directed=False):
    lines = _data_lines(fileobj)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise GraphFormatError('empty graph file', 1) from None
    if len(header) not in (1, 4):
        raise GraphFormatError('header must read "N" or "N d_n d_e d_g"',
                               lineno)
    dims = [_count(v, lineno) for v in header]
    n = dims[0]
    d_n, d_e, d_g = dims[1:] if len(dims) == 4 else (0, 0, 0)
    if n < 1 or min(d_n, d_e, d_g) < 0:
        raise GraphFormatError('invalid dimensions %s' % dims, lineno)

    graph_feats = np.zeros(d_g)
    if d_g:
        lineno, tokens = next(lines, (lineno, None))
        if tokens is None or len(tokens) != d_g:
            raise GraphFormatError('expected %s graph features' % d_g,
                                   lineno)
        graph_feats[:] = _floats(tokens, lineno)

    node_feats = np.zeros((n, d_n))
    if d_n:
        seen = set()
        for _ in range(n):
            lineno, tokens = next(lines, (lineno, None))
            if tokens is None:
                raise GraphFormatError('expected %s node feature lines' % n,
                                       lineno)
            if len(tokens) != d_n + 1:
                raise GraphFormatError('node line needs 1 + %s fields' % d_n,
                                       lineno)
            v = _index(tokens[0], n, lineno)
            if v in seen:
                raise GraphFormatError('node %s listed twice' % v, lineno)
            seen.add(v)
            node_feats[v] = _floats(tokens[1:], lineno)

    edges = []
    edge_feats = {}
    for lineno, tokens in lines:
        if len(tokens) != 3 + d_e:
            raise GraphFormatError('edge line needs 3 + %s fields' % d_e,
                                   lineno)
        u = _index(tokens[0], n, lineno)
        v = _index(tokens[1], n, lineno)
        if u == v:
            raise GraphFormatError('self-loop on node %s' % u, lineno)
        values = _floats(tokens[2:], lineno)
        edges.append((u, v, values[0]))
        if d_e:
            edge_feats[(u, v)] = values[1:]

    g = Graph.from_edges(n, edges, node_feats=node_feats,
                         edge_feats=edge_feats or None,
                         graph_feats=graph_feats, directed=directed)
    if d_e and g.d_e != d_e:
        # no edge line carried features: keep the declared width
        g = Graph(n=n, node_feats=node_feats, adjacency=g.adjacency,
                  weights=g.weights, edge_feats=np.zeros((n, n, d_e)),
                  graph_feats=graph_feats, directed=directed)
    return g


def parse_dense(fileobj):
    lines = _data_lines(fileobj)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise GraphFormatError('empty graph file', 1) from None
    if len(header) != 1:
        raise GraphFormatError('dense header must read "N"', lineno)
    n = _count(header[0], lineno)
    if n < 1:
        raise GraphFormatError('invalid node count %s' % n, lineno)

    adjacency = np.zeros((n, n), dtype=bool)
    weights = np.zeros((n, n))
    for row in range(n):
        lineno, tokens = next(lines, (lineno, None))
        if tokens is None:
            raise GraphFormatError('expected %s matrix rows' % n, lineno)
        if len(tokens) != n:
            raise GraphFormatError('row %s has %s entries, expected %s'
                                   % (row, len(tokens), n), lineno)
        for col, token in enumerate(tokens):
            if token in NO_EDGE_TOKENS:
                continue
            value = _floats([token], lineno)[0]
            if col == row:
                if value != 0:
                    raise GraphFormatError('nonzero diagonal entry', lineno)
                continue
            adjacency[row, col] = True
            weights[row, col] = value
    extra = next(lines, None)
    if extra is not None:
        raise GraphFormatError('trailing data after %s rows' % n, extra[0])

    directed = not (np.array_equal(adjacency, adjacency.T)
                    and np.array_equal(weights, weights.T))
    return Graph(n=n, node_feats=np.zeros((n, 0)), adjacency=adjacency,
                 weights=weights, directed=directed)


def load_graph(path, format='edge-list', directed=False):
    """Load a graph from ``path``.

    Args:
        path (str): the graph file
        format (str): ``edge-list`` or ``dense``
        directed (bool): edge-list only; when false every edge is stored in
          both directions

    Returns:
        Graph: the parsed instance

    Raises:
        GraphFormatError: the file does not parse (the message carries the
          offending line number)
    """
    if format not in FORMATS:
        raise GraphFormatError('unknown graph format %r' % format)
    log.debug('load %s graph from %s' % (format, path), extra={
        'floydnet_type': 'graph_load',
        'floydnet_path': str(path),
        'floydnet_format': format,
    })
    with open(path, 'r') as f:
        if format == 'dense':
            return parse_dense(f)
        return parse_edge_list(f, directed=directed)


def _fmt(value):
    if math.isinf(value):
        return 'inf'
    return repr(float(value))


def dump_graph(g, path, format='edge-list'):
    """Write ``g`` to ``path``; :func:`load_graph` reads it back unchanged.

    Raises:
        GraphFormatError: the dense format is asked to hold node, edge or
          graph features
    """
    if format not in FORMATS:
        raise GraphFormatError('unknown graph format %r' % format)
    if format == 'dense' and (g.d_n or g.d_e or g.d_g):
        raise GraphFormatError('the dense format has no room for features '
                               '(d_n=%s, d_e=%s, d_g=%s)'
                               % (g.d_n, g.d_e, g.d_g))
    lines = []
    if format == 'dense':
        lines.append('%d' % g.n)
        for u in range(g.n):
            lines.append(' '.join(
                _fmt(g.weights[u, v]) if g.adjacency[u, v]
                else ('0' if u == v else '-')
                for v in range(g.n)))
    else:
        lines.append('%d %d %d %d' % (g.n, g.d_n, g.d_e, g.d_g))
        if g.d_g:
            lines.append(' '.join(_fmt(x) for x in g.graph_feats))
        if g.d_n:
            for v in range(g.n):
                lines.append(' '.join(
                    [str(v)] + [_fmt(x) for x in g.node_feats[v]]))
        for u, v, w in g.edges():
            lines.append(' '.join(
                [str(u), str(v), _fmt(w)]
                + [_fmt(x) for x in g.edge_feats[u, v]]))
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')
