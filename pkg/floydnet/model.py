# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""The FloydNet architecture: relation initialization, SuperNode
augmentation, the stack of pre-norm FloydBlocks and the task readouts."""

import itertools
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from .attention import (COMBINES, KERNELS, ORDERS, KOrderAttentionParams,
                        korder_pivotal_attention)
from .errors import (CapabilityError, ConfigError, DimensionMismatch,
                     SupernodeRequired)
from .graph import Graph, edge_encoding
from .nn import (FFNParams, LinearParams, NormParams, Tensor, add, checked,
                 ffn, linear, norm, place, take)


log = logging.getLogger(__name__)

READOUTS = ('graph', 'node', 'edge')
NORMS = ('layer', 'rms')

# weight, presence and identity channels appended to the edge features
PAIR_CHANNELS = 3


@dataclass
class ModelConfig:
    """Hyperparameters of a FloydNet model.

    ``init_hidden`` and ``ffn_hidden`` default to ``2 * rel_dim``.
    ``edge_dim`` is the raw edge feature width of the input graphs; the
    model sees ``edge_dim + 3`` channels (features, weight, presence,
    identity).
    ``layers = 0`` is accepted and yields the normalized initial relation.
    """

    layers: int = 4
    rel_dim: int = 32
    heads: int = 4
    combine: str = 'additive'
    order: int = 2
    readout: str = 'edge'
    init_hidden: Optional[int] = None
    ffn_hidden: Optional[int] = None
    supernode: bool = True
    seed: int = 0
    node_dim: int = 1
    edge_dim: int = 0
    graph_dim: int = 0
    out_dim: int = 1
    norm: str = 'layer'
    kernel: str = 'naive'
    tile: int = 32
    threads: int = 1
    final_norm: bool = True

    def __post_init__(self):
        if not self.init_hidden:
            self.init_hidden = 2 * self.rel_dim
        if not self.ffn_hidden:
            self.ffn_hidden = 2 * self.rel_dim
        if self.layers < 0:
            raise ConfigError('layers must be >= 0, got %s' % self.layers)
        if self.rel_dim < 1 or self.heads < 1 or self.rel_dim % self.heads:
            raise ConfigError('rel_dim %s must be a positive multiple of '
                              'heads %s' % (self.rel_dim, self.heads))
        if self.order not in ORDERS:
            raise ConfigError('order must be one of %s, got %s'
                              % (ORDERS, self.order))
        for name, allowed in (('combine', COMBINES), ('readout', READOUTS),
                              ('norm', NORMS), ('kernel', KERNELS)):
            if getattr(self, name) not in allowed:
                raise ConfigError('%s must be one of %s, got %r'
                                  % (name, allowed, getattr(self, name)))
        if self.kernel == 'streamed' and self.order != 2:
            raise ConfigError('the streamed kernel needs order 2')
        if min(self.node_dim, self.edge_dim, self.graph_dim) < 0 \
                or self.out_dim < 1:
            raise ConfigError('invalid feature or output widths')
        if min(self.init_hidden, self.ffn_hidden, self.tile,
               self.threads) < 1:
            raise ConfigError('hidden widths, tile and threads must be '
                              'positive')

    @classmethod
    def from_dict(cls, values):
        """Build from a mapping, ignoring keys that are not model fields"""
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def to_dict(self):
        return asdict(self)

    @property
    def input_width(self):
        k = self.order
        pairs = k * (k - 1) // 2
        return (self.graph_dim + k * self.node_dim
                + pairs * (self.edge_dim + PAIR_CHANNELS))


@dataclass
class LayerParams:
    norm1: NormParams
    attn: KOrderAttentionParams
    norm2: NormParams
    ffn: FFNParams

    def named_parameters(self, prefix):
        yield from self.norm1.named_parameters(prefix + '.norm1')
        yield from self.attn.named_parameters(prefix + '.attn')
        yield from self.norm2.named_parameters(prefix + '.norm2')
        yield from self.ffn.named_parameters(prefix + '.ffn')


@dataclass
class ModelParams:
    init_mlp: FFNParams
    layers: List[LayerParams]
    final_norm: Optional[NormParams]
    head: LinearParams
    sn_node: Optional[Tensor] = None
    sn_edge: Optional[Tensor] = None
    config: Optional[ModelConfig] = field(default=None, repr=False)

    def named_parameters(self):
        """Every trainable tensor, in a fixed order"""
        named = list(self.init_mlp.named_parameters('init_mlp'))
        if self.sn_node is not None:
            named.append(('supernode.node', self.sn_node))
            named.append(('supernode.edge', self.sn_edge))
        for i, layer in enumerate(self.layers):
            named.extend(layer.named_parameters('layers.%d' % i))
        if self.final_norm is not None:
            named.extend(self.final_norm.named_parameters('final_norm'))
        named.extend(self.head.named_parameters('head'))
        return named

    def zero_grad(self):
        for _, tensor in self.named_parameters():
            tensor.zero_grad()

    def save(self, path):
        from .converters import write_checkpoint
        write_checkpoint(path, self.named_parameters())

    @classmethod
    def load(cls, path, cfg: ModelConfig):
        """Parameters of ``cfg`` filled from the checkpoint at ``path``"""
        from .converters import read_checkpoint
        params = init_params(cfg)
        read_checkpoint(path, params.named_parameters())
        return params


def init_params(cfg: ModelConfig) -> ModelParams:
    """Seeded parameters of ``cfg``"""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.rel_dim
    init_mlp = FFNParams.init(cfg.input_width, cfg.init_hidden, rng, d_out=d)
    sn_node = sn_edge = None
    if cfg.supernode:
        sn_node = Tensor(rng.uniform(-1.0, 1.0, size=cfg.node_dim))
        sn_edge = Tensor(rng.uniform(-1.0, 1.0, size=cfg.edge_dim + 1))
    layers = []
    for _ in range(cfg.layers):
        layers.append(LayerParams(
            norm1=NormParams.init(d, cfg.norm),
            attn=KOrderAttentionParams.init(cfg.order, d, cfg.heads, rng),
            norm2=NormParams.init(d, cfg.norm),
            ffn=FFNParams.init(d, cfg.ffn_hidden, rng),
        ))
    final = NormParams.init(d, cfg.norm) if cfg.final_norm else None
    head = LinearParams.init(d, cfg.out_dim, rng)
    return ModelParams(init_mlp, layers, final, head, sn_node, sn_edge, cfg)


def param_count(cfg: ModelConfig) -> int:
    """Closed-form number of scalar parameters of ``cfg``"""
    d = cfg.rel_dim
    count = (cfg.input_width * cfg.init_hidden + cfg.init_hidden
             + cfg.init_hidden * d + d)
    if cfg.supernode:
        count += cfg.node_dim + cfg.edge_dim + 1
    per_layer = (4 * d
                 + (2 * cfg.order + 2) * (d * d + d)
                 + 2 * d * cfg.ffn_hidden + cfg.ffn_hidden + d)
    count += cfg.layers * per_layer
    if cfg.final_norm:
        count += 2 * d
    count += d * cfg.out_dim + cfg.out_dim
    return count


def activation_size(cfg: ModelConfig, n) -> int:
    """Scalars in one relation tensor for an ``n``-node input graph"""
    nodes = n + 1 if cfg.supernode else n
    return nodes ** cfg.order * cfg.rel_dim


def _check_dims(g: Graph, cfg: ModelConfig):
    for name, got, expected in (('node', g.d_n, cfg.node_dim),
                                ('edge', g.d_e, cfg.edge_dim),
                                ('graph', g.d_g, cfg.graph_dim)):
        if got != expected:
            raise DimensionMismatch('graph has %s %s features, model expects '
                                    '%s' % (got, name, expected))


def attach_supernode(g: Graph, params: ModelParams) -> Graph:
    """Append the SuperNode as node ``n`` of a new graph.

    The SuperNode carries the learned node embedding and is linked to every
    other node by an edge whose features and weight are the learned edge
    embedding. Without SuperNode parameters the graph is returned as is.
    """
    if params.sn_node is None or g.supernode:
        return g
    n, d_e = g.n, g.d_e
    node_feats = np.concatenate([g.node_feats, params.sn_node.data[None]])
    adjacency = np.zeros((n + 1, n + 1), dtype=bool)
    adjacency[:n, :n] = g.adjacency
    adjacency[n, :n] = adjacency[:n, n] = True
    weights = np.zeros((n + 1, n + 1))
    weights[:n, :n] = g.weights
    weights[n, :n] = weights[:n, n] = params.sn_edge.data[d_e]
    edge_feats = np.zeros((n + 1, n + 1, d_e))
    edge_feats[:n, :n] = g.edge_feats
    edge_feats[n, :n] = edge_feats[:n, n] = params.sn_edge.data[:d_e]
    return Graph(n=n + 1, node_feats=node_feats, adjacency=adjacency,
                 weights=weights, edge_feats=edge_feats,
                 graph_feats=g.graph_feats, directed=g.directed,
                 supernode=True)


def _supernode_inputs(g: Graph, params: ModelParams, tape):
    """Node and edge inputs of the augmented graph as recorded operations,
    so that gradients reach the SuperNode embeddings."""
    n, d_e = g.n, g.d_e
    x = np.zeros((n + 1, g.d_n))
    x[:n] = g.node_feats
    enc = np.zeros((n + 1, n + 1, d_e + PAIR_CHANNELS))
    enc[:n, :n] = edge_encoding(g)
    enc[n, :n, d_e + 1] = enc[:n, n, d_e + 1] = 1.0
    enc[n, n, d_e + 2] = 1.0
    x = place(Tensor(x), (n,), params.sn_node, tape)
    e = place(Tensor(enc), (n, slice(0, n), slice(0, d_e + 1)),
              params.sn_edge, tape)
    e = place(e, (slice(0, n), n, slice(0, d_e + 1)), params.sn_edge, tape)
    return x, e


def _tuple_inputs(x: Tensor, e: Tensor, gfeat: Tensor, order, tape):
    """Concatenate, for every ``order``-tuple, the features of all subsets
    of its positions: the graph features, then each position's node
    features, then each pair's edge encoding (subsets by size, then
    lexicographic)."""
    n = x.shape[0]
    full = (n,) * order
    pieces = [(gfeat, ())]
    pieces += [(x, (t,)) for t in range(order)]
    pieces += [(e, pair) for pair in itertools.combinations(range(order), 2)]

    def expand(data, axes):
        shape = [n if a in axes else 1 for a in range(order)]
        return np.broadcast_to(data.reshape(shape + [data.shape[-1]]),
                               full + (data.shape[-1],))

    out = checked(np.concatenate([expand(t.data, axes) for t, axes in pieces],
                                 axis=-1), 'tuple_inputs')

    def backward(g):
        grads = []
        start = 0
        for tensor, axes in pieces:
            width = tensor.shape[-1]
            part = g[..., start:start + width]
            start += width
            others = tuple(a for a in range(order) if a not in axes)
            grads.append(part.sum(axis=others) if others else part)
        return grads

    if tape is not None:
        tape.record('tuple_inputs', [t for t, _ in pieces], out, backward)
    return out


def _graph_tensors(g: Graph):
    return (Tensor(g.node_feats), Tensor(edge_encoding(g)),
            Tensor(g.graph_feats))


def init_korder(g: Graph, cfg: ModelConfig, params: ModelParams,
                tape=None) -> Tensor:
    """Order-``cfg.order`` initial relation tensor of ``g`` (no SuperNode
    is attached here)."""
    _check_dims(g, cfg)
    x, e, gfeat = _graph_tensors(g)
    return ffn(_tuple_inputs(x, e, gfeat, cfg.order, tape), params.init_mlp,
               tape)


def init_relationship(g: Graph, cfg: ModelConfig, params: ModelParams,
                      tape=None) -> Tensor:
    """Pairwise initial relation: ``MLP([G, X_i, X_j, E_ij])``"""
    if cfg.order != 2:
        raise CapabilityError('init_relationship is the order 2 case, use '
                              'init_korder')
    return init_korder(g, cfg, params, tape)


def floyd_block(r: Tensor, layer: LayerParams, cfg: ModelConfig,
                tape=None) -> Tensor:
    h = norm(r, layer.norm1, tape)
    a = korder_pivotal_attention(h, layer.attn, cfg.combine, cfg.kernel,
                                 tape, tile=cfg.tile, workers=cfg.threads)
    r = add(r, a, tape)
    return add(r, ffn(norm(r, layer.norm2, tape), layer.ffn, tape), tape)


def model_forward(g: Graph, cfg: ModelConfig, params: ModelParams,
                  tape=None) -> Tensor:
    """Final relation tensor of ``g``.

    When the SuperNode is enabled it is appended as the last node, so the
    result has ``g.n + 1`` entries along every node axis.
    """
    _check_dims(g, cfg)
    if cfg.supernode and not g.supernode:
        x, e = _supernode_inputs(g, params, tape)
        gfeat = Tensor(g.graph_feats)
    else:
        x, e, gfeat = _graph_tensors(g)
    r = ffn(_tuple_inputs(x, e, gfeat, cfg.order, tape), params.init_mlp,
            tape)
    for layer in params.layers:
        r = floyd_block(r, layer, cfg, tape)
    if params.final_norm is not None:
        r = norm(r, params.final_norm, tape)
    return r


def readout_index(level, order, n, supernode):
    """Index into the final relation tensor selecting the readout slots of
    an ``n``-node graph (SuperNode at index ``n``)."""
    if level not in READOUTS:
        raise ConfigError('unknown readout level %r' % level)
    if level == 'edge':
        if order < 2:
            raise CapabilityError('edge readout needs order >= 2')
        if order > 2 and not supernode:
            raise SupernodeRequired('order %s edge readout pads tuples with '
                                    'the SuperNode' % order)
        return (slice(0, n), slice(0, n)) + (n,) * (order - 2)
    if not supernode:
        raise SupernodeRequired('%s readout reads the SuperNode slots'
                                % level)
    if level == 'graph':
        return (n,) * order
    return (slice(0, n),) + (n,) * (order - 1)


def readout(r: Tensor, level, head: LinearParams, n, supernode=True,
            tape=None) -> Tensor:
    """Decode ``graph`` (``(out_dim,)``), ``node`` (``(n, out_dim)``) or
    ``edge`` (``(n, n, out_dim)``) predictions.

    Raises:
        SupernodeRequired: a graph or node readout without the SuperNode
    """
    order = r.data.ndim - 1
    index = readout_index(level, order, n, supernode)
    return linear(take(r, index, tape), head, tape)


def predict(g: Graph, cfg: ModelConfig, params: ModelParams, tape=None,
            level=None) -> Tensor:
    """Forward pass followed by the configured readout"""
    r = model_forward(g, cfg, params, tape)
    n = g.n - 1 if g.supernode else g.n
    return readout(r, level or cfg.readout, params.head, n,
                   cfg.supernode or g.supernode, tape)
