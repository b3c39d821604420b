# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Pivotal attention.

For every target tuple ``e`` and every pivot node ``p`` the keys (and values)
of the ``k`` tuples obtained by substituting ``p`` at one position of ``e``
are merged with a combine operator, and ``e`` attends over ``p``. With
``k = 2`` and ``e = (i, k)`` the substituted tuples are ``(j, k)`` and
``(i, j)``: the pair ``(i, k)`` attends over every path ``i -> j -> k``.

Two kernels are provided. The materializing kernel builds the full
``N^(k+1)`` score tensor and works for every order. The streamed kernel
(order 2 only) sweeps pivots twice per tile of target pairs with an online
softmax and never holds more than ``O(N^2 d)`` values; its backward
recomputes the softmax statistics tile by tile.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import CapabilityError, RotationError, ShapeError
from .nn import LinearParams, Tensor, checked, linear, softmax_array


log = logging.getLogger(__name__)

COMBINES = ('additive', 'multiplicative')
KERNELS = ('naive', 'streamed')
ORDERS = (1, 2, 3)

DEFAULT_TILE = 32

# default refusal size of the materializing kernel, in score elements
MAX_NAIVE_ELEMENTS = 1 << 26


def check_combine(kind):
    if kind not in COMBINES:
        raise ShapeError('unknown combine operator %r' % kind)


def combine_arrays(parts, kind):
    out = parts[0]
    for part in parts[1:]:
        out = out + part if kind == 'additive' else out * part
    return out


def combine(a: Tensor, b: Tensor, kind='additive', tape=None) -> Tensor:
    """Elementwise sum or product of two equally shaped tensors"""
    check_combine(kind)
    if a.shape != b.shape:
        raise ShapeError('combine of shapes %s and %s' % (a.shape, b.shape))
    out = checked(combine_arrays([a.data, b.data], kind), 'combine')

    def backward(g):
        if kind == 'additive':
            return g, g
        return g * b.data, g * a.data

    if tape is not None:
        tape.record('combine', (a, b), out, backward)
    return out


# Parameters

@dataclass
class AttentionParams:
    """Projections of pairwise pivotal attention.

    ``left`` projections read the ``(i, j)`` segment of a path, ``right``
    ones the ``(j, k)`` segment.
    """

    q_proj: LinearParams
    k_proj_left: LinearParams
    k_proj_right: LinearParams
    v_proj_left: LinearParams
    v_proj_right: LinearParams
    out_proj: LinearParams
    heads: int

    @classmethod
    def init(cls, d_r, heads, rng):
        _check_heads(d_r, heads)
        projs = [LinearParams.init(d_r, d_r, rng) for _ in range(6)]
        return cls(*projs, heads=heads)

    @property
    def head_dim(self):
        return self.q_proj.d_out // self.heads

    def named_parameters(self, prefix):
        for name in ('q_proj', 'k_proj_left', 'k_proj_right',
                     'v_proj_left', 'v_proj_right', 'out_proj'):
            yield from getattr(self, name).named_parameters(
                '%s.%s' % (prefix, name))


@dataclass
class KOrderAttentionParams:
    """Projections of order-``k`` pivotal attention: one key and one value
    projection per tuple position."""

    order: int
    q_proj: LinearParams
    k_projs: List[LinearParams]
    v_projs: List[LinearParams]
    out_proj: LinearParams
    heads: int

    def __post_init__(self):
        if self.order not in ORDERS:
            raise CapabilityError('attention order must be one of %s, got %s'
                                  % (ORDERS, self.order))
        if len(self.k_projs) != self.order or len(self.v_projs) != self.order:
            raise ShapeError('order %s attention needs %s key and value '
                             'projections' % (self.order, self.order))
        _check_heads(self.q_proj.d_out, self.heads)

    @classmethod
    def init(cls, order, d_r, heads, rng):
        _check_heads(d_r, heads)
        q_proj = LinearParams.init(d_r, d_r, rng)
        k_projs = [LinearParams.init(d_r, d_r, rng) for _ in range(order)]
        v_projs = [LinearParams.init(d_r, d_r, rng) for _ in range(order)]
        out_proj = LinearParams.init(d_r, d_r, rng)
        return cls(order, q_proj, k_projs, v_projs, out_proj, heads)

    @classmethod
    def from_pairwise(cls, p: AttentionParams):
        """Order-2 parameters sharing the tensors of ``p``.

        Substituting the pivot at position 0 of ``(i, k)`` gives ``(j, k)``,
        the right segment; position 1 gives ``(i, j)``, the left one.
        """
        return cls(2, p.q_proj, [p.k_proj_right, p.k_proj_left],
                   [p.v_proj_right, p.v_proj_left], p.out_proj, p.heads)

    @property
    def head_dim(self):
        return self.q_proj.d_out // self.heads

    def named_parameters(self, prefix):
        yield from self.q_proj.named_parameters(prefix + '.q_proj')
        for t, proj in enumerate(self.k_projs):
            yield from proj.named_parameters('%s.k_proj%d' % (prefix, t))
        for t, proj in enumerate(self.v_projs):
            yield from proj.named_parameters('%s.v_proj%d' % (prefix, t))
        yield from self.out_proj.named_parameters(prefix + '.out_proj')


def _check_heads(d_r, heads):
    if heads < 1 or d_r % heads:
        raise ShapeError('relation width %s is not divisible by %s heads'
                         % (d_r, heads))


# Materializing kernel

def _split_heads(x, heads):
    return x.reshape(x.shape[:-1] + (heads, x.shape[-1] // heads))


def _substitute(x, t, order):
    """View of ``x`` (``order`` node axes, then channels) indexed as
    ``[e_0 .. e_{order-1}, p, ...]`` with ``e_t`` replaced by ``p``; the
    ``e_t`` axis has extent 1 and broadcasts."""
    return np.expand_dims(np.moveaxis(x, t, order - 1), t)


def _unsubstitute(g, t, order):
    """Adjoint of :func:`_substitute` for a fully broadcast gradient"""
    return np.moveaxis(g.sum(axis=t), order - 1, t)


def attend_over_pivots(q, keys, values, heads):
    """Softmax-weighted aggregation over an explicit pivot axis.

    Args:
        q: ``(..., d)`` queries
        keys: ``(..., P, d)`` combined keys, one row per pivot
        values: ``(..., P, d)`` combined values
        heads (int): number of heads ``d`` is split into

    Returns:
        numpy.ndarray: ``(..., d)``
    """
    q = np.asarray(q, dtype=np.float64)
    keys = _split_heads(np.asarray(keys, dtype=np.float64), heads)
    values = _split_heads(np.asarray(values, dtype=np.float64), heads)
    q = _split_heads(q, heads)
    axis = q.ndim - 2
    out, _ = _attend(q, keys, values, axis)
    return out.reshape(out.shape[:-2] + (-1,))


def _attend(q, kc, vc, axis):
    """``q`` is ``[..., h, dh]``; ``kc`` and ``vc`` are ``[..., P, h, dh]``
    with the pivot axis at ``axis``."""
    scale = math.sqrt(q.shape[-1])
    logits = (np.expand_dims(q, axis) * kc).sum(axis=-1) / scale
    w = softmax_array(logits, axis)
    out = (np.expand_dims(w, -1) * vc).sum(axis=axis)
    return out, w


def _naive_core(qs, ks, vs, combine_kind, order,
                max_elements=MAX_NAIVE_ELEMENTS):
    n = qs.shape[0]
    size = n ** (order + 1) * qs.shape[-2] * qs.shape[-1]
    if size > max_elements:
        raise CapabilityError('materializing %s attention scores exceeds '
                              'the %s element limit' % (size, max_elements))
    kparts = [_substitute(k, t, order) for t, k in enumerate(ks)]
    vparts = [_substitute(v, t, order) for t, v in enumerate(vs)]
    kc = combine_arrays(kparts, combine_kind)
    vc = combine_arrays(vparts, combine_kind)
    out, w = _attend(qs, kc, vc, order)

    def backward(go):
        scale = math.sqrt(qs.shape[-1])
        go_p = np.expand_dims(go, order)
        dvc = np.expand_dims(w, -1) * go_p
        dw = (go_p * vc).sum(axis=-1)
        ds = w * (dw - (w * dw).sum(axis=order, keepdims=True)) / scale
        dq = (np.expand_dims(ds, -1) * kc).sum(axis=order)
        dkc = np.expand_dims(ds, -1) * np.expand_dims(qs, order)
        dks = _combine_backward(dkc, kparts, combine_kind, order)
        dvs = _combine_backward(dvc, vparts, combine_kind, order)
        return dq, dks, dvs

    return out, backward


def _combine_backward(g, parts, kind, order):
    grads = []
    for t in range(len(parts)):
        gt = g
        if kind == 'multiplicative':
            for s, part in enumerate(parts):
                if s != t:
                    gt = gt * part
        gt = np.broadcast_to(gt, np.broadcast_shapes(
            g.shape, *(p.shape for p in parts)))
        grads.append(_unsubstitute(gt, t, order))
    return grads


# Streamed kernel

def _tiles(n, tile):
    blocks = [slice(a, min(a + tile, n)) for a in range(0, n, tile)]
    return [(bi, bk) for bi in blocks for bk in blocks]


def _pivot_terms(q, kl, kr, vl, vr, bi, bk, j, kind):
    kc = combine_arrays([kr[j, bk][None], kl[bi, j][:, None]], kind)
    vc = combine_arrays([vr[j, bk][None], vl[bi, j][:, None]], kind)
    s = (q[bi, bk] * kc).sum(axis=-1) / math.sqrt(q.shape[-1])
    return kc, vc, s


def _tile_stats(q, kl, kr, vl, vr, bi, bk, kind):
    """Running max and normalizer of the softmax over pivots"""
    n = q.shape[0]
    m = None
    norm = None
    for j in range(n):
        _, _, s = _pivot_terms(q, kl, kr, vl, vr, bi, bk, j, kind)
        if m is None:
            m, norm = s, np.ones_like(s)
            continue
        m_new = np.maximum(m, s)
        norm = norm * np.exp(m - m_new) + np.exp(s - m_new)
        m = m_new
    return m, norm


def _streamed_tile(out, q, kl, kr, vl, vr, bi, bk, kind):
    m, norm = _tile_stats(q, kl, kr, vl, vr, bi, bk, kind)
    acc = np.zeros(q[bi, bk].shape)
    for j in range(q.shape[0]):
        _, vc, s = _pivot_terms(q, kl, kr, vl, vr, bi, bk, j, kind)
        acc += (np.exp(s - m) / norm)[..., None] * vc
    out[bi, bk] = acc


def _streamed_core(qs, ks, vs, combine_kind, tile=DEFAULT_TILE, workers=1):
    # ks[0] indexes (j, k) pairs, ks[1] indexes (i, j) pairs
    kr, kl = ks
    vr, vl = vs
    n = qs.shape[0]
    tiles = _tiles(n, tile)
    out = np.zeros(qs.shape)
    if workers > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_streamed_tile, out, qs, kl, kr, vl,
                                       vr, bi, bk, combine_kind)
                       for bi, bk in tiles]
            for future in futures:
                future.result()
    else:
        for bi, bk in tiles:
            _streamed_tile(out, qs, kl, kr, vl, vr, bi, bk, combine_kind)

    def backward(go):
        scale = math.sqrt(qs.shape[-1])
        dq = np.zeros(qs.shape)
        dkl, dkr = np.zeros(kl.shape), np.zeros(kr.shape)
        dvl, dvr = np.zeros(vl.shape), np.zeros(vr.shape)
        for bi, bk in tiles:
            m, norm = _tile_stats(qs, kl, kr, vl, vr, bi, bk, combine_kind)
            go_t = go[bi, bk]
            q_t = qs[bi, bk]
            delta = (go_t * out[bi, bk]).sum(axis=-1)
            dq_t = np.zeros(q_t.shape)
            for j in range(n):
                kc, vc, s = _pivot_terms(qs, kl, kr, vl, vr, bi, bk, j,
                                         combine_kind)
                w = np.exp(s - m) / norm
                dw = (go_t * vc).sum(axis=-1)
                ds = (w * (dw - delta) / scale)[..., None]
                dq_t += ds * kc
                dkc = ds * q_t
                dvc = w[..., None] * go_t
                if combine_kind == 'multiplicative':
                    dkl[bi, j] += (dkc * kr[j, bk][None]).sum(axis=1)
                    dkr[j, bk] += (dkc * kl[bi, j][:, None]).sum(axis=0)
                    dvl[bi, j] += (dvc * vr[j, bk][None]).sum(axis=1)
                    dvr[j, bk] += (dvc * vl[bi, j][:, None]).sum(axis=0)
                else:
                    dkl[bi, j] += dkc.sum(axis=1)
                    dkr[j, bk] += dkc.sum(axis=0)
                    dvl[bi, j] += dvc.sum(axis=1)
                    dvr[j, bk] += dvc.sum(axis=0)
            dq[bi, bk] = dq_t
        return dq, [dkr, dkl], [dvr, dvl]

    return out, backward


# Recorded operation

def _pivot_core(q, keys, values, p, combine_kind, kernel, tape, tile,
                workers, max_elements):
    order = p.order
    heads = p.heads
    qs = _split_heads(q.data, heads)
    ks = [_split_heads(k.data, heads) for k in keys]
    vs = [_split_heads(v.data, heads) for v in values]
    if kernel == 'streamed':
        if order != 2:
            raise CapabilityError('the streamed kernel supports order 2 '
                                  'only, got %s' % order)
        out, core_backward = _streamed_core(qs, ks, vs, combine_kind,
                                            tile=tile, workers=workers)
    else:
        out, core_backward = _naive_core(qs, ks, vs, combine_kind, order,
                                          max_elements)
    out_t = checked(out.reshape(q.shape), 'pivotal_attention')

    def backward(g):
        dq, dks, dvs = core_backward(_split_heads(g, heads))
        return tuple([dq.reshape(q.shape)]
                     + [dk.reshape(q.shape) for dk in dks]
                     + [dv.reshape(q.shape) for dv in dvs])

    if tape is not None:
        tape.record('pivotal_attention_%s' % kernel,
                    [q] + list(keys) + list(values), out_t, backward)
    return out_t


def korder_pivotal_attention(r: Tensor, p: KOrderAttentionParams,
                             combine_kind='additive', kernel='naive',
                             tape=None, tile=DEFAULT_TILE, workers=1,
                             max_elements=MAX_NAIVE_ELEMENTS):
    """Order-``k`` pivotal attention over a relation tensor with ``k`` node
    axes of equal extent followed by one channel axis.

    The materializing kernel refuses inputs whose score tensor would hold
    more than ``max_elements`` values.

    Raises:
        ShapeError: ``r`` is not a well-formed order-``k`` tensor
        CapabilityError: the requested kernel cannot run this size or order
    """
    check_combine(combine_kind)
    if kernel not in KERNELS:
        raise ShapeError('unknown attention kernel %r' % kernel)
    shape = r.shape
    if len(shape) != p.order + 1 or len(set(shape[:-1])) != 1:
        raise ShapeError('order %s attention got a relation tensor of shape '
                         '%s' % (p.order, shape))
    if shape[0] < 1:
        raise ShapeError('pivotal attention needs at least one node')
    q = linear(r, p.q_proj, tape)
    keys = [linear(r, proj, tape) for proj in p.k_projs]
    values = [linear(r, proj, tape) for proj in p.v_projs]
    out = _pivot_core(q, keys, values, p, combine_kind, kernel, tape, tile,
                      workers, max_elements)
    return linear(out, p.out_proj, tape)


def pivotal_attention_naive(r: Tensor, p: AttentionParams,
                            combine_kind='additive', tape=None,
                            max_elements=MAX_NAIVE_ELEMENTS) -> Tensor:
    """Pairwise pivotal attention through the materializing kernel"""
    return korder_pivotal_attention(r, KOrderAttentionParams.from_pairwise(p),
                                    combine_kind, 'naive', tape,
                                    max_elements=max_elements)


def pivotal_attention_streamed(r: Tensor, p: AttentionParams,
                               combine_kind='additive', tape=None,
                               tile=DEFAULT_TILE, workers=1) -> Tensor:
    """Pairwise pivotal attention through the streamed kernel.

    Args:
        tile (int): side of the square tile of target pairs
        workers (int): threads sharing the forward tiles; the result does
          not depend on it
    """
    if tile < 1:
        raise ShapeError('tile size must be positive')
    return korder_pivotal_attention(r, KOrderAttentionParams.from_pairwise(p),
                                    combine_kind, 'streamed', tape,
                                    tile=tile, workers=workers)


# Rotation composition through a multiplicative combine

ROTATION_WIDTH = 27


def rotation_mixers():
    """The three fixed 0/1 matrices composing flattened 3x3 matrices.

    Returns:
        tuple: ``(m_a, m_b, m_c)``, each of shape ``(9, 27)``
    """
    m_a = np.zeros((9, 27))
    m_b = np.zeros((9, 27))
    m_c = np.zeros((9, 27))
    for i in range(9):
        m_a[i, 3 * i:3 * i + 3] = 1.0
        m_b[i, [i, i + 9, i + 18]] = 1.0
        a, s = divmod(i, 3)
        m_c[i, [9 * a + s, 9 * a + s + 3, 9 * a + s + 6]] = 1.0
    return m_a, m_b, m_c


def _check_rotation(t, name):
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (3, 3):
        raise RotationError('%s must be a 3x3 matrix, got shape %s'
                            % (name, t.shape))
    if not np.allclose(t @ t.T, np.eye(3), atol=1e-9) \
            or not abs(np.linalg.det(t) - 1.0) < 1e-9:
        raise RotationError('%s is not a rotation matrix' % name)
    return t


def _padded(t):
    x = np.zeros(ROTATION_WIDTH)
    x[:9] = t.reshape(-1)
    return Tensor(x)


def rotation_compose_check(t_a, t_b):
    """Compose two rotations with linear maps, a multiplicative combine and
    an output projection; the result equals ``t_a @ t_b``.

    Raises:
        RotationError: an input is not a 3x3 rotation matrix
    """
    t_a = _check_rotation(t_a, 't_a')
    t_b = _check_rotation(t_b, 't_b')
    m_a, m_b, m_c = rotation_mixers()

    def proj(block):
        w = np.zeros((ROTATION_WIDTH, ROTATION_WIDTH))
        w[:9, :] = block
        return LinearParams(Tensor(w))

    left = linear(_padded(t_a), proj(m_a))
    right = linear(_padded(t_b), proj(m_b))
    mixed = combine(left, right, 'multiplicative')
    w_out = np.zeros((ROTATION_WIDTH, ROTATION_WIDTH))
    w_out[:, :9] = m_c.T
    out = linear(mixed, LinearParams(Tensor(w_out)))
    return out.data[:9].reshape(3, 3)


def random_rotation(rng):
    """Uniformly random rotation (QR of a Gaussian matrix, sign-fixed)"""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
