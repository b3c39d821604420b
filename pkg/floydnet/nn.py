# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Dense float64 tensors, a gradient tape, and the differentiable
primitives of the model with their hand-derived backward passes.

Every primitive takes an optional ``tape``. Without one it is a plain
forward computation; with one it records a node whose backward closure maps
the gradient of its output to the gradients of its inputs.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from .errors import MissingForwardRecord, NonFiniteError, ShapeError


log = logging.getLogger(__name__)

DTYPE = np.float64


class Tensor:
    """A float64 array, plus the gradient accumulated into it by
    :meth:`GradTape.backward`."""

    __slots__ = ('data', 'grad', 'name')

    def __init__(self, data, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None  # type: Optional[np.ndarray]
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return 'Tensor(%s, shape=%s)' % (self.name or '', self.shape)


def checked(data, op) -> Tensor:
    """Wrap the output of a primitive, refusing NaN and Inf"""
    data = np.asarray(data, dtype=DTYPE)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError('%s produced non-finite values' % op)
    return Tensor(data)


class TapeNode(NamedTuple):
    op: str
    inputs: Tuple[Optional[Tensor], ...]
    output: Tensor
    backward: Callable


class GradTape:
    """Ordered record of primitive applications.

    Nodes are appended as primitives run, so every node's inputs are either
    leaves or outputs of earlier nodes. A tape is meant to be consumed by a
    single :meth:`backward` call from a single thread.
    """

    def __init__(self):
        self.nodes = []  # type: List[TapeNode]
        self._produced = set()  # type: set
        self.consumed = False

    def record(self, op, inputs, output, backward):
        self.nodes.append(TapeNode(op, tuple(inputs), output, backward))
        self._produced.add(id(output))
        return output

    def produced(self, tensor: Tensor) -> bool:
        return id(tensor) in self._produced

    def backward(self, loss: Tensor, seed=None):
        """Propagate ``seed`` (default: ones) from ``loss`` to every tensor
        that contributed to it, accumulating into ``Tensor.grad``.

        Raises:
            MissingForwardRecord: ``loss`` was not produced on this tape
        """
        if not self.produced(loss):
            raise MissingForwardRecord('%r was not recorded on this tape'
                                       % loss)
        if self.consumed:
            raise MissingForwardRecord('tape already consumed by a backward '
                                       'pass')
        self.consumed = True
        if seed is None:
            seed = np.ones_like(loss.data)
        seed = np.broadcast_to(np.asarray(seed, dtype=DTYPE), loss.shape)
        loss.grad = np.array(seed) if loss.grad is None else loss.grad + seed
        for node in reversed(self.nodes):
            gout = node.output.grad
            if gout is None:
                continue
            grads = node.backward(gout)
            for tensor, grad in zip(node.inputs, grads):
                if tensor is None or grad is None:
                    continue
                if grad.shape != tensor.shape:
                    raise ShapeError('%s backward produced a %s gradient for '
                                     'a %s input' % (node.op, grad.shape,
                                                     tensor.shape))
                if tensor.grad is None:
                    tensor.grad = np.array(grad, dtype=DTYPE)
                else:
                    tensor.grad = tensor.grad + grad


def _record(tape, op, inputs, output, backward):
    if tape is not None:
        tape.record(op, inputs, output, backward)
    return output


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Parameters

@dataclass
class LinearParams:
    weight: Tensor
    bias: Optional[Tensor] = None

    @classmethod
    def init(cls, d_in, d_out, rng, bias=True):
        """Uniform in ``±1/sqrt(d_in)`` (weights and bias)"""
        bound = 1.0 / math.sqrt(d_in) if d_in else 1.0
        weight = Tensor(rng.uniform(-bound, bound, size=(d_in, d_out)))
        b = Tensor(rng.uniform(-bound, bound, size=d_out)) if bias else None
        return cls(weight, b)

    @property
    def d_in(self):
        return self.weight.shape[0]

    @property
    def d_out(self):
        return self.weight.shape[1]

    def named_parameters(self, prefix):
        yield prefix + '.weight', self.weight
        if self.bias is not None:
            yield prefix + '.bias', self.bias


@dataclass
class NormParams:
    gain: Tensor
    offset: Tensor
    eps: float = 1e-5
    kind: str = 'layer'

    def __post_init__(self):
        if not self.eps > 0:
            raise ShapeError('normalization epsilon must be positive')
        if self.kind not in ('layer', 'rms'):
            raise ShapeError('unknown normalization %r' % self.kind)

    @classmethod
    def init(cls, d, kind='layer', eps=1e-5):
        return cls(Tensor(np.ones(d)), Tensor(np.zeros(d)), eps, kind)

    def named_parameters(self, prefix):
        yield prefix + '.gain', self.gain
        yield prefix + '.offset', self.offset


@dataclass
class FFNParams:
    fc1: LinearParams
    fc2: LinearParams

    @classmethod
    def init(cls, d_in, hidden, rng, d_out=None):
        if hidden < 1:
            raise ShapeError('hidden dimension must be at least 1')
        return cls(LinearParams.init(d_in, hidden, rng),
                   LinearParams.init(hidden, d_out or d_in, rng))

    def named_parameters(self, prefix):
        yield from self.fc1.named_parameters(prefix + '.fc1')
        yield from self.fc2.named_parameters(prefix + '.fc2')


# Primitives

def linear(x: Tensor, p: LinearParams, tape=None) -> Tensor:
    """Affine map along the last axis: ``x @ W + b``"""
    if x.shape[-1] != p.d_in:
        raise ShapeError('linear expects last extent %s, got shape %s'
                         % (p.d_in, x.shape))
    out = x.data @ p.weight.data
    if p.bias is not None:
        out = out + p.bias.data
    out = checked(out, 'linear')

    def backward(g):
        flat_x = x.data.reshape(-1, p.d_in)
        flat_g = g.reshape(-1, p.d_out)
        gx = g @ p.weight.data.T
        gw = flat_x.T @ flat_g
        gb = flat_g.sum(axis=0) if p.bias is not None else None
        return gx, gw, gb

    return _record(tape, 'linear', (x, p.weight, p.bias), out, backward)


def layer_norm(x: Tensor, p: NormParams, tape=None) -> Tensor:
    """Zero-mean unit-variance transform of the last axis, then
    ``gain * xhat + offset``"""
    data = x.data
    centered = data - data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + p.eps)
    xhat = centered * inv
    out = checked(xhat * p.gain.data + p.offset.data, 'layer_norm')

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gxhat = g * p.gain.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _record(tape, 'layer_norm', (x, p.gain, p.offset), out, backward)


def rms_norm(x: Tensor, p: NormParams, tape=None) -> Tensor:
    """``gain * x / rms(x) + offset`` along the last axis"""
    data = x.data
    inv = 1.0 / np.sqrt((data ** 2).mean(axis=-1, keepdims=True) + p.eps)
    xhat = data * inv
    out = checked(xhat * p.gain.data + p.offset.data, 'rms_norm')

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gxhat = g * p.gain.data
        gx = inv * (gxhat - xhat * (gxhat * xhat).mean(axis=-1,
                                                       keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _record(tape, 'rms_norm', (x, p.gain, p.offset), out, backward)


def norm(x: Tensor, p: NormParams, tape=None) -> Tensor:
    if p.kind == 'rms':
        return rms_norm(x, p, tape)
    return layer_norm(x, p, tape)


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor, tape=None) -> Tensor:
    """Exact (erf-based) GELU"""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = checked(x.data * cdf, 'gelu')

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data ** 2)
        return (g * (cdf + x.data * pdf),)

    return _record(tape, 'gelu', (x,), out, backward)


def softmax_array(data, axis):
    shifted = data - data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis=-1, tape=None) -> Tensor:
    """Max-shifted softmax along ``axis``"""
    y = softmax_array(x.data, axis)
    out = checked(y, 'softmax')

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(tape, 'softmax', (x,), out, backward)


def sigmoid(x: Tensor, tape=None) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    out = checked(y, 'sigmoid')
    return _record(tape, 'sigmoid', (x,), out,
                   lambda g: (g * y * (1.0 - y),))


def ffn(x: Tensor, p: FFNParams, tape=None) -> Tensor:
    """linear -> GELU -> linear"""
    return linear(gelu(linear(x, p.fc1, tape), tape), p.fc2, tape)


def add(a: Tensor, b: Tensor, tape=None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError('add of shapes %s and %s' % (a.shape, b.shape))
    out = checked(a.data + b.data, 'add')
    return _record(tape, 'add', (a, b), out, lambda g: (g, g))


def mul(a: Tensor, b: Tensor, tape=None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError('mul of shapes %s and %s' % (a.shape, b.shape))
    out = checked(a.data * b.data, 'mul')
    return _record(tape, 'mul', (a, b), out,
                   lambda g: (g * b.data, g * a.data))


def reduce_sum(x: Tensor, tape=None) -> Tensor:
    out = checked(np.sum(x.data).reshape(()), 'reduce_sum')
    return _record(tape, 'reduce_sum', (x,), out,
                   lambda g: (np.broadcast_to(g, x.shape),))


def dot(x: Tensor, weights, tape=None) -> Tensor:
    """Scalar ``sum(x * weights)`` against a constant array"""
    weights = np.asarray(weights, dtype=DTYPE)
    if weights.shape != x.shape:
        raise ShapeError('dot of shapes %s and %s' % (x.shape, weights.shape))
    out = checked(np.sum(x.data * weights).reshape(()), 'dot')
    return _record(tape, 'dot', (x,), out, lambda g: (g * weights,))


def take(x: Tensor, index, tape=None) -> Tensor:
    """``x[index]``; the backward scatters into a zero array"""
    out = checked(np.array(x.data[index]), 'take')

    def backward(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, index, g)
        return (gx,)

    return _record(tape, 'take', (x,), out, backward)


def place(base: Tensor, index, value: Tensor, tape=None) -> Tensor:
    """Copy of ``base`` with ``base[index]`` overwritten by ``value``
    (broadcast to the indexed region)."""
    data = np.array(base.data)
    data[index] = value.data
    out = checked(data, 'place')

    def backward(g):
        gbase = np.array(g)
        gbase[index] = 0.0
        return gbase, unbroadcast(np.asarray(g[index]), value.shape)

    return _record(tape, 'place', (base, value), out, backward)


# Gradient checking

@dataclass
class GradCheckReport:
    """Per-parameter maximal relative error between analytic and central
    finite-difference gradients."""

    tol: float
    errors: Dict[str, float] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.diagnostics and self.max_error <= self.tol


def _relative_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic), initial=0.0),
                np.max(np.abs(numeric), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def grad_check(f, params, eps=1e-5, tol=1e-6, max_entries=None, seed=0):
    """Compare the tape gradients of ``f`` with central differences.

    Args:
        f: callable taking a tape (or None) and returning a scalar Tensor
        params: mapping or sequence of ``(name, Tensor)`` to check
        eps (float): finite-difference step
        tol (float): pass threshold on the relative error
        max_entries (int): when set, check at most this many entries per
          parameter (sampled deterministically from ``seed``)

    Returns:
        GradCheckReport
    """
    named = list(params.items()) if isinstance(params, dict) else list(params)
    report = GradCheckReport(tol=tol)
    rng = np.random.default_rng(seed)

    for _, tensor in named:
        tensor.zero_grad()
    tape = GradTape()
    try:
        out = f(tape)
    except NonFiniteError as e:
        report.diagnostics.append('forward: %s' % e)
        return report
    if out.size != 1:
        raise ShapeError('grad_check needs a scalar function, got shape %s'
                         % (out.shape,))
    tape.backward(out)

    for name, tensor in named:
        analytic_full = (tensor.grad if tensor.grad is not None
                         else np.zeros(tensor.shape))
        flat = tensor.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, max_entries,
                                         replace=False))
        analytic = analytic_full.reshape(-1)[entries]
        numeric = np.zeros(len(entries))
        try:
            for pos, entry in enumerate(entries):
                orig = flat[entry]
                flat[entry] = orig + eps
                plus = f(None).item()
                flat[entry] = orig - eps
                minus = f(None).item()
                flat[entry] = orig
                numeric[pos] = (plus - minus) / (2 * eps)
        except NonFiniteError as e:
            flat[entry] = orig
            report.diagnostics.append('%s: %s' % (name, e))
            continue
        error = _relative_error(analytic, numeric)
        report.errors[name] = error
        log.debug('gradcheck %s: max relative error %.3e' % (name, error),
                  extra={
                      'floydnet_type': 'gradcheck_param',
                      'floydnet_param': name,
                      'floydnet_error': error,
                  })
    return report


def parameter_sizes(named: Sequence[Tuple[str, Tensor]]) -> int:
    return sum(t.size for _, t in named)
