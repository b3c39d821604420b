# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Verification workflows shared by the command line and the test suite"""

import logging

import numpy as np

from .attention import (AttentionParams, KOrderAttentionParams, combine,
                        korder_pivotal_attention, pivotal_attention_naive,
                        pivotal_attention_streamed, random_rotation,
                        rotation_compose_check)
from .graph import gen_random_graph
from .model import ModelConfig, init_params, predict
from .nn import (FFNParams, GradTape, LinearParams, NormParams, Tensor, dot,
                 ffn, gelu, grad_check, layer_norm, linear, place, rms_norm,
                 sigmoid, softmax, take)


log = logging.getLogger(__name__)

PRIMITIVE_TOL = 1e-6
MODEL_TOL = 1e-5


def _norm_params(d, kind, rng):
    p = NormParams.init(d, kind)
    p.gain.data = 1.0 + 0.5 * rng.standard_normal(d)
    p.offset.data = 0.5 * rng.standard_normal(d)
    return p


def _linear_named(p, prefix):
    return list(p.named_parameters(prefix))


def _attention_check(rng, n, d, heads, kind, kernel, order=2):
    r = Tensor(rng.standard_normal((n,) * order + (d,)))
    if order == 2:
        p = AttentionParams.init(d, heads, rng)
        named = list(p.named_parameters('attn'))
        if kernel == 'streamed':
            def run(tape):
                return pivotal_attention_streamed(r, p, kind, tape, tile=3)
        else:
            def run(tape):
                return pivotal_attention_naive(r, p, kind, tape)
    else:
        kp = KOrderAttentionParams.init(order, d, heads, rng)
        named = list(kp.named_parameters('attn'))

        def run(tape):
            return korder_pivotal_attention(r, kp, kind, 'naive', tape)
    w = rng.standard_normal(r.shape)
    return (lambda tape: dot(run(tape), w, tape)), [('r', r)] + named


def primitive_checks(rng):
    """``name -> (f, params)`` for every differentiable primitive"""
    checks = {}

    x = Tensor(rng.standard_normal((3, 4)))
    lin = LinearParams.init(4, 2, rng)
    w = rng.standard_normal((3, 2))
    checks['linear'] = (lambda tape: dot(linear(x, lin, tape), w, tape),
                        [('x', x)] + _linear_named(lin, 'p'))

    for name, fn, kind in (('layer_norm', layer_norm, 'layer'),
                           ('rms_norm', rms_norm, 'rms')):
        xn = Tensor(rng.standard_normal((3, 5)))
        pn = _norm_params(5, kind, rng)
        wn = rng.standard_normal((3, 5))
        checks[name] = (
            lambda tape, xn=xn, pn=pn, wn=wn, fn=fn:
            dot(fn(xn, pn, tape), wn, tape),
            [('x', xn)] + list(pn.named_parameters('p')))

    xg = Tensor(rng.standard_normal((4, 3)))
    wg = rng.standard_normal((4, 3))
    checks['gelu'] = (lambda tape: dot(gelu(xg, tape), wg, tape),
                      [('x', xg)])
    checks['sigmoid'] = (lambda tape: dot(sigmoid(xg, tape), wg, tape),
                         [('x', xg)])

    xs = Tensor(rng.standard_normal((3, 5)))
    ws = rng.standard_normal((3, 5))
    checks['softmax'] = (lambda tape: dot(softmax(xs, 1, tape), ws, tape),
                         [('x', xs)])

    xf = Tensor(rng.standard_normal((3, 4)))
    pf = FFNParams.init(4, 6, rng)
    wf = rng.standard_normal((3, 4))
    checks['ffn'] = (lambda tape: dot(ffn(xf, pf, tape), wf, tape),
                     [('x', xf)] + list(pf.named_parameters('p')))

    a = Tensor(rng.standard_normal((3, 4)))
    b = Tensor(rng.standard_normal((3, 4)))
    wc = rng.standard_normal((3, 4))
    for kind in ('additive', 'multiplicative'):
        checks['combine_%s' % kind] = (
            lambda tape, kind=kind: dot(combine(a, b, kind, tape), wc, tape),
            [('a', a), ('b', b)])

    base = Tensor(rng.standard_normal((4, 4, 3)))
    value = Tensor(rng.standard_normal(2))
    wp = rng.standard_normal((3, 4, 2))

    def place_take(tape):
        placed = place(base, (3, slice(0, 3), slice(0, 2)), value, tape)
        return dot(take(placed, (slice(1, 4), slice(None), slice(0, 2)),
                        tape), wp, tape)

    checks['place_take'] = (place_take, [('base', base), ('value', value)])

    for kind in ('additive', 'multiplicative'):
        for kernel in ('naive', 'streamed'):
            checks['attention_%s_%s' % (kernel, kind)] = _attention_check(
                rng, 4, 8, 2, kind, kernel)
    checks['attention_k1'] = _attention_check(rng, 5, 4, 2, 'additive',
                                              'naive', order=1)
    checks['attention_k3'] = _attention_check(rng, 3, 4, 2, 'additive',
                                              'naive', order=3)
    return checks


def model_check(rng, seed, order=2, n=4):
    """Scalar loss through a full 2-layer model"""
    cfg = ModelConfig(layers=2, rel_dim=16, heads=2, order=order,
                      readout='graph', seed=seed)
    params = init_params(cfg)
    g = gen_random_graph(n, 0.5, weight_range=(1, 3), seed=seed)
    w = rng.standard_normal(cfg.out_dim)

    def f(tape):
        return dot(predict(g, cfg, params, tape), w, tape)

    return f, params.named_parameters()


def gradcheck_suite(seed=0, eps=1e-5, tol=PRIMITIVE_TOL, model_tol=MODEL_TOL,
                    max_entries=None, model_entries=24):
    """Gradient check of every primitive and of the full model.

    Returns:
        list of ``(name, report)``
    """
    rng = np.random.default_rng(seed)
    results = []
    for name, (f, params) in primitive_checks(rng).items():
        results.append((name, grad_check(f, params, eps=eps, tol=tol,
                                         max_entries=max_entries,
                                         seed=seed)))
    f, params = model_check(rng, seed)
    results.append(('model', grad_check(f, params, eps=eps, tol=model_tol,
                                        max_entries=model_entries,
                                        seed=seed)))
    for name, report in results:
        log.debug('gradcheck %s: %.3e' % (name, report.max_error), extra={
            'floydnet_type': 'gradcheck_op',
            'floydnet_op': name,
            'floydnet_error': report.max_error,
        })
    return results


def _grads(named):
    return {name: (t.grad if t.grad is not None else np.zeros(t.shape))
            for name, t in named}


def kernel_equivalence(trials=100, seed=0, max_n=24, max_heads=4,
                       max_dr=32):
    """Compare the streamed and materializing kernels (forward output and
    every gradient) on random configurations.

    Returns:
        list of dict rows with the maximal absolute differences
    """
    rows = []
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(1, max_n + 1))
        heads = int(rng.choice([h for h in (1, 2, 4) if h <= max_heads]))
        head_dim = int(rng.integers(1, max_dr // heads + 1))
        d = heads * head_dim
        kind = str(rng.choice(['additive', 'multiplicative']))
        tile = int(rng.integers(1, 9))
        p = AttentionParams.init(d, heads, rng)
        r = Tensor(rng.standard_normal((n, n, d)))
        w = rng.standard_normal((n, n, d))
        named = [('r', r)] + list(p.named_parameters('attn'))

        outputs, grads = [], []
        for kernel in ('naive', 'streamed'):
            for _, t in named:
                t.zero_grad()
            tape = GradTape()
            if kernel == 'naive':
                out = pivotal_attention_naive(r, p, kind, tape)
            else:
                out = pivotal_attention_streamed(r, p, kind, tape, tile=tile)
            tape.backward(dot(out, w, tape))
            outputs.append(out.data)
            grads.append(_grads(named))
        fwd = float(np.max(np.abs(outputs[0] - outputs[1])))
        grad = max(float(np.max(np.abs(grads[0][k] - grads[1][k]),
                                initial=0.0)) for k in grads[0])
        rows.append({
            'trial': trial, 'N': n, 'd_r': d, 'heads': heads,
            'combine': kind, 'tile': tile,
            'forward_error': fwd, 'gradient_error': grad,
        })
    return rows


def rotation_trials(count=1000, seed=0):
    """Largest deviation of the combine-based composition from the matrix
    product over ``count`` random rotation pairs"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        t_a, t_b = random_rotation(rng), random_rotation(rng)
        err = np.max(np.abs(rotation_compose_check(t_a, t_b) - t_a @ t_b))
        worst = max(worst, float(err))
    return worst
