# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Wall time and peak allocation of the attention kernels"""

import logging
import time
import tracemalloc

import numpy as np

from .attention import (AttentionParams, DEFAULT_TILE, MAX_NAIVE_ELEMENTS,
                        pivotal_attention_naive, pivotal_attention_streamed)
from .errors import CapabilityError, ShapeError
from .nn import Tensor


log = logging.getLogger(__name__)

# peak allocation ratio expected when N doubles
RATIO_BOUNDS = {
    'naive': (7.0, 9.0),
    'streamed': (3.5, 4.5),
}

BENCH_COLUMNS = ('impl', 'N', 'd_r', 'heads', 'wall_ms', 'peak_bytes',
                 'checksum')


def measure(fn):
    """Run ``fn()`` and return ``(result, wall_ms, peak_bytes)``; the peak
    counts only allocations made while ``fn`` runs."""
    tracing = tracemalloc.is_tracing()
    if not tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    start = time.perf_counter()
    try:
        result = fn()
        wall_ms = (time.perf_counter() - start) * 1000.0
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not tracing:
            tracemalloc.stop()
    return result, wall_ms, max(peak - base, 0)


def kernel_bench(ns, d_r, heads, impls=('naive', 'streamed'), seed=0,
                 combine_kind='additive', tile=DEFAULT_TILE, workers=1,
                 naive_limit=MAX_NAIVE_ELEMENTS):
    """Benchmark the attention kernels on random relation tensors.

    Args:
        ns: node counts to run
        d_r (int): relation width
        heads (int): attention heads
        impls: any of ``naive`` and ``streamed``
        naive_limit (int): score elements above which the materializing
          kernel is skipped

    Returns:
        list of dict rows keyed by :data:`BENCH_COLUMNS`
    """
    rows = []
    for impl in impls:
        if impl not in ('naive', 'streamed'):
            raise ShapeError('unknown kernel %r' % impl)
    for n in ns:
        rng = np.random.default_rng([seed, n])
        params = AttentionParams.init(d_r, heads, rng)
        r = Tensor(rng.standard_normal((n, n, d_r)))
        for impl in impls:
            if impl == 'naive':
                def run():
                    return pivotal_attention_naive(r, params, combine_kind,
                                                   max_elements=naive_limit)
            else:
                def run():
                    return pivotal_attention_streamed(
                        r, params, combine_kind, tile=tile, workers=workers)
            try:
                out, wall_ms, peak = measure(run)
            except CapabilityError as e:
                log.warning('skipping %s kernel at N=%s: %s' % (impl, n, e))
                continue
            row = {
                'impl': impl,
                'N': n,
                'd_r': d_r,
                'heads': heads,
                'wall_ms': wall_ms,
                'peak_bytes': peak,
                'checksum': float(out.data.sum()),
            }
            log.info('%s kernel, N=%s: %.1f ms, %s bytes peak'
                     % (impl, n, wall_ms, peak), extra={
                         'floydnet_type': 'kernel_bench',
                         'floydnet_impl': impl,
                         'floydnet_n': n,
                         'floydnet_peak_bytes': peak,
                     })
            rows.append(row)
    return rows


def memory_ratios(rows):
    """Peak allocation ratios between successive sizes of each kernel where
    the node count doubles.

    Returns:
        list of ``(impl, n, 2 * n, ratio, within_bounds)``
    """
    ratios = []
    for impl, (lo, hi) in sorted(RATIO_BOUNDS.items()):
        peaks = {row['N']: row['peak_bytes'] for row in rows
                 if row['impl'] == impl}
        for n in sorted(peaks):
            if 2 * n in peaks and peaks[n] > 0:
                ratio = peaks[2 * n] / peaks[n]
                ratios.append((impl, n, 2 * n, ratio, lo <= ratio <= hi))
    return ratios
