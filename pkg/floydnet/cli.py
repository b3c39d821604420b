# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""The ``floydnet`` command.

Every subcommand writes its artifacts under ``--out`` with a header holding
the effective configuration and seed. Exit status is 0 when the run passes,
1 when a check fails or the run errors out, 2 on usage errors.
"""

import functools
import json
import logging
import os

import click
import numpy as np

from .attention import COMBINES, DEFAULT_TILE, KERNELS
from .bench import BENCH_COLUMNS, kernel_bench, memory_ratios
from .checks import (MODEL_TOL, PRIMITIVE_TOL, gradcheck_suite,
                     kernel_equivalence, rotation_trials)
from .config import merge_config, read_config, write_config
from .converters import prepare, write_csv, write_jsonl
from .errors import CheckFailed, ConfigError, FloydNetException
from .loader import FORMATS, load_graph
from .model import ModelConfig, ModelParams
from .oracles import CYCLE_LENGTHS, LEVELS, cycle_count_oracle, \
    floyd_warshall_oracle
from .tasks import TASKS, eval_set
from .train import TrainConfig, evaluate, sample_options, train_task
from .wl import (GOLDEN_PATH, SIGNATURE_DECIMALS, SUITE_MODEL,
                 compare_verdicts, read_golden, run_suite)


log = logging.getLogger(__name__)

CONTEXT_SETTINGS = dict(help_option_names=['-h', '--help'])
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')
# covers N=128 at d_r=64
BENCH_NAIVE_LIMIT = 1 << 28


def _int_list(ctx, param, value):
    if value is None or isinstance(value, tuple):
        return value
    try:
        return tuple(int(v) for v in value.split(','))
    except ValueError:
        raise click.BadParameter('expected comma separated integers, got %r'
                                 % value)


def common_options(f):
    """Options shared by every subcommand"""
    @click.option('--seed', type=int, default=None,
                  help='Random seed (default: config file, else 0)')
    @click.option('--out', type=click.Path(file_okay=False), default='.',
                  show_default=True, help='Directory receiving the outputs')
    @click.option('--threads', type=int, default=None,
                  help='Worker threads of the streamed kernel; 1 is '
                  'bitwise deterministic')
    @click.option('--config', 'config_file', type=click.Path(exists=True,
                                                             dir_okay=False),
                  default=None, help='key=value configuration file')
    @click.option('--log-level', type=click.Choice(LOG_LEVELS),
                  default='INFO', show_default=True)
    @functools.wraps(f)
    def wrapper(seed, out, threads, config_file, log_level, **kwargs):
        logging.basicConfig(
            level=getattr(logging, log_level),
            format='%(asctime)s %(process)d %(message)s'
        )
        try:
            base = (read_config(config_file) if config_file else None,
                    {'seed': seed, 'threads': threads})
            os.makedirs(out, exist_ok=True)
            return f(base, out, **kwargs)
        except ConfigError as e:
            raise click.UsageError(str(e))
        except CheckFailed as e:
            click.echo('FAILED: %s' % e, err=True)
            raise click.exceptions.Exit(1)
        except FloydNetException as e:
            log.error('%s: %s' % (type(e).__name__, e), extra={
                'floydnet_type': 'cli_error',
                'floydnet_error': type(e).__name__,
            })
            click.echo('error: %s' % e, err=True)
            raise click.exceptions.Exit(1)
    return wrapper


def _header(command, values, **extra):
    header = {'command': command, 'seed': values['seed'],
              'config': values}
    header.update(extra)
    return header


@click.group(context_settings=CONTEXT_SETTINGS)
def cli():
    """FloydNet: pivotal attention on relation tensors, its verification
    workflows and its training loop."""
    pass


@cli.command(context_settings=CONTEXT_SETTINGS)
@common_options
@click.option('--tol', type=float, default=PRIMITIVE_TOL, show_default=True,
              help='Relative tolerance of the primitives')
@click.option('--model-tol', type=float, default=MODEL_TOL,
              show_default=True, help='Relative tolerance of the full model')
@click.option('--eps', type=float, default=1e-5, show_default=True,
              help='Finite-difference step')
@click.option('--trials', type=int, default=1, show_default=True,
              help='Number of consecutive seeds to check')
@click.option('--max-entries', type=int, default=None,
              help='Sample at most this many entries per primitive '
              'parameter')
def gradcheck(base, out, tol, model_tol, eps, trials, max_entries):
    """Compare analytic and finite-difference gradients of every
    primitive and of a 2-layer model."""
    values = merge_config(*base)
    rows = []
    worst = {}
    for trial in range(trials):
        seed = values['seed'] + trial
        for name, report in gradcheck_suite(seed, eps, tol, model_tol,
                                            max_entries):
            rows.append({'seed': seed, 'op': name,
                         'max_error': report.max_error, 'tol': report.tol,
                         'passed': report.passed})
            for message in report.diagnostics:
                log.warning('%s: %s' % (name, message))
            error, passed = worst.get(name, (0.0, True))
            worst[name] = (max(error, report.max_error),
                           passed and report.passed)
    write_csv(os.path.join(out, 'gradcheck.csv'),
              _header('gradcheck', values, tol=tol, model_tol=model_tol,
                      eps=eps, trials=trials),
              ('seed', 'op', 'max_error', 'tol', 'passed'), rows)
    for name, (error, passed) in worst.items():
        click.echo('%-28s %.3e %s' % (name, error, 'ok' if passed else 'FAIL'))
    failed = sorted(name for name, (_, passed) in worst.items() if not passed)
    if failed:
        raise CheckFailed('gradient check failed for %s' % ', '.join(failed))


@cli.command('kernel-equiv', context_settings=CONTEXT_SETTINGS)
@common_options
@click.option('--trials', type=int, default=100, show_default=True)
@click.option('--max-n', type=int, default=24, show_default=True)
@click.option('--tol', type=float, default=1e-10, show_default=True,
              help='Forward max-abs tolerance')
@click.option('--grad-tol', type=float, default=1e-9, show_default=True,
              help='Gradient max-abs tolerance')
def kernel_equiv(base, out, trials, max_n, tol, grad_tol):
    """Check that the streamed kernel reproduces the materializing one."""
    values = merge_config(*base)
    rows = kernel_equivalence(trials, values['seed'], max_n)
    columns = ('trial', 'N', 'd_r', 'heads', 'combine', 'tile',
               'forward_error', 'gradient_error')
    write_csv(os.path.join(out, 'kernel_equiv.csv'),
              _header('kernel-equiv', values, trials=trials, max_n=max_n,
                      tol=tol, grad_tol=grad_tol),
              columns, rows)
    fwd = max((row['forward_error'] for row in rows), default=0.0)
    grad = max((row['gradient_error'] for row in rows), default=0.0)
    click.echo('%s trials: forward %.3e, gradient %.3e' % (len(rows), fwd,
                                                           grad))
    if fwd > tol or grad > grad_tol:
        raise CheckFailed('kernels disagree beyond tolerance')


@cli.command('kernel-bench', context_settings=CONTEXT_SETTINGS)
@common_options
@click.option('--n', 'ns', callback=_int_list, default='32,64,128',
              show_default=True, help='Comma separated node counts')
@click.option('--dr', type=int, default=64, show_default=True)
@click.option('--heads', type=int, default=4, show_default=True)
@click.option('--impl', 'impls', type=click.Choice(KERNELS), multiple=True,
              default=KERNELS, show_default=True)
@click.option('--combine', 'combine_kind', type=click.Choice(COMBINES),
              default='additive', show_default=True)
@click.option('--tile', type=int, default=DEFAULT_TILE, show_default=True)
@click.option('--naive-limit', type=int, default=BENCH_NAIVE_LIMIT,
              show_default=True, help='Largest score tensor, in elements, '
              'the materializing kernel is run on')
@click.option('--check-ratio', is_flag=True, default=False,
              help='Fail unless peak memory grows as expected when N '
              'doubles')
def kernel_bench_command(base, out, ns, dr, heads, impls, combine_kind,
                         tile, naive_limit, check_ratio):
    """Wall time and peak allocation of the attention kernels."""
    values = merge_config(*base)
    rows = kernel_bench(ns, dr, heads, impls, values['seed'], combine_kind,
                        tile, values['threads'], naive_limit)
    write_csv(os.path.join(out, 'bench.csv'),
              _header('kernel-bench', values, ns=ns, d_r=dr, heads=heads,
                      combine=combine_kind, tile=tile,
                      naive_limit=naive_limit),
              BENCH_COLUMNS, rows)
    for row in rows:
        click.echo('%-9s N=%-5s %10.1f ms %12s bytes'
                   % (row['impl'], row['N'], row['wall_ms'],
                      row['peak_bytes']))
    ratios = memory_ratios(rows)
    for impl, small, large, ratio, ok in ratios:
        click.echo('%-9s peak(%s)/peak(%s) = %.2f' % (impl, large, small,
                                                      ratio))
    if check_ratio:
        bad = [r for r in ratios if not r[4]]
        if bad or not ratios:
            detail = ', '.join('%s %.2f' % (r[0], r[3]) for r in bad)
            raise CheckFailed('peak memory ratios out of bounds: %s'
                              % (detail or 'no doubling sizes'))


@cli.command(context_settings=CONTEXT_SETTINGS)
@common_options
@click.option('--k', 'order', type=click.IntRange(1, 3), default=2,
              show_default=True, help='Highest order to run')
@click.option('--seeds', type=int, default=1, show_default=True,
              help='Model seeds per pair')
@click.option('--golden', type=click.Path(exists=True, dir_okay=False),
              default=GOLDEN_PATH, help='JSON-lines verdicts to compare with '
              '(default: the shipped suite verdicts)')
@click.option('--no-model', is_flag=True, default=False,
              help='Only run the color refinement oracles')
@click.option('--layers', type=int, default=None,
              help='Model layers (default: %s)' % SUITE_MODEL['layers'])
@click.option('--decimals', type=int, default=SIGNATURE_DECIMALS,
              show_default=True, help='Rounding of model signatures')
def expressivity(base, out, order, seeds, golden, no_model, layers,
                 decimals):
    """Distinguishing power of the refinement oracles and of the model on
    the curated pair suite."""
    values = merge_config(*base)
    schemes = ['1-WL'] + ['%d-FWL' % k for k in range(2, order + 1)]
    if order >= 2 and not no_model:
        schemes.append('model-k%d' % order)
    overrides = {}
    if layers is not None:
        overrides['layers'] = layers
    seed_list = tuple(range(values['seed'], values['seed'] + seeds))
    verdicts = run_suite(schemes, seed_list, q=decimals, **overrides)
    write_jsonl(os.path.join(out, 'expressivity.jsonl'),
                _header('expressivity', values, schemes=schemes,
                        seeds=seed_list, decimals=decimals,
                        model=dict(SUITE_MODEL, **overrides)),
                [v.to_record() for v in verdicts])
    expected = read_golden(golden)
    mismatches = compare_verdicts(verdicts, expected)
    click.echo('%s verdicts, %s mismatches' % (len(verdicts),
                                               len(mismatches)))
    for pair_id, scheme, found, wanted in mismatches:
        click.echo('  %s under %s: got %s, expected %s'
                   % (pair_id, scheme, found, wanted))
    if mismatches:
        raise CheckFailed('verdicts differ from the reference')


@cli.command('rotation-check', context_settings=CONTEXT_SETTINGS)
@common_options
@click.option('--trials', type=int, default=1000, show_default=True)
@click.option('--tol', type=float, default=1e-12, show_default=True)
def rotation_check(base, out, trials, tol):
    """Compose random 3-D rotations through the multiplicative combine."""
    values = merge_config(*base)
    worst = rotation_trials(trials, values['seed'])
    write_jsonl(os.path.join(out, 'rotation.jsonl'),
                _header('rotation-check', values, trials=trials, tol=tol),
                [{'trials': trials, 'max_error': worst}])
    click.echo('%s trials: max error %.3e' % (trials, worst))
    if worst > tol:
        raise CheckFailed('rotation composition error %.3e above %.1e'
                          % (worst, tol))


def _overrides(**kwargs):
    return {key: value for key, value in kwargs.items() if value is not None}


@cli.command(context_settings=CONTEXT_SETTINGS)
@common_options
@click.option('--task', type=click.Choice(sorted(TASKS)), default=None)
@click.option('--epochs', type=int, default=None)
@click.option('--steps', type=int, default=None,
              help='Optimizer steps per epoch')
@click.option('--layers', type=int, default=None)
@click.option('--rel-dim', type=int, default=None)
@click.option('--heads', type=int, default=None)
@click.option('--order', type=click.IntRange(1, 3), default=None)
@click.option('--kernel', type=click.Choice(KERNELS), default=None)
@click.option('--combine', type=click.Choice(COMBINES), default=None)
@click.option('--lr', type=float, default=None)
@click.option('--target-mae', type=float, default=None,
              help='Fail unless the final held-out MAE is at most this')
def train(base, out, task, epochs, steps, layers, rel_dim, heads, order,
          kernel, combine, lr, target_mae):
    """Train on a synthetic task; writes model.conf, model.ckpt and
    train.jsonl."""
    values = merge_config(*base, _overrides(
        task=task, epochs=epochs, steps_per_epoch=steps, layers=layers,
        rel_dim=rel_dim, heads=heads, order=order, kernel=kernel,
        combine=combine, lr=lr))
    model_cfg = ModelConfig.from_dict(values)
    cfg = TrainConfig.from_dict(values)
    write_config(os.path.join(out, 'model.conf'), values)
    run = train_task(cfg.task, model_cfg, cfg, out_dir=out)
    click.echo('%s: eval MAE %.5f -> %.5f in %.1f s'
               % (cfg.task, run.initial_mae, run.final_mae, run.wall_time))
    if target_mae is not None and run.final_mae > target_mae:
        raise CheckFailed('final MAE %.5f above target %.5f'
                          % (run.final_mae, target_mae))


@cli.command('eval', context_settings=CONTEXT_SETTINGS)
@common_options
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option('--model-config', type=click.Path(exists=True,
                                                dir_okay=False),
              required=True, help='model.conf written by train')
@click.option('--task', type=click.Choice(sorted(TASKS)), default=None)
@click.option('--nodes', callback=_int_list, default=None,
              help='Comma separated held-out sizes')
@click.option('--graphs', type=int, default=None,
              help='Held-out graphs per size')
@click.option('--target-mae', type=float, default=None)
def eval_command(base, out, checkpoint, model_config, task, nodes,
                 graphs, target_mae):
    """Held-out MAE of a trained checkpoint."""
    # flags, then --config, then the saved model configuration
    values = merge_config(read_config(model_config), *base, _overrides(
        task=task, eval_nodes=nodes, eval_graphs=graphs))
    model_cfg = ModelConfig.from_dict(values)
    cfg = TrainConfig.from_dict(values)
    params = ModelParams.load(checkpoint, model_cfg)
    kwargs = sample_options(cfg, model_cfg)
    records = []
    for n in cfg.eval_nodes:
        samples = eval_set(cfg.task, (n,), cfg.eval_graphs, cfg.seed,
                           **kwargs)
        records.append({'N': n, 'graphs': len(samples),
                        'eval_mae': evaluate(model_cfg, params, samples)})
        click.echo('N=%-4s MAE %.5f' % (n, records[-1]['eval_mae']))
    write_jsonl(os.path.join(out, 'eval.jsonl'),
                _header('eval', values, checkpoint=checkpoint), records)
    overall = float(np.mean([r['eval_mae'] for r in records]))
    if target_mae is not None and overall > target_mae:
        raise CheckFailed('MAE %.5f above target %.5f'
                          % (overall, target_mae))


@cli.command(context_settings=CONTEXT_SETTINGS)
@common_options
@click.argument('graph_file', metavar='GRAPH',
                type=click.Path(exists=True, dir_okay=False))
@click.option('--format', 'graph_format', type=click.Choice(FORMATS),
              default='edge-list', show_default=True)
@click.option('--directed', is_flag=True, default=False)
@click.option('--kind', type=click.Choice(['floyd-warshall',
                                           'cycle-count']),
              default='floyd-warshall', show_default=True)
@click.option('--cycle-len', type=click.Choice([str(c)
                                                for c in CYCLE_LENGTHS]),
              default='3', show_default=True)
@click.option('--level', type=click.Choice(LEVELS), default='graph',
              show_default=True, help='Cycle count level')
def oracle(base, out, graph_file, graph_format, directed, kind,
           cycle_len, level):
    """Run a brute-force oracle on GRAPH and print the result as JSON;
    unreachable pairs are null."""
    values = merge_config(*base)
    g = load_graph(graph_file, graph_format, directed)
    if kind == 'floyd-warshall':
        dist = floyd_warshall_oracle(g)
        result = [[d if np.isfinite(d) else None for d in row]
                  for row in dist.tolist()]
    else:
        result = cycle_count_oracle(g, int(cycle_len), level)
    header = _header('oracle', values, graph=graph_file, kind=kind,
                     format=graph_format, directed=directed)
    if kind == 'cycle-count':
        header.update(cycle_len=int(cycle_len), level=level)
    click.echo(json.dumps({'header': prepare(header),
                           'result': prepare(result)}, sort_keys=True))


def main():
    return cli(auto_envvar_prefix=None)


if __name__ == '__main__':
    main()
