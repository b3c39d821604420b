# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Flat ``key=value`` configuration.

Every key the model and the trainer understand is declared in
:data:`DEFAULT_CONFIG` as ``key -> (type, default)``. Files may set any
subset of them; unknown keys are rejected.
"""

import logging

from .errors import ConfigError


log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    # model
    'layers': ('int', 4),
    'rel_dim': ('int', 32),
    'heads': ('int', 4),
    'combine': ('str', 'additive'),
    'order': ('int', 2),
    'readout': ('str', 'edge'),
    'init_hidden': ('int', 0),  # 0: twice rel_dim
    'ffn_hidden': ('int', 0),  # 0: twice rel_dim
    'supernode': ('bool', True),
    'seed': ('int', 0),
    'node_dim': ('int', 1),
    'edge_dim': ('int', 0),
    'graph_dim': ('int', 0),
    'out_dim': ('int', 1),
    'norm': ('str', 'layer'),
    'kernel': ('str', 'naive'),
    'tile': ('int', 32),
    'threads': ('int', 1),
    'final_norm': ('bool', True),
    # training
    'task': ('str', 'shortest_path'),
    'loss': ('str', 'mae'),
    'lr': ('float', 1e-3),
    'betas': ('floats', (0.9, 0.95)),
    'weight_decay': ('float', 0.01),
    'epochs': ('int', 10),
    'steps_per_epoch': ('int', 50),
    'batch_size': ('int', 1),
    'accumulation': ('int', 8),
    'clip_norm': ('float', 1.0),
    'warmup_steps': ('int', 100),
    'plateau_patience': ('int', 10),
    'plateau_factor': ('float', 0.5),
    'min_lr': ('float', 1e-6),
    'min_nodes': ('int', 6),
    'max_nodes': ('int', 10),
    'eval_nodes': ('ints', (12,)),
    'eval_graphs': ('int', 16),
    'edge_prob': ('float', 0.3),
    'max_weight': ('int', 1),
    'cycle_len': ('int', 3),
    'prefetch': ('int', 0),
}

_BOOLS = {'true': True, 'yes': True, '1': True,
          'false': False, 'no': False, '0': False}


def cast_value(key, value):
    """Convert ``value`` (usually a string) to the declared type of
    ``key``."""
    if key not in DEFAULT_CONFIG:
        raise ConfigError('unknown configuration key %r' % key)
    kind, _ = DEFAULT_CONFIG[key]
    if not isinstance(value, str):
        if kind in ('floats', 'ints'):
            return tuple(float(v) if kind == 'floats' else int(v)
                         for v in value)
        return value
    text = value.strip()
    try:
        if kind == 'int':
            return int(text)
        if kind == 'float':
            return float(text)
        if kind == 'bool':
            return _BOOLS[text.lower()]
        if kind == 'floats':
            return tuple(float(v) for v in text.split(','))
        if kind == 'ints':
            return tuple(int(v) for v in text.split(','))
    except (KeyError, ValueError):
        raise ConfigError('invalid %s value %r for %s'
                          % (kind, value, key)) from None
    return text


def format_value(key, value):
    kind, _ = DEFAULT_CONFIG[key]
    if kind in ('floats', 'ints'):
        return ','.join(repr(v) for v in value)
    if kind == 'bool':
        return 'true' if value else 'false'
    if kind == 'float':
        return repr(float(value))
    return str(value)


def parse_config(lines):
    values = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError('line %s: expected key=value, got %r'
                              % (lineno, line))
        key, value = (part.strip() for part in line.split('=', 1))
        if key in values:
            raise ConfigError('line %s: %s set twice' % (lineno, key))
        values[key] = cast_value(key, value)
    return values


def read_config(path):
    """Values set by the file at ``path``, cast to their declared types.

    Raises:
        ConfigError: malformed line, unknown key or invalid value
    """
    with open(path) as f:
        values = parse_config(f)
    log.debug('read %s configuration keys from %s' % (len(values), path),
              extra={
                  'floydnet_type': 'config_read',
                  'floydnet_path': str(path),
              })
    return values


def write_config(path, values):
    """Write ``values`` as sorted ``key=value`` lines"""
    with open(path, 'w') as f:
        for key in sorted(values):
            f.write('%s=%s\n' % (key, format_value(key, values[key])))


def merge_config(*layers):
    """Defaults overridden by each mapping of ``layers`` in turn (``None``
    values are skipped)."""
    merged = {key: default for key, (_, default) in DEFAULT_CONFIG.items()}
    for layer in layers:
        for key, value in (layer or {}).items():
            if value is not None:
                merged[key] = cast_value(key, value)
    return merged
