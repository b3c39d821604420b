# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""On-disk formats: parameter checkpoints, JSON-lines records and CSV
tables.

A checkpoint is a text manifest followed by one flat little-endian float64
buffer::

    floydnet-checkpoint 1
    <name> <shape> <offset> <count>
    ...
    end
    <raw bytes>

``shape`` is a comma separated list of extents (``-`` for a scalar) and
``offset`` counts float64 values from the start of the buffer.
"""

import csv
import json
import logging

import numpy as np

from .errors import CheckpointError


log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = 'floydnet-checkpoint 1'
BUFFER_DTYPE = '<f8'


def _format_shape(shape):
    return ','.join(str(x) for x in shape) if shape else '-'


def _parse_shape(text):
    if text == '-':
        return ()
    return tuple(int(x) for x in text.split(','))


def write_checkpoint(path, named):
    """Save ``(name, Tensor)`` pairs to ``path``"""
    lines = [CHECKPOINT_MAGIC]
    buffers = []
    offset = 0
    for name, tensor in named:
        if ' ' in name:
            raise CheckpointError('parameter name %r contains a space' % name)
        lines.append('%s %s %d %d' % (name, _format_shape(tensor.shape),
                                      offset, tensor.size))
        buffers.append(np.ascontiguousarray(tensor.data, dtype=BUFFER_DTYPE)
                       .reshape(-1))
        offset += tensor.size
    lines.append('end')
    flat = np.concatenate(buffers) if buffers else np.zeros(0, BUFFER_DTYPE)
    with open(path, 'wb') as f:
        f.write(('\n'.join(lines) + '\n').encode('ascii'))
        f.write(flat.astype(BUFFER_DTYPE).tobytes())
    log.debug('wrote checkpoint %s (%s values)' % (path, offset), extra={
        'floydnet_type': 'checkpoint_write',
        'floydnet_path': str(path),
    })


def read_manifest(path):
    """Return ``(entries, buffer)`` where entries are
    ``(name, shape, offset, count)``.

    Raises:
        CheckpointError: malformed manifest or truncated buffer
    """
    with open(path, 'rb') as f:
        magic = f.readline().decode('ascii', 'replace').strip()
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError('%s is not a floydnet checkpoint' % path)
        entries = []
        while True:
            line = f.readline()
            if not line:
                raise CheckpointError('manifest of %s is not terminated'
                                      % path)
            line = line.decode('ascii', 'replace').strip()
            if line == 'end':
                break
            fields = line.split()
            if len(fields) != 4:
                raise CheckpointError('malformed manifest line %r' % line)
            try:
                entries.append((fields[0], _parse_shape(fields[1]),
                                int(fields[2]), int(fields[3])))
            except ValueError:
                raise CheckpointError('malformed manifest line %r'
                                      % line) from None
        raw = f.read()
    if len(raw) % 8:
        raise CheckpointError('buffer of %s is not a whole number of float64 '
                              'values' % path)
    buffer = np.frombuffer(raw, dtype=BUFFER_DTYPE)
    for name, shape, offset, count in entries:
        if int(np.prod(shape, dtype=np.int64)) != count \
                or offset + count > buffer.size:
            raise CheckpointError('entry %s does not fit the buffer' % name)
    return entries, buffer


def read_checkpoint(path, named):
    """Fill the ``(name, Tensor)`` pairs in place from ``path``.

    Raises:
        CheckpointError: names or shapes disagree with the checkpoint
    """
    entries, buffer = read_manifest(path)
    named = list(named)
    expected = [(name, tuple(t.shape)) for name, t in named]
    found = [(name, shape) for name, shape, _, _ in entries]
    if expected != found:
        missing = sorted(set(expected) ^ set(found))
        raise CheckpointError('checkpoint %s does not match the model '
                              'parameters: %s' % (path, missing[:5]))
    for (_, tensor), (_, shape, offset, count) in zip(named, entries):
        tensor.data = np.array(buffer[offset:offset + count],
                               dtype=np.float64).reshape(shape)
        tensor.zero_grad()


def prepare(obj):
    """Convert ``obj`` into JSON-serializable Python values"""
    if isinstance(obj, dict):
        return {str(k): prepare(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [prepare(item) for item in obj]
    elif isinstance(obj, np.ndarray):
        return prepare(obj.tolist())
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    else:
        return obj


def write_jsonl(path, header, records):
    """Write a header object line followed by one line per record"""
    with open(path, 'w') as f:
        f.write(json.dumps({'header': prepare(header)}, sort_keys=True)
                + '\n')
        for record in records:
            f.write(json.dumps(prepare(record), sort_keys=True) + '\n')


def read_jsonl(path):
    """Return ``(header, records)`` of a file written by
    :func:`write_jsonl`"""
    header = None
    records = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            if header is None and set(obj) == {'header'}:
                header = obj['header']
            else:
                records.append(obj)
    return header, records


def write_csv(path, header, columns, rows):
    """CSV table whose first line is a ``#`` comment holding ``header`` as
    JSON"""
    with open(path, 'w', newline='') as f:
        f.write('# %s\n' % json.dumps(prepare(header), sort_keys=True))
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(prepare(row))


def read_csv(path):
    with open(path, newline='') as f:
        first = f.readline()
        header = json.loads(first[1:]) if first.startswith('#') else None
        if header is None:
            f.seek(0)
        return header, list(csv.DictReader(f))
