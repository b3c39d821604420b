# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

import json
import os
import tempfile
from unittest import TestCase

import numpy as np
import pytest

from floydnet.converters import (CHECKPOINT_MAGIC, prepare, read_checkpoint,
                                 read_csv, read_jsonl, read_manifest,
                                 write_checkpoint, write_csv, write_jsonl)
from floydnet.errors import CheckpointError
from floydnet.nn import Tensor


class TestPrepare(TestCase):

    def test_numpy_values(self):
        obj = {1: np.float64(0.5), 'a': (np.int64(3), np.bool_(True)),
               'arr': np.arange(3)}
        self.assertEqual(prepare(obj), {'1': 0.5, 'a': [3, True],
                                        'arr': [0, 1, 2]})
        json.dumps(prepare(obj))


@pytest.mark.fs
class TestFiles(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_jsonl(self):
        write_jsonl(self.path('x.jsonl'), {'seed': np.int64(2)},
                    [{'v': 1.5}, {'v': np.float64(2.0)}])
        header, records = read_jsonl(self.path('x.jsonl'))
        self.assertEqual(header, {'seed': 2})
        self.assertEqual(records, [{'v': 1.5}, {'v': 2.0}])

    def test_csv(self):
        write_csv(self.path('x.csv'), {'seed': 1}, ('a', 'b'),
                  [{'a': 1, 'b': 'x'}, {'a': 2, 'b': 'y'}])
        header, rows = read_csv(self.path('x.csv'))
        self.assertEqual(header, {'seed': 1})
        self.assertEqual(rows, [{'a': '1', 'b': 'x'}, {'a': '2', 'b': 'y'}])

    def test_checkpoint(self):
        named = [('w', Tensor(np.arange(6.0).reshape(2, 3))),
                 ('s', Tensor(np.float64(3.5)))]
        write_checkpoint(self.path('c'), named)
        with open(self.path('c'), 'rb') as f:
            self.assertEqual(f.readline().decode().strip(), CHECKPOINT_MAGIC)
        entries, buffer = read_manifest(self.path('c'))
        self.assertEqual(entries, [('w', (2, 3), 0, 6), ('s', (), 6, 1)])
        self.assertEqual(buffer.size, 7)
        target = [('w', Tensor(np.zeros((2, 3)))), ('s', Tensor(0.0))]
        read_checkpoint(self.path('c'), target)
        np.testing.assert_array_equal(target[0][1].data, named[0][1].data)
        self.assertEqual(target[1][1].data, 3.5)

    def test_checkpoint_errors(self):
        with self.assertRaises(CheckpointError):
            write_checkpoint(self.path('c'), [('a b', Tensor(np.zeros(1)))])
        write_checkpoint(self.path('c'), [('w', Tensor(np.zeros(2)))])
        with self.assertRaises(CheckpointError):
            read_checkpoint(self.path('c'), [('w', Tensor(np.zeros(3)))])
        with self.assertRaises(CheckpointError):
            read_checkpoint(self.path('c'), [('v', Tensor(np.zeros(2)))])
        with open(self.path('junk'), 'wb') as f:
            f.write(b'not a checkpoint\n')
        with self.assertRaises(CheckpointError):
            read_manifest(self.path('junk'))
