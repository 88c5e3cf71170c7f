#    Licensed under the Apache License, Version 2.0 (the "License"); you may
#    not use this file except in compliance with the License. You may obtain
#    a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#    Unless required by applicable law or agreed to in writing, software
#    distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
#    WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
#    License for the specific language governing permissions and limitations
#    under the License.

import json
import math
import os

import fixtures
import numpy as np

from dsgda_tools import error
from dsgda_tools.lab import utils
from dsgda_tools.tests.unit import base

FIELDS = ('name', 'count', 'value', 'flag')
ROWS = [{'name': 'ring', 'count': np.int64(8), 'value': 0.1, 'flag': True},
        {'name': 'full', 'count': 4, 'value': math.inf, 'flag': False}]


def _reject(constant):
    raise ValueError(f'{constant} is not JSON')


class FormatTestCase(base.TestCase):

    def test_format_value(self):
        self.assertEqual('true', utils.format_value(np.bool_(True)))
        self.assertEqual('8', utils.format_value(np.int64(8)))
        self.assertEqual('0.10000000000000001', utils.format_value(0.1))
        self.assertEqual('inf', utils.format_value(math.inf))
        self.assertEqual('nan', utils.format_value(np.float64('nan')))
        self.assertEqual('', utils.format_value(None))
        self.assertEqual('ring', utils.format_value('ring'))

    def test_render_csv(self):
        self.assertEqual('name,count,value,flag\n'
                         'ring,8,0.10000000000000001,true\n'
                         'full,4,inf,false\n',
                         utils.render_csv(FIELDS, ROWS))

    def test_render_markdown(self):
        lines = utils.render_markdown(FIELDS, ROWS).splitlines()
        self.assertEqual('| name | count | value | flag |', lines[0])
        self.assertEqual('|---|---|---|---|', lines[1])
        self.assertEqual('| full | 4 | inf | false |', lines[3])

    def test_render_json(self):
        text = utils.render(FIELDS, ROWS[:1], 'json')
        self.assertTrue(text.endswith('\n'))
        self.assertEqual([{'name': 'ring', 'count': 8, 'value': 0.1,
                           'flag': True}], json.loads(text))

    def test_render_json_arrays(self):
        text = utils.render_json({'x': np.array([1.0, 2.0])})
        self.assertEqual({'x': [1.0, 2.0]}, json.loads(text))
        self.assertRaises(TypeError, utils.render_json, {'x': object()})

    def test_render_json_non_finite(self):
        text = utils.render_json({'bound': math.inf,
                                  'stderr': np.float64('nan'),
                                  'terms': [1.0, -math.inf]})
        self.assertEqual({'bound': 'inf', 'stderr': 'nan',
                          'terms': [1.0, '-inf']},
                         json.loads(text, parse_constant=_reject))


class FilesTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        self.tempdir = self.useFixture(fixtures.TempDir()).path

    def test_write_read_csv(self):
        path = utils.write_csv(os.path.join(self.tempdir, 'a', 'b.csv'),
                               FIELDS, ROWS)
        fieldnames, rows = utils.read_csv(path, required=('name', 'flag'))
        self.assertEqual(list(FIELDS), fieldnames)
        self.assertEqual(['ring', 'full'], [row['name'] for row in rows])
        self.assertEqual('inf', rows[1]['value'])

    def test_read_csv_missing_column(self):
        path = utils.write_csv(os.path.join(self.tempdir, 'b.csv'), FIELDS,
                               ROWS)
        e = self.assertRaises(error.SchemaMismatch, utils.read_csv, path,
                              required=('eps_mean',))
        self.assertIn('eps_mean', str(e))

    def test_read_empty_csv(self):
        path = utils.write_text(os.path.join(self.tempdir, 'empty.csv'), '')
        self.assertEqual(([], []), utils.read_csv(path, required=('x',)))

    def test_write_json(self):
        path = utils.write_json(os.path.join(self.tempdir, 'c.json'),
                                {'b': 1, 'a': np.float64(0.5)})
        with open(path) as f:
            self.assertEqual('{\n  "a": 0.5,\n  "b": 1\n}\n', f.read())
