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

import configparser
import os

import fixtures

from dsgda_tools import error
from dsgda_tools.lab import config
from dsgda_tools.tests.unit import base

EXPERIMENT = """
[problem]
family = "quadratic"
C_x = 3

[data]
m = 9
n = 20

[topology]
variant = "grid"

[schedule]
kind = "decaying"
c = 0.5

[sweep]
n = [10, 20]
topology = ["ring", "full"]
"""


class ConfigTestCase(base.TestCase):

    def _write(self, text, name='experiment.toml'):
        tempdir = self.useFixture(fixtures.TempDir()).path
        path = os.path.join(tempdir, name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_defaults(self):
        self.assertEqual(config.ExperimentConfig(), config.load_config())

    def test_loads(self):
        cfg = config.loads(EXPERIMENT)
        self.assertEqual(3.0, cfg.problem.C_x)
        self.assertIsInstance(cfg.problem.C_x, float)
        self.assertEqual(9, cfg.data.m)
        self.assertEqual('grid', cfg.topology.variant)
        self.assertEqual('decaying', cfg.schedule.kind)
        self.assertEqual(0.5, cfg.schedule.c)
        self.assertEqual((10, 20), cfg.sweep.n)
        self.assertEqual(('topology', 'n'), cfg.sweep.axes)
        # untouched sections keep their defaults
        self.assertEqual(config.RunSection(), cfg.run)

    def test_dumps_loads(self):
        cfg = config.loads(EXPERIMENT)
        self.assertEqual(cfg, config.loads(config.dumps(cfg)))

    def test_to_dict_skips_unset(self):
        document = config.ExperimentConfig().to_dict()
        self.assertNotIn('eta_y', document['schedule'])
        self.assertNotIn('path', document['data'])
        self.assertEqual([], document['sweep']['eta'])

    def test_unknown_key(self):
        e = self.assertRaises(error.ConfigInvalid, config.loads,
                              '[data]\nshards = 3\n')
        self.assertEqual('data.shards', e.key)
        self.assertEqual(error.EXIT_CONFIG, e.code)

    def test_unknown_section(self):
        e = self.assertRaises(error.ConfigInvalid, config.loads,
                              '[solver]\nkind = "adam"\n')
        self.assertEqual('solver', e.key)

    def test_wrong_type(self):
        e = self.assertRaises(error.ConfigInvalid, config.loads,
                              '[data]\nm = "four"\n')
        self.assertEqual('data.m', e.key)

    def test_bool_is_not_int(self):
        self.assertRaises(error.ConfigInvalid, config.loads,
                          '[run]\nT = true\n')

    def test_float_is_not_int(self):
        self.assertRaises(error.ConfigInvalid, config.loads,
                          '[run]\nT = 10.5\n')

    def test_invalid_value(self):
        for text, key in (('[data]\nm = 0\n', 'data.m'),
                          ('[schedule]\nc = 1.5\n', 'schedule.c'),
                          ('[schedule]\neta_x = -1.0\n', 'schedule.eta_x'),
                          ('[problem]\nfamily = "bilinear"\n',
                           'problem.family'),
                          ('[topology]\nvariant = "torus"\n',
                           'topology.variant'),
                          ('[sweep]\nm = [0]\n', 'sweep.m'),
                          ('[output]\nformat = "xml"\n', 'output.format'),
                          ('[run]\nat = "best"\n', 'run.at')):
            e = self.assertRaises(error.ConfigInvalid, config.loads, text)
            self.assertEqual(key, e.key)

    def test_load_file(self):
        path = self._write(EXPERIMENT)
        cfg = config.load_config(path)
        self.assertEqual(path, cfg.path)
        self.assertEqual(9, cfg.data.m)

    def test_load_file_error_names_path(self):
        path = self._write('[data]\nm = -3\n')
        e = self.assertRaises(error.ConfigInvalid, config.load_config, path)
        self.assertEqual(path, e.path)
        self.assertEqual('data.m', e.key)
        self.assertIn(path, str(e))

    def test_malformed(self):
        path = self._write('[data\nm = 3\n')
        e = self.assertRaises(error.ConfigInvalid, config.load_config, path)
        self.assertEqual(path, e.path)

    def test_missing(self):
        self.assertRaises(error.ConfigInvalid, config.load_config,
                          '/nonexistent/experiment.toml')

    def test_env(self):
        path = self._write(EXPERIMENT)
        self.useFixture(fixtures.EnvironmentVariable(config.CONFIG_ENV, path))
        self.assertEqual(9, config.load_config().data.m)

    def test_workers_env(self):
        self.useFixture(fixtures.EnvironmentVariable(config.WORKERS_ENV, '4'))
        self.assertEqual(4, config.load_config().run.workers)

    def test_workers_env_invalid(self):
        self.useFixture(fixtures.EnvironmentVariable(config.WORKERS_ENV,
                                                     'many'))
        self.assertRaises(error.ConfigInvalid, config.load_config)

    def test_presets(self):
        self.assertEqual(['auc_cc', 'ncnc_sine', 'scsc_quadratic'],
                         config.list_presets())
        for name in config.list_presets():
            cfg = config.load_config(name)
            self.assertTrue(cfg.path.endswith(name + '.toml'))

        cfg = config.load_config('scsc_quadratic.toml')
        self.assertEqual('ring', cfg.topology.variant)
        self.assertEqual(('eta', 'topology', 'n'), cfg.sweep.axes)

    def test_presets_packaged(self):
        setup_cfg = os.path.join(os.path.dirname(config.PRESETS_DIR),
                                 os.pardir, os.pardir, 'setup.cfg')
        if not os.path.isfile(setup_cfg):
            self.skipTest('not running from a source tree')

        parser = configparser.ConfigParser()
        parser.read(setup_cfg)
        package_data = dict(
            (part.strip() for part in line.split('=', 1))
            for line in parser['files']['package_data'].splitlines() if line)
        self.assertEqual('presets/*.toml', package_data['dsgda_tools.lab'])
        self.assertNotIn('options.package_data', parser)

    def test_override(self):
        cfg = config.ExperimentConfig().override('data', m=16)
        self.assertEqual(16, cfg.data.m)
        self.assertEqual(config.DataSection().n, cfg.data.n)
        self.assertRaises(error.ConfigInvalid,
                          config.ExperimentConfig().override, 'data', m=0)

    def test_with_workers(self):
        self.assertEqual(3,
                         config.ExperimentConfig().with_workers(3).run.workers)
