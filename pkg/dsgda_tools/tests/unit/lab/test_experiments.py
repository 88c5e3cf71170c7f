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
from unittest import mock

import fixtures
import numpy as np

from dsgda_tools import error
from dsgda_tools.lab import data
from dsgda_tools.lab import experiments
from dsgda_tools.lab import stability
from dsgda_tools.lab import utils
from dsgda_tools.tests.unit import base


class LaboratoryTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        self.config = self.tiny_config()
        self.lab = experiments.Laboratory(self.config)

    def test_no_cache_by_default(self):
        self.assertIsNone(self.lab._results)

    def test_setup_memoized(self):
        first = self.lab.setup(self.config.problem, self.config.data)
        second = self.lab.setup(self.config.problem, self.config.data)
        self.assertIs(first, second)
        self.assertEqual((3, 8, 2), first.dataset.shards.shape)
        self.assertEqual((3, 1, 2), first.population.shape)
        # the neighbour differs in exactly one slot per agent
        differs = np.any(first.neighbor.shards != first.dataset.shards,
                         axis=2)
        self.assertArrayEqual([1, 1, 1], differs.sum(axis=1))

    def test_single_run(self):
        trajectory, rows = self.lab.single_run()
        self.assertEqual([0, 5, 10, 15, 20], [row['t'] for row in rows])
        self.assertEqual(set(experiments.TRAJECTORY_FIELDS), set(rows[0]))
        self.assertEqual(0.0, rows[0]['consensus'])
        self.assertEqual(0.0, rows[0]['avg_x_norm'])
        self.assertTrue(all(math.isfinite(row['dist_to_saddle'])
                            for row in rows))
        self.assertEqual(5, len(trajectory.times))

    def test_single_run_approaches_saddle(self):
        config = self.config.override('run', T=400, record_every=100)
        config = config.override('schedule', eta_x=0.1)
        _, rows = self.lab.single_run(config)
        self.assertLess(rows[-1]['dist_to_saddle'], rows[0]['dist_to_saddle'])

    def test_single_run_sine(self):
        config = self.config.override('problem', family='sine', C_x=1.0,
                                      C_y=1.0)
        _, rows = self.lab.single_run(config)
        self.assertTrue(all(math.isnan(row['dist_to_saddle'])
                            for row in rows))

    def test_topology_table(self):
        rows = self.lab.topology_table(('ring', 'full'), (4, 8), 1.0)
        self.assertEqual([('ring', 4), ('ring', 8), ('full', 4), ('full', 8)],
                         [(row['topology'], row['m']) for row in rows])
        self.assertAlmostEqual(1.0 / 3.0, rows[0]['lambda'])

    def test_bound_inputs(self):
        inputs = self.lab.bound_inputs()
        self.assertEqual((8, 3, 20), (inputs.n, inputs.m, inputs.T))
        self.assertEqual(0.0, inputs.lambda_)
        self.assertEqual(2.0, inputs.C_x)

    def test_decaying_schedule_defaults_mu(self):
        config = self.config.override('schedule', kind='decaying', c=0.5)
        setup = self.lab.setup(config.problem, config.data)
        schedule = self.lab.schedule(config, setup.problem)
        self.assertEqual(1.0, schedule.mu)
        self.assertEqual(0.5, schedule.c)

    def test_decaying_schedule_needs_mu(self):
        config = self.config.override('problem', family='sine', C_x=1.0,
                                      C_y=1.0)
        config = config.override('schedule', kind='decaying')
        setup = self.lab.setup(config.problem, config.data)
        e = self.assertRaises(error.ConfigInvalid, self.lab.schedule, config,
                              setup.problem)
        self.assertEqual('schedule.mu', e.key)


class StabilityStudyTestCase(base.TestCase):

    def test_quadratic(self):
        config = self.tiny_config()
        result = experiments.Laboratory(config).stability_study()

        self.assertEqual([0, 1, 2], [run.seed for run in result.runs])
        self.assertEqual(3, result.report.seeds)
        self.assertGreaterEqual(result.report.epsilon, 0.0)
        self.assertIsNone(result.report.epsilon_weak)
        self.assertTrue(result.step_condition)
        self.assertIsNotNone(result.risks)
        self.assertEqual(15, len(list(result.stability_rows())))
        self.assertEqual(
            ['scsc_stability_general', 'scsc_stability_fixed',
             'scsc_optimization_error', 'population_risk_scsc_fixed'],
            [report.name for report in result.bounds])
        # measured stability stays below the fixed-rate bound
        self.assertLess(result.report.epsilon,
                        result.bound('scsc_stability_fixed').value)

        summary = result.summary()
        self.assertEqual(3, len(summary['first_hits']))
        self.assertIn('risks', summary)
        self.assertEqual(config.to_dict(), summary['config'])

    def test_stability_shrinks_with_sample_size(self):
        epsilons = []
        for n in (8, 64):
            config = self.tiny_config(
                data={'n': n}, schedule={'eta_x': 0.05},
                run={'T': 200, 'seeds': 4, 'record_every': 50})
            result = experiments.Laboratory(config).stability_study()
            epsilons.append(result.report.epsilon)

        self.assertGreater(epsilons[0], 0.0)
        self.assertLess(epsilons[1], epsilons[0])

    def test_weak_gap_within_stability(self):
        config = self.tiny_config(
            schedule={'eta_x': 0.05},
            run={'T': 400, 'seeds': 5, 'record_every': 100})
        result = experiments.Laboratory(config).stability_study()

        G = result.runs[0].cfg.problem.constants.G
        report = result.report
        self.assertGreater(report.epsilon, 0.0)
        slack = 3.0 * math.hypot(math.sqrt(2.0) * G * report.stderr,
                                 result.risks.strong_gap_stderr)
        self.assertLessEqual(
            result.risks.weak_gap,
            stability.gen_gap_from_stability(report.epsilon, G, None, None)
            + slack)

    def test_seed_offset(self):
        config = self.tiny_config(run={'seed': 10, 'seeds': 2})
        result = experiments.Laboratory(config).stability_study()
        self.assertEqual([10, 11], [run.seed for run in result.runs])

    def test_workers_do_not_change_results(self):
        config = self.tiny_config()
        serial = experiments.Laboratory(config).stability_study()
        threaded = experiments.Laboratory(
            config.with_workers(3)).stability_study()
        self.assertEqual(serial.report, threaded.report)

    def test_single_topology_runs_apart(self):
        config = self.tiny_config(topology={'variant': 'single'})
        result = experiments.Laboratory(config).stability_study()
        self.assertEqual(1.0, result.lambda_)
        self.assertTrue(result.bound('scsc_stability_fixed').divergent)

        def reject(constant):
            raise ValueError(constant)

        summary = json.loads(utils.render_json(result.summary()),
                             parse_constant=reject)
        values = {bound['name']: bound['value']
                  for bound in summary['bounds']}
        self.assertEqual('inf', values['scsc_optimization_error'])

    def test_resample(self):
        config = self.tiny_config(data={'resample': True})
        lab = experiments.Laboratory(config)
        result = lab.stability_study()
        self.assertIsNone(result.risks)
        self.assertEqual(3, len(lab._cache['Laboratory.setup']))

    def test_sine(self):
        config = self.tiny_config(problem={'family': 'sine', 'C_x': 1.0,
                                           'C_y': 1.0},
                                  run={'probe_points': 8})
        result = experiments.Laboratory(config).stability_study()
        self.assertIsNotNone(result.report.epsilon_weak)
        self.assertGreaterEqual(result.report.epsilon_weak, 0.0)
        value, t0 = result.escape_bound
        self.assertTrue(math.isfinite(value))
        self.assertIn(t0, range(0, 21))
        self.assertEqual(['ncnc_weak_stability'],
                         [report.name for report in result.bounds])
        self.assertIsNone(result.risks)

    def test_auc(self):
        config = self.tiny_config(problem={'family': 'auc', 'C_x': 1.0,
                                           'C_y': 1.0},
                                  data={'m': 2, 'n': 20, 'n_features': 3})
        result = experiments.Laboratory(config).stability_study()
        self.assertEqual({'train_auc', 'test_auc', 'auc_gap'},
                         set(result.auc))
        self.assertTrue(0.0 <= result.auc['test_auc'] <= 1.0)
        self.assertEqual(['cc_stability', 'cc_optimization_error',
                          'population_risk_cc_fixed'],
                         [report.name for report in result.bounds])

    def test_auc_libsvm(self):
        rng = np.random.default_rng(0)
        records = [data.LabeledSample(
            float(rng.choice([-1, 1])),
            {k + 1: float(v) for k, v in enumerate(rng.normal(size=3))})
            for _ in range(60)]
        path = os.path.join(self.useFixture(fixtures.TempDir()).path,
                            'train.libsvm')
        utils.write_text(path, data.serialize_libsvm(records))

        config = self.tiny_config(problem={'family': 'auc'},
                                  data={'m': 2, 'n': 10, 'path': path})
        lab = experiments.Laboratory(config)
        setup = lab.setup(config.problem, config.data)

        self.assertEqual(path, setup.dataset.source)
        self.assertEqual((2, 10, 4), setup.dataset.shards.shape)
        self.assertEqual(48 + 12, len(setup.train) + len(setup.test))

    def test_result_cache(self):
        cache = {}
        config = self.tiny_config()
        first = experiments.Laboratory(config, cache=cache).stability_study()
        self.assertEqual(3, len(cache))

        with mock.patch.object(stability, 'coupled_run',
                               autospec=True) as mock_run:
            second = experiments.Laboratory(
                config.with_workers(2), cache=cache).stability_study()
            self.assertFalse(mock_run.called)

        self.assertEqual(first.report, second.report)

    def test_result_cache_resample_follows_data_seed(self):
        cache = {}
        first = self.tiny_config(data={'resample': True},
                                 run={'seed': 0, 'seeds': 2})
        second = first.override('run', seed=1)
        experiments.Laboratory(first, cache=cache).stability_study()
        self.assertEqual(2, len(cache))

        # seed 1 draws data seed 1 in the first study and 0 in the second
        shared = experiments.Laboratory(second, cache=cache).stability_study()
        self.assertEqual(4, len(cache))

        fresh = experiments.Laboratory(second).stability_study()
        self.assertEqual(fresh.report, shared.report)

    def test_persistent_cache(self):
        state_dir = self.useFixture(fixtures.TempDir()).path
        config = self.tiny_config(output={'state_dir': state_dir},
                                  run={'seeds': 2})
        first = experiments.Laboratory(config).stability_study()
        second = experiments.Laboratory(config).stability_study()
        self.assertEqual(first.report, second.report)
        self.assertTrue(os.path.exists(os.path.join(state_dir,
                                                    'studies.sqlite')))


class SweepTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        self.config = self.tiny_config(sweep={'topology': ('full', 'ring'),
                                              'n': (8, 16)},
                                       run={'seeds': 2})
        self.lab = experiments.Laboratory(self.config)

    def test_cells(self):
        cells = self.lab.cells()
        self.assertEqual([{'topology': 'full', 'n': 8},
                          {'topology': 'full', 'n': 16},
                          {'topology': 'ring', 'n': 8},
                          {'topology': 'ring', 'n': 16}],
                         [values for values, _ in cells])
        self.assertEqual('ring', cells[3][1].topology.variant)
        self.assertEqual(16, cells[3][1].data.n)

    def test_cells_eta(self):
        config = self.tiny_config(sweep={'eta': (0.01, 0.1)})
        cells = self.lab.cells(config)
        self.assertEqual(0.1, cells[1][1].schedule.eta_y)

    def test_eta_needs_fixed_schedule(self):
        config = self.tiny_config(sweep={'eta': (0.01,)},
                                  schedule={'kind': 'decaying'})
        self.assertRaises(error.ConfigInvalid, self.lab.cells, config)

    def test_no_axes(self):
        result = self.lab.sweep(self.tiny_config(run={'seeds': 2}))
        self.assertEqual(experiments.SWEEP_FIELDS, result.fieldnames)
        self.assertEqual(1, len(result.rows))

    def test_sweep(self):
        result = self.lab.sweep()
        self.assertEqual(('topology', 'n') + experiments.SWEEP_FIELDS,
                         result.fieldnames)
        self.assertEqual(4, len(result.rows))
        self.assertEqual(4, len(result.runtimes))
        for row, study in zip(result.rows, result.studies):
            self.assertEqual(2, row['seed_count'])
            self.assertEqual(study.report.epsilon, row['eps_mean'])
            G = study.runs[0].cfg.problem.constants.G
            self.assertAlmostEqual(math.sqrt(2.0) * G * row['eps_mean'],
                                   row['gap_weak'])
            self.assertLessEqual(row['bound_exact'],
                                 row['bound_fixed'] * (1 + 1e-12))
        header = result.render().splitlines()[0]
        self.assertEqual('topology,n,seed_count,eps_mean,eps_stderr,'
                         'bound_fixed,bound_exact,gap_weak', header)

    def test_sweep_dominated(self):
        directory = self.config.output.directory
        path = utils.write_text(os.path.join(directory, 'sweep.csv'),
                                self.lab.sweep().render())
        report = experiments.compare_report(path, path)
        self.assertEqual(4, len(report.rows))
        self.assertTrue(report.all_dominated)

    def test_failing_cell_named(self):
        config = self.tiny_config(sweep={'topology': ('full', 'grid')})
        e = self.assertRaises(error.InvalidSize, self.lab.sweep, config)
        self.assertIn("sweep cell {'topology': 'grid'}", str(e))


class CompareTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        self.tempdir = self.useFixture(fixtures.TempDir()).path

    def _csv(self, name, fieldnames, rows):
        return utils.write_csv(os.path.join(self.tempdir, name), fieldnames,
                               rows)

    def test_compare(self):
        measured = self._csv('stability.csv', ('n', 'eps_mean', 'eps_stderr'),
                             [{'n': 50, 'eps_mean': 0.1, 'eps_stderr': 0.01},
                              {'n': 100, 'eps_mean': 0.0, 'eps_stderr': 0.0}])
        bound = self._csv('bounds.csv', ('n', 'bound_fixed'),
                          [{'n': 100, 'bound_fixed': 0.5},
                           {'n': 50, 'bound_fixed': 0.12}])

        report = experiments.compare_report(measured, bound)

        self.assertEqual(('n',) + experiments.COMPARE_FIELDS,
                         report.fieldnames)
        first, second = report.rows
        self.assertEqual('50', first['n'])
        self.assertAlmostEqual(0.13, first['eps_upper'])
        self.assertAlmostEqual(1.2, first['ratio'])
        self.assertFalse(first['dominates'])
        self.assertEqual(math.inf, second['ratio'])
        self.assertTrue(second['dominates'])
        self.assertFalse(report.all_dominated)
        self.assertIn('n,eps_mean,eps_upper,bound,ratio,dominates',
                      report.render())

    def test_zero_bound(self):
        measured = self._csv('stability.csv', ('eps_mean', 'eps_stderr'),
                             [{'eps_mean': 0.0, 'eps_stderr': 0.0}])
        bound = self._csv('bounds.csv', ('bound_fixed',),
                          [{'bound_fixed': 0.0}])
        row = experiments.compare_report(measured, bound).rows[0]
        self.assertTrue(math.isnan(row['ratio']))
        self.assertTrue(row['dominates'])

    def test_bound_column(self):
        measured = self._csv('stability.csv', ('eps_mean', 'eps_stderr'),
                             [{'eps_mean': 0.1, 'eps_stderr': 0.0}])
        bound = self._csv('bounds.csv', ('bound_fixed', 'bound_exact'),
                          [{'bound_fixed': 0.05, 'bound_exact': 0.2}])
        report = experiments.compare_report(measured, bound,
                                            bound_column='bound_exact')
        self.assertTrue(report.all_dominated)

    def test_empty(self):
        measured = self._csv('stability.csv', ('n', 'eps_mean', 'eps_stderr'),
                             [])
        bound = self._csv('bounds.csv', ('bound_fixed',), [])
        self.assertEqual([], experiments.compare_report(measured, bound).rows)

    def test_axes_differ(self):
        measured = self._csv('stability.csv', ('n', 'eps_mean', 'eps_stderr'),
                             [{'n': 50, 'eps_mean': 0.1, 'eps_stderr': 0.0}])
        bound = self._csv('bounds.csv', ('m', 'bound_fixed'),
                          [{'m': 4, 'bound_fixed': 0.2}])
        self.assertRaises(error.SchemaMismatch, experiments.compare_report,
                          measured, bound)

    def test_unmatched_row(self):
        measured = self._csv('stability.csv', ('n', 'eps_mean', 'eps_stderr'),
                             [{'n': 50, 'eps_mean': 0.1, 'eps_stderr': 0.0}])
        bound = self._csv('bounds.csv', ('n', 'bound_fixed'),
                          [{'n': 100, 'bound_fixed': 0.2}])
        self.assertRaises(error.SchemaMismatch, experiments.compare_report,
                          measured, bound)

    def test_missing_column(self):
        measured = self._csv('stability.csv', ('n', 'eps_mean'),
                             [{'n': 50, 'eps_mean': 0.1}])
        bound = self._csv('bounds.csv', ('n', 'bound_fixed'),
                          [{'n': 50, 'bound_fixed': 0.2}])
        self.assertRaises(error.SchemaMismatch, experiments.compare_report,
                          measured, bound)
