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

import math
import types

import numpy as np

from dsgda_tools import error
from dsgda_tools.lab import data
from dsgda_tools.lab import engine
from dsgda_tools.lab.problems import base as problems_base
from dsgda_tools.lab.problems import quadratic
from dsgda_tools.lab import stability
from dsgda_tools.lab import topology
from dsgda_tools.tests.unit import base


def _problem(m=3, coupling=0.5):
    domain = problems_base.DomainSpec(1, 1, 2.0, 2.0)
    return quadratic.QuadraticProblem(np.full((m, 1, 1), coupling), 1.0, 1.0,
                                      domain)


class CoupledRunTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        rng = np.random.default_rng(0)
        self.dataset = data.DistributedDataset(
            rng.normal(0.0, 0.3, (3, 8, 2)))
        self.neighbor, self.perturbation = data.make_neighbor(
            self.dataset, rng.normal(1.0, 0.3, (20, 2)), seed=1)
        self.cfg = engine.RunConfig(
            _problem(), self.dataset.shards,
            topology.build_mixing_matrix(topology.TopologyKind('ring', 3)),
            60, engine.Schedule.fixed(0.1), seed=5, record_every=1)

    def test_same_data(self):
        run = stability.coupled_run(self.cfg, self.dataset)
        self.assertArrayEqual(np.zeros(61), run.delta)
        self.assertEqual(0.0, run.final_delta_avg_iterate)
        self.assertIsNone(run.first_hit)

    def test_identical_until_first_hit(self):
        run = stability.coupled_run(self.cfg, self.neighbor,
                                    self.perturbation)
        hit = run.first_hit
        self.assertEqual(stability.first_hit_iteration(
            5, self.perturbation.positions, 60, 8), hit)
        self.assertIsNotNone(hit)
        self.assertArrayEqual(np.zeros(hit + 1), run.delta[:hit + 1])
        self.assertArrayEqual(np.zeros((hit + 1, 3)),
                              run.delta_agents[:hit + 1])
        self.assertGreater(run.delta_agents[hit + 1].max(), 0.0)
        self.assertEqual(5, run.seed)
        self.assertArrayEqual(np.arange(61), run.times)
        self.assertAlmostEqual(run.delta[-1], run.final_delta)

    def test_first_hit(self):
        positions = np.array([7, 7, 7])
        stream = engine.index_stream(5, 3, 60, 8)
        expected = next(t for t in range(60) if np.any(stream[t] == 7))
        self.assertEqual(expected,
                         stability.first_hit_iteration(5, positions, 60, 8))

    def test_first_hit_never(self):
        # no draw can reach a slot past the shard
        self.assertIsNone(stability.first_hit_iteration(5, [8, 8, 8], 60, 8))

    def test_mismatched(self):
        self.assertRaises(error.MismatchedShapes, stability.coupled_run,
                          self.cfg, np.zeros((3, 7, 2)))


class ArgumentStabilityTestCase(base.TestCase):

    @staticmethod
    def _run(final, average):
        return types.SimpleNamespace(final_delta=final,
                                     final_delta_avg_iterate=average)

    def test_mean_stderr(self):
        mean, stderr = stability.mean_stderr([1.0, 2.0, 3.0])
        self.assertAlmostEqual(2.0, mean)
        self.assertAlmostEqual(1.0 / math.sqrt(3.0), stderr)

    def test_too_few_seeds(self):
        self.assertRaises(error.TooFewSeeds, stability.mean_stderr, [1.0])
        self.assertRaises(error.TooFewSeeds, stability.argument_stability,
                          [self._run(1.0, 1.0)])

    def test_report(self):
        runs = [self._run(0.1, 0.3), self._run(0.3, 0.5)]
        report = stability.argument_stability(runs)
        self.assertAlmostEqual(0.2, report.epsilon)
        self.assertAlmostEqual(0.1, report.stderr)
        self.assertAlmostEqual(0.4, report.epsilon_arg_avg_iterate)
        self.assertEqual(2, report.seeds)
        self.assertIsNone(report.epsilon_weak)

        report = stability.argument_stability(runs, at='avg_iterate',
                                              epsilon_weak=-0.5)
        self.assertAlmostEqual(0.4, report.epsilon)
        self.assertEqual(0.0, report.epsilon_weak)
        self.assertAlmostEqual(0.4, report.to_dict()['epsilon'])

    def test_unknown_output(self):
        self.assertRaises(ValueError, stability.argument_stability,
                          [self._run(1.0, 1.0)] * 2, at='best')


class ProbeGridTestCase(base.TestCase):

    def test_inside_ball(self):
        grid = stability.probe_grid(3, 2.0, 100)
        self.assertEqual((100, 3), grid.shape)
        self.assertTrue(np.all(np.linalg.norm(grid, axis=1) <= 2.0))

    def test_prefix(self):
        self.assertArrayEqual(stability.probe_grid(2, 1.0, 10),
                              stability.probe_grid(2, 1.0, 200)[:10])

    def test_one_dimension(self):
        grid = stability.probe_grid(1, 0.5, 16)
        self.assertEqual((16, 1), grid.shape)
        self.assertTrue(np.all(np.abs(grid) <= 0.5))

    def test_empty(self):
        self.assertRaises(error.EmptyGrid, stability.probe_grid, 2, 1.0, 0)


class WeakStabilityTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        rng = np.random.default_rng(3)
        self.dataset = data.DistributedDataset(
            rng.normal(0.0, 0.3, (3, 8, 2)))
        self.cfg = engine.RunConfig(
            _problem(), self.dataset.shards,
            topology.build_mixing_matrix(topology.TopologyKind('full', 3)),
            30, engine.Schedule.fixed(0.1), seed=0)
        self.pool = rng.normal(0.0, 0.3, (3, 5, 2))

    def test_identical_outputs(self):
        runs = [stability.coupled_run(self.cfg.replace(seed=seed),
                                      self.dataset) for seed in range(2)]
        self.assertEqual(0.0, stability.weak_stability_estimate(
            runs, 16, self.pool))

    def test_perturbed(self):
        neighbor, _ = data.make_neighbor(self.dataset,
                                         np.full((4, 2), 2.0), seed=0)
        run = stability.coupled_run(self.cfg, neighbor)
        self.assertGreater(run.final_delta, 0.0)
        # with zero samples the bilinear term dominates both suprema
        estimate = stability.weak_stability_estimate(
            [run], (16, 8), np.zeros((3, 5, 2)))
        self.assertTrue(math.isfinite(estimate))
        self.assertGreater(estimate, 0.0)

    def test_empty(self):
        run = stability.coupled_run(self.cfg, self.dataset)
        self.assertRaises(error.EmptyGrid, stability.weak_stability_estimate,
                          [run], 4, np.zeros((3, 0, 2)))
        self.assertRaises(error.EmptyGrid, stability.weak_stability_estimate,
                          [], 4, self.pool)


class RiskTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        domain = problems_base.DomainSpec(1, 1, 2.0, 2.0)
        self.problem = quadratic.QuadraticProblem([[[0.5]]], 1.0, 1.0,
                                                  domain)
        self.samples = np.array([[[0.2, 0.1]]])

    def test_dual_sup(self):
        y, value = stability.dual_sup(self.problem, [np.array([0.4])],
                                      self.samples)
        self.assertArrayAlmostEqual([0.3], y, atol=1e-7)
        self.assertAlmostEqual(0.205, value, places=7)

    def test_primal_inf(self):
        x, value = stability.primal_inf(self.problem, [np.array([0.3])],
                                        self.samples)
        self.assertArrayAlmostEqual([-0.35], x, atol=1e-7)
        self.assertAlmostEqual(-0.07625, value, places=7)

    def test_gap_at_saddle(self):
        saddle = self.problem.saddle_point(self.samples)
        weak, strong = stability.primal_dual_gap(self.problem, [saddle],
                                                 self.samples)
        self.assertAlmostEqual(0.0, weak, places=7)
        self.assertArrayAlmostEqual([0.0], strong, atol=1e-7)

    def test_weak_pd_risks(self):
        saddle = self.problem.saddle_point(self.samples)
        models = [saddle, (saddle[0] + 0.1, saddle[1] - 0.1)]
        population = np.array([[[0.0, 0.0]]])

        report = stability.weak_pd_risks(models, self.problem, self.samples,
                                         population)

        self.assertAlmostEqual(
            report.weak_pd_population - report.weak_pd_empirical,
            report.weak_gap)
        self.assertGreaterEqual(report.strong_pd_empirical, -1e-9)
        self.assertGreaterEqual(report.strong_pd_population, -1e-9)
        # Jensen: the weak risk never exceeds the strong one
        self.assertLessEqual(report.weak_pd_empirical,
                             report.strong_pd_empirical + 1e-9)
        self.assertEqual('closed-form', report.population_method)
        self.assertIn('strong_gap_stderr', report.to_dict())

    def test_no_models(self):
        self.assertRaises(error.TooFewSeeds, stability.weak_pd_risks, [],
                          self.problem, self.samples, self.samples)

    def test_inner_solve_fails(self):
        self.assertRaises(error.InnerSolveFailed, stability.dual_sup,
                          self.problem, [np.array([0.4])], self.samples,
                          max_iter=1, tol=0.0)


class GapTestCase(base.TestCase):

    def test_gen_gap(self):
        self.assertAlmostEqual(0.141421356,
                               stability.gen_gap_from_stability(0.1, 1.0,
                                                                None, None),
                               places=8)
        self.assertAlmostEqual(0.2, stability.gen_gap_from_stability(
            0.1, 1.0, 1.0, 1.0, mode='strong'))

    def test_gen_gap_errors(self):
        self.assertRaises(error.ZeroModulus, stability.gen_gap_from_stability,
                          0.1, 1.0, 1.0, 0.0, mode='strong')
        self.assertRaises(ValueError, stability.gen_gap_from_stability,
                          0.1, 1.0, 1.0, 1.0, mode='uniform')

    def test_escape_probability(self):
        self.assertAlmostEqual(1.5,
                               stability.escape_probability_bound(1, 2, 3))
        self.assertAlmostEqual(2.25,
                               stability.escape_probability_bound(2, 2, 3))

    def test_escape_bound(self):
        cfg = types.SimpleNamespace(m=2, n=10, T=10)
        runs = [types.SimpleNamespace(cfg=cfg, final_delta=0.5, first_hit=2),
                types.SimpleNamespace(cfg=cfg, final_delta=0.1,
                                      first_hit=None)]

        value, t0 = stability.weak_stability_escape_bound(runs, 1.0, 1.0,
                                                          t0_grid=[0, 5])
        self.assertEqual(0, t0)
        self.assertAlmostEqual(math.sqrt(2.0) * 0.3, value)

        # the first run leaves the clean set once t0 passes its hit
        value, t0 = stability.weak_stability_escape_bound(runs, 1.0, 0.001)
        self.assertEqual(3, t0)
        self.assertAlmostEqual(math.sqrt(2.0) * 0.1 + 0.0006, value)

    def test_escape_bound_no_runs(self):
        self.assertRaises(error.TooFewSeeds,
                          stability.weak_stability_escape_bound, [], 1.0, 1.0)

    def test_auc_generalization(self):
        problem = types.SimpleNamespace(
            auc_score=lambda x, rows: 0.9 if rows == 'train' else 0.7)
        result = stability.auc_generalization(problem, None, 'train', 'test')
        self.assertAlmostEqual(0.2, result['auc_gap'])
        self.assertEqual(0.9, result['train_auc'])
