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

import numpy as np

from dsgda_tools import error
from dsgda_tools.lab import constants
from dsgda_tools.lab.problems import base as problems_base
from dsgda_tools.lab.problems import quadratic
from dsgda_tools.tests.unit import base
from dsgda_tools.tests.unit.lab.problems import test_base


class QuadraticProblemTestCase(base.TestCase):

    def setUp(self):
        super().setUp()
        self.domain = problems_base.DomainSpec(1, 1, 2.0, 2.0)
        self.problem = quadratic.QuadraticProblem(
            [[[1.0]]], mu_x=2.0, mu_y=1.0, domain=self.domain)

    def test_family(self):
        self.assertEqual(constants.FAMILY_QUADRATIC, self.problem.family)
        self.assertEqual(constants.REGIME_SCSC, self.problem.regime)
        self.assertTrue(self.problem.convex)
        self.assertEqual(2, self.problem.sample_width)
        self.assertEqual(1, self.problem.m)

    def test_loss(self):
        self.assertAlmostEqual(
            1.5, self.problem.loss(0, [1.0], [1.0], [0.5, -0.5]))

    def test_grad(self):
        gx, gy = self.problem.grad(0, [1.0], [1.0], [0.5, -0.5])
        self.assertArrayAlmostEqual([3.5], gx)
        self.assertArrayAlmostEqual([-0.5], gy)

    def test_constants(self):
        # spectral norm of [[2, 1], [1, -1]]
        smoothness = (1.0 + math.sqrt(13.0)) / 2.0
        self.assertAlmostEqual(smoothness, self.problem.constants.L)
        self.assertAlmostEqual(smoothness * self.domain.radius,
                               self.problem.constants.G)
        self.assertEqual(2.0, self.problem.constants.mu_x)
        self.assertEqual(1.0, self.problem.constants.mu)

    def test_grad_matches_differences(self):
        domain = problems_base.DomainSpec(3, 2, 1.0, 1.0)
        problem = quadratic.QuadraticProblem.random(
            2, domain, mu_x=0.5, mu_y=1.5, coupling_scale=1.0, seed=3)
        rng = np.random.default_rng(0)
        x, y = rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 2)
        sample = rng.standard_normal(5)
        for agent in (0, 1):
            expected = test_base.numeric_grad(problem, agent, x, y, sample)
            observed = problem.grad(agent, x, y, sample)
            self.assertArrayAlmostEqual(expected[0], observed[0], atol=1e-6)
            self.assertArrayAlmostEqual(expected[1], observed[1], atol=1e-6)

    def test_random_coupling_scale(self):
        domain = problems_base.DomainSpec(3, 2, 1.0, 1.0)
        problem = quadratic.QuadraticProblem.random(
            5, domain, mu_x=2.0, mu_y=0.5, coupling_scale=0.3, seed=1)
        for a in problem.coupling:
            self.assertAlmostEqual(0.15, np.linalg.norm(a, 2))
        self.assertFalse(problem.coupling.flags.writeable)

    def test_saddle_point(self):
        problem = quadratic.QuadraticProblem(
            [[[1.0]]], mu_x=1.0, mu_y=1.0, domain=self.domain)
        x_star, y_star = problem.saddle_point([[[1.0, 0.0]]])
        self.assertArrayAlmostEqual([-0.5], x_star)
        self.assertArrayAlmostEqual([-0.5], y_star)

    def test_saddle_point_stationary(self):
        domain = problems_base.DomainSpec(2, 2, 5.0, 5.0)
        problem = quadratic.QuadraticProblem.random(3, domain, seed=2)
        samples = np.random.default_rng(2).normal(0.0, 0.3, (3, 6, 4))
        x_star, y_star = problem.saddle_point(samples)
        gx, gy = problem.empirical_grad(x_star, y_star, samples)
        self.assertArrayAlmostEqual(np.zeros(2), gx)
        self.assertArrayAlmostEqual(np.zeros(2), gy)

    def test_saddle_outside_domain(self):
        domain = problems_base.DomainSpec(1, 1, 0.4, 0.4)
        problem = quadratic.QuadraticProblem(
            [[[1.0]]], mu_x=1.0, mu_y=1.0, domain=domain)
        self.assertRaises(error.SaddleOutsideDomain, problem.saddle_point,
                          [[[1.0, 0.0]]])

    def test_invalid(self):
        self.assertRaises(error.ConfigInvalid, quadratic.QuadraticProblem,
                          [[[1.0]]], 0.0, 1.0, self.domain)
        self.assertRaises(error.ConfigInvalid, quadratic.QuadraticProblem,
                          [[1.0]], 1.0, 1.0, self.domain)
