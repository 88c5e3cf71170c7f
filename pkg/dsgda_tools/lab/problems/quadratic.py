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

import numpy as np

from dsgda_tools.error import ConfigInvalid
from dsgda_tools.error import SaddleOutsideDomain
from dsgda_tools.lab import constants
from dsgda_tools.lab.problems import base


class QuadraticProblem(base.AbstractProblem):
    """Strongly-convex strongly-concave quadratic game.

    f_i(x, y; b, c) = mu_x/2 |x|^2 - mu_y/2 |y|^2 + x^T A_i y
                      + b^T x + c^T y

    A sample row is the concatenation [b, c].
    """

    family = constants.FAMILY_QUADRATIC
    regime = constants.REGIME_SCSC

    def __init__(self, coupling, mu_x, mu_y, domain, sample_bound=0.0):
        coupling = np.array(coupling, dtype=float)
        if coupling.ndim != 3 or coupling.shape[1:] != (domain.d_x,
                                                         domain.d_y):
            raise ConfigInvalid(
                f'coupling must have shape (m, {domain.d_x}, {domain.d_y}),'
                f' got {coupling.shape}', key='coupling')

        if mu_x <= 0 or mu_y <= 0:
            raise ConfigInvalid('quadratic moduli must be positive',
                                key='mu_x/mu_y')

        coupling.setflags(write=False)
        self._coupling = coupling
        self._mu_x = float(mu_x)
        self._mu_y = float(mu_y)
        self._sample_bound = float(sample_bound)

        smoothness = max(self._hessian_norm(a) for a in coupling)
        lipschitz = smoothness * domain.radius + self._sample_bound

        super().__init__(
            domain,
            base.ProblemConstants(G=lipschitz, L=smoothness,
                                  mu_x=self._mu_x, mu_y=self._mu_y),
            coupling.shape[0])

    @classmethod
    def random(cls, m, domain, mu_x=1.0, mu_y=1.0, coupling_scale=0.3,
               sample_bound=0.0, seed=0):
        """Instance with Gaussian couplings of bounded spectral norm.

        Every A_i is rescaled so that |A_i| <= coupling_scale * min(mu).
        """
        rng = np.random.default_rng(seed)
        coupling = rng.standard_normal((m, domain.d_x, domain.d_y))
        limit = coupling_scale * min(mu_x, mu_y)
        for a in coupling:
            norm = np.linalg.norm(a, 2)
            if norm > 0:
                a *= limit / norm

        return cls(coupling, mu_x, mu_y, domain, sample_bound=sample_bound)

    def _hessian_norm(self, a):
        d_x, d_y = a.shape
        hessian = np.block([[self._mu_x * np.eye(d_x), a],
                            [a.T, -self._mu_y * np.eye(d_y)]])
        return float(np.linalg.norm(hessian, 2))

    @property
    def coupling(self):
        return self._coupling

    @property
    def sample_width(self):
        return self.domain.d_x + self.domain.d_y

    def _split(self, samples):
        return samples[:, :self.domain.d_x], samples[:, self.domain.d_x:]

    def loss_batch(self, agents, X, Y, samples):
        b, c = self._split(samples)
        coupled = np.einsum('kd,kde,ke->k', X, self._coupling[agents], Y)
        return (0.5 * self._mu_x * np.sum(X * X, axis=1)
                - 0.5 * self._mu_y * np.sum(Y * Y, axis=1)
                + coupled + np.sum(b * X, axis=1) + np.sum(c * Y, axis=1))

    def grad_batch(self, agents, X, Y, samples):
        b, c = self._split(samples)
        coupling = self._coupling[agents]
        gx = self._mu_x * X + np.einsum('kde,ke->kd', coupling, Y) + b
        gy = -self._mu_y * Y + np.einsum('kde,kd->ke', coupling, X) + c
        return gx, gy

    def compress(self, samples):
        samples = np.asarray(samples, dtype=float)
        return samples.mean(axis=1, keepdims=True)

    def saddle_point(self, samples):
        """Closed-form saddle point of the empirical objective.

        Solves mu_x x + A y + b = 0 and -mu_y y + A^T x + c = 0 with the
        coupling and the sample means averaged over the agents.

        :param samples: shape (rows, n, sample_width) with row `i`
            bound to agent `i`; population means may be passed with n=1
        :returns: tuple of `numpy.ndarray` (x*, y*)
        :raises: `SaddleOutsideDomain` if the solution is not strictly
            inside both balls
        """
        samples = np.asarray(samples, dtype=float)
        rows = samples.shape[0]
        d_x, d_y = self.domain.d_x, self.domain.d_y

        coupling = self._coupling[:rows].mean(axis=0)
        b, c = self._split(samples.reshape(-1, samples.shape[-1]))
        # agents weigh equally, shards all hold n samples
        b_bar, c_bar = b.mean(axis=0), c.mean(axis=0)

        system = np.block([[self._mu_x * np.eye(d_x), coupling],
                           [coupling.T, -self._mu_y * np.eye(d_y)]])
        solution = np.linalg.solve(system, -np.concatenate([b_bar, c_bar]))
        x_star, y_star = solution[:d_x], solution[d_x:]

        if (np.linalg.norm(x_star) >= self.domain.C_x
                or np.linalg.norm(y_star) >= self.domain.C_y):
            raise SaddleOutsideDomain(
                f'Saddle point (|x*|={np.linalg.norm(x_star)!r}, '
                f'|y*|={np.linalg.norm(y_star)!r}) is outside the domain '
                f'balls, rescale the instance')

        return x_star, y_star
