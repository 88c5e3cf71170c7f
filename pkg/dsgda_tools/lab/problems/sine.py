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
from dsgda_tools.lab import constants
from dsgda_tools.lab.problems import base


class SineProblem(base.AbstractProblem):
    """Bounded nonconvex-nonconcave game.

    f_i(x, y; xi) = B sin(x^T u_i + xi) sin(y^T v_i) with unit
    directions u_i, v_i per agent and a scalar sample xi. Gradient
    norm and Hessian norm are both bounded by B.
    """

    family = constants.FAMILY_SINE
    regime = constants.REGIME_NCNC

    def __init__(self, u, v, bound, domain):
        u = np.array(u, dtype=float)
        v = np.array(v, dtype=float)
        if u.ndim != 2 or v.ndim != 2 or len(u) != len(v):
            raise ConfigInvalid('directions must be (m, d) arrays')

        if u.shape[1] != domain.d_x or v.shape[1] != domain.d_y:
            raise ConfigInvalid('directions do not match the domain')

        if bound <= 0:
            raise ConfigInvalid(f'loss bound must be positive, got {bound}',
                                key='B')

        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        u.setflags(write=False)
        v.setflags(write=False)
        self._u = u
        self._v = v
        self._bound = float(bound)

        super().__init__(
            domain,
            base.ProblemConstants(G=self._bound, L=self._bound,
                                  B=self._bound),
            len(u))

    @classmethod
    def random(cls, m, domain, bound=1.0, seed=0):
        rng = np.random.default_rng(seed)
        u = rng.standard_normal((m, domain.d_x))
        v = rng.standard_normal((m, domain.d_y))
        # a zero draw has probability zero, keep the directions defined
        u[np.all(u == 0, axis=1), 0] = 1.0
        v[np.all(v == 0, axis=1), 0] = 1.0
        return cls(u, v, bound, domain)

    @property
    def sample_width(self):
        return 1

    def _phases(self, agents, X, Y, samples):
        phase_x = np.sum(X * self._u[agents], axis=1) + samples[:, 0]
        phase_y = np.sum(Y * self._v[agents], axis=1)
        return phase_x, phase_y

    def loss_batch(self, agents, X, Y, samples):
        phase_x, phase_y = self._phases(agents, X, Y, samples)
        return self._bound * np.sin(phase_x) * np.sin(phase_y)

    def grad_batch(self, agents, X, Y, samples):
        phase_x, phase_y = self._phases(agents, X, Y, samples)
        gx = (self._bound * np.cos(phase_x) * np.sin(phase_y))[:, None] * (
            self._u[agents])
        gy = (self._bound * np.sin(phase_x) * np.cos(phase_y))[:, None] * (
            self._v[agents])
        return gx, gy
