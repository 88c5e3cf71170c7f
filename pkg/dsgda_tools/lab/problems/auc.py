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
from sklearn import metrics

from dsgda_tools.error import ConfigInvalid
from dsgda_tools.error import InsufficientData
from dsgda_tools.lab import constants
from dsgda_tools.lab.problems import base


class AucProblem(base.AbstractProblem):
    """Square-loss AUC maximization as a convex-concave saddle problem.

    The primal block is x = (w, a, b) of size d + 2, the dual block is
    the scalar alpha. For a sample [label, z] with class prior p:

        f = (1-p)(w^T z - a)^2 [label=1] + p(w^T z - b)^2 [label=-1]
            + 2(1+alpha)(p w^T z [label=-1] - (1-p) w^T z [label=1])
            - p(1-p) alpha^2
    """

    family = constants.FAMILY_AUC
    regime = constants.REGIME_CC

    def __init__(self, prior, n_features, m, domain, pool):
        if not 0.0 < prior < 1.0:
            raise ConfigInvalid(
                f'class prior must be in (0, 1), got {prior}', key='prior')

        if domain.d_x != n_features + 2 or domain.d_y != 1:
            raise ConfigInvalid(
                f'AUC domain needs d_x={n_features + 2} and d_y=1, got '
                f'd_x={domain.d_x}, d_y={domain.d_y}')

        self._prior = float(prior)
        self._n_features = n_features

        smoothness, lipschitz = self._constants_over(
            np.asarray(pool, dtype=float).reshape(-1, n_features + 1),
            domain.radius)

        super().__init__(
            domain, base.ProblemConstants(G=lipschitz, L=smoothness), m)

    @classmethod
    def from_samples(cls, train, m, C_x, C_y):
        """Build the problem with the prior of a training pool.

        :param train: training rows [label, z], labels in {-1, 1}
        """
        train = np.asarray(train, dtype=float).reshape(
            -1, np.shape(train)[-1])
        positives = float(np.mean(train[:, 0] > 0))
        if positives in (0.0, 1.0):
            raise InsufficientData(
                'AUC training data needs samples of both classes')

        n_features = train.shape[1] - 1
        domain = base.DomainSpec(d_x=n_features + 2, d_y=1,
                                 C_x=C_x, C_y=C_y)
        return cls(positives, n_features, m, domain, train)

    def _constants_over(self, pool, radius):
        # Each loss is quadratic in (w, a, b, alpha): its Hessian acts on
        # span{z, e_a or e_b, e_alpha} and reduces to a 3x3 matrix.
        p, q = self._prior, 1.0 - self._prior
        labels = pool[:, 0]
        r = np.linalg.norm(pool[:, 1:], axis=1)
        sign = np.where(labels > 0, -1.0, 1.0)
        weight = np.where(labels > 0, 2 * q, 2 * p)

        reduced = np.zeros((len(pool), 3, 3))
        reduced[:, 0, 0] = r * r
        reduced[:, 0, 1] = reduced[:, 1, 0] = -r
        reduced[:, 0, 2] = reduced[:, 2, 0] = sign * r
        reduced[:, 1, 1] = 1.0
        # the alpha curvature is -2p(1-p) for both classes
        reduced[:, 2, 2] = np.where(labels > 0, -p, -q)
        reduced *= weight[:, None, None]

        norms = np.max(np.abs(np.linalg.eigvalsh(reduced)), axis=1)
        # gradient at the origin is 2(p[-] - (1-p)[+]) z
        origin = weight * r

        smoothness = float(np.max(norms))
        lipschitz = float(np.max(norms * radius + origin))
        return smoothness, lipschitz

    @property
    def prior(self):
        return self._prior

    @property
    def sample_width(self):
        return self._n_features + 1

    def _unpack(self, X, Y, samples):
        w = X[:, :self._n_features]
        a = X[:, self._n_features]
        b = X[:, self._n_features + 1]
        alpha = Y[:, 0]
        positive = (samples[:, 0] > 0).astype(float)
        negative = 1.0 - positive
        z = samples[:, 1:]
        score = np.sum(w * z, axis=1)
        return a, b, alpha, positive, negative, z, score

    def loss_batch(self, agents, X, Y, samples):
        p, q = self._prior, 1.0 - self._prior
        a, b, alpha, pos, neg, _, s = self._unpack(X, Y, samples)
        return (q * (s - a) ** 2 * pos + p * (s - b) ** 2 * neg
                + 2 * (1 + alpha) * (p * s * neg - q * s * pos)
                - p * q * alpha ** 2)

    def grad_batch(self, agents, X, Y, samples):
        p, q = self._prior, 1.0 - self._prior
        a, b, alpha, pos, neg, z, s = self._unpack(X, Y, samples)

        linear = (2 * q * (s - a) * pos + 2 * p * (s - b) * neg
                  + 2 * (1 + alpha) * (p * neg - q * pos))
        gx = np.empty_like(X, dtype=float)
        gx[:, :self._n_features] = linear[:, None] * z
        gx[:, self._n_features] = -2 * q * (s - a) * pos
        gx[:, self._n_features + 1] = -2 * p * (s - b) * neg

        gy = (2 * (p * s * neg - q * s * pos) - 2 * p * q * alpha)[:, None]
        return gx, gy

    def auc_score(self, x, samples):
        """ROC AUC of the linear scorer w^T z on labelled rows.

        :param x: primal point (w, a, b) or bare weights w
        :param samples: rows [label, z]
        :raises: `InsufficientData` unless both classes are present
        """
        samples = np.asarray(samples, dtype=float).reshape(
            -1, self.sample_width)
        labels = samples[:, 0] > 0
        if labels.all() or not labels.any():
            raise InsufficientData('AUC needs samples of both classes')

        w = np.asarray(x, dtype=float)[:self._n_features]
        return float(metrics.roc_auc_score(labels, samples[:, 1:] @ w))
