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

import abc
import dataclasses
import typing

import numpy as np

from dsgda_tools.error import ConfigInvalid
from dsgda_tools.error import ConstantViolation
from dsgda_tools.error import DomainViolation
from dsgda_tools.lab import constants


@dataclasses.dataclass(frozen=True)
class DomainSpec:
    """Euclidean balls the primal and dual variables live in."""

    d_x: int
    d_y: int
    C_x: float
    C_y: float

    def __post_init__(self):
        if self.d_x < 1 or self.d_y < 1:
            raise ConfigInvalid('dimensions must be positive', key='d_x/d_y')

        if self.C_x <= 0 or self.C_y <= 0:
            raise ConfigInvalid('ball radii must be positive', key='C_x/C_y')

    @property
    def radius(self):
        """Radius of the product domain in the stacked norm."""
        return float(np.hypot(self.C_x, self.C_y))

    def contains(self, x, y, tol=constants.DOMAIN_TOL):
        return (np.linalg.norm(x) <= self.C_x + tol
                and np.linalg.norm(y) <= self.C_y + tol)


@dataclasses.dataclass(frozen=True)
class ProblemConstants:
    """Lipschitz, smoothness and modulus constants of a problem."""

    G: float
    L: float
    mu_x: float = 0.0
    mu_y: float = 0.0
    B: typing.Optional[float] = None

    def __post_init__(self):
        if not (self.G > 0 and self.L > 0):
            raise ConfigInvalid(
                f'G and L must be positive, got G={self.G}, L={self.L}')

        if self.mu_x < 0 or self.mu_y < 0:
            raise ConfigInvalid('moduli must be nonnegative')

        if self.B is not None and self.B <= 0:
            raise ConfigInvalid(f'loss bound must be positive, got {self.B}')

    @property
    def mu(self):
        return min(self.mu_x, self.mu_y)


@dataclasses.dataclass(frozen=True)
class EmpiricalConstants:
    """Constants observed by sampling; nothing guarantees positivity."""

    G: float
    L: float
    mu_x: typing.Optional[float]
    mu_y: typing.Optional[float]
    B: float


@dataclasses.dataclass(frozen=True)
class ConstantsAudit:
    declared: ProblemConstants
    empirical: EmpiricalConstants
    trials: int


class AbstractProblem(metaclass=abc.ABCMeta):
    """Base class for all minimax problem families

    Samples are rows of floats of `sample_width` entries, agent `i`
    evaluates its own local loss `f_i` on them. The batch methods
    take an array of agent indices and matching rows of points and
    samples and do not validate their inputs.
    """

    family = None
    regime = None

    def __init__(self, domain, constants, m):
        self._domain = domain
        self._constants = constants
        self._m = m

    def __repr__(self):
        return (f'<{type(self).__name__} m={self._m} d_x={self._domain.d_x} '
                f'd_y={self._domain.d_y}>')

    @property
    def domain(self):
        return self._domain

    @property
    def constants(self):
        return self._constants

    @property
    def m(self):
        return self._m

    @property
    def convex(self):
        """Whether every local loss is convex-concave."""
        return self.regime in (constants.REGIME_SCSC, constants.REGIME_CC)

    @property
    @abc.abstractmethod
    def sample_width(self):
        """Return the number of floats in one sample row

        :returns: sample width as `int`
        """

    @abc.abstractmethod
    def loss_batch(self, agents, X, Y, samples):
        """Evaluate local losses row by row

        :param agents: agent index per row, shape (k,)
        :param X: primal points, shape (k, d_x)
        :param Y: dual points, shape (k, d_y)
        :param samples: sample rows, shape (k, sample_width)
        :returns: loss values, shape (k,)
        """

    @abc.abstractmethod
    def grad_batch(self, agents, X, Y, samples):
        """Evaluate local gradients row by row

        :returns: tuple of gradients in x, shape (k, d_x), and in y,
            shape (k, d_y)
        """

    def check_domain(self, x, y):
        if np.linalg.norm(x) > self._domain.C_x + constants.DOMAIN_TOL:
            raise DomainViolation(
                f'|x|={np.linalg.norm(x)!r} exceeds C_x={self._domain.C_x}')

        if np.linalg.norm(y) > self._domain.C_y + constants.DOMAIN_TOL:
            raise DomainViolation(
                f'|y|={np.linalg.norm(y)!r} exceeds C_y={self._domain.C_y}')

    def _single(self, agent, x, y, sample):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        self.check_domain(x, y)
        return (np.array([agent]), x[None, :], y[None, :],
                np.atleast_1d(np.asarray(sample, dtype=float))[None, :])

    def loss(self, agent, x, y, sample):
        """Local loss of `agent` at (x, y) on one sample.

        :raises: `DomainViolation` outside the domain balls
        """
        return float(self.loss_batch(*self._single(agent, x, y, sample))[0])

    def grad(self, agent, x, y, sample):
        """Local gradients of `agent` at (x, y) on one sample.

        :returns: tuple of `numpy.ndarray` (g_x, g_y)
        :raises: `DomainViolation` outside the domain balls
        """
        gx, gy = self.grad_batch(*self._single(agent, x, y, sample))
        return gx[0], gy[0]

    def _broadcast(self, x, y, samples):
        samples = np.asarray(samples, dtype=float)
        rows, n, width = samples.shape
        agents = np.repeat(np.arange(rows), n)
        count = rows * n
        X = np.broadcast_to(np.asarray(x, dtype=float), (count, len(x)))
        Y = np.broadcast_to(np.asarray(y, dtype=float), (count, len(y)))
        return agents, X, Y, samples.reshape(count, width)

    def empirical_loss(self, x, y, samples):
        """Decentralized empirical objective F_S at a single point.

        :param samples: shape (rows, n, sample_width), row `i` bound
            to agent `i`
        """
        return float(np.mean(self.loss_batch(*self._broadcast(x, y, samples))))

    def empirical_grad(self, x, y, samples):
        gx, gy = self.grad_batch(*self._broadcast(x, y, samples))
        return gx.mean(axis=0), gy.mean(axis=0)

    def compress(self, samples):
        """Equivalent, possibly smaller, sample array for F_S.

        Families whose loss is affine in the sample reduce each agent
        to its sample mean.
        """
        return np.asarray(samples, dtype=float)


def _ball_points(rng, count, dim, radius):
    directions = rng.standard_normal((count, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = radius * rng.random((count, 1)) ** (1.0 / dim)
    return directions / norms * radii


def audit_constants(problem, samples, trials=1000, seed=0):
    """Certify the declared constants of a problem by random sampling.

    Draws `trials` pairs of domain points, an agent and one of its
    samples per pair and checks the Lipschitz, smoothness, modulus
    and loss-bound inequalities the declared constants promise.

    :param problem: an `AbstractProblem`
    :param samples: sample array of shape (m, n, sample_width)
    :param trials: number of random point pairs, at least 1000
    :param seed: seed of the point generator
    :returns: `ConstantsAudit` with declared and observed constants
    :raises: `ConstantViolation` naming the inequality and witness
    """
    if trials < 1000:
        raise ValueError(f'Audit needs at least 1000 trials, got {trials}')

    samples = np.asarray(samples, dtype=float)
    declared = problem.constants
    domain = problem.domain
    rng = np.random.default_rng(seed)

    rows, n, _ = samples.shape
    agents = rng.integers(rows, size=trials)
    picked = samples[agents, rng.integers(n, size=trials)]

    xu = _ball_points(rng, trials, domain.d_x, domain.C_x)
    yu = _ball_points(rng, trials, domain.d_y, domain.C_y)
    xv = _ball_points(rng, trials, domain.d_x, domain.C_x)
    yv = _ball_points(rng, trials, domain.d_y, domain.C_y)

    fu = problem.loss_batch(agents, xu, yu, picked)
    gxu, gyu = problem.grad_batch(agents, xu, yu, picked)
    gxv, gyv = problem.grad_batch(agents, xv, yv, picked)

    def witness(k):
        return {'agent': int(agents[k]), 'x': xu[k].tolist(),
                'y': yu[k].tolist(), 'x_prime': xv[k].tolist(),
                'y_prime': yv[k].tolist(), 'sample': picked[k].tolist()}

    grad_norms = np.sqrt(np.sum(gxu ** 2, axis=1) + np.sum(gyu ** 2, axis=1))
    worst = int(np.argmax(grad_norms))
    if grad_norms[worst] > declared.G * (1 + 1e-9):
        raise ConstantViolation(
            f'|grad f| <= G={declared.G} (observed {grad_norms[worst]!r})',
            witness(worst))

    dist = np.sqrt(np.sum((xu - xv) ** 2, axis=1)
                   + np.sum((yu - yv) ** 2, axis=1))
    gdiff = np.sqrt(np.sum((gxu - gxv) ** 2, axis=1)
                    + np.sum((gyu - gyv) ** 2, axis=1))
    valid = dist > 0
    ratios = np.zeros(trials)
    ratios[valid] = gdiff[valid] / dist[valid]
    worst = int(np.argmax(ratios))
    if ratios[worst] > declared.L * (1 + 1e-9):
        raise ConstantViolation(
            f'|grad f(u) - grad f(v)| <= L|u - v| with L={declared.L} '
            f'(observed ratio {ratios[worst]!r})', witness(worst))

    mu_x = mu_y = None
    if problem.convex:
        # f(x', y) >= f(x, y) + <g_x, x' - x> + mu_x / 2 |x' - x|^2
        dx = xv - xu
        fx = problem.loss_batch(agents, xv, yu, picked)
        gap_x = fx - fu - np.sum(gxu * dx, axis=1)
        sq_x = np.sum(dx ** 2, axis=1)
        slack = gap_x - 0.5 * declared.mu_x * sq_x
        worst = int(np.argmin(slack))
        if slack[worst] < -1e-9 * max(1.0, abs(fu[worst])):
            raise ConstantViolation(
                f'strong convexity in x with mu_x={declared.mu_x}',
                witness(worst))
        mu_x = float(np.min(2 * gap_x[sq_x > 0] / sq_x[sq_x > 0]))

        # f(x, y') <= f(x, y) + <g_y, y' - y> - mu_y / 2 |y' - y|^2
        dy = yv - yu
        fy = problem.loss_batch(agents, xu, yv, picked)
        gap_y = fu + np.sum(gyu * dy, axis=1) - fy
        sq_y = np.sum(dy ** 2, axis=1)
        slack = gap_y - 0.5 * declared.mu_y * sq_y
        worst = int(np.argmin(slack))
        if slack[worst] < -1e-9 * max(1.0, abs(fu[worst])):
            raise ConstantViolation(
                f'strong concavity in y with mu_y={declared.mu_y}',
                witness(worst))
        mu_y = float(np.min(2 * gap_y[sq_y > 0] / sq_y[sq_y > 0]))

    bound = float(np.max(np.abs(fu)))
    if declared.B is not None and bound > declared.B * (1 + 1e-12):
        worst = int(np.argmax(np.abs(fu)))
        raise ConstantViolation(
            f'|f| <= B={declared.B} (observed {bound!r})', witness(worst))

    empirical = EmpiricalConstants(
        G=float(np.max(grad_norms)), L=float(np.max(ratios)),
        mu_x=mu_x, mu_y=mu_y, B=bound)

    return ConstantsAudit(declared=declared, empirical=empirical,
                          trials=trials)
