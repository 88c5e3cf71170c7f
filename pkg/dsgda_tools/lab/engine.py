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

"""Decentralized stochastic gradient descent ascent."""

import dataclasses
import logging
import typing

import numpy as np

from dsgda_tools.error import ConfigError
from dsgda_tools.error import DomainViolation
from dsgda_tools.error import StepConditionViolated
from dsgda_tools.lab import constants

LOG = logging.getLogger(__name__)

_UNIT = 2.0 ** -53


@dataclasses.dataclass(frozen=True)
class Schedule:
    """Learning rates of the primal and dual updates.

    A fixed schedule uses `eta_x` and `eta_y` at every iteration. A
    decaying one uses eta_max(t) = 1/(mu (t+1)^c) and
    eta_min(t) = 1/(mu (t+1)); `max_role` names the variable taking
    the larger rate.
    """

    kind: str = constants.SCHEDULE_FIXED
    eta_x: float = 0.01
    eta_y: float = 0.01
    mu: float = 1.0
    c: float = 1.0
    max_role: str = 'x'

    def __post_init__(self):
        if self.kind == constants.SCHEDULE_FIXED:
            if self.eta_x < 0 or self.eta_y < 0:
                raise ConfigError(
                    f'learning rates must be nonnegative, got '
                    f'eta_x={self.eta_x}, eta_y={self.eta_y}')

        elif self.kind == constants.SCHEDULE_DECAYING:
            if self.mu <= 0:
                raise ConfigError(f'decaying schedule needs mu > 0, '
                                  f'got {self.mu}')
            if not 0.0 < self.c <= 1.0:
                raise ConfigError(f'decay exponent must be in (0, 1], '
                                  f'got {self.c}')
            if self.max_role not in ('x', 'y'):
                raise ConfigError(f'max_role must be x or y, '
                                  f'got {self.max_role!r}')

        else:
            raise ConfigError(f'unknown schedule kind {self.kind!r}')

    @classmethod
    def fixed(cls, eta_x, eta_y=None):
        return cls(kind=constants.SCHEDULE_FIXED, eta_x=eta_x,
                   eta_y=eta_x if eta_y is None else eta_y)

    @classmethod
    def decaying(cls, mu, c, max_role='x'):
        return cls(kind=constants.SCHEDULE_DECAYING, mu=mu, c=c,
                   max_role=max_role)

    @property
    def is_fixed(self):
        return self.kind == constants.SCHEDULE_FIXED

    @property
    def c_x(self):
        """Decay exponent of the primal rate, `None` if fixed."""
        if self.is_fixed:
            return None
        return self.c if self.max_role == 'x' else 1.0

    @property
    def c_y(self):
        if self.is_fixed:
            return None
        return self.c if self.max_role == 'y' else 1.0

    def eta_max_series(self, T):
        if self.is_fixed:
            return np.full(T, max(self.eta_x, self.eta_y))
        return 1.0 / (self.mu * np.arange(1, T + 1) ** self.c)

    def eta_min_series(self, T):
        if self.is_fixed:
            return np.full(T, min(self.eta_x, self.eta_y))
        return 1.0 / (self.mu * np.arange(1, T + 1, dtype=float))

    def series(self, T):
        """Rates of iterations 0..T-1.

        :returns: tuple of arrays (eta_x, eta_y)
        """
        if self.is_fixed:
            return np.full(T, self.eta_x), np.full(T, self.eta_y)

        high, low = self.eta_max_series(T), self.eta_min_series(T)
        return (high, low) if self.max_role == 'x' else (low, high)

    def rates(self, t):
        eta_x, eta_y = self.series(t + 1)
        return float(eta_x[t]), float(eta_y[t])

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True, eq=False)
class RunConfig:
    """One D-SGDA run: problem, bound samples, gossip weights, schedule.

    `record_every` defaults to max(1, T // 1000).
    """

    problem: typing.Any
    samples: np.ndarray
    mixing: typing.Any
    T: int
    schedule: Schedule
    seed: int = 0
    record_every: typing.Optional[int] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, 'samples', samples)

        if self.T < 1:
            raise ConfigError(f'T must be at least 1, got {self.T}')

        if samples.ndim != 3:
            raise ConfigError(
                f'samples must have shape (m, n, width), got {samples.shape}')

        m = self.mixing.m
        if samples.shape[0] != m or self.problem.m != m:
            raise ConfigError(
                f'agent counts disagree: mixing m={m}, dataset '
                f'm={samples.shape[0]}, problem m={self.problem.m}')

        if samples.shape[2] != self.problem.sample_width:
            raise ConfigError(
                f'sample width {samples.shape[2]} does not match the '
                f'{self.problem.family} problem width '
                f'{self.problem.sample_width}')

        if self.record_every is None:
            object.__setattr__(self, 'record_every', max(1, self.T // 1000))

        elif self.record_every < 1:
            raise ConfigError(
                f'record_every must be positive, got {self.record_every}')

    @property
    def m(self):
        return self.mixing.m

    @property
    def n(self):
        return self.samples.shape[1]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states of a run.

    Arrays are indexed by the recorded iteration `times`. The running
    average iterate at time t is the rate-weighted mean of the agent
    means of iterations 0..t-1, zero at t = 0.
    """

    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    consensus: np.ndarray
    x_ave_series: np.ndarray
    y_ave_series: np.ndarray
    x_ave: np.ndarray
    y_ave: np.ndarray

    @property
    def final_X(self):
        return self.X[-1]

    @property
    def final_Y(self):
        return self.Y[-1]

    @property
    def output(self):
        """Final agent-averaged iterate (x_bar^T, y_bar^T)."""
        return self.x_bar[-1], self.y_bar[-1]

    @property
    def average_output(self):
        return self.x_ave, self.y_ave


def project_ball(v, radius):
    """Euclidean projection onto the closed ball of `radius`."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= radius:
        return v
    return v * (radius / norm)


def project_rows(V, radius):
    """Project every row of `V` onto the ball of `radius`."""
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norms, np.finfo(float).tiny))
    return V * scale


def _stream_key(seed, agent):
    return (int(seed) << 64) | int(agent)


def _to_index(words, n):
    return ((words >> np.uint64(11)).astype(float) * _UNIT * n).astype(
        np.int64)


def sample_index(seed, agent, t, n):
    """Sample drawn by `agent` at iteration `t`, counted from 1.

    Word `t` of the Philox stream keyed by (seed, agent) is mapped to
    [1, n] through its top 53 bits.
    """
    words = np.random.Philox(key=_stream_key(seed, agent)).random_raw(t + 1)
    return int(_to_index(words[t:t + 1], n)[0]) + 1


def index_stream(seed, m, T, n):
    """Zero-based sample indices of all agents for iterations 0..T-1.

    :returns: array of shape (T, m) with
        `stream[t, i] == sample_index(seed, i, t, n) - 1`
    """
    stream = np.empty((T, m), dtype=np.int64)
    for agent in range(m):
        words = np.random.Philox(
            key=_stream_key(seed, agent)).random_raw(T)
        stream[:, agent] = _to_index(words, n)
    return stream


def consensus_residual(X, Y):
    """Centered Frobenius norm of the stacked agent states."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    dev_x = X - X.mean(axis=0)
    dev_y = Y - Y.mean(axis=0)
    return float(np.sqrt(np.sum(dev_x * dev_x) + np.sum(dev_y * dev_y)))


def dsgda_step(state, cfg, t, indices=None, rates=None):
    """One gossip plus projected descent-ascent update of all agents.

    :param state: tuple of agent matrices (X, Y)
    :param indices: zero-based sample index per agent, drawn from the
        run stream when omitted
    :param rates: tuple (eta_x, eta_y) of iteration `t`
    :returns: next (X, Y)
    """
    X, Y = state
    m = cfg.m
    domain = cfg.problem.domain

    if indices is None:
        indices = index_stream(cfg.seed, m, t + 1, cfg.n)[t]

    eta_x, eta_y = rates if rates is not None else cfg.schedule.rates(t)

    agents = np.arange(m)
    gx, gy = cfg.problem.grad_batch(agents, X, Y,
                                    cfg.samples[agents, indices])

    weights = cfg.mixing.weights
    X_next = project_rows(weights @ X - eta_x * gx, domain.C_x)
    Y_next = project_rows(weights @ Y + eta_y * gy, domain.C_y)
    return X_next, Y_next


def run(cfg, logger=None):
    """Run D-SGDA from the all-zero state.

    :returns: `Trajectory` recorded every `cfg.record_every` iterations
        and at the final iteration
    :raises: `DomainViolation` if an iterate escapes the domain
    """
    logger = logger or LOG
    problem = cfg.problem
    domain = problem.domain
    m, T = cfg.m, cfg.T

    logger.debug('Running D-SGDA: %s, m=%d, n=%d, T=%d, seed=%d',
                 problem.family, m, cfg.n, T, cfg.seed)

    X = np.zeros((m, domain.d_x))
    Y = np.zeros((m, domain.d_y))
    stream = index_stream(cfg.seed, m, T, cfg.n)
    eta_x, eta_y = cfg.schedule.series(T)

    sum_x = np.zeros(domain.d_x)
    sum_y = np.zeros(domain.d_y)
    weight_x = weight_y = 0.0

    records = []

    def average(total, weight):
        return total / weight if weight > 0 else np.zeros_like(total)

    def record(t):
        if not (np.all(np.linalg.norm(X, axis=1)
                       <= domain.C_x + constants.DOMAIN_TOL)
                and np.all(np.linalg.norm(Y, axis=1)
                           <= domain.C_y + constants.DOMAIN_TOL)):
            raise DomainViolation(f'Iterate left the domain at t={t}')

        records.append((t, X, Y, X.mean(axis=0), Y.mean(axis=0),
                        consensus_residual(X, Y),
                        average(sum_x, weight_x), average(sum_y, weight_y)))

    for t in range(T):
        if t % cfg.record_every == 0:
            record(t)

        sum_x = sum_x + eta_x[t] * X.mean(axis=0)
        sum_y = sum_y + eta_y[t] * Y.mean(axis=0)
        weight_x += eta_x[t]
        weight_y += eta_y[t]

        X, Y = dsgda_step((X, Y), cfg, t, indices=stream[t],
                          rates=(eta_x[t], eta_y[t]))

    record(T)

    columns = list(zip(*records))
    return Trajectory(
        times=np.array(columns[0]),
        X=np.stack(columns[1]),
        Y=np.stack(columns[2]),
        x_bar=np.stack(columns[3]),
        y_bar=np.stack(columns[4]),
        consensus=np.array(columns[5]),
        x_ave_series=np.stack(columns[6]),
        y_ave_series=np.stack(columns[7]),
        x_ave=average(sum_x, weight_x),
        y_ave=average(sum_y, weight_y))


def step_window(constants_, eta_max, eta_min):
    """Bounds of the contraction window on eta_min.

    :returns: tuple (low, high), the window holds when
        low <= eta_min <= high
    """
    L, mu = constants_.L, constants_.mu
    low = (L + mu) / 2.0 * eta_max ** 2
    high = (L + mu) / (2.0 * L * mu) if mu > 0 else 0.0
    return low, high


def check_step_condition(constants_, schedule, T, logger=None):
    """Warn when the rates leave the contraction window.

    :returns: `True` when every iteration satisfies the window
    """
    logger = logger or LOG
    if constants_.mu <= 0:
        return True

    eta_max = schedule.eta_max_series(T)
    eta_min = schedule.eta_min_series(T)
    low, high = step_window(constants_, eta_max, eta_min)
    bad = np.flatnonzero((eta_min < low) | (eta_min > high))

    if bad.size:
        logger.warning(
            'Learning rates leave the contraction window at %d of %d '
            'iterations (first t=%d), contraction based bounds are not '
            'guaranteed', bad.size, T, bad[0])
        return False

    return True


def expansiveness_probe(problem, eta_x, eta_y, pairs, agent=0, sample=None,
                        contraction=None):
    """Largest Lipschitz ratio of the one-step descent-ascent map.

    The map sends (x, y) to (x - eta_x g_x, y + eta_y g_y) for the local
    loss of `agent` on `sample`. Pairs with u == v are skipped.

    :param pairs: array of shape (k, 2, d_x + d_y) or iterable of
        (u, v) stacked points
    :param contraction: check the step window of the strongly monotone
        case, defaults to whether the problem has a positive modulus
    :returns: max |G(u) - G(v)| / |u - v| as `float`, 0 without pairs
    :raises: `StepConditionViolated` if contraction is requested outside
        the step window
    """
    if contraction is None:
        contraction = problem.constants.mu > 0

    if contraction:
        eta_max, eta_min = max(eta_x, eta_y), min(eta_x, eta_y)
        low, high = step_window(problem.constants, eta_max, eta_min)
        if not low <= eta_min <= high:
            raise StepConditionViolated(
                f'eta_min={eta_min} outside the contraction window '
                f'[{low}, {high}] for eta_max={eta_max}')

    pairs = np.asarray(pairs, dtype=float)
    if pairs.size == 0:
        return 0.0

    d_x = problem.domain.d_x
    if sample is None:
        sample = np.zeros(problem.sample_width)

    u, v = pairs[:, 0], pairs[:, 1]
    dist = np.linalg.norm(u - v, axis=1)
    keep = dist > 0
    u, v, dist = u[keep], v[keep], dist[keep]
    if not len(u):
        return 0.0

    agents = np.full(len(u), agent)
    rows = np.broadcast_to(np.asarray(sample, dtype=float),
                           (len(u), problem.sample_width))

    def step(points):
        gx, gy = problem.grad_batch(agents, points[:, :d_x], points[:, d_x:],
                                    rows)
        return np.hstack([points[:, :d_x] - eta_x * gx,
                          points[:, d_x:] + eta_y * gy])

    ratios = np.linalg.norm(step(u) - step(v), axis=1) / dist
    return float(np.max(ratios))
