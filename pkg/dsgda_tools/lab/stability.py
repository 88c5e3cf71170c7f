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

"""Coupled runs on neighbouring datasets and the quantities they estimate.

Every estimate here is taken for concrete dataset pairs and a finite
number of seeds, none of them certifies a supremum.
"""

import dataclasses
import math
import typing

import numpy as np
from scipy.stats import qmc

from dsgda_tools.error import EmptyGrid
from dsgda_tools.error import InnerSolveFailed
from dsgda_tools.error import MismatchedShapes
from dsgda_tools.error import TooFewSeeds
from dsgda_tools.error import ZeroModulus
from dsgda_tools.lab import constants
from dsgda_tools.lab import engine


@dataclasses.dataclass(frozen=True, eq=False)
class CoupledRun:
    """Two runs sharing one sample-index stream on neighbouring data.

    :ivar delta: distance of the agent-averaged iterates per record
    :ivar delta_avg_iterate: distance of the running average iterates
    :ivar delta_agents: stacked (x_i, y_i) distance of every agent,
        shape (records, m)
    :ivar first_hit: first iteration drawing a perturbed slot, or `None`
    """

    cfg: engine.RunConfig
    perturbation: typing.Any
    traj_a: engine.Trajectory
    traj_b: engine.Trajectory
    delta: np.ndarray
    delta_avg_iterate: np.ndarray
    delta_agents: np.ndarray
    first_hit: typing.Optional[int]

    @property
    def times(self):
        return self.traj_a.times

    @property
    def seed(self):
        return self.cfg.seed

    @property
    def final_delta(self):
        return float(self.delta[-1])

    @property
    def final_delta_avg_iterate(self):
        """Distance of the rate-weighted average outputs."""
        return _stacked_distance(self.traj_a.x_ave, self.traj_b.x_ave,
                                 self.traj_a.y_ave, self.traj_b.y_ave)


def _stacked_distance(x_a, x_b, y_a, y_b):
    return float(np.sqrt(np.sum((x_a - x_b) ** 2) + np.sum((y_a - y_b) ** 2)))


def first_hit_iteration(seed, positions, T, n):
    """First iteration at which any agent draws its perturbed slot.

    :param positions: zero-based perturbed position of every agent
    :returns: iteration index or `None` if no draw hits before T
    """
    positions = np.asarray(positions)
    stream = engine.index_stream(seed, len(positions), T, n)
    hits = np.flatnonzero(np.any(stream == positions[None, :], axis=1))
    return int(hits[0]) if hits.size else None


def coupled_run(cfg, neighbor, perturbation=None, logger=None):
    """Run D-SGDA on a dataset and on its neighbour with one stream.

    :param cfg: `RunConfig` bound to the original samples
    :param neighbor: neighbouring `DistributedDataset` or sample array
    :param perturbation: `NeighborPerturbation` describing the change
    :returns: `CoupledRun`
    :raises: `MismatchedShapes` if the datasets do not line up
    """
    samples_b = np.asarray(getattr(neighbor, 'shards', neighbor),
                           dtype=float)
    if samples_b.shape != cfg.samples.shape:
        raise MismatchedShapes(
            f'Neighbouring samples have shape {samples_b.shape}, '
            f'expected {cfg.samples.shape}')

    traj_a = engine.run(cfg, logger=logger)
    traj_b = engine.run(cfg.replace(samples=samples_b), logger=logger)

    delta = np.sqrt(np.sum((traj_a.x_bar - traj_b.x_bar) ** 2, axis=1)
                    + np.sum((traj_a.y_bar - traj_b.y_bar) ** 2, axis=1))
    delta_avg = np.sqrt(
        np.sum((traj_a.x_ave_series - traj_b.x_ave_series) ** 2, axis=1)
        + np.sum((traj_a.y_ave_series - traj_b.y_ave_series) ** 2, axis=1))
    delta_agents = np.sqrt(np.sum((traj_a.X - traj_b.X) ** 2, axis=2)
                           + np.sum((traj_a.Y - traj_b.Y) ** 2, axis=2))

    first_hit = None
    if perturbation is not None:
        first_hit = first_hit_iteration(cfg.seed, perturbation.positions,
                                        cfg.T, cfg.n)

    return CoupledRun(cfg=cfg, perturbation=perturbation, traj_a=traj_a,
                      traj_b=traj_b, delta=delta, delta_avg_iterate=delta_avg,
                      delta_agents=delta_agents, first_hit=first_hit)


@dataclasses.dataclass(frozen=True)
class StabilityReport:
    """Argument stability estimates over seeds.

    `epsilon` and `stderr` select the output named by `at`.
    """

    at: str
    epsilon_arg: float
    stderr_arg: float
    epsilon_arg_avg_iterate: float
    stderr_arg_avg_iterate: float
    seeds: int
    epsilon_weak: typing.Optional[float] = None

    @property
    def epsilon(self):
        if self.at == constants.OUTPUT_AVG_ITERATE:
            return self.epsilon_arg_avg_iterate
        return self.epsilon_arg

    @property
    def stderr(self):
        if self.at == constants.OUTPUT_AVG_ITERATE:
            return self.stderr_arg_avg_iterate
        return self.stderr_arg

    def to_dict(self):
        rv = dataclasses.asdict(self)
        rv['epsilon'] = self.epsilon
        rv['stderr'] = self.stderr
        return rv


def mean_stderr(values):
    """Sample mean and standard error of the mean."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise TooFewSeeds(len(values))
    return (float(np.mean(values)),
            float(np.std(values, ddof=1) / math.sqrt(len(values))))


def argument_stability(runs, at=constants.OUTPUT_FINAL, epsilon_weak=None):
    """Mean and standard error of the output distance over seeds.

    :param runs: `CoupledRun` list, one per seed
    :param at: 'final' or 'avg_iterate'
    :raises: `TooFewSeeds` with fewer than two runs
    """
    if at not in (constants.OUTPUT_FINAL, constants.OUTPUT_AVG_ITERATE):
        raise ValueError(f'Unknown output {at!r}')

    final = mean_stderr([run.final_delta for run in runs])
    average = mean_stderr([run.final_delta_avg_iterate for run in runs])

    if epsilon_weak is not None:
        epsilon_weak = max(0.0, float(epsilon_weak))

    return StabilityReport(at=at, epsilon_arg=final[0], stderr_arg=final[1],
                           epsilon_arg_avg_iterate=average[0],
                           stderr_arg_avg_iterate=average[1],
                           seeds=len(runs), epsilon_weak=epsilon_weak)


def probe_grid(dim, radius, size):
    """First `size` Halton points inside the ball of `radius`.

    Smaller grids are prefixes of larger ones.
    """
    if size < 1:
        raise EmptyGrid(f'Probe grid needs at least one point, got {size}')

    sampler = qmc.Halton(d=dim, scramble=False)
    if dim == 1:
        return radius * (2.0 * sampler.random(size) - 1.0)

    points = []
    count = 0
    while count < size:
        batch = radius * (2.0 * sampler.random(max(size, 64)) - 1.0)
        batch = batch[np.linalg.norm(batch, axis=1) <= radius]
        points.append(batch)
        count += len(batch)

    return np.concatenate(points)[:size]


def _expected_difference(problem, fixed_a, fixed_b, probes, pool, primal,
                         chunk_rows=200000):
    # mean over runs and agents of f(a, probe) - f(b, probe), or the
    # mirrored difference when the probes are primal points
    runs = len(fixed_a)
    m, size, width = pool.shape
    per_probe = runs * m * size
    chunk = max(1, chunk_rows // per_probe)

    agents = np.tile(np.repeat(np.arange(m), size), runs)
    rows = np.tile(pool.reshape(m * size, width), (runs, 1))
    side_a = np.repeat(fixed_a, m * size, axis=0)
    side_b = np.repeat(fixed_b, m * size, axis=0)

    out = np.empty((len(probes), size))
    for start in range(0, len(probes), chunk):
        block = probes[start:start + chunk]
        count = len(block)
        ag = np.tile(agents, count)
        smp = np.tile(rows, (count, 1))
        a = np.tile(side_a, (count, 1))
        b = np.tile(side_b, (count, 1))
        pr = np.repeat(block, per_probe, axis=0)

        if primal:
            diff = (problem.loss_batch(ag, pr, a, smp)
                    - problem.loss_batch(ag, pr, b, smp))
        else:
            diff = (problem.loss_batch(ag, a, pr, smp)
                    - problem.loss_batch(ag, b, pr, smp))

        out[start:start + count] = diff.reshape(
            count, runs, m, size).mean(axis=(1, 2))

    return out


def weak_stability_estimate(runs, grid_sizes, pool, problem=None):
    """Lower estimate of the weak stability of the coupled outputs.

    sup over pool columns xi of
        sup_y' E[f(x_S, y'; xi) - f(x_S', y'; xi)]
      + sup_x' E[f(x', y_S; xi) - f(x', y_S'; xi)]
    with f the agent average of the local losses, E the mean over
    runs and the suprema over Halton probe grids.

    :param grid_sizes: probe counts (primal, dual) or one count for both
    :param pool: samples of shape (m, P, width), column p holds one
        sample per agent
    :raises: `EmptyGrid` for empty probe grids or pools
    """
    if isinstance(grid_sizes, int):
        grid_sizes = (grid_sizes, grid_sizes)

    pool = np.asarray(pool, dtype=float)
    if pool.ndim != 3 or pool.shape[1] == 0:
        raise EmptyGrid('Weak stability needs a nonempty sample pool')

    if not runs:
        raise EmptyGrid('Weak stability needs at least one coupled run')

    problem = problem or runs[0].cfg.problem
    domain = problem.domain

    x_a = np.stack([run.traj_a.x_bar[-1] for run in runs])
    x_b = np.stack([run.traj_b.x_bar[-1] for run in runs])
    y_a = np.stack([run.traj_a.y_bar[-1] for run in runs])
    y_b = np.stack([run.traj_b.y_bar[-1] for run in runs])

    grid_x = probe_grid(domain.d_x, domain.C_x, grid_sizes[0])
    grid_y = probe_grid(domain.d_y, domain.C_y, grid_sizes[1])

    dual_part = _expected_difference(problem, x_a, x_b, grid_y, pool,
                                     primal=False).max(axis=0)
    primal_part = _expected_difference(problem, y_a, y_b, grid_x, pool,
                                       primal=True).max(axis=0)

    return float(np.max(dual_part + primal_part))


def _solve_inner(grad, value, start, radius, step, ascent,
                 tol=constants.INNER_SOLVER_TOL,
                 max_iter=constants.INNER_SOLVER_MAX_ITER):
    z = engine.project_ball(start, radius)
    sign = 1.0 if ascent else -1.0

    for _ in range(max_iter):
        z_next = engine.project_ball(z + sign * step * grad(z), radius)
        if np.linalg.norm(z_next - z) / step <= tol:
            return z_next, value(z_next)
        z = z_next

    raise InnerSolveFailed(
        f'Inner {"ascent" if ascent else "descent"} did not reach the '
        f'gradient mapping tolerance {tol} in {max_iter} iterations')


def dual_sup(problem, xs, samples, **kwargs):
    """sup over y' of the mean over `xs` of F(x, y')."""
    domain = problem.domain

    def grad(y):
        return np.mean([problem.empirical_grad(x, y, samples)[1]
                        for x in xs], axis=0)

    def value(y):
        return math.fsum(problem.empirical_loss(x, y, samples)
                         for x in xs) / len(xs)

    return _solve_inner(grad, value, np.zeros(domain.d_y), domain.C_y,
                        1.0 / problem.constants.L, ascent=True, **kwargs)


def primal_inf(problem, ys, samples, **kwargs):
    """inf over x' of the mean over `ys` of F(x', y)."""
    domain = problem.domain

    def grad(x):
        return np.mean([problem.empirical_grad(x, y, samples)[0]
                        for y in ys], axis=0)

    def value(x):
        return math.fsum(problem.empirical_loss(x, y, samples)
                         for y in ys) / len(ys)

    return _solve_inner(grad, value, np.zeros(domain.d_x), domain.C_x,
                        1.0 / problem.constants.L, ascent=False, **kwargs)


def primal_dual_gap(problem, models, samples, **kwargs):
    """Weak and per-model strong primal-dual risks on one sample array.

    :param models: list of (x, y) outputs over seeds
    :returns: tuple (weak, strong values per model)
    """
    samples = problem.compress(samples)
    xs = [np.asarray(x, dtype=float) for x, _ in models]
    ys = [np.asarray(y, dtype=float) for _, y in models]

    weak = (dual_sup(problem, xs, samples, **kwargs)[1]
            - primal_inf(problem, ys, samples, **kwargs)[1])
    strong = [dual_sup(problem, [x], samples, **kwargs)[1]
              - primal_inf(problem, [y], samples, **kwargs)[1]
              for x, y in zip(xs, ys)]
    return weak, np.array(strong)


@dataclasses.dataclass(frozen=True)
class RiskReport:
    """Primal-dual risks of a model distribution.

    Weak risks take the seed expectation inside the sup/inf, strong
    risks outside; gaps are population minus empirical.
    """

    weak_pd_population: float
    weak_pd_empirical: float
    strong_pd_population: float
    strong_pd_empirical: float
    weak_gap: float
    strong_gap: float
    strong_gap_stderr: float
    population_method: str
    inner_method: str = 'projected-gradient'

    def to_dict(self):
        return dataclasses.asdict(self)


def weak_pd_risks(models, problem, train_samples, population_samples,
                  population_method='closed-form', **kwargs):
    """Weak and strong primal-dual risks with their generalization gaps.

    :param models: list of (x, y) outputs, one per seed
    :param train_samples: empirical samples, shape (m, n, width)
    :param population_samples: population oracle samples, either the
        per-agent population means as (m, 1, width) or a held-out split
    :raises: `InnerSolveFailed` if an inner problem does not converge
    """
    if not models:
        raise TooFewSeeds(0)

    weak_emp, strong_emp = primal_dual_gap(problem, models, train_samples,
                                           **kwargs)
    weak_pop, strong_pop = primal_dual_gap(problem, models,
                                           population_samples, **kwargs)

    gaps = strong_pop - strong_emp
    stderr = (float(np.std(gaps, ddof=1) / math.sqrt(len(gaps)))
              if len(gaps) > 1 else 0.0)

    return RiskReport(
        weak_pd_population=float(weak_pop),
        weak_pd_empirical=float(weak_emp),
        strong_pd_population=float(np.mean(strong_pop)),
        strong_pd_empirical=float(np.mean(strong_emp)),
        weak_gap=float(weak_pop - weak_emp),
        strong_gap=float(np.mean(gaps)),
        strong_gap_stderr=stderr,
        population_method=population_method)


def gen_gap_from_stability(epsilon, G, L, mu, mode=constants.GAP_WEAK):
    """Generalization gap implied by argument stability.

    weak: sqrt(2) G eps; strong: G sqrt(2 + 2 L^2 / mu^2) eps.

    :raises: `ZeroModulus` for the strong gap with mu == 0
    """
    if mode == constants.GAP_WEAK:
        return math.sqrt(2.0) * G * epsilon

    if mode != constants.GAP_STRONG:
        raise ValueError(f'Unknown gap mode {mode!r}')

    if mu <= 0:
        raise ZeroModulus('Strong generalization gap needs mu > 0')

    return G * math.sqrt(2.0 + 2.0 * L * L / (mu * mu)) * epsilon


def escape_probability_bound(m, n, t0):
    """Bound on the chance that coupled runs separated before t0."""
    return t0 * (1.0 - (1.0 - 1.0 / n) ** m)


def weak_stability_escape_bound(runs, G, B, t0_grid=None):
    """Escape-time decomposition of weak stability, minimized over t0.

    For each t0 the runs that have not drawn a perturbed slot up to
    t0 estimate E[delta_T | delta_t0 = 0]; the bound is
    sqrt(2) G E[delta_T | delta_t0 = 0] + B m t0 / n.

    :returns: tuple (value, t0) of the smallest bound
    """
    if not runs:
        raise TooFewSeeds(0)

    cfg = runs[0].cfg
    m, n, T = cfg.m, cfg.n, cfg.T
    if t0_grid is None:
        t0_grid = sorted({0, *np.linspace(0, T, 11, dtype=int).tolist()})

    best = (math.inf, None)
    for t0 in t0_grid:
        clean = [run.final_delta for run in runs
                 if run.first_hit is None or run.first_hit >= t0]
        if not clean:
            continue

        value = (math.sqrt(2.0) * G * float(np.mean(clean))
                 + B * m * t0 / n)
        if value < best[0]:
            best = (value, t0)

    return best


def auc_generalization(problem, x, train, test):
    """Train and test ROC AUC of a primal point and their difference."""
    train_auc = problem.auc_score(x, train)
    test_auc = problem.auc_score(x, test)
    return {'train_auc': train_auc, 'test_auc': test_auc,
            'auc_gap': train_auc - test_auc}
