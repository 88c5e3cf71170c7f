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

"""Experiment orchestration: runs, stability studies, sweeps, reports."""

from concurrent import futures
import contextlib
import dataclasses
import itertools
import math
import time
import typing

import numpy as np

from dsgda_tools.error import ConfigInvalid
from dsgda_tools.error import LabError
from dsgda_tools.error import SaddleOutsideDomain
from dsgda_tools.error import SchemaMismatch
from dsgda_tools.lab import base
from dsgda_tools.lab import bounds
from dsgda_tools.lab import constants
from dsgda_tools.lab import data
from dsgda_tools.lab import engine
from dsgda_tools.lab import memoize
from dsgda_tools.lab.problems import auc
from dsgda_tools.lab.problems import base as problems_base
from dsgda_tools.lab.problems import quadratic
from dsgda_tools.lab.problems import sine
from dsgda_tools.lab import stability
from dsgda_tools.lab import topology
from dsgda_tools.lab import utils

TOPOLOGY_FIELDS = ('topology', 'm', 'lambda', 'gap', 'c', 'c_lambda')
TRAJECTORY_FIELDS = ('t', 'consensus', 'dist_to_saddle', 'avg_x_norm',
                     'avg_y_norm')
STABILITY_FIELDS = ('seed', 't', 'delta', 'delta_avg_iterate')
BOUND_FIELDS = ('bound_name', 'value', 'term', 'term_value')
SWEEP_FIELDS = ('seed_count', 'eps_mean', 'eps_stderr', 'bound_fixed',
                'bound_exact', 'gap_weak')
COMPARE_FIELDS = ('eps_mean', 'eps_upper', 'bound', 'ratio', 'dominates')


@dataclasses.dataclass(frozen=True, eq=False)
class Setup:
    """Problem instance with its dataset and neighbouring dataset.

    :ivar population: population oracle samples, shape (m, P, width)
    :ivar probe_pool: samples the weak stability suprema range over
    :ivar train, test: labelled splits of AUC experiments
    """

    problem: problems_base.AbstractProblem
    dataset: data.DistributedDataset
    neighbor: data.DistributedDataset
    perturbation: data.NeighborPerturbation
    population: typing.Optional[np.ndarray] = None
    probe_pool: typing.Optional[np.ndarray] = None
    train: typing.Optional[np.ndarray] = None
    test: typing.Optional[np.ndarray] = None


@dataclasses.dataclass(frozen=True, eq=False)
class StudyResult:
    """Outcome of one coupled stability study."""

    config: typing.Any
    lambda_: float
    runs: typing.List[stability.CoupledRun]
    report: stability.StabilityReport
    bounds: typing.List[bounds.BoundReport]
    step_condition: bool
    escape_bound: typing.Optional[typing.Tuple[float, int]] = None
    auc: typing.Optional[dict] = None
    risks: typing.Optional[stability.RiskReport] = None
    runtime: float = 0.0

    def bound(self, name):
        for report in self.bounds:
            if report.name == name:
                return report
        return None

    def stability_rows(self):
        for run in self.runs:
            for t, delta, delta_avg in zip(run.times, run.delta,
                                           run.delta_avg_iterate):
                yield {'seed': run.seed, 't': int(t), 'delta': float(delta),
                       'delta_avg_iterate': float(delta_avg)}

    def summary(self):
        problem = self.runs[0].cfg.problem
        consts = problem.constants
        rv = {
            'config': self.config.to_dict(),
            'lambda': self.lambda_,
            'constants': {'G': consts.G, 'L': consts.L,
                          'mu_x': consts.mu_x, 'mu_y': consts.mu_y,
                          'B': consts.B},
            'stability': self.report.to_dict(),
            'first_hits': [run.first_hit for run in self.runs],
            'step_condition': self.step_condition,
            'bounds': [bound_summary(report) for report in self.bounds],
        }
        if self.escape_bound is not None:
            rv['weak_escape_bound'] = {'value': self.escape_bound[0],
                                       't0': self.escape_bound[1]}
        if self.auc is not None:
            rv['auc'] = self.auc
        if self.risks is not None:
            rv['risks'] = self.risks.to_dict()
        return rv


@dataclasses.dataclass(frozen=True, eq=False)
class SweepResult:
    """One row per factor combination, runtimes kept next to the rows."""

    fieldnames: typing.Tuple[str, ...]
    rows: typing.List[dict]
    runtimes: typing.List[float]
    studies: typing.List[StudyResult]

    def render(self, fmt='csv'):
        return utils.render(self.fieldnames, self.rows, fmt)


@dataclasses.dataclass(frozen=True)
class CompareReport:
    fieldnames: typing.Tuple[str, ...]
    rows: typing.List[dict]

    @property
    def all_dominated(self):
        return all(row['dominates'] for row in self.rows)

    def render(self, fmt='csv'):
        return utils.render(self.fieldnames, self.rows, fmt)


def bound_summary(report):
    return {
        'name': report.name,
        'value': report.value,
        'divergent': report.divergent,
        'closed_form': report.closed_form,
        'approximation': report.approximation,
        'terms': report.decomposition,
        'notes': list(report.notes),
    }


def bound_rows(reports):
    rows = []
    for report in reports:
        rows.extend(dict(zip(BOUND_FIELDS, row)) for row in report.rows())
    return rows


def _max_row_norm(*arrays):
    return max(float(np.max(np.linalg.norm(
        np.asarray(a).reshape(-1, np.shape(a)[-1]), axis=1)))
        for a in arrays)


def _read_pool(path, normalize):
    with open(path, 'rb') as f:
        records = data.parse_libsvm(f, binary=True)
    return data.to_dense(records, normalize=normalize)


def compare_report(stability_path, bounds_path, bound_column='bound_fixed'):
    """Join measured stability with bound values on the sweep axes.

    :param stability_path: sweep CSV with eps_mean and eps_stderr
    :param bounds_path: CSV with the same axis columns and
        `bound_column`
    :returns: `CompareReport`, eps_upper = eps_mean + 3 stderr and
        dominates = bound >= eps_upper
    :raises: `SchemaMismatch` on missing columns or unmatched rows
    """
    s_fields, s_rows = utils.read_csv(
        stability_path, required=('eps_mean', 'eps_stderr'))
    b_fields, b_rows = utils.read_csv(bounds_path, required=(bound_column,))

    axes = tuple(axis for axis in constants.SWEEP_AXES if axis in s_fields)
    fieldnames = axes + COMPARE_FIELDS

    if not s_rows:
        return CompareReport(fieldnames=fieldnames, rows=[])

    b_axes = tuple(axis for axis in constants.SWEEP_AXES if axis in b_fields)
    if b_axes != axes:
        raise SchemaMismatch(
            f'Axis columns differ: {", ".join(axes) or "none"} in '
            f'{stability_path}, {", ".join(b_axes) or "none"} in '
            f'{bounds_path}')

    lookup = {tuple(row[axis] for axis in axes): row for row in b_rows}

    rows = []
    for row in s_rows:
        key = tuple(row[axis] for axis in axes)
        if key not in lookup:
            raise SchemaMismatch(
                f'No bound row for {dict(zip(axes, key))} in {bounds_path}')

        eps_mean = float(row['eps_mean'])
        eps_upper = eps_mean + 3.0 * float(row['eps_stderr'])
        bound = float(lookup[key][bound_column])

        if eps_mean > 0:
            ratio = bound / eps_mean
        else:
            ratio = math.inf if bound > 0 else math.nan

        out = {axis: row[axis] for axis in axes}
        out.update(eps_mean=eps_mean, eps_upper=eps_upper, bound=bound,
                   ratio=ratio, dominates=bool(bound >= eps_upper))
        rows.append(out)

    return CompareReport(fieldnames=fieldnames, rows=rows)


class Laboratory(base.StudyBase):
    """Builds experiments from an `ExperimentConfig` and runs them.

    Coupled runs of one study, or of every cell of a sweep, are
    dispatched to a thread pool and gathered in submission order.
    """

    def __init__(self, config, logger=None, cache=None):
        super().__init__(config, logger)
        if cache is None:
            cache = memoize.open_result_cache(config.output.state_dir)
        self._results = cache

    @property
    def workers(self):
        return self._config.run.workers

    @memoize.memoize()
    def setup(self, problem_section, data_section):
        """Problem, dataset and neighbour of a configuration.

        :returns: `Setup`
        """
        family = problem_section.family
        self._logger.debug('Building %s setup with m=%d, n=%d, seed=%d',
                           family, data_section.m, data_section.n,
                           data_section.seed)

        if family == constants.FAMILY_QUADRATIC:
            return self._quadratic_setup(problem_section, data_section)

        if family == constants.FAMILY_AUC:
            return self._auc_setup(problem_section, data_section)

        return self._sine_setup(problem_section, data_section)

    def _neighbor(self, dataset, reservoir, data_section):
        return data.make_neighbor(dataset, reservoir,
                                  seed=data_section.seed + 1,
                                  perturb_index=data_section.perturb_index)

    def _quadratic_setup(self, ps, ds):
        domain = problems_base.DomainSpec(d_x=ps.d_x, d_y=ps.d_y,
                                          C_x=ps.C_x, C_y=ps.C_y)
        synthetic = data.synthesize_quadratic_data(
            ps.d_x, ps.d_y, ds.m, ds.n, ds.sigma, ds.seed,
            reservoir_size=ds.reservoir_size)
        problem = quadratic.QuadraticProblem.random(
            ds.m, domain, mu_x=ps.mu_x, mu_y=ps.mu_y,
            coupling_scale=ps.coupling_scale,
            sample_bound=_max_row_norm(synthetic.dataset.shards,
                                       synthetic.reservoir),
            seed=ps.seed)
        neighbor, perturbation = self._neighbor(
            synthetic.dataset, synthetic.reservoir, ds)

        return Setup(problem=problem, dataset=synthetic.dataset,
                     neighbor=neighbor, perturbation=perturbation,
                     population=synthetic.means[:, None, :])

    def _auc_setup(self, ps, ds):
        if ds.path:
            pool = _read_pool(ds.path, ds.normalize)
            source = ds.path
        else:
            count = ds.pool_size or math.ceil(
                2 * ds.m * ds.n / (1.0 - ds.test_fraction))
            pool = data.synthesize_auc_data(count, ds.n_features, ds.seed)
            source = 'synthetic:auc'

        train, test = data.train_test_split(pool, ds.test_fraction, ds.seed)
        dataset = data.partition(train, ds.m, ds.n, ds.seed, source=source)
        reservoir = data.leftover(train, dataset)
        problem = auc.AucProblem.from_samples(train, ds.m, ps.C_x, ps.C_y)
        neighbor, perturbation = self._neighbor(dataset, reservoir, ds)

        return Setup(problem=problem, dataset=dataset, neighbor=neighbor,
                     perturbation=perturbation, train=train, test=test)

    def _sine_setup(self, ps, ds):
        domain = problems_base.DomainSpec(d_x=ps.d_x, d_y=ps.d_y,
                                          C_x=ps.C_x, C_y=ps.C_y)
        synthetic = data.synthesize_sine_data(
            ds.m, ds.n, ds.sigma, ds.seed, reservoir_size=ds.reservoir_size)
        problem = sine.SineProblem.random(ds.m, domain, bound=ps.bound,
                                          seed=ps.seed)
        neighbor, perturbation = self._neighbor(
            synthetic.dataset, synthetic.reservoir, ds)

        return Setup(problem=problem, dataset=synthetic.dataset,
                     neighbor=neighbor, perturbation=perturbation,
                     probe_pool=synthetic.reservoir[
                         :, :self._config.run.probe_points])

    def mixing(self, topology_section, m):
        kind = topology.TopologyKind(topology_section.variant, m)
        return topology.build_mixing_matrix(kind)

    @staticmethod
    def schedule(config, problem):
        section = config.schedule
        if section.kind == constants.SCHEDULE_FIXED:
            return engine.Schedule.fixed(section.eta_x, section.eta_y)

        mu = section.mu or problem.constants.mu
        if mu <= 0:
            raise ConfigInvalid(
                'decaying schedule needs schedule.mu for a problem without '
                'a positive modulus', key='schedule.mu')
        return engine.Schedule.decaying(mu, section.c, section.max_role)

    def _data_section(self, config, seed):
        section = config.data
        if section.resample:
            section = dataclasses.replace(
                section, seed=section.seed + seed - config.run.seed)
        return section

    def run_config(self, config, setup, mixing, seed):
        return engine.RunConfig(
            problem=setup.problem, samples=setup.dataset.shards,
            mixing=mixing, T=config.run.T,
            schedule=self.schedule(config, setup.problem), seed=seed,
            record_every=config.run.record_every)

    def single_run(self, config=None):
        """One D-SGDA run with the trajectory report rows.

        :returns: tuple of (`Trajectory`, rows of TRAJECTORY_FIELDS)
        """
        config = config or self._config
        setup = self.setup(config.problem, config.data)
        mixing = self.mixing(config.topology, config.data.m)
        cfg = self.run_config(config, setup, mixing, config.run.seed)
        engine.check_step_condition(setup.problem.constants, cfg.schedule,
                                    cfg.T, logger=self._logger)

        trajectory = engine.run(cfg, logger=self._logger)

        saddle = None
        if isinstance(setup.problem, quadratic.QuadraticProblem):
            try:
                saddle = setup.problem.saddle_point(setup.dataset.shards)

            except SaddleOutsideDomain as e:
                self._logger.warning('No interior saddle point: %s', e)

        rows = []
        for k, t in enumerate(trajectory.times):
            x_bar, y_bar = trajectory.x_bar[k], trajectory.y_bar[k]
            if saddle is None:
                distance = math.nan
            else:
                distance = float(np.sqrt(np.sum((x_bar - saddle[0]) ** 2)
                                         + np.sum((y_bar - saddle[1]) ** 2)))
            rows.append({'t': int(t),
                         'consensus': float(trajectory.consensus[k]),
                         'dist_to_saddle': distance,
                         'avg_x_norm': float(np.linalg.norm(x_bar)),
                         'avg_y_norm': float(np.linalg.norm(y_bar))})

        return trajectory, rows

    def topology_table(self, variants, sizes, exponent=1.0):
        """Spectral summary rows for every (variant, m) pair."""
        rows = []
        for variant, m in itertools.product(variants, sizes):
            rows.append(topology.spectral_summary(
                topology.TopologyKind(variant, m), exponent))
        return rows

    def bound_inputs(self, config=None):
        config = config or self._config
        setup = self.setup(config.problem, config.data)
        mixing = self.mixing(config.topology, config.data.m)
        return bounds.BoundInputs(
            constants=setup.problem.constants, n=config.data.n,
            m=config.data.m, T=config.run.T, lambda_=mixing.lambda_,
            schedule=self.schedule(config, setup.problem),
            C_x=setup.problem.domain.C_x, C_y=setup.problem.domain.C_y)

    def bound_reports(self, config=None):
        config = config or self._config
        setup = self.setup(config.problem, config.data)
        return bounds.report_all(self.bound_inputs(config),
                                 setup.problem.regime)

    def _cache_key(self, config, seed):
        document = config.to_dict()
        document.pop('output')
        document.pop('sweep')
        for key in ('workers', 'seeds', 'seed'):
            document['run'].pop(key, None)
        document['data']['seed'] = self._data_section(config, seed).seed
        return memoize.result_key(document, seed)

    def _coupled(self, config, setup, mixing, seed):
        key = None
        if self._results is not None:
            key = self._cache_key(config, seed)
            try:
                return self._results[key]

            except KeyError:
                pass

        cfg = self.run_config(config, setup, mixing, seed)
        run = stability.coupled_run(cfg, setup.neighbor,
                                    perturbation=setup.perturbation,
                                    logger=self._logger)

        if key is not None:
            self._results[key] = run

        return run

    def _seeds(self, config):
        return [config.run.seed + k for k in range(config.run.seeds)]

    def _prepare(self, config):
        mixing = self.mixing(config.topology, config.data.m)
        jobs = []
        for seed in self._seeds(config):
            setup = self.setup(config.problem,
                               self._data_section(config, seed))
            jobs.append((config, setup, mixing, seed))
        return mixing, jobs

    def _finish(self, config, mixing, runs, started):
        setup = self.setup(config.problem, config.data)
        problem = setup.problem
        consts = problem.constants
        schedule = self.schedule(config, problem)

        step_ok = engine.check_step_condition(consts, schedule, config.run.T,
                                              logger=self._logger)

        weak = None
        escape = None
        if problem.regime == constants.REGIME_NCNC:
            weak = stability.weak_stability_estimate(
                runs, config.run.probe_points, setup.probe_pool, problem)
            if consts.B is not None:
                escape = stability.weak_stability_escape_bound(
                    runs, consts.G, consts.B)

        report = stability.argument_stability(runs, at=config.run.at,
                                              epsilon_weak=weak)

        auc_scores = None
        if problem.family == constants.FAMILY_AUC:
            scores = [stability.auc_generalization(
                problem, run.traj_a.x_bar[-1], setup.train, setup.test)
                for run in runs]
            auc_scores = {key: float(np.mean([s[key] for s in scores]))
                          for key in scores[0]}

        risks = None
        if (problem.family == constants.FAMILY_QUADRATIC
                and not config.data.resample):
            models = [run.traj_a.output for run in runs]
            risks = stability.weak_pd_risks(
                models, problem, setup.dataset.shards, setup.population)

        result = StudyResult(
            config=config, lambda_=mixing.lambda_, runs=runs, report=report,
            bounds=bounds.report_all(self.bound_inputs(config),
                                     problem.regime),
            step_condition=step_ok, escape_bound=escape, auc=auc_scores,
            risks=risks, runtime=time.monotonic() - started)

        self._logger.info(
            'Stability of %s on %s(%d), n=%d, T=%d over %d seeds: '
            'eps=%s +- %s', problem.family, config.topology.variant,
            config.data.m, config.data.n, config.run.T, report.seeds,
            report.epsilon, report.stderr)

        return result

    def _execute(self, jobs):
        with futures.ThreadPoolExecutor(max_workers=self.workers) as pool:
            pending = [pool.submit(self._coupled, *job) for job in jobs]
            return [future.result() for future in pending]

    def stability_study(self, config=None):
        """Coupled runs over seeds with their stability estimates.

        With `data.resample` every seed draws its own dataset and
        neighbour, otherwise the dataset is fixed and the seeds vary
        the sampling stream only.

        :returns: `StudyResult`
        """
        config = config or self._config
        started = time.monotonic()
        mixing, jobs = self._prepare(config)
        return self._finish(config, mixing, self._execute(jobs), started)

    def cells(self, config=None):
        """Configurations of the sweep grid in report order.

        :returns: list of (axis values, `ExperimentConfig`)
        """
        config = config or self._config
        sweep = config.sweep
        axes = sweep.axes

        if 'eta' in axes and config.schedule.kind != constants.SCHEDULE_FIXED:
            raise ConfigInvalid('the eta axis needs a fixed schedule',
                                key='sweep.eta')

        cells = []
        for values in itertools.product(*(getattr(sweep, a) for a in axes)):
            cell = config
            for axis, value in zip(axes, values):
                if axis == 'eta':
                    cell = cell.override('schedule', eta_x=value, eta_y=value)
                elif axis == 'topology':
                    cell = cell.override('topology', variant=value)
                else:
                    cell = cell.override('data', **{axis: value})
            cells.append((dict(zip(axes, values)), cell))

        return cells

    @staticmethod
    def sweep_bounds(result):
        """Fixed-form and exact stability bound of a study's regime."""
        regime = result.runs[0].cfg.problem.regime
        fixed = exact = math.nan

        def value(name, attr='value'):
            report = result.bound(name)
            if report is None:
                return math.nan
            rv = getattr(report, attr)
            return math.nan if rv is None else rv

        if regime == constants.REGIME_SCSC:
            exact = value('scsc_stability_general')
            if result.bound('scsc_stability_fixed') is not None:
                fixed = value('scsc_stability_fixed')
            else:
                fixed = value('scsc_stability_decaying', 'approximation')
                exact = value('scsc_stability_decaying')

        elif regime == constants.REGIME_CC:
            fixed = value('cc_stability', 'closed_form')
            exact = value('cc_stability')

        else:
            fixed = value('ncnc_weak_stability')

        return fixed, exact

    def sweep(self, config=None):
        """Stability study over the Cartesian product of the sweep axes.

        :returns: `SweepResult` with rows of the axes followed by
            SWEEP_FIELDS
        """
        config = config or self._config
        cells = self.cells(config)
        axes = config.sweep.axes

        prepared = []
        for values, cell in cells:
            with _cell_context(values):
                prepared.append(self._prepare(cell))

        self._logger.info('Sweeping %d combination(s) of %s with %d '
                          'worker(s)', len(cells), ', '.join(axes) or 'none',
                          self.workers)

        started = time.monotonic()
        jobs = [job for _, cell_jobs in prepared for job in cell_jobs]
        runs = self._execute(jobs)

        rows, runtimes, studies = [], [], []
        offset = 0
        for (values, cell), (mixing, cell_jobs) in zip(cells, prepared):
            cell_runs = runs[offset:offset + len(cell_jobs)]
            offset += len(cell_jobs)

            with _cell_context(values):
                study = self._finish(cell, mixing, cell_runs, started)
            fixed, exact = self.sweep_bounds(study)
            G = study.runs[0].cfg.problem.constants.G

            row = dict(values)
            row.update(seed_count=study.report.seeds,
                       eps_mean=study.report.epsilon,
                       eps_stderr=study.report.stderr,
                       bound_fixed=fixed, bound_exact=exact,
                       gap_weak=stability.gen_gap_from_stability(
                           study.report.epsilon, G, None, None))
            rows.append(row)
            runtimes.append(study.runtime)
            studies.append(study)

        return SweepResult(fieldnames=tuple(axes) + SWEEP_FIELDS, rows=rows,
                           runtimes=runtimes, studies=studies)


@contextlib.contextmanager
def _cell_context(values):
    try:
        yield

    except LabError as e:
        # keep the error class and exit code, name the failing cell
        e.args = (f'sweep cell {values}: {e}',)
        raise
