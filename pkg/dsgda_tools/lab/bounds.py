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

"""Closed-form stability, optimization and risk bounds of D-SGDA.

All functions are pure. A spectral value of 1 makes every bound with
a 1/(1 - lambda) or C_lambda factor divergent: its value is infinite
and the report is flagged. Sums use compensated accumulation.
"""

import dataclasses
import logging
import math
import typing

import numpy as np

from dsgda_tools.error import BoundUndefined
from dsgda_tools.error import ConfigInvalid
from dsgda_tools.error import InvariantViolation
from dsgda_tools.error import MissingB
from dsgda_tools.error import ZeroModulus
from dsgda_tools.lab import constants
from dsgda_tools.lab import topology

LOG = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


@dataclasses.dataclass(frozen=True)
class BoundInputs:
    """Everything a bound depends on.

    `B` overrides the loss bound carried by the problem constants.
    """

    constants: typing.Any
    n: int
    m: int
    T: int
    lambda_: float
    schedule: typing.Any
    C_x: float = 1.0
    C_y: float = 1.0
    B: typing.Optional[float] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.T < 1:
            raise ConfigInvalid(
                f'n, m and T must be positive, got n={self.n}, m={self.m}, '
                f'T={self.T}')

        if not 0.0 <= self.lambda_ <= 1.0:
            raise ConfigInvalid(
                f'lambda must be in [0, 1], got {self.lambda_}')

        if self.C_x < 0 or self.C_y < 0:
            raise ConfigInvalid('domain radii must be nonnegative')

    @property
    def G(self):
        return self.constants.G

    @property
    def L(self):
        return self.constants.L

    @property
    def mu(self):
        return min(self.constants.mu_x, self.constants.mu_y)

    @property
    def loss_bound(self):
        return self.B if self.B is not None else self.constants.B

    @property
    def divergent_topology(self):
        return self.lambda_ >= 1.0

    def eta_max(self):
        return self.schedule.eta_max_series(self.T)

    def eta_min(self):
        return self.schedule.eta_min_series(self.T)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class BoundReport:
    """Evaluated bound with its additive decomposition.

    :ivar value: sum of the terms, infinite when divergent
    :ivar divergent: a denominator or convergence condition fails
    :ivar closed_form: simplified closed form next to an exact sum
    :ivar approximation: labelled simplified form, not a bound
    """

    name: str
    value: float
    terms: typing.Tuple[typing.Tuple[str, float], ...]
    divergent: bool = False
    closed_form: typing.Optional[float] = None
    approximation: typing.Optional[float] = None
    notes: typing.Tuple[str, ...] = ()

    @property
    def decomposition(self):
        return dict(self.terms)

    def rows(self):
        """Rows of (bound_name, value, term, term_value)."""
        return [(self.name, self.value, term, term_value)
                for term, term_value in self.terms]


def _report(name, terms, divergent=False, **kwargs):
    terms = tuple((term, float(value)) for term, value in terms)
    values = [value for _, value in terms]
    if any(math.isinf(value) for value in values):
        value = math.inf
        divergent = True
    else:
        value = math.fsum(values)
    return BoundReport(name=name, value=value, terms=terms,
                       divergent=divergent, **kwargs)


def _over_gap(numerator, lambda_):
    # numerator / (1 - lambda) with 0 / 0 taken as 0
    if numerator == 0:
        return 0.0
    if lambda_ >= 1.0:
        return math.inf
    return numerator / (1.0 - lambda_)


def _times(factor, value):
    # factor * value with 0 * inf taken as 0
    if factor == 0 or value == 0:
        return 0.0
    return factor * value


def _drift(eta_max, lambda_):
    # g_k = sum_{s<k} eta_s lambda^(k-1-s) = lambda g_(k-1) + eta_(k-1)
    drift = np.zeros(len(eta_max))
    for k in range(1, len(eta_max)):
        drift[k] = lambda_ * drift[k - 1] + eta_max[k - 1]
    return drift


def _suffix_products(rho):
    # P_k = prod_{s=k+1}^{T-1} rho_s
    products = np.ones(len(rho))
    if len(rho) > 1:
        products[:-1] = np.cumprod(rho[:0:-1])[::-1]
    return products


def _require_schedule(inputs, kind, name):
    if inputs.schedule.kind != kind:
        raise BoundUndefined(
            f'{name} needs a {kind} schedule, got {inputs.schedule.kind}')


def _require_mu(inputs, name):
    if inputs.mu <= 0:
        raise ZeroModulus(f'{name} needs positive moduli')


def _require_eta_min(eta_min, name):
    if eta_min <= 0:
        raise BoundUndefined(f'{name} needs a positive minimum rate')


def scsc_stability_general(inputs):
    """Exact partial sums of the strongly monotone stability bound."""
    _require_mu(inputs, 'SC-SC stability')
    G, L, mu = inputs.G, inputs.L, inputs.mu

    eta_max = inputs.eta_max()
    rho = 1.0 - inputs.eta_min() * L * mu / (L + mu)
    products = _suffix_products(rho)
    drift = _drift(eta_max, inputs.lambda_)

    sample = 2.0 * G / inputs.n * math.fsum(eta_max * products)
    topo = 4.0 * G * L * math.fsum((eta_max * drift * products)[1:])

    return _report('scsc_stability_general',
                   [('sample', sample), ('topology', topo)])


def scsc_stability_fixed(inputs):
    """Fixed-rate closed form of the strongly monotone stability bound."""
    _require_schedule(inputs, constants.SCHEDULE_FIXED,
                      'scsc_stability_fixed')
    _require_mu(inputs, 'SC-SC stability')
    G, L, mu = inputs.G, inputs.L, inputs.mu
    eta_max = float(inputs.eta_max()[0])
    eta_min = float(inputs.eta_min()[0])
    _require_eta_min(eta_min, 'scsc_stability_fixed')

    scale = 2.0 * G * (L + mu) / (eta_min * L * mu)
    topo = _times(scale, _over_gap(2.0 * eta_max ** 2 * L, inputs.lambda_))
    sample = scale * eta_max / inputs.n

    return _report('scsc_stability_fixed',
                   [('sample', sample), ('topology', topo)])


def scsc_stability_decaying(inputs):
    """Decaying-rate stability bound by exact partial sums.

    A disconnected graph makes the value infinite even for T=1. The
    report is flagged divergent, with its finite value kept, when
    2c < L/(L+mu) + 1. The simplified closed form is attached as an
    approximation whenever the exponent condition holds.
    """
    _require_schedule(inputs, constants.SCHEDULE_DECAYING,
                      'scsc_stability_decaying')
    _require_mu(inputs, 'SC-SC stability')
    G, L, mu, T, n = inputs.G, inputs.L, inputs.mu, inputs.T, inputs.n
    c = inputs.schedule.c
    a = L / (L + mu)
    c_lam = topology.c_lambda_or_limit(inputs.lambda_, c)

    k = np.arange(T, dtype=float)
    first = math.fsum((k + 1) ** (a - c))
    second = math.fsum(((k[1:] + 1) ** (a - c)) / k[1:] ** c)

    sample = 2.0 * G / (mu * n * T ** a) * first
    topo = _times(4.0 * G * L / (mu * mu * T ** a) * second, c_lam)
    if inputs.divergent_topology:
        topo = math.inf

    condition = 2.0 * c - a - 1.0
    notes = []
    approximation = None
    if condition < 0 and not math.isclose(condition, 0.0, abs_tol=1e-12):
        notes.append('2c < L/(L+mu) + 1, the bound grows with T')
    else:
        if math.isclose(condition, 0.0, abs_tol=1e-12):
            spectral = math.log(T)
        else:
            spectral = 1.0 / condition
        approximation = math.fsum((
            2.0 * G / (mu * (1.0 - c + a)) * T ** (1.0 - c) / n,
            _times(4.0 * G * L / (mu * mu * T ** a) * spectral, c_lam)))

    report = _report('scsc_stability_decaying',
                     [('sample', sample), ('topology', topo)],
                     divergent=bool(notes), approximation=approximation,
                     notes=tuple(notes))
    return report


def cc_stability(inputs):
    """Convex-concave stability: exact sums and the fixed closed form.

    Both diverge on a disconnected graph unless every rate is zero.

    :raises: `InvariantViolation` if the exact sum exceeds the closed form
    """
    G, L = inputs.G, inputs.L
    eta_max = inputs.eta_max()
    drift = _drift(eta_max, inputs.lambda_)

    sample = 2.0 * G / inputs.n * math.fsum(eta_max)
    topo = 4.0 * G * L * math.fsum((eta_max * drift)[1:])
    if inputs.divergent_topology and eta_max.any():
        topo = math.inf

    closed = None
    if inputs.schedule.is_fixed:
        eta = float(eta_max[0])
        closed = math.fsum((
            2.0 * G * eta * inputs.T / inputs.n,
            _over_gap(4.0 * G * L * eta ** 2 * inputs.T, inputs.lambda_)))

        exact = math.fsum((sample, topo))
        if exact > closed * (1 + 1e-12) + 1e-300:
            raise InvariantViolation(
                f'C-C stability sum {exact!r} exceeds its closed form '
                f'{closed!r}')

    return _report('cc_stability', [('sample', sample), ('topology', topo)],
                   closed_form=closed)


def ncnc_weak_stability(inputs, mode=None):
    """Nonconvex-nonconcave weak stability bound.

    :param mode: 'fixed' or 'decaying', defaults to the schedule kind
    :raises: `BoundUndefined` if c + L <= 1 in decaying mode
    :raises: `MissingB` if decaying mode has no loss bound
    """
    mode = mode or inputs.schedule.kind
    G, L, T, n, m = inputs.G, inputs.L, inputs.T, inputs.n, inputs.m

    if mode == constants.SCHEDULE_FIXED:
        eta = float(inputs.eta_max()[0])
        scale = 2.0 * SQRT2 * G * G
        return _report('ncnc_weak_stability', [
            ('sample', scale * eta * T / n),
            ('topology', _times(scale, _over_gap(2.0 * L * eta ** 2 * T,
                                                 inputs.lambda_)))])

    if mode != constants.SCHEDULE_DECAYING:
        raise ValueError(f'Unknown mode {mode!r}')

    c = inputs.schedule.c
    power = c + L
    if power <= 1.0:
        raise BoundUndefined(
            f'Decaying weak stability needs c + L > 1, got {power}')

    B = inputs.loss_bound
    if B is None:
        raise MissingB()

    c_lam = topology.c_lambda_or_limit(inputs.lambda_, c)
    if math.isinf(c_lam):
        return _report('ncnc_weak_stability', [('weak', math.inf)])

    try:
        growth = T ** L
        inner = math.fsum((
            2.0 * SQRT2 * G * G * growth / ((power - 1.0) * n),
            4.0 * SQRT2 * G * G * L * c_lam * growth / (2.0 * c + L - 1.0)))
        value = (power * (power - 1.0) ** (1.0 / power)
                 * inner ** (1.0 / power)
                 * (B * m / n) ** (1.0 - 1.0 / power))
    except OverflowError:
        value = math.inf

    return _report('ncnc_weak_stability', [('weak', value)])


def _fixed_optimization_terms(inputs, name):
    G, L = inputs.G, inputs.L
    eta_max = float(inputs.eta_max()[0])
    eta_min = float(inputs.eta_min()[0])
    _require_eta_min(eta_min, name)
    radii = inputs.C_x + inputs.C_y

    return [
        ('initialization',
         (inputs.C_x ** 2 + inputs.C_y ** 2) / (2.0 * eta_min * inputs.T)),
        ('variance', eta_max * G * G),
        ('consensus', _over_gap(4.0 * radii * G * L * eta_max,
                                inputs.lambda_)),
        ('sampling', 2.0 * radii * G / math.sqrt(inputs.T)),
    ]


def _decay_term(G, mu_alpha, c_alpha, T):
    if c_alpha >= 1.0:
        return G * G / (2.0 * mu_alpha) * (1.0 + math.log(T)) / T, 'c=1'
    return (G * G / (2.0 * mu_alpha * (1.0 - c_alpha) * T ** c_alpha),
            '0<c<1')


def scsc_optimization_error(inputs, mode=None):
    """Strong primal-dual empirical risk bound of the average iterate.

    :param mode: 'fixed' or 'decaying', defaults to the schedule kind
    """
    mode = mode or inputs.schedule.kind

    if mode == constants.SCHEDULE_FIXED:
        return _report('scsc_optimization_error',
                       _fixed_optimization_terms(
                           inputs, 'scsc_optimization_error'))

    if mode != constants.SCHEDULE_DECAYING:
        raise ValueError(f'Unknown mode {mode!r}')

    _require_schedule(inputs, constants.SCHEDULE_DECAYING,
                      'decaying optimization error')
    consts = inputs.constants
    if consts.mu_x <= 0 or consts.mu_y <= 0:
        raise ZeroModulus('Decaying optimization error needs positive moduli')

    G, L, T = inputs.G, inputs.L, inputs.T
    radii = inputs.C_x + inputs.C_y
    c_x, c_y = inputs.schedule.c_x, inputs.schedule.c_y
    k_min = min(c_x, c_y)
    c_lam = topology.c_lambda_or_limit(inputs.lambda_, k_min)

    term_x, branch_x = _decay_term(G, consts.mu_x, c_x, T)
    term_y, branch_y = _decay_term(G, consts.mu_y, c_y, T)

    scale = 4.0 * G * L * radii / inputs.mu
    if k_min >= 1.0:
        term_max, branch_max = _times(scale * math.log(T) / T, c_lam), 'k=1'
    else:
        term_max = _times(scale / ((1.0 - k_min) * T ** k_min), c_lam)
        branch_max = '0<k<1'

    return _report('scsc_optimization_error', [
        ('sampling', 2.0 * G * radii / math.sqrt(T)),
        ('T_x', term_x),
        ('T_y', term_y),
        ('T_max', term_max),
    ], notes=(f'T_x branch {branch_x}', f'T_y branch {branch_y}',
              f'T_max branch {branch_max}'))


def cc_optimization_error(inputs):
    """Weak primal-dual empirical risk bound for convex-concave losses."""
    _require_schedule(inputs, constants.SCHEDULE_FIXED,
                      'cc_optimization_error')
    return _report('cc_optimization_error',
                   _fixed_optimization_terms(inputs, 'cc_optimization_error'))


SETTING_SCSC_FIXED = 'scsc_fixed'
SETTING_SCSC_DECAYING = 'scsc_decaying'
SETTING_CC_FIXED = 'cc_fixed'


def population_risk_bound(inputs, setting):
    """Population risk as generalization gap plus optimization error.

    value = multiplier * stability + optimization, with the strong
    multiplier G sqrt(2 + 2 L^2/mu^2) for the strongly monotone
    settings and sqrt(2) G for the convex-concave one.
    """
    G, L = inputs.G, inputs.L

    if setting == SETTING_SCSC_FIXED:
        _require_mu(inputs, 'Strong population risk')
        stability = scsc_stability_fixed(inputs).value
        optimization = scsc_optimization_error(inputs,
                                               constants.SCHEDULE_FIXED)
        multiplier = G * math.sqrt(2.0 + 2.0 * L * L / inputs.mu ** 2)

    elif setting == SETTING_SCSC_DECAYING:
        _require_mu(inputs, 'Strong population risk')
        stability = scsc_stability_decaying(inputs).value
        optimization = scsc_optimization_error(inputs,
                                               constants.SCHEDULE_DECAYING)
        multiplier = G * math.sqrt(2.0 + 2.0 * L * L / inputs.mu ** 2)

    elif setting == SETTING_CC_FIXED:
        stability = cc_stability(inputs).closed_form
        optimization = cc_optimization_error(inputs)
        multiplier = SQRT2 * G

    else:
        raise ValueError(f'Unknown population risk setting {setting!r}')

    terms = [('generalization', _times(multiplier, stability))]
    terms.extend((f'optimization:{term}', value)
                 for term, value in optimization.terms)

    return _report(f'population_risk_{setting}', terms,
                   notes=optimization.notes)


def report_all(inputs, regime):
    """Every bound that applies to a convexity regime and schedule.

    Bounds whose preconditions fail are skipped and logged.
    """
    fixed = inputs.schedule.is_fixed

    if regime == constants.REGIME_SCSC:
        evaluators = [scsc_stability_general,
                      scsc_stability_fixed if fixed
                      else scsc_stability_decaying,
                      scsc_optimization_error,
                      lambda i: population_risk_bound(
                          i, SETTING_SCSC_FIXED if fixed
                          else SETTING_SCSC_DECAYING)]

    elif regime == constants.REGIME_CC:
        evaluators = [cc_stability]
        if fixed:
            evaluators += [cc_optimization_error,
                           lambda i: population_risk_bound(
                               i, SETTING_CC_FIXED)]

    elif regime == constants.REGIME_NCNC:
        evaluators = [ncnc_weak_stability]

    else:
        raise ValueError(f'Unknown regime {regime!r}')

    reports = []
    for evaluator in evaluators:
        try:
            reports.append(evaluator(inputs))

        except (BoundUndefined, MissingB, ZeroModulus) as e:
            LOG.debug('Skipping bound: %s', e)

    return reports
