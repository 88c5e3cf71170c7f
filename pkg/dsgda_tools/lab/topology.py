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

"""Gossip graphs, their mixing matrices and spectral constants."""

import dataclasses
import math

import networkx
import numpy as np

from dsgda_tools.error import ConfigInvalid
from dsgda_tools.error import DegenerateSpectrum
from dsgda_tools.error import InvalidSize
from dsgda_tools.error import InvariantViolation
from dsgda_tools.error import NotSymmetric
from dsgda_tools.lab import constants
from dsgda_tools.lab import memoize


@dataclasses.dataclass(frozen=True)
class TopologyKind:
    """Communication graph variant over `m` agents."""

    variant: str
    m: int

    def __post_init__(self):
        if self.variant not in constants.TOPOLOGIES:
            raise ConfigInvalid(
                f"unknown topology {self.variant!r}, expected one of "
                f"{', '.join(constants.TOPOLOGIES)}", key='topology')

    @property
    def label(self):
        return f'{self.variant}({self.m})'


class MixingMatrix(object):
    """Symmetric doubly stochastic gossip weights.

    The weights are read-only, the spectrum and the derived
    spectral values are computed once per instance.
    """

    def __init__(self, weights, kind=None):
        weights = np.array(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise InvalidSize(
                f'Mixing matrix must be square, got shape {weights.shape}')
        weights.setflags(write=False)
        self._weights = weights
        self.kind = kind

    def __repr__(self):
        return f'<MixingMatrix {self.kind.label if self.kind else self.m}>'

    @property
    def weights(self):
        return self._weights

    @property
    def m(self):
        return self._weights.shape[0]

    @property
    @memoize.memoize()
    def eigenvalues(self):
        return spectrum(self)

    @property
    @memoize.memoize()
    def lambda_(self):
        """Second largest eigenvalue magnitude

        :returns: max(|lambda_2|, |lambda_m|) as `float`, exactly 0 for
            a single agent and snapped to 0 or 1 within solver tolerance
        """
        if self.m == 1:
            return 0.0

        eigenvalues = self.eigenvalues
        value = float(max(abs(eigenvalues[1]), abs(eigenvalues[-1])))

        if value <= constants.JACOBI_TOL:
            return 0.0

        if abs(1.0 - value) <= constants.JACOBI_TOL:
            return 1.0

        return value

    @property
    def spectral_gap(self):
        return 1.0 - self.lambda_

    def check(self):
        """Verify the mixing matrix invariants.

        :raises: `NotSymmetric` or `InvariantViolation` naming the
            failed invariant
        """
        w = self._weights
        asym = float(np.max(np.abs(w - w.T)))
        if asym > constants.SYMMETRY_TOL:
            raise NotSymmetric(f'Mixing matrix asymmetry {asym!r}')

        if np.any(w < 0):
            raise InvariantViolation('Mixing matrix has negative entries')

        rows = float(np.max(np.abs(w.sum(axis=1) - 1.0)))
        cols = float(np.max(np.abs(w.sum(axis=0) - 1.0)))
        if max(rows, cols) > constants.STOCHASTIC_TOL:
            raise InvariantViolation(
                f'Mixing matrix is not doubly stochastic '
                f'(row error {rows!r}, column error {cols!r})')

        top = float(self.eigenvalues[0])
        if abs(top - 1.0) > 1e-10:
            raise InvariantViolation(
                f'Largest mixing eigenvalue is {top!r}, expected 1')

        return self


def _exponential_graph(m):
    graph = networkx.empty_graph(m)
    hop = 1
    while hop < m:
        graph.add_edges_from((i, (i + hop) % m) for i in range(m))
        hop *= 2

    graph.remove_edges_from(networkx.selfloop_edges(graph))
    return graph


def _grid_graph(m):
    side = math.isqrt(m)
    if side * side != m:
        raise InvalidSize(f'Grid topology needs a perfect square, got m={m}')

    return networkx.convert_node_labels_to_integers(
        networkx.grid_2d_graph(side, side), ordering='sorted')


def _metropolis_weights(graph):
    m = graph.number_of_nodes()
    weights = np.zeros((m, m))
    degree = dict(graph.degree())

    for i, j in graph.edges():
        weights[i, j] = weights[j, i] = 1.0 / (
            1 + max(degree[i], degree[j]))

    weights[np.diag_indices(m)] = 1.0 - weights.sum(axis=1)
    return weights


def _ring_weights(m):
    # uniform self and two-neighbour weights once the cycle is simple
    weights = np.zeros((m, m))
    for i in range(m):
        for j in (i - 1, i, i + 1):
            weights[i, j % m] = 1.0 / 3.0

    return weights


def build_mixing_matrix(kind):
    """Build the gossip weights of a topology.

    :param kind: `TopologyKind` to build
    :returns: `MixingMatrix` satisfying the mixing invariants
    :raises: `InvalidSize` when `m` is not positive or a grid is
        requested for a non-square agent count
    """
    m = kind.m
    if m < 1:
        raise InvalidSize(f'Topology needs at least one agent, got m={m}')

    if m == 1 or kind.variant == constants.TOPOLOGY_SINGLE:
        weights = np.eye(m)

    elif kind.variant == constants.TOPOLOGY_FULL:
        weights = np.full((m, m), 1.0 / m)

    elif kind.variant == constants.TOPOLOGY_RING and m >= 3:
        weights = _ring_weights(m)

    else:
        if kind.variant == constants.TOPOLOGY_RING:
            graph = networkx.cycle_graph(m)

        elif kind.variant == constants.TOPOLOGY_STAR:
            graph = networkx.star_graph(m - 1)

        elif kind.variant == constants.TOPOLOGY_GRID:
            graph = _grid_graph(m)

        else:
            graph = _exponential_graph(m)

        weights = _metropolis_weights(graph)

    return MixingMatrix(weights, kind=kind)


def _jacobi_eigenvalues(matrix, tol=constants.JACOBI_TOL, max_sweeps=100):
    a = np.array(matrix, dtype=float)
    m = a.shape[0]

    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol:
            break

        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue

                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q

                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q

                a[p, q] = a[q, p] = 0.0

    return np.sort(np.diag(a))[::-1]


def spectrum(w):
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    :param w: `MixingMatrix` or square array
    :returns: eigenvalues in descending order as `numpy.ndarray`
    :raises: `NotSymmetric` if the matrix is not symmetric within 1e-12
    :raises: `InvalidSize` above the solver dimension cap
    """
    weights = w.weights if isinstance(w, MixingMatrix) else np.asarray(
        w, dtype=float)

    if weights.shape[0] > constants.JACOBI_MAX_DIM:
        raise InvalidSize(
            f'Eigen-solver supports up to {constants.JACOBI_MAX_DIM} '
            f'agents, got {weights.shape[0]}')

    asym = float(np.max(np.abs(weights - weights.T))) if weights.size else 0
    if asym > constants.SYMMETRY_TOL:
        raise NotSymmetric(f'Matrix asymmetry {asym!r} exceeds tolerance')

    return _jacobi_eigenvalues(weights)


def c_lambda(lambda_, exponent):
    """Topology constant bounding geometric-polynomial convolutions.

    :param lambda_: spectral value in (0, 1)
    :param exponent: decay exponent in (0, 1]
    :returns: the constant as `float`
    :raises: `DegenerateSpectrum` for lambda 0 or 1
    """
    if not 0.0 < exponent <= 1.0:
        raise ValueError(f'Decay exponent must be in (0, 1], got {exponent}')

    if lambda_ <= 0.0 or lambda_ >= 1.0:
        raise DegenerateSpectrum(lambda_)

    k = exponent
    log_inv = math.log(1.0 / lambda_)
    scale = lambda_ * log_inv

    return math.fsum((
        (k / math.e) ** k / (lambda_ * log_inv ** k),
        2.0 / math.e / scale,
        2.0 ** k / scale,
    ))


def c_lambda_or_limit(lambda_, exponent):
    """`c_lambda` with the degenerate spectra mapped to their limits.

    A fully connected spectrum has no cross-agent drift and yields 0,
    a disconnected one makes every bound diverge and yields infinity.
    """
    if lambda_ <= 0.0:
        return 0.0

    if lambda_ >= 1.0:
        return math.inf

    return c_lambda(lambda_, exponent)


def geometric_decay_sum(lambda_, exponent, t):
    """Exact sum over j < t of lambda^(t-1-j) / (j+1)^k."""
    return math.fsum(lambda_ ** (t - 1 - j) / (j + 1) ** exponent
                     for j in range(t))


def geometric_decay_bound_holds(lambda_, exponent, t_max):
    """Check the decay sums against C_lambda / t^k for all t <= t_max.

    The sums follow the recursion S_t = lambda * S_(t-1) + t^-k.

    :returns: tuple of (holds, first violating `t` or `None`)
    """
    bound = c_lambda(lambda_, exponent)
    partial = 0.0

    for t in range(1, t_max + 1):
        partial = lambda_ * partial + 1.0 / t ** exponent
        if partial > bound / t ** exponent * (1 + 1e-12):
            return False, t

    return True, None


def spectral_summary(kind, exponent):
    """Row of the `topology` report for a topology.

    :returns: `dict` with topology, m, lambda, gap, c and c_lambda keys
    """
    mixing = build_mixing_matrix(kind)
    lambda_ = mixing.lambda_

    return {
        'topology': kind.variant,
        'm': kind.m,
        'lambda': lambda_,
        'gap': mixing.spectral_gap,
        'c': exponent,
        'c_lambda': c_lambda_or_limit(lambda_, exponent),
    }
