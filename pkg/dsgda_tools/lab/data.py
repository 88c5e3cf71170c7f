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

"""Datasets, their partition across agents and neighbouring datasets."""

import dataclasses
import itertools
import logging
import math
import re
import typing

import numpy as np

from dsgda_tools.error import EmptyReservoir
from dsgda_tools.error import InsufficientData
from dsgda_tools.error import ParseError
from dsgda_tools.lab import constants

LOG = logging.getLogger(__name__)

_TOKEN = re.compile(r'\S+')


@dataclasses.dataclass(frozen=True)
class LabeledSample:
    """One LIBSVM record, feature indices are 1-based."""

    label: float
    features: typing.Dict[int, float] = dataclasses.field(
        default_factory=dict)


@dataclasses.dataclass(frozen=True, eq=False)
class DistributedDataset:
    """Samples of `m` agents, `n` rows of equal width each.

    :ivar shards: read-only array of shape (m, n, width)
    :ivar source: identifier of the sample source
    :ivar seed: partition seed, `None` for generated data
    :ivar indices: pool row of every shard slot, if partitioned
    """

    shards: np.ndarray
    source: str = 'memory'
    seed: typing.Optional[int] = None
    indices: typing.Optional[np.ndarray] = None

    def __post_init__(self):
        shards = np.array(self.shards, dtype=float)
        if shards.ndim != 3:
            raise InsufficientData(
                f'Shards must have shape (m, n, width), got {shards.shape}')
        shards.setflags(write=False)
        object.__setattr__(self, 'shards', shards)

    @property
    def m(self):
        return self.shards.shape[0]

    @property
    def n(self):
        return self.shards.shape[1]

    @property
    def width(self):
        return self.shards.shape[2]

    def replace(self, shards):
        return dataclasses.replace(self, shards=shards)


@dataclasses.dataclass(frozen=True, eq=False)
class NeighborPerturbation:
    """Replaced slot of every shard, positions are zero-based."""

    positions: np.ndarray
    replacements: np.ndarray


def _parse_number(text, lineno, column, what):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(lineno, column, f'non-numeric {what} {text!r}')

    if not math.isfinite(value):
        raise ParseError(lineno, column, f'non-finite {what} {text!r}')

    return value


def _lines(stream):
    if isinstance(stream, (bytes, str)):
        stream = stream.splitlines()

    for lineno, raw in enumerate(stream, 1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode('utf-8')
            except UnicodeDecodeError as e:
                raise ParseError(lineno, e.start + 1,
                                 f'invalid UTF-8 byte {raw[e.start]:#04x}')
        yield lineno, raw


def parse_libsvm(stream, binary=False):
    """Parse LIBSVM records.

    :param stream: text, bytes or an iterable of text or byte lines
    :param binary: map labels {0, -1} to -1 and {1} to +1, any other
        label is an error
    :returns: list of `LabeledSample` in input order
    :raises: `ParseError` with 1-based line and column
    """
    samples = []

    for lineno, line in _lines(stream):
        line = line.split('#', 1)[0]
        tokens = list(_TOKEN.finditer(line))
        if not tokens:
            continue

        label = _parse_number(
            tokens[0].group(), lineno, tokens[0].start() + 1, 'label')

        if binary:
            if label in (0.0, -1.0):
                label = -1.0
            elif label == 1.0:
                label = 1.0
            else:
                raise ParseError(lineno, tokens[0].start() + 1,
                                 f'label {label!r} is not binary')

        features = {}
        previous = 0

        for token in tokens[1:]:
            column = token.start() + 1
            text = token.group()
            if ':' not in text:
                raise ParseError(lineno, column, f'missing colon in {text!r}')

            index, value = text.split(':', 1)
            try:
                index = int(index)
            except ValueError:
                raise ParseError(lineno, column,
                                 f'non-numeric index {index!r}')

            if index <= previous:
                raise ParseError(lineno, column,
                                 f'non-increasing index {index}')

            features[index] = _parse_number(value, lineno, column, 'value')
            previous = index

        samples.append(LabeledSample(label, features))

    LOG.debug('Parsed %d LIBSVM records', len(samples))
    return samples


def serialize_libsvm(samples):
    """Render records as LIBSVM text with 17 significant digits."""
    lines = []
    for sample in samples:
        fields = ['%.17g' % sample.label]
        fields.extend('%d:%.17g' % (index, value)
                      for index, value in sorted(sample.features.items()))
        lines.append(' '.join(fields))

    return ''.join(line + '\n' for line in lines)


def to_dense(samples, n_features=None, normalize=False):
    """Turn records into rows [label, f_1, ..., f_d].

    :param n_features: feature count, defaults to the largest index
    :param normalize: scale every feature column by its max magnitude
    """
    if n_features is None:
        n_features = max((max(s.features, default=0) for s in samples),
                         default=0)

    rows = np.zeros((len(samples), n_features + 1))
    for row, sample in zip(rows, samples):
        row[0] = sample.label
        for index, value in sample.features.items():
            if index <= n_features:
                row[index] = value

    if normalize and len(rows):
        scale = np.max(np.abs(rows[:, 1:]), axis=0)
        scale[scale == 0] = 1.0
        rows[:, 1:] /= scale

    return rows


def partition(pool, m, n, seed, source='memory'):
    """Deal a shuffled pool round-robin into `m` shards of `n` rows.

    Shard `i` takes the shuffled rows i, i + m, i + 2m, ... of the
    first m * n shuffled rows.

    :raises: `InsufficientData` if the pool holds fewer than m * n rows
    """
    pool = np.asarray(pool, dtype=float)
    if m < 1 or n < 1:
        raise InsufficientData(f'Need m >= 1 and n >= 1, got m={m}, n={n}')

    if len(pool) < m * n:
        raise InsufficientData(
            f'Pool of {len(pool)} samples cannot fill {m} shards of {n}')

    order = np.random.default_rng(seed).permutation(len(pool))[:m * n]
    indices = order.reshape(n, m).T

    return DistributedDataset(shards=pool[indices], source=source,
                              seed=seed, indices=indices)


def leftover(pool, dataset):
    """Pool rows not dealt into the dataset, in pool order."""
    pool = np.asarray(pool, dtype=float)
    used = np.zeros(len(pool), dtype=bool)
    used[dataset.indices.ravel()] = True
    return pool[~used]


def train_test_split(pool, test_fraction, seed):
    """Split rows into a training pool and a held-out test split."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(
            f'test fraction must be in [0, 1), got {test_fraction}')

    pool = np.asarray(pool, dtype=float)
    order = np.random.default_rng(seed).permutation(len(pool))
    held_out = int(round(len(pool) * test_fraction))
    return pool[order[held_out:]], pool[order[:held_out]]


def make_neighbor(dataset, reservoir, seed,
                  perturb_index=constants.PERTURB_LAST):
    """Replace one sample of every shard by a fresh reservoir sample.

    :param reservoir: rows shared by all agents, shape (r, width), or
        per-agent rows, shape (m, r, width)
    :param perturb_index: 'last' replaces position n, 'random' a
        uniformly drawn position per shard
    :returns: tuple of the neighbouring `DistributedDataset` and the
        `NeighborPerturbation`
    :raises: `EmptyReservoir`
    """
    reservoir = np.asarray(reservoir, dtype=float)
    if reservoir.size == 0:
        raise EmptyReservoir()

    rng = np.random.default_rng(seed)
    m, n = dataset.m, dataset.n

    if reservoir.ndim == 3:
        picks = rng.integers(reservoir.shape[1], size=m)
        replacements = reservoir[np.arange(m), picks]

    else:
        picks = rng.choice(len(reservoir), size=m,
                           replace=len(reservoir) < m)
        replacements = reservoir[picks]

    if perturb_index == constants.PERTURB_RANDOM:
        positions = rng.integers(n, size=m)
    elif perturb_index == constants.PERTURB_LAST:
        positions = np.full(m, n - 1)
    else:
        raise ValueError(f'Unknown perturbation index {perturb_index!r}')

    shards = np.array(dataset.shards)
    shards[np.arange(m), positions] = replacements

    perturbation = NeighborPerturbation(positions=positions,
                                        replacements=replacements)
    return dataset.replace(shards), perturbation


@dataclasses.dataclass(frozen=True, eq=False)
class SyntheticData:
    """Generated dataset with its population description.

    :ivar means: per-agent sample means, shape (m, width), if known
    :ivar reservoir: per-agent replacement rows, shape (m, r, width)
    """

    dataset: DistributedDataset
    means: typing.Optional[np.ndarray]
    reservoir: np.ndarray


def synthesize_quadratic_data(d_x, d_y, m, n, sigma, seed,
                              mean_scale=0.25, reservoir_size=1000):
    """Heterogeneous Gaussian samples [b, c] for the quadratic family.

    Agent means are drawn with spread `mean_scale`, samples scatter
    around them with scale `sigma`.
    """
    if sigma < 0:
        raise ValueError(f'noise scale must be nonnegative, got {sigma}')

    rng = np.random.default_rng(seed)
    width = d_x + d_y
    means = rng.normal(0.0, mean_scale, size=(m, width))

    shards = means[:, None, :] + sigma * rng.standard_normal((m, n, width))
    reservoir = means[:, None, :] + sigma * rng.standard_normal(
        (m, reservoir_size, width))

    dataset = DistributedDataset(shards=shards, source='synthetic:quadratic',
                                 seed=seed)
    return SyntheticData(dataset=dataset, means=means, reservoir=reservoir)


def synthesize_sine_data(m, n, sigma, seed, reservoir_size=1000):
    """Scalar phase samples around per-agent shifts in [-pi/4, pi/4]."""
    if sigma < 0:
        raise ValueError(f'noise scale must be nonnegative, got {sigma}')

    rng = np.random.default_rng(seed)
    shifts = rng.uniform(-math.pi / 4, math.pi / 4, size=(m, 1))

    shards = shifts[:, None, :] + sigma * rng.standard_normal((m, n, 1))
    reservoir = shifts[:, None, :] + sigma * rng.standard_normal(
        (m, reservoir_size, 1))

    dataset = DistributedDataset(shards=shards, source='synthetic:sine',
                                 seed=seed)
    return SyntheticData(dataset=dataset, means=shifts, reservoir=reservoir)


def synthesize_auc_data(count, n_features, seed, positive_fraction=0.5,
                        separation=1.0):
    """Two Gaussian classes as rows [label, z], labels in {-1, 1}.

    Class means sit at +-separation/2 along a random unit direction,
    features are scaled by 1/sqrt(d).
    """
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(n_features)
    direction /= np.linalg.norm(direction)

    labels = np.where(rng.random(count) < positive_fraction, 1.0, -1.0)
    features = (rng.standard_normal((count, n_features))
                + 0.5 * separation * labels[:, None] * direction)
    features /= math.sqrt(n_features)

    return np.column_stack([labels, features])


def enumerated_empirical_risk(values):
    """Average of the agent mean over every choice of one sample per agent.

    :param values: loss values, shape (m, n), row `i` for agent `i`
    :returns: (1/n^m) sum over (l_1..l_m) of (1/m) sum_i values[i, l_i]
    """
    values = np.asarray(values, dtype=float)
    m, n = values.shape
    terms = (math.fsum(values[i, l] for i, l in enumerate(choice)) / m
             for choice in itertools.product(range(n), repeat=m))
    return math.fsum(terms) / n ** m
