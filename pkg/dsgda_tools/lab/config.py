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

"""Experiment configuration files.

An experiment is described by a TOML document with the sections
`[problem]`, `[data]`, `[topology]`, `[schedule]`, `[run]`, `[sweep]`
and `[output]`. Every section is optional, missing keys take their
defaults and unknown keys are rejected.
"""

import dataclasses
import os
import typing

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

from dsgda_tools.error import ConfigInvalid
from dsgda_tools.lab import constants

CONFIG_ENV = 'DSGDA_LAB_CONFIG'
WORKERS_ENV = 'DSGDA_LAB_WORKERS'

PRESETS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                           'presets')


@dataclasses.dataclass(frozen=True)
class ProblemSection:
    family: str = constants.FAMILY_QUADRATIC
    d_x: int = 2
    d_y: int = 2
    C_x: float = 1.0
    C_y: float = 1.0
    mu_x: float = 1.0
    mu_y: float = 1.0
    coupling_scale: float = 0.3
    bound: float = 1.0
    seed: int = 0

    def validate(self):
        if self.family not in constants.FAMILIES:
            raise ConfigInvalid(f'unknown family {self.family!r}, expected '
                                f'one of {", ".join(constants.FAMILIES)}',
                                key='problem.family')
        _positive(self, 'problem', 'd_x', 'd_y', 'C_x', 'C_y', 'bound')
        _nonnegative(self, 'problem', 'coupling_scale')
        if self.family == constants.FAMILY_QUADRATIC:
            _positive(self, 'problem', 'mu_x', 'mu_y')


@dataclasses.dataclass(frozen=True)
class DataSection:
    m: int = 4
    n: int = 50
    sigma: float = 0.1
    path: typing.Optional[str] = None
    n_features: int = 10
    pool_size: typing.Optional[int] = None
    test_fraction: float = 0.2
    normalize: bool = True
    reservoir_size: int = 1000
    perturb_index: str = constants.PERTURB_LAST
    resample: bool = False
    seed: int = 0

    def validate(self):
        _positive(self, 'data', 'm', 'n', 'n_features', 'reservoir_size')
        _nonnegative(self, 'data', 'sigma')
        if self.pool_size is not None:
            _positive(self, 'data', 'pool_size')
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigInvalid('test_fraction must be in [0, 1)',
                                key='data.test_fraction')
        if self.perturb_index not in (constants.PERTURB_LAST,
                                      constants.PERTURB_RANDOM):
            raise ConfigInvalid(
                f'perturb_index must be last or random, got '
                f'{self.perturb_index!r}', key='data.perturb_index')


@dataclasses.dataclass(frozen=True)
class TopologySection:
    variant: str = constants.TOPOLOGY_FULL

    def validate(self):
        if self.variant not in constants.TOPOLOGIES:
            raise ConfigInvalid(
                f'unknown topology {self.variant!r}, expected one of '
                f'{", ".join(constants.TOPOLOGIES)}', key='topology.variant')


@dataclasses.dataclass(frozen=True)
class ScheduleSection:
    """Learning rates, `mu` of a decaying schedule defaults to the
    smaller problem modulus and `eta_y` to `eta_x`.
    """

    kind: str = constants.SCHEDULE_FIXED
    eta_x: float = 0.01
    eta_y: typing.Optional[float] = None
    mu: typing.Optional[float] = None
    c: float = 1.0
    max_role: str = 'x'

    def validate(self):
        if self.kind not in (constants.SCHEDULE_FIXED,
                             constants.SCHEDULE_DECAYING):
            raise ConfigInvalid(f'unknown schedule kind {self.kind!r}',
                                key='schedule.kind')
        _nonnegative(self, 'schedule', 'eta_x')
        if self.eta_y is not None:
            _nonnegative(self, 'schedule', 'eta_y')
        if self.mu is not None:
            _positive(self, 'schedule', 'mu')
        if not 0.0 < self.c <= 1.0:
            raise ConfigInvalid('decay exponent must be in (0, 1]',
                                key='schedule.c')
        if self.max_role not in ('x', 'y'):
            raise ConfigInvalid('max_role must be x or y',
                                key='schedule.max_role')


@dataclasses.dataclass(frozen=True)
class RunSection:
    T: int = 100
    seeds: int = 5
    seed: int = 0
    record_every: int = 1
    at: str = constants.OUTPUT_FINAL
    workers: int = 1
    probe_points: int = 64

    def validate(self):
        _positive(self, 'run', 'T', 'seeds', 'record_every', 'workers',
                  'probe_points')
        if self.at not in (constants.OUTPUT_FINAL,
                           constants.OUTPUT_AVG_ITERATE):
            raise ConfigInvalid(f'unknown output {self.at!r}', key='run.at')


@dataclasses.dataclass(frozen=True)
class SweepSection:
    eta: typing.Tuple[float, ...] = ()
    topology: typing.Tuple[str, ...] = ()
    n: typing.Tuple[int, ...] = ()
    m: typing.Tuple[int, ...] = ()

    def validate(self):
        for variant in self.topology:
            if variant not in constants.TOPOLOGIES:
                raise ConfigInvalid(f'unknown topology {variant!r}',
                                    key='sweep.topology')
        if any(value < 0 for value in self.eta):
            raise ConfigInvalid('learning rates must be nonnegative',
                                key='sweep.eta')
        for axis in ('n', 'm'):
            if any(value < 1 for value in getattr(self, axis)):
                raise ConfigInvalid('sizes must be positive',
                                    key=f'sweep.{axis}')

    @property
    def axes(self):
        """Nonempty axes in report order."""
        return tuple(axis for axis in constants.SWEEP_AXES
                     if getattr(self, axis))


@dataclasses.dataclass(frozen=True)
class OutputSection:
    directory: str = 'results'
    state_dir: typing.Optional[str] = None
    format: str = 'csv'

    def validate(self):
        if self.format not in ('csv', 'json', 'markdown'):
            raise ConfigInvalid(f'unknown format {self.format!r}',
                                key='output.format')


_SECTIONS = {
    'problem': ProblemSection,
    'data': DataSection,
    'topology': TopologySection,
    'schedule': ScheduleSection,
    'run': RunSection,
    'sweep': SweepSection,
    'output': OutputSection,
}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description."""

    problem: ProblemSection = dataclasses.field(
        default_factory=ProblemSection)
    data: DataSection = dataclasses.field(default_factory=DataSection)
    topology: TopologySection = dataclasses.field(
        default_factory=TopologySection)
    schedule: ScheduleSection = dataclasses.field(
        default_factory=ScheduleSection)
    run: RunSection = dataclasses.field(default_factory=RunSection)
    sweep: SweepSection = dataclasses.field(default_factory=SweepSection)
    output: OutputSection = dataclasses.field(default_factory=OutputSection)
    path: typing.Optional[str] = dataclasses.field(default=None,
                                                   compare=False)

    def to_dict(self):
        """Nested mapping without unset values, as written to TOML."""
        return {name: _section_dict(getattr(self, name))
                for name in _SECTIONS}

    def override(self, section, **changes):
        """Copy with some keys of one section replaced and validated."""
        current = getattr(self, section)
        updated = dataclasses.replace(current, **changes)
        updated.validate()
        return dataclasses.replace(self, **{section: updated})

    def with_workers(self, workers):
        return self.override('run', workers=workers)


def _positive(section, name, *keys):
    for key in keys:
        if getattr(section, key) <= 0:
            raise ConfigInvalid(f'must be positive, got '
                                f'{getattr(section, key)!r}',
                                key=f'{name}.{key}')


def _nonnegative(section, name, *keys):
    for key in keys:
        if getattr(section, key) < 0:
            raise ConfigInvalid(f'must be nonnegative, got '
                                f'{getattr(section, key)!r}',
                                key=f'{name}.{key}')


def _section_dict(section):
    rv = {}
    for field in dataclasses.fields(section):
        value = getattr(section, field.name)
        if value is None:
            continue
        rv[field.name] = list(value) if isinstance(value, tuple) else value
    return rv


def _coerce(value, hint, key):
    origin = typing.get_origin(hint)

    if origin is typing.Union:
        hint = next(arg for arg in typing.get_args(hint)
                    if arg is not type(None))
        return _coerce(value, hint, key)

    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigInvalid(f'expected a list, got {value!r}', key=key)
        item = typing.get_args(hint)[0]
        return tuple(_coerce(v, item, key) for v in value)

    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(f'expected a boolean, got {value!r}',
                                key=key)
        return value

    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(f'expected an integer, got {value!r}',
                                key=key)
        return value

    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(f'expected a number, got {value!r}', key=key)
        return float(value)

    if not isinstance(value, str):
        raise ConfigInvalid(f'expected a string, got {value!r}', key=key)
    return value


def _build_section(name, raw):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigInvalid('expected a table', key=name)

    hints = typing.get_type_hints(cls)
    known = {field.name for field in dataclasses.fields(cls)}
    values = {}

    for key, value in raw.items():
        if key not in known:
            raise ConfigInvalid('unknown key', key=f'{name}.{key}')
        values[key] = _coerce(value, hints[key], f'{name}.{key}')

    section = cls(**values)
    section.validate()
    return section


def from_dict(document, path=None):
    """Validate a parsed document into an `ExperimentConfig`.

    :raises: `ConfigInvalid` naming the offending key
    """
    sections = {}
    try:
        for name, raw in document.items():
            if name not in _SECTIONS:
                raise ConfigInvalid('unknown section', key=name)
            sections[name] = _build_section(name, raw)

    except ConfigInvalid as e:
        if path is None or e.path is not None:
            raise
        raise ConfigInvalid(e.reason, path=path, key=e.key)

    return ExperimentConfig(path=path, **sections)


def resolve_path(name_or_path):
    """Map a file path or a shipped preset name to a file path.

    :raises: `ConfigInvalid` if neither exists
    """
    if os.path.isfile(name_or_path):
        return name_or_path

    preset = os.path.join(PRESETS_DIR, name_or_path)
    for candidate in (preset, preset + '.toml'):
        if os.path.isfile(candidate):
            return candidate

    raise ConfigInvalid('no such file or preset', path=name_or_path)


def list_presets():
    return sorted(os.path.splitext(name)[0]
                  for name in os.listdir(PRESETS_DIR)
                  if name.endswith('.toml'))


def load_config(path=None):
    """Load and validate an experiment file.

    :param path: file path or preset name, defaults to the
        `DSGDA_LAB_CONFIG` environment variable; with neither the
        built-in defaults are returned
    :returns: `ExperimentConfig`
    :raises: `ConfigInvalid`
    """
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        config = ExperimentConfig()

    else:
        path = resolve_path(path)
        try:
            with open(path, 'rb') as f:
                document = tomllib.load(f)

        except OSError as e:
            raise ConfigInvalid(f'cannot read: {e}', path=path)

        except tomllib.TOMLDecodeError as e:
            raise ConfigInvalid(f'malformed TOML: {e}', path=path)

        config = from_dict(document, path=path)

    workers = os.environ.get(WORKERS_ENV)
    if workers:
        try:
            workers = int(workers)
        except ValueError:
            raise ConfigInvalid(f'{WORKERS_ENV} must be an integer, got '
                                f'{workers!r}', key=WORKERS_ENV)
        config = config.with_workers(workers)

    return config


def dumps(config):
    """Serialize a config to TOML text."""
    return tomli_w.dumps(config.to_dict())


def loads(text, path=None):
    return from_dict(tomllib.loads(text), path=path)
