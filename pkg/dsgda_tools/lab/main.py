# Copyright 2017 Red Hat, Inc.
# All Rights Reserved.
#
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

import argparse
import logging
import os
import sys

from dsgda_tools import error
from dsgda_tools.lab import config as lab_config
from dsgda_tools.lab import constants
from dsgda_tools.lab import experiments
from dsgda_tools.lab import utils

LOG = logging.getLogger(__name__)

COMMANDS = ('topology', 'run', 'stability', 'bounds', 'sweep', 'compare')


def parse_args(argv=None):
    parser = argparse.ArgumentParser('dsgda-lab')
    parser.add_argument('--config',
                        type=str,
                        help='Experiment file path or shipped preset name '
                             f'({", ".join(lab_config.list_presets())}). '
                             'Can also be set via environment variable '
                             f'{lab_config.CONFIG_ENV}.')
    parser.add_argument('--debug', action='store_true',
                        help='Enables debug logging.')
    parser.add_argument('--topology',
                        type=str, choices=constants.TOPOLOGIES,
                        help='Communication topology. Overrides '
                             '[topology] variant.')
    parser.add_argument('--m', type=int,
                        help='Number of agents. Overrides [data] m.')
    parser.add_argument('--n', type=int,
                        help='Samples per agent. Overrides [data] n.')
    parser.add_argument('--T', type=int,
                        help='Number of iterations. Overrides [run] T.')
    parser.add_argument('--eta', type=float,
                        help='Fixed learning rate of both variables. '
                             'Overrides [schedule] eta_x and eta_y.')
    parser.add_argument('--seed', type=int,
                        help='First seed. Overrides [run] seed.')
    parser.add_argument('--seeds', type=int,
                        help='Number of seeds. Overrides [run] seeds.')
    parser.add_argument('--workers', type=int,
                        help='Worker threads. Can also be set via '
                             f'environment variable {lab_config.WORKERS_ENV}.')
    parser.add_argument('--output',
                        type=str,
                        help='Output directory. Overrides [output] '
                             'directory. A path with a file suffix, such '
                             'as stability.csv, names the main table '
                             'instead and side files go next to it.')
    parser.add_argument('--format',
                        type=str, choices=['csv', 'json', 'markdown'],
                        help='Format of the table printed to stdout. '
                             'Overrides [output] format.')

    subparsers = parser.add_subparsers(dest='command', required=True)

    topology = subparsers.add_parser(
        'topology', help='Spectral summary of mixing matrices.')
    topology.add_argument('--all', action='store_true',
                          help='Report every topology variant.')
    topology.add_argument('--c', type=float,
                          help='Exponent of the C_lambda constant.')

    subparsers.add_parser('run', help='Single D-SGDA run trajectory.')
    subparsers.add_parser(
        'stability', help='Coupled runs on neighbouring datasets.')
    subparsers.add_parser('bounds', help='Evaluate the stability bounds.')
    subparsers.add_parser('sweep', help='Stability study over a factor grid.')

    compare = subparsers.add_parser(
        'compare', help='Compare measured stability with bound values.')
    compare.add_argument('stability_csv', help='Sweep CSV file.')
    compare.add_argument('bounds_csv', help='CSV file holding the bounds.')
    compare.add_argument('--bound-column', default='bound_fixed',
                         help='Bound column of the bounds CSV.')

    return parser.parse_args(argv)


def apply_overrides(config, args):
    """Command line flags take precedence over the experiment file."""
    if args.topology:
        config = config.override('topology', variant=args.topology)

    data = {key: getattr(args, key) for key in ('m', 'n')
            if getattr(args, key) is not None}
    if data:
        config = config.override('data', **data)

    run = {key: getattr(args, key) for key in ('T', 'seed', 'seeds',
                                                'workers')
           if getattr(args, key) is not None}
    if run:
        config = config.override('run', **run)

    if args.eta is not None:
        config = config.override('schedule', kind=constants.SCHEDULE_FIXED,
                                 eta_x=args.eta, eta_y=args.eta)

    output = {}
    if args.output:
        table = _table_file(args)
        output['directory'] = ((os.path.dirname(table) or os.curdir)
                               if table else args.output)
    if args.format:
        output['format'] = args.format
    if output:
        config = config.override('output', **output)

    return config


def _emit(text):
    sys.stdout.write(text)


def _table_file(args):
    if args.output and os.path.splitext(args.output)[1]:
        return args.output
    return None


def _path(config, name, args=None):
    """Report file path, `--output` wins for the main table."""
    return ((args is not None and _table_file(args))
            or os.path.join(config.output.directory, name))


def do_topology(lab, config, args):
    if args.all:
        variants = constants.TOPOLOGIES
    elif args.topology:
        variants = (args.topology,)
    else:
        variants = config.sweep.topology or (config.topology.variant,)

    sizes = (args.m,) if args.m else (config.sweep.m or (config.data.m,))
    exponent = args.c if args.c is not None else config.schedule.c

    rows = lab.topology_table(variants, sizes, exponent)
    utils.write_csv(_path(config, 'topology.csv', args),
                    experiments.TOPOLOGY_FIELDS, rows)
    _emit(utils.render(experiments.TOPOLOGY_FIELDS, rows,
                       config.output.format))


def do_run(lab, config, args):
    _, rows = lab.single_run(config)
    path = utils.write_csv(_path(config, 'trajectory.csv', args),
                           experiments.TRAJECTORY_FIELDS, rows)
    LOG.info('Trajectory written to %s', path)


def do_stability(lab, config, args):
    result = lab.stability_study(config)
    path = utils.write_csv(_path(config, 'stability.csv', args),
                           experiments.STABILITY_FIELDS,
                           list(result.stability_rows()))
    summary = utils.write_json(_path(config, 'stability_summary.json'),
                               result.summary())
    LOG.info('Stability written to %s and %s', path, summary)
    _emit(utils.render_json(result.report.to_dict()))


def do_bounds(lab, config, args):
    rows = experiments.bound_rows(lab.bound_reports(config))
    utils.write_csv(_path(config, 'bounds.csv', args),
                    experiments.BOUND_FIELDS, rows)
    _emit(utils.render(experiments.BOUND_FIELDS, rows,
                       config.output.format))


def do_sweep(lab, config, args):
    result = lab.sweep(config)
    path = utils.write_text(_path(config, 'sweep.csv', args), result.render())
    LOG.info('Sweep of %d row(s) written to %s', len(result.rows), path)
    _emit(result.render(config.output.format))


def do_compare(lab, config, args):
    report = experiments.compare_report(args.stability_csv, args.bounds_csv,
                                        bound_column=args.bound_column)
    _emit(report.render(config.output.format))


_HANDLERS = {
    'topology': do_topology,
    'run': do_run,
    'stability': do_stability,
    'bounds': do_bounds,
    'sweep': do_sweep,
    'compare': do_compare,
}


def main(argv=None):

    args = parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        config = apply_overrides(lab_config.load_config(args.config), args)
        lab = experiments.Laboratory(config, logger=LOG)
        _HANDLERS[args.command](lab, config, args)

    except error.LabError as e:
        LOG.debug('%s failed', args.command, exc_info=True)
        sys.stderr.write(f'{e}\n')
        return e.code

    except Exception as e:
        LOG.exception('Unexpected error: %s', e)
        return error.EXIT_FAILURE

    return 0


if __name__ == '__main__':
    sys.exit(main())
