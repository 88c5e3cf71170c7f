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

import csv
import io
import json
import math
import os

import numpy as np

from dsgda_tools.error import SchemaMismatch


def format_value(value):
    """Render a report cell, reals with 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'

    if isinstance(value, (int, np.integer)):
        return str(int(value))

    if isinstance(value, (float, np.floating)):
        return '%.17g' % value

    if value is None:
        return ''

    return str(value)


def _jsonable(obj):
    # non-finite reals become the strings the CSV reports use
    if isinstance(obj, (np.ndarray, np.generic)):
        obj = obj.tolist()
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else format_value(obj)
    if isinstance(obj, dict):
        return {key: _jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(value) for value in obj]
    if obj is None or isinstance(obj, (str, int)):
        return obj
    raise TypeError(f'Cannot serialize {type(obj).__name__}')


def render_csv(fieldnames, rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({key: format_value(row[key]) for key in fieldnames})
    return buf.getvalue()


def render_markdown(fieldnames, rows):
    lines = ['| ' + ' | '.join(fieldnames) + ' |',
             '|' + '|'.join('---' for _ in fieldnames) + '|']
    for row in rows:
        lines.append('| ' + ' | '.join(format_value(row[key])
                                       for key in fieldnames) + ' |')
    return '\n'.join(lines) + '\n'


def render_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2,
                      allow_nan=False) + '\n'


def render(fieldnames, rows, fmt='csv'):
    if fmt == 'markdown':
        return render_markdown(fieldnames, rows)

    if fmt == 'json':
        return render_json([{key: row[key] for key in fieldnames}
                            for row in rows])

    return render_csv(fieldnames, rows)


def write_text(path, text):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, 'w', newline='') as f:
        f.write(text)

    return path


def write_csv(path, fieldnames, rows):
    return write_text(path, render_csv(fieldnames, rows))


def write_json(path, obj):
    return write_text(path, render_json(obj))


def read_csv(path, required=()):
    """Read a report back as (fieldnames, rows).

    :param required: columns that must be present
    :raises: `SchemaMismatch` if a required column is missing
    """
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        rows = list(reader)
        fieldnames = list(reader.fieldnames or ())

    missing = [name for name in required if name not in fieldnames]
    if fieldnames and missing:
        raise SchemaMismatch(
            f'{path} lacks column(s) {", ".join(missing)}')

    return fieldnames, rows
