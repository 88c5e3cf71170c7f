# Copyright 2018 Red Hat, Inc.
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

"""Caches of derived values and of finished coupled runs."""

from collections import abc
import contextlib
from functools import wraps
import hashlib
import json
import os
import pickle
import sqlite3
import time
import zlib

import tenacity

STATE_DIR_ENV = 'DSGDA_LAB_STATE_DIR'


def memoize(permanent_cache=None):
    """Cache the return value of the decorated method.

    Positional arguments are part of the key in order, keyword
    arguments regardless of order. All of them must be hashable.

    :param permanent_cache: a `dict` like object shared by every
        instance. If not given, each instance keeps its values in
        its own `._cache` attribute.
    :return: decorated function
    """

    def decorator(method):
        name = method.__qualname__

        @wraps(method)
        def wrapped(self, *args, **kwargs):
            cache = permanent_cache
            if cache is None:
                cache = vars(self).setdefault('_cache', {})

            entries = cache.setdefault(name, {})
            key = args, frozenset(kwargs.items())
            if key not in entries:
                entries[key] = method(self, *args, **kwargs)

            return entries[key]

        return wrapped

    return decorator


def result_key(*parts):
    """Digest a JSON-serializable description of a computation.

    :param parts: objects fully describing the computation, e.g.
        a resolved configuration mapping and a seed
    :returns: hex digest usable as a `PersistentDict` key
    """
    blob = json.dumps(parts, sort_keys=True, default=repr).encode('utf-8')
    return hashlib.sha256(blob).hexdigest()


_retry = tenacity.retry(
    retry=tenacity.retry_if_exception_type(sqlite3.OperationalError),
    wait=tenacity.wait_exponential(min=0.1, max=2, multiplier=1),
    stop=tenacity.stop_after_delay(5),
    reraise=True)


class PersistentDict(abc.MutableMapping):
    """sqlite-backed mapping of result digests to study results.

    Values are stored as zlib-compressed pickles next to the time
    they were stored; iteration yields keys oldest first.
    """

    SCHEMA = ('create table if not exists results '
              '(key text primary key not null, value blob not null, '
              'stored real not null)')

    def __init__(self, path=None):
        self._path = path
        if path is None:
            return

        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        with self.connection() as cursor:
            cursor.execute(self.SCHEMA)

    def __repr__(self):
        return f'<PersistentDict {self._path or "detached"}>'

    @classmethod
    def in_directory(cls, state_dir, name='studies'):
        return cls(os.path.join(os.path.expanduser(state_dir),
                                name + '.sqlite'))

    @property
    def path(self):
        return self._path

    @property
    def is_permanent(self):
        return self._path is not None

    @staticmethod
    def encode(obj):
        return zlib.compress(pickle.dumps(obj,
                                          protocol=pickle.HIGHEST_PROTOCOL))

    @staticmethod
    def decode(blob):
        return pickle.loads(zlib.decompress(blob))

    @staticmethod
    def _checked(key):
        if not isinstance(key, str):
            raise TypeError(f'Result keys are digest strings, got '
                            f'{type(key).__name__}')
        return key

    @contextlib.contextmanager
    def connection(self):
        if not self._path:
            raise TypeError('Result cache has no database file')

        with sqlite3.connect(self._path) as connection:
            connection.execute('pragma journal_mode=wal')
            yield connection.cursor()

    @_retry
    def __getitem__(self, key):
        with self.connection() as cursor:
            cursor.execute('select value from results where key=?',
                           (self._checked(key),))
            row = cursor.fetchone()

        if row is None:
            raise KeyError(key)

        return self.decode(row[0])

    @_retry
    def __setitem__(self, key, value):
        with self.connection() as cursor:
            cursor.execute(
                'insert or replace into results (key, value, stored) '
                'values (?, ?, ?)',
                (self._checked(key), self.encode(value), time.time()))

    @_retry
    def __delitem__(self, key):
        with self.connection() as cursor:
            cursor.execute('delete from results where key=?',
                           (self._checked(key),))
            if not cursor.rowcount:
                raise KeyError(key)

    @_retry
    def __iter__(self):
        with self.connection() as cursor:
            cursor.execute('select key from results order by stored')
            rows = cursor.fetchall()

        return iter([row[0] for row in rows])

    @_retry
    def __len__(self):
        with self.connection() as cursor:
            cursor.execute('select count(*) from results')
            return cursor.fetchone()[0]


def open_result_cache(state_dir=None, name='studies'):
    """Open the result cache of stability studies.

    :param state_dir: cache directory, falls back to the
        `DSGDA_LAB_STATE_DIR` environment variable
    :param name: database file name without extension
    :returns: a permanent `PersistentDict` or `None` when caching
        is not configured
    """
    state_dir = state_dir or os.environ.get(STATE_DIR_ENV)
    if not state_dir:
        return None

    return PersistentDict.in_directory(state_dir, name)
