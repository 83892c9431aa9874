# -*- coding: utf-8 -*-
""" Result files.

Tables are CSV (or JSON arrays of row objects) with fixed column orders,
summaries are JSON with sorted keys. Every run directory gets a
``run.json`` manifest and a ``plot_recipe.json`` telling a plotting tool
which columns to put on which axis. Nothing time dependent is written,
so a rerun with the same configuration reproduces the files byte by byte.
"""

import csv
import json
import math
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from spinlat import __version__
from spinlat.errors import ConfigurationError
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

TABLE_HEADERS = {
    'trajectory': ('time', 'observable', 'value'),
    'survival': ('t', 'p_hat', 'stderr', 'method', 'replicas'),
    'wsm': ('L', 'gap', 'stderr', 'method'),
    'badbox': ('N', 'M', 'L_box', 'epsilon', 'p_bad', 'stderr', 'event1_frac', 'event2_frac', 'event3_frac'),
    'stability': ('t', 'gap', 'stderr', 'magnetization_gap', 'magnetization_stderr', 'replicas'),
    'r0': ('L', 'samples', 'violations', 'mean_r0')
}

# x, y and error column of every table kind.
PLOT_COLUMNS = {
    'trajectory': ('time', 'value', None),
    'survival': ('t', 'p_hat', 'stderr'),
    'wsm': ('L', 'gap', 'stderr'),
    'badbox': ('N', 'p_bad', 'stderr'),
    'stability': ('t', 'gap', 'stderr'),
    'r0': ('L', 'violations', None)
}

LOG_SCALE_KINDS = ('survival', 'wsm', 'badbox', 'stability')


def plain(value: Any) -> Any:
    """ Converts numpy scalars and containers into JSON types.

    Infinite and undefined floats become the strings ``inf``, ``-inf`` and ``nan``.
    """
    if isinstance(value, dict):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return [plain(item) for item in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        _value = float(value)
        if math.isnan(_value):
            return 'nan'
        if math.isinf(_value):
            return 'inf' if _value > 0 else '-inf'
        return _value
    return value


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(plain(value))


def write_json(path: str, payload: Any) -> str:
    with open(path, 'w') as _file:
        json.dump(plain(payload), _file, sort_keys=True, indent=2)
        _file.write('\n')
    LOGGER.debug("Wrote %s", path)
    return path


def write_table(
        out_dir: str,
        name: str,
        kind: str,
        rows: Iterable[Any],
        fmt: str = 'csv'
) -> str:
    """ Writes rows under the fixed header of ``kind``.

    :param rows: Dicts keyed by column, or sequences in column order.
    :param fmt:  ``csv`` or ``json``.
    :returns:    The file name relative to ``out_dir``.
    """
    if kind not in TABLE_HEADERS:
        raise ConfigurationError("Unknown table kind %r." % kind)
    _header = TABLE_HEADERS[kind]
    _rows = []
    for _row in rows:
        if isinstance(_row, dict):
            _rows.append([_row[column] for column in _header])
        else:
            _values = list(_row)
            if len(_values) != len(_header):
                raise ConfigurationError("A %s row needs %d values, got %d." % (kind, len(_header), len(_values)))
            _rows.append(_values)
    _file_name = '%s.%s' % (name, fmt)
    _path = os.path.join(out_dir, _file_name)
    if fmt == 'json':
        write_json(_path, [dict(zip(_header, values)) for values in _rows])
    elif fmt == 'csv':
        with open(_path, 'w', newline='') as _file:
            _writer = csv.writer(_file, lineterminator='\n')
            _writer.writerow(_header)
            for _values in _rows:
                _writer.writerow([_cell(value) for value in _values])
    else:
        raise ConfigurationError("Unknown output format %r." % fmt)
    LOGGER.debug("Wrote %d rows to %s", len(_rows), _path)
    return _file_name


def code_version() -> str:
    """ Commit of the source tree, the package version outside of a git checkout. """
    try:
        import git
    except ImportError:
        return __version__
    try:
        _repo = git.Repo(os.path.dirname(os.path.abspath(__file__)), search_parent_directories=True)
        return _repo.head.commit.hexsha
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, ValueError):
        return __version__


def write_manifest(
        out_dir: str,
        config_hash: str,
        kind: str,
        seed: int,
        files: Sequence[str],
        extra: Optional[Dict[str, Any]] = None
) -> str:
    """ Writes ``run.json`` with the configuration hash and the code version. """
    _manifest = {
        'config_hash': config_hash,
        'code_version': code_version(),
        'package_version': __version__,
        'kind': kind,
        'seed': seed,
        'files': sorted(files)
    }
    _manifest.update(extra or {})
    return write_json(os.path.join(out_dir, 'run.json'), _manifest)


def write_plot_recipe(out_dir: str, tables: Dict[str, str]) -> str:
    """ Writes ``plot_recipe.json``, file name -> axis columns.

    :param tables: File name -> table kind.
    """
    _recipe = {}
    for _file_name, _kind in sorted(tables.items()):
        _x, _y, _error = PLOT_COLUMNS[_kind]
        _recipe[_file_name] = {'x': _x, 'y': _y, 'error': _error, 'log_y': _kind in LOG_SCALE_KINDS}
        if _kind == 'trajectory':
            _recipe[_file_name]['group_by'] = 'observable'
    return write_json(os.path.join(out_dir, 'plot_recipe.json'), _recipe)


def ensure_directory(path: str) -> str:
    _path = os.path.abspath(path)
    os.makedirs(_path, exist_ok=True)
    return _path


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, newline='') as _file:
        return list(csv.DictReader(_file))
