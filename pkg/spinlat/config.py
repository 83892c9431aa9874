# -*- coding: utf-8 -*-
""" Experiment configuration from INI files.

Sections and keys, with defaults:

 [experiment]  kind (required), seed = 0, replicas = 100, workers = 1,
               output_dir = results, format = csv
 [geometry]    dimension = 1, sides = 16, range = 1, boundary = periodic
 [model]       beta = 1.0, h = 0.0, delta = 0.0, lam,
               couplings = ``offset:J`` pairs split by ``;``, e.g. ``1,0:1.0; -1,0:1.0``,
               nearest_neighbor = 1.0 (used when couplings is missing)
 [methods]     dependence = auto, wsm = transfer, clusters = overapprox
 [scan]        horizons, sizes, scales, tau0, time_step = 1.0, t_max = 10.0,
               box_speed = 2.0, box_side, burn_in = 10.0, samples = 2000, thinning = 0.5
 [identities]  corpus_size = 100, max_vertices = 6, strict = false
"""

import configparser
import copy
import hashlib
import json
import os
from typing import List, Optional

from spinlat.errors import ConfigurationError
from spinlat.gibbs import WSM_METHODS
from spinlat.influence import METHODS
from spinlat.lattice import BOUNDARY_MODES, Geometry, Kernel, nearest_neighbor_kernel, validate_kernel
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

EXPERIMENT_KINDS = ('simulate', 'wsm', 'survival', 'stability', 'identities', 'badbox')
OUTPUT_FORMATS = ('csv', 'json')


def _floats(text: Optional[str]) -> List[float]:
    if text is None or not text.strip():
        return []
    try:
        return [float(item) for item in text.replace(';', ',').split(',') if item.strip()]
    except ValueError:
        raise ConfigurationError("Expected a list of numbers, got %r." % text)


def _ints(text: Optional[str]) -> List[int]:
    _values = _floats(text)
    if any(value != int(value) for value in _values):
        raise ConfigurationError("Expected a list of integers, got %r." % text)
    return [int(value) for value in _values]


def parse_kernel(text: str, dimension: int) -> Kernel:
    """ Reads ``offset:coupling`` pairs split by ``;``.

    :param text:      E.g. ``1,0:1.0; -1,0:1.0; 0,1:0.5; 0,-1:0.5``.
    :param dimension: Number of coordinates of every offset.
    :raises ConfigurationError: On malformed entries or repeated offsets.
    """
    _kernel = {}
    for _entry in text.split(';'):
        if not _entry.strip():
            continue
        if ':' not in _entry:
            raise ConfigurationError("Coupling entry %r lacks ':'." % _entry.strip())
        _offset_text, _coupling_text = _entry.rsplit(':', 1)
        try:
            _offset = tuple(int(coord) for coord in _offset_text.split(','))
            _coupling = float(_coupling_text)
        except ValueError:
            raise ConfigurationError("Cannot read coupling entry %r." % _entry.strip())
        if len(_offset) != dimension:
            raise ConfigurationError("Offset %s does not have %d coordinates." % (_offset, dimension))
        if _offset in _kernel:
            raise ConfigurationError("Offset %s is given twice." % (_offset,))
        _kernel[_offset] = _coupling
    if not _kernel:
        raise ConfigurationError("No couplings in %r." % text)
    return _kernel


class ExperimentConfig(object):
    """ A validated experiment configuration.

    :ivar str kind:       One of ``simulate``, ``wsm``, ``survival``, ``stability``,
                          ``identities``, ``badbox``.
    :ivar Geometry geometry: The lattice box.
    :ivar dict kernel:    Offset -> coupling.
    """

    def __init__(self, parser: configparser.ConfigParser):
        try:
            self._read(parser)
        except (configparser.Error, ValueError) as error:
            if isinstance(error, ConfigurationError):
                raise
            raise ConfigurationError("Invalid configuration: %s" % error)
        self.validate()

    def _read(self, parser: configparser.ConfigParser) -> None:
        if not parser.has_section('experiment') or not parser.has_option('experiment', 'kind'):
            raise ConfigurationError("The configuration needs [experiment] kind.")
        _experiment = parser['experiment']
        self.kind = _experiment.get('kind').strip()
        self.seed = _experiment.getint('seed', 0)
        self.replicas = _experiment.getint('replicas', 100)
        self.workers = _experiment.getint('workers', 1)
        self.output_dir = _experiment.get('output_dir', 'results')
        self.format = _experiment.get('format', 'csv').strip()

        _geometry = parser['geometry'] if parser.has_section('geometry') else {}
        self.dimension = int(_geometry.get('dimension', 1))
        _sides = _ints(_geometry.get('sides', '16'))
        if len(_sides) == 1:
            _sides = _sides * self.dimension
        self.sides = _sides
        self.radius = int(_geometry.get('range', 1))
        self.boundary = _geometry.get('boundary', 'periodic').strip()

        _model = parser['model'] if parser.has_section('model') else {}
        self.beta = float(_model.get('beta', 1.0))
        self.h = float(_model.get('h', 0.0))
        self.delta = float(_model.get('delta', 0.0))
        self.lam = float(_model['lam']) if 'lam' in _model else None
        if 'couplings' in _model:
            self.kernel = parse_kernel(_model['couplings'], self.dimension)
        else:
            self.kernel = nearest_neighbor_kernel(self.dimension, float(_model.get('nearest_neighbor', 1.0)))

        _methods = parser['methods'] if parser.has_section('methods') else {}
        self.dependence = _methods.get('dependence', 'auto').strip()
        self.wsm_method = _methods.get('wsm', 'transfer').strip()
        self.cluster_method = _methods.get('clusters', 'overapprox').strip()

        _scan = parser['scan'] if parser.has_section('scan') else {}
        self.horizons = _floats(_scan.get('horizons'))
        self.sizes = _ints(_scan.get('sizes'))
        self.scales = _floats(_scan.get('scales'))
        self.tau0 = float(_scan['tau0']) if 'tau0' in _scan else None
        self.time_step = float(_scan.get('time_step', 1.0))
        self.t_max = float(_scan.get('t_max', 10.0))
        self.box_speed = float(_scan.get('box_speed', 2.0))
        self.box_side = int(_scan['box_side']) if 'box_side' in _scan else None
        self.burn_in = float(_scan.get('burn_in', 10.0))
        self.samples = int(_scan.get('samples', 2000))
        self.thinning = float(_scan.get('thinning', 0.5))

        _identities = parser['identities'] if parser.has_section('identities') else None
        self.corpus_size = _identities.getint('corpus_size', 100) if _identities is not None else 100
        self.max_vertices = _identities.getint('max_vertices', 6) if _identities is not None else 6
        self.strict = _identities.getboolean('strict', False) if _identities is not None else False

    @classmethod
    def from_file(cls, path: str) -> 'ExperimentConfig':
        """ Reads and validates an INI file.

        :raises ConfigurationError: If the file is missing or invalid.
        """
        _path = os.path.abspath(path)
        if not os.path.isfile(_path):
            raise ConfigurationError("Configuration file %s does not exist." % _path)
        _parser = configparser.ConfigParser()
        try:
            _parser.read(filenames=_path)
        except configparser.Error as error:
            raise ConfigurationError("Cannot parse %s: %s" % (_path, error))
        LOGGER.debug("Read configuration %s", _path)
        return cls(_parser)

    @classmethod
    def from_string(cls, text: str) -> 'ExperimentConfig':
        _parser = configparser.ConfigParser()
        try:
            _parser.read_string(text)
        except configparser.Error as error:
            raise ConfigurationError("Cannot parse configuration: %s" % error)
        return cls(_parser)

    @property
    def geometry(self) -> Geometry:
        return Geometry(self.sides, self.radius, self.boundary)

    @property
    def nearest_coupling(self) -> float:
        """ J of a nearest neighbor kernel.

        :raises ConfigurationError: If the kernel is not nearest neighbor and uniform.
        """
        _unit = (1,) + (0,) * (self.dimension - 1)
        _coupling = self.kernel.get(_unit)
        if _coupling is None or self.kernel != nearest_neighbor_kernel(self.dimension, _coupling):
            raise ConfigurationError("This experiment needs a uniform nearest neighbor kernel.")
        return _coupling

    def validate(self) -> None:
        """ :raises ConfigurationError: On the first invalid value. """
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigurationError("Unknown experiment kind %r, expected one of %s." % (
                self.kind, ', '.join(EXPERIMENT_KINDS)))
        if self.format not in OUTPUT_FORMATS:
            raise ConfigurationError("Unknown output format %r." % self.format)
        if self.replicas < 1 or self.workers < 1:
            raise ConfigurationError("Replicas and workers must be positive.")
        if self.dimension < 1 or len(self.sides) != self.dimension:
            raise ConfigurationError("Need one side per dimension, got %s for d=%d." % (self.sides, self.dimension))
        if self.boundary not in BOUNDARY_MODES:
            raise ConfigurationError("Unknown boundary %r." % self.boundary)
        validate_kernel(self.kernel, self.geometry, ferromagnetic=False)
        if self.beta <= 0:
            raise ConfigurationError("beta must be positive, got %g." % self.beta)
        if not 0 <= self.delta < self.beta:
            raise ConfigurationError("delta must lie in [0, beta), got %g." % self.delta)
        if self.lam is not None and self.lam <= 0:
            raise ConfigurationError("lam must be positive, got %g." % self.lam)
        if self.dependence != 'auto' and self.dependence not in METHODS:
            raise ConfigurationError("Unknown dependence method %r." % self.dependence)
        if self.wsm_method not in WSM_METHODS:
            raise ConfigurationError("Unknown WSM method %r." % self.wsm_method)
        if self.cluster_method not in ('overapprox', 'exact'):
            raise ConfigurationError("Box clusters use overapprox or exact, got %r." % self.cluster_method)
        if any(horizon < 0 for horizon in self.horizons):
            raise ConfigurationError("Horizons must be nonnegative.")
        if any(size < 1 for size in self.sizes) or any(scale <= 0 for scale in self.scales):
            raise ConfigurationError("Sizes and scales must be positive.")
        if self.time_step <= 0 or self.t_max < 0:
            raise ConfigurationError("time_step must be positive and t_max nonnegative.")
        if self.tau0 is not None and self.tau0 <= 0:
            raise ConfigurationError("tau0 must be positive.")
        if self.corpus_size < 1 or not 1 <= self.max_vertices <= 8:
            raise ConfigurationError("The identity corpus needs corpus_size >= 1 and 1 <= max_vertices <= 8.")
        _needs = {'survival': 'horizons', 'stability': 'horizons', 'wsm': 'sizes', 'badbox': 'scales'}
        if self.kind in _needs and not getattr(self, _needs[self.kind]):
            raise ConfigurationError("A %s experiment needs [scan] %s." % (self.kind, _needs[self.kind]))

    def with_overrides(
            self,
            seed: Optional[int] = None,
            replicas: Optional[int] = None,
            output_dir: Optional[str] = None,
            format: Optional[str] = None,
            workers: Optional[int] = None
    ) -> 'ExperimentConfig':
        """ A copy with command line values replacing the file values. """
        _copy = copy.deepcopy(self)
        for _name, _value in (('seed', seed), ('replicas', replicas), ('output_dir', output_dir),
                              ('format', format), ('workers', workers)):
            if _value is not None:
                setattr(_copy, _name, _value)
        _copy.validate()
        return _copy

    def to_record(self) -> dict:
        """ Everything that determines the outputs. Output location and worker count are left out. """
        return {
            'kind': self.kind,
            'seed': self.seed,
            'replicas': self.replicas,
            'format': self.format,
            'geometry': self.geometry.to_record(),
            'model': {
                'beta': self.beta,
                'h': self.h,
                'delta': self.delta,
                'lam': self.lam,
                'couplings': sorted([list(offset), coupling] for offset, coupling in self.kernel.items())
            },
            'methods': {'dependence': self.dependence, 'wsm': self.wsm_method, 'clusters': self.cluster_method},
            'scan': {
                'horizons': self.horizons, 'sizes': self.sizes, 'scales': self.scales, 'tau0': self.tau0,
                'time_step': self.time_step, 't_max': self.t_max, 'box_speed': self.box_speed,
                'box_side': self.box_side, 'burn_in': self.burn_in, 'samples': self.samples,
                'thinning': self.thinning
            },
            'identities': {'corpus_size': self.corpus_size, 'max_vertices': self.max_vertices,
                           'strict': self.strict}
        }

    @property
    def config_hash(self) -> str:
        """ SHA-256 of the canonical JSON of :meth:`to_record`. """
        _canonical = json.dumps(self.to_record(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(_canonical.encode('utf-8')).hexdigest()
