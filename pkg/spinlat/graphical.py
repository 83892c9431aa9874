# -*- coding: utf-8 -*-
""" The graphical construction of the dynamics.

Every site carries a Poisson clock of rate lambda. Every arrival carries a
uniform mark U. At an arrival at x the spin becomes +1 if ``U >= v`` and -1
otherwise, with ``v = c/lambda`` when the center is +1 and
``v = 1 - c/lambda`` when it is -1. Any number of chains, with any rates
bounded by lambda/2, can be driven by one stream; for attractive rates the
update is monotone in the configuration.

Binary stream layout (little endian), used by :meth:`ArrivalStream.to_bytes`:

 header  magic ``SPLTARV1`` (8 bytes), format version (u32), seed (u64),
         lambda (f64), window begin (f64), window end (f64),
         dimension (u32), range (u32), boundary code (u32), sides (d x u32)
 body    for every site in row-major order: arrival count (u64),
         arrival times (count x f64), marks (count x f64)
"""

import bisect
import struct
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from spinlat.errors import ConfigurationError, GeometryMismatchError, RateBoundError
from spinlat.lattice import BOUNDARY_MODES, Geometry, LocalPattern, SpinConfig
from spinlat.rates import RateFamily
from spinlat.seeding import make_generator, site_seed
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

STREAM_MAGIC = b'SPLTARV1'
STREAM_FORMAT_VERSION = 1

# Relative slack when comparing lambda against twice the largest rate.
RATE_BOUND_SLACK = 1e-12

Observable = Callable[[SpinConfig], float]


class ArrivalStream(object):
    """ Poisson arrivals with uniform marks on every site of a geometry.

    Arrivals are kept merged in time order; ``sites[k]``, ``times[k]`` and
    ``marks[k]`` describe the k-th arrival.

    :param geometry: The geometry.
    :param lam:      Clock rate per site, 1/time.
    :param window:   ``(t_begin, t_end)``.
    :param seed:     Master seed the stream was drawn with.
    :param sites:    Site index of every arrival.
    :param times:    Time of every arrival.
    :param marks:    Uniform mark of every arrival.
    """

    def __init__(
            self,
            geometry: Geometry,
            lam: float,
            window: Tuple[float, float],
            seed: int,
            sites: np.ndarray,
            times: np.ndarray,
            marks: np.ndarray
    ):
        self.geometry = geometry
        self.lam = float(lam)
        self.window = (float(window[0]), float(window[1]))
        self.seed = int(seed)
        _order = np.lexsort((np.asarray(sites), np.asarray(times)))
        self.sites = np.asarray(sites, dtype=np.int64)[_order]
        self.times = np.asarray(times, dtype=np.float64)[_order]
        self.marks = np.asarray(marks, dtype=np.float64)[_order]

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArrivalStream):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def site_arrivals(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        """ Times and marks of the arrivals at one site. """
        _mask = self.sites == index
        return self.times[_mask], self.marks[_mask]

    def between(self, t_low: float, t_high: float) -> Tuple[int, int]:
        """ Position range of the arrivals with ``t_low < time <= t_high``. """
        return (
            int(np.searchsorted(self.times, t_low, side='right')),
            int(np.searchsorted(self.times, t_high, side='right'))
        )

    def restrict(self, t_begin: float, t_end: float) -> 'ArrivalStream':
        """ The stream on the window ``[t_begin, t_end]``. """
        _keep = (self.times >= t_begin) & (self.times <= t_end)
        return ArrivalStream(
            self.geometry, self.lam, (t_begin, t_end), self.seed,
            self.sites[_keep], self.times[_keep], self.marks[_keep]
        )

    def clip(self, sites: Sequence[int]) -> 'ArrivalStream':
        """ The stream with every arrival outside ``sites`` removed. """
        _keep = np.isin(self.sites, np.asarray(list(sites), dtype=np.int64))
        return ArrivalStream(
            self.geometry, self.lam, self.window, self.seed,
            self.sites[_keep], self.times[_keep], self.marks[_keep]
        )

    def to_bytes(self) -> bytes:
        """ Serializes the stream into the documented binary layout. """
        _geom = self.geometry
        _parts = [
            STREAM_MAGIC,
            struct.pack(
                '<IQdddIII',
                STREAM_FORMAT_VERSION,
                self.seed,
                self.lam,
                self.window[0],
                self.window[1],
                _geom.dimension,
                _geom.radius,
                BOUNDARY_MODES.index(_geom.boundary)
            ),
            struct.pack('<%dI' % _geom.dimension, *_geom.sides)
        ]
        for _site in range(_geom.n_sites):
            _times, _marks = self.site_arrivals(_site)
            _parts.append(struct.pack('<Q', _times.shape[0]))
            _parts.append(_times.astype('<f8').tobytes())
            _parts.append(_marks.astype('<f8').tobytes())
        return b''.join(_parts)

    @classmethod
    def from_bytes(cls, payload: bytes) -> 'ArrivalStream':
        """ Reads a stream written by :meth:`to_bytes`. """
        if payload[:8] != STREAM_MAGIC:
            raise ConfigurationError("Not an arrival stream.")
        _header = struct.Struct('<IQdddIII')
        _version, _seed, _lam, _begin, _end, _dimension, _radius, _boundary = _header.unpack_from(payload, 8)
        if _version != STREAM_FORMAT_VERSION:
            raise ConfigurationError("Unsupported stream format version %d." % _version)
        _offset = 8 + _header.size
        _sides = struct.unpack_from('<%dI' % _dimension, payload, _offset)
        _offset += 4 * _dimension
        _geom = Geometry(_sides, _radius, BOUNDARY_MODES[_boundary])
        _sites, _times, _marks = [], [], []
        for _site in range(_geom.n_sites):
            (_count,) = struct.unpack_from('<Q', payload, _offset)
            _offset += 8
            _times.append(np.frombuffer(payload, dtype='<f8', count=_count, offset=_offset))
            _offset += 8 * _count
            _marks.append(np.frombuffer(payload, dtype='<f8', count=_count, offset=_offset))
            _offset += 8 * _count
            _sites.append(np.full(_count, _site, dtype=np.int64))
        return cls(
            _geom, _lam, (_begin, _end), _seed,
            np.concatenate(_sites), np.concatenate(_times), np.concatenate(_marks)
        )

    def save(self, path: str) -> None:
        with open(path, 'wb') as _file:
            _file.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> 'ArrivalStream':
        with open(path, 'rb') as _file:
            return cls.from_bytes(_file.read())


class TrajectoryRecord(object):
    """ What :func:`evolve` recorded along the way.

    :ivar list events:  ``(time, site, old, new, U, perturbation)`` tuples,
                        filled only when event logging was requested.
    :ivar list samples: ``(time, observable, value)`` tuples.
    """

    def __init__(self):
        self.events = []
        self.samples = []

    def series(self, observable: str) -> List[Tuple[float, float]]:
        """ Time series of one sampled observable. """
        return [(time, value) for time, name, value in self.samples if name == observable]


class MonotoneCheck(NamedTuple):
    """ Outcome of :func:`check_monotone`. """
    ok: bool
    time: Optional[float]
    site: Optional[int]


def magnetization(config: SpinConfig) -> float:
    return config.magnetization()


def origin_spin(config: SpinConfig) -> float:
    return float(config.spins[0])


def energy_density_observable(kernel: Dict[Tuple[int, ...], float], h: float) -> Observable:
    """ Observable -H/|sites| of a configuration, exterior spins read from the boundary mode. """

    def _energy_density(config: SpinConfig) -> float:
        _geom = config.geometry
        _padded = np.empty(_geom.n_sites + 1, dtype=np.float64)
        _padded[:-1] = config.spins
        _padded[-1] = _geom.exterior_spin
        _spins = _padded[:-1]
        _total = h * float(np.sum(_spins))
        for _position, _offset in enumerate(_geom.offsets):
            _coupling = kernel.get(tuple(_offset), 0.0)
            if _coupling:
                _neighbors = _geom.neighbor_table[:, _position]
                _interior = _neighbors != _geom.n_sites
                # Interior pairs are seen from both ends.
                _total += 0.5 * _coupling * float(np.sum(_spins[_interior] * _padded[_neighbors[_interior]]))
                _total += _coupling * float(np.sum(_spins[~_interior] * _padded[_neighbors[~_interior]]))
        return _total / _geom.n_sites

    return _energy_density


STANDARD_OBSERVABLES = {'magnetization': magnetization, 'origin_spin': origin_spin}


def sample_arrivals(geom: Geometry, lam: float, window: Tuple[float, float], seed: int) -> ArrivalStream:
    """ Draws the arrival stream of every site.

    The clock of a site is seeded with :func:`spinlat.seeding.site_seed`
    from the master seed and the site coordinates. Gaps are Exponential
    with mean 1/lambda, drawn in blocks whose size depends only on
    lambda and the window, followed by one mark per arrival.
    An arrival time that does not exceed its predecessor (a zero gap, or
    an exact tie with another site after merging) is moved up to the
    next representable double. Arrivals moved past the window end are dropped.

    :param geom:   The geometry.
    :param lam:    Clock rate, > 0.
    :param window: ``(t_begin, t_end)`` with ``t_begin <= t_end``.
    :param seed:   64-bit master seed.
    """
    if lam <= 0:
        raise ConfigurationError("The clock rate must be positive, got %g." % lam)
    _begin, _end = float(window[0]), float(window[1])
    if _end < _begin:
        raise ConfigurationError("Window end %g lies before its begin %g." % (_end, _begin))
    _length = _end - _begin
    _block = 16 + int(1.25 * lam * _length)
    _sites, _times, _marks = [], [], []
    for _index, _coords in enumerate(geom.sites()):
        if _length == 0.0:
            break
        _rng = make_generator(site_seed(seed, _coords))
        _gaps = []
        _covered = 0.0
        while _covered <= _length:
            _draw = _rng.exponential(1.0 / lam, size=_block)
            _gaps.append(_draw)
            _covered += float(np.sum(_draw))
        _arrival_times = _begin + np.cumsum(np.concatenate(_gaps))
        _arrival_times = _arrival_times[_arrival_times <= _end]
        _arrival_times = _strictly_increasing(_arrival_times)
        _arrival_times = _arrival_times[_arrival_times <= _end]
        _sites.append(np.full(_arrival_times.shape[0], _index, dtype=np.int64))
        _times.append(_arrival_times)
        _marks.append(_rng.random(_arrival_times.shape[0]))
    if not _times:
        _empty = np.zeros(0)
        return ArrivalStream(geom, lam, (_begin, _end), seed, _empty.astype(np.int64), _empty, _empty)
    _stream = ArrivalStream(
        geom, lam, (_begin, _end), seed,
        np.concatenate(_sites), np.concatenate(_times), np.concatenate(_marks)
    )
    _stream.times = _strictly_increasing(_stream.times)
    # Nudged ties may leave the window.
    _inside = (_stream.times > _begin) & (_stream.times <= _end)
    if not _inside.all():
        _stream.sites, _stream.times, _stream.marks = (
            _stream.sites[_inside], _stream.times[_inside], _stream.marks[_inside])
    return _stream


def _strictly_increasing(times: np.ndarray) -> np.ndarray:
    """ Moves every time that does not exceed its predecessor to the next double. """
    _times = np.array(times, dtype=np.float64)
    for _position in np.nonzero(np.diff(_times) <= 0)[0] + 1:
        if _times[_position] <= _times[_position - 1]:
            _times[_position] = np.nextafter(_times[_position - 1], np.inf)
    # A nudge can collide with the next entry, settle those in order.
    _position = 1
    while _position < _times.shape[0]:
        if _times[_position] <= _times[_position - 1]:
            _times[_position] = np.nextafter(_times[_position - 1], np.inf)
        _position += 1
    return _times


def check_rate_bound(rates: RateFamily, lam: float) -> None:
    """ Raises :class:`RateBoundError` unless lambda >= 2 sup c. """
    if lam < 2.0 * rates.sup_rate * (1.0 - RATE_BOUND_SLACK):
        raise RateBoundError(
            "Clock rate %g is below 2 sup c = %g of %r." % (lam, 2.0 * rates.sup_rate, rates)
        )


def update_value(pattern: LocalPattern, U: float, c: RateFamily, lam: float, variant: int = 0) -> int:
    """ The new spin at an arrival with mark ``U`` seeing ``pattern``. """
    check_rate_bound(c, lam)
    _rate = c.rate(pattern, variant)
    _threshold = _rate / lam if pattern.center > 0 else 1.0 - _rate / lam
    return 1 if U >= _threshold else -1


class UpdateTables(object):
    """ Threshold and neighbor lookups of one rate family on one geometry.

    Plain lists, the update loop indexes them once per arrival.
    Several chains and replicas can share one instance.
    """

    def __init__(self, rates: RateFamily, geom: Geometry, lam: float):
        check_rate_bound(rates, lam)
        self.rates = rates
        self.geometry = geom
        self.lam = lam
        _thresholds = rates.thresholds(lam)
        self.threshold_array = _thresholds
        self.thresholds = [row.tolist() for row in _thresholds]
        self.lowest = [float(row.min()) for row in _thresholds]
        self.highest = [float(row.max()) for row in _thresholds]
        self.classes = [int(variant) for variant in rates.classes_on(geom)]
        self.neighbors = [[int(target) for target in row] for row in geom.neighbor_table]
        self.interior_neighbors = [
            sorted(set(target for target in row if target != geom.n_sites)) for row in self.neighbors
        ]

    def determined(self, site: int, mark: float) -> bool:
        """ True if the mark fixes the new spin at ``site`` whatever the pattern. """
        _variant = self.classes[site]
        return mark >= self.highest[_variant] or mark < self.lowest[_variant]


class Chain(object):
    """ One chain of the coupling, with lookup tables prepared for the update loop.

    :param initial: Starting configuration, copied.
    :param rates:   Flip rates.
    :param lam:     Clock rate of the driving stream.
    :param tables:  Prepared lookups, built from ``rates`` if omitted.
    """

    def __init__(self, initial: SpinConfig, rates: RateFamily, lam: float, tables: Optional[UpdateTables] = None):
        _geom = initial.geometry
        if tables is None or tables.rates is not rates or tables.geometry != _geom or tables.lam != lam:
            tables = UpdateTables(rates, _geom, lam)
        self.geometry = _geom
        self.rates = rates
        self.bits = [int(bit) for bit in initial.padded_bits()]
        self._thresholds = tables.thresholds
        self._classes = tables.classes
        self.neighbors = tables.neighbors

    def pattern_index(self, site: int) -> int:
        _bits = self.bits
        _index = 0
        for _target in self.neighbors[site]:
            _index = (_index << 1) | _bits[_target]
        return _index

    def update(self, site: int, mark: float) -> Tuple[int, int]:
        """ Applies one arrival, returns (old bit, new bit). """
        _old = self.bits[site]
        _new = 1 if mark >= self._thresholds[self._classes[site]][self.pattern_index(site)] else 0
        self.bits[site] = _new
        return _old, _new

    def config(self) -> SpinConfig:
        return SpinConfig(self.geometry, np.array(self.bits[:-1], dtype=np.int8) * 2 - 1)


class PerturbationWindows(object):
    """ For every pair of table variants, the marks that separate the two families.

    An arrival is a perturbation arrival when its mark lies strictly
    between ``v0(sigma)`` and ``v1(sigma)`` for some pattern sigma. The
    union of these open intervals is merged once per variant pair.

    :param c0:   Unperturbed rates.
    :param c1:   Perturbed rates.
    :param lam:  Shared clock rate.
    :param geom: Geometry, needed when a family is modulated.
    """

    def __init__(self, c0: RateFamily, c1: RateFamily, lam: float, geom: Optional[Geometry] = None):
        check_rate_bound(c0, lam)
        check_rate_bound(c1, lam)
        self.lam = lam
        _v0 = c0.thresholds(lam)
        _v1 = c1.thresholds(lam)
        if geom is None:
            self.site_pairs = None
            _pairs = [(0, 0)]
        else:
            self.site_pairs = list(zip(c0.classes_on(geom).tolist(), c1.classes_on(geom).tolist()))
            _pairs = sorted(set(self.site_pairs))
        self.windows = {}
        for _pair in _pairs:
            _low = np.minimum(_v0[_pair[0]], _v1[_pair[1]])
            _high = np.maximum(_v0[_pair[0]], _v1[_pair[1]])
            _open = _low < _high
            self.windows[_pair] = _merge_intervals(_low[_open], _high[_open])

    def pair_of(self, site: Optional[int]) -> Tuple[int, int]:
        if self.site_pairs is None or site is None:
            return (0, 0)
        return self.site_pairs[site]

    def contains(self, mark: float, site: Optional[int] = None) -> bool:
        """ True if ``mark`` separates the two families at ``site``. """
        _lows, _highs = self.windows[self.pair_of(site)]
        _position = bisect.bisect_right(_lows, mark) - 1
        return _position >= 0 and _lows[_position] < mark < _highs[_position]

    def measure(self, site: Optional[int] = None) -> float:
        """ Probability that a uniform mark is a perturbation mark at ``site``. """
        _lows, _highs = self.windows[self.pair_of(site)]
        return float(sum(high - low for low, high in zip(_lows, _highs)))


def _merge_intervals(lows: np.ndarray, highs: np.ndarray) -> Tuple[List[float], List[float]]:
    """ Union of open intervals as sorted, disjoint (lows, highs) lists. """
    _order = np.argsort(lows, kind='stable')
    _merged_lows, _merged_highs = [], []
    for _low, _high in zip(lows[_order].tolist(), highs[_order].tolist()):
        if _merged_highs and _low < _merged_highs[-1]:
            _merged_highs[-1] = max(_merged_highs[-1], _high)
        else:
            _merged_lows.append(_low)
            _merged_highs.append(_high)
    return _merged_lows, _merged_highs


def is_perturbation_arrival(
        U: float,
        c0: RateFamily,
        c1: RateFamily,
        lam: float,
        site: Optional[int] = None,
        geom: Optional[Geometry] = None
) -> bool:
    """ True if some pattern puts ``U`` strictly between the two thresholds. """
    return PerturbationWindows(c0, c1, lam, geom).contains(U, site)


def _check_stream(initial: SpinConfig, stream: ArrivalStream) -> None:
    if initial.geometry != stream.geometry:
        raise GeometryMismatchError("Configuration lives on %r, stream on %r." % (
            initial.geometry, stream.geometry))


def evolve(
        initial: SpinConfig,
        c: RateFamily,
        stream: ArrivalStream,
        t_start: Optional[float] = None,
        t_stop: Optional[float] = None,
        sample_times: Sequence[float] = (),
        observables: Optional[Dict[str, Observable]] = None,
        record_events: bool = False,
        event_stride: int = 1,
        perturbation: Optional[PerturbationWindows] = None
) -> Tuple[SpinConfig, TrajectoryRecord]:
    """ Runs one chain through the arrivals of a stream.

    Arrivals with ``t_start < time <= t_stop`` are applied in time order.
    An observable sampled at time t sees every arrival up to and including t.

    :param initial:       Configuration at ``t_start``.
    :param c:             Flip rates, with ``stream.lam >= 2 sup c``.
    :param stream:        The arrivals.
    :param t_start:       Defaults to the begin of the stream window.
    :param t_stop:        Defaults to the end of the stream window.
    :param sample_times:  Times at which observables are recorded.
    :param observables:   Name -> function of a configuration,
                          defaults to magnetization and origin spin.
    :param record_events: Log every ``event_stride``-th arrival.
    :param perturbation:  Windows used to flag perturbation arrivals in the log.
    :returns:             Final configuration and the record.
    """
    _check_stream(initial, stream)
    _chain = Chain(initial, c, stream.lam)
    _record = TrajectoryRecord()
    _observables = STANDARD_OBSERVABLES if observables is None else observables
    _start = stream.window[0] if t_start is None else t_start
    _stop = stream.window[1] if t_stop is None else t_stop
    _first, _last = stream.between(_start, _stop)
    if t_start is None:
        _first = 0
    _samples = sorted(time for time in sample_times if _start <= time <= _stop)
    _next_sample = 0

    _sites = stream.sites
    _times = stream.times
    _marks = stream.marks
    for _position in range(_first, _last):
        _time = float(_times[_position])
        while _next_sample < len(_samples) and _samples[_next_sample] < _time:
            _take_samples(_record, _samples[_next_sample], _chain, _observables)
            _next_sample += 1
        _site = int(_sites[_position])
        _mark = float(_marks[_position])
        _old, _new = _chain.update(_site, _mark)
        if record_events and (_position - _first) % event_stride == 0:
            _flag = perturbation.contains(_mark, _site) if perturbation is not None else False
            _record.events.append((_time, _site, 2 * _old - 1, 2 * _new - 1, _mark, _flag))
    while _next_sample < len(_samples):
        _take_samples(_record, _samples[_next_sample], _chain, _observables)
        _next_sample += 1
    return _chain.config(), _record


def _take_samples(record: TrajectoryRecord, time: float, chain: Chain, observables: Dict[str, Observable]):
    _config = chain.config()
    for _name in sorted(observables):
        record.samples.append((time, _name, float(observables[_name](_config))))


def coupled_evolve(
        chains: Sequence[Tuple[SpinConfig, RateFamily]],
        stream: ArrivalStream,
        t_start: Optional[float] = None,
        t_stop: Optional[float] = None
) -> List[SpinConfig]:
    """ Runs several chains on the same arrivals and marks.

    Each final configuration equals what :func:`evolve` returns for that
    chain alone on the same stream.
    """
    _chains = []
    for _initial, _rates in chains:
        _check_stream(_initial, stream)
        _chains.append(Chain(_initial, _rates, stream.lam))
    _first, _last = _span(stream, t_start, t_stop)
    for _position in range(_first, _last):
        _site = int(stream.sites[_position])
        _mark = float(stream.marks[_position])
        for _chain in _chains:
            _chain.update(_site, _mark)
    return [chain.config() for chain in _chains]


def _span(stream: ArrivalStream, t_start: Optional[float], t_stop: Optional[float]) -> Tuple[int, int]:
    _start = stream.window[0] if t_start is None else t_start
    _stop = stream.window[1] if t_stop is None else t_stop
    _first, _last = stream.between(_start, _stop)
    if t_start is None:
        _first = 0
    return _first, _last


def check_monotone(
        c: RateFamily,
        stream: ArrivalStream,
        upper: SpinConfig,
        lower: SpinConfig
) -> MonotoneCheck:
    """ Runs an ordered pair of chains and checks the order after every arrival.

    Only the updated site can break the order, so only that site is compared.

    :returns: ``MonotoneCheck(True, None, None)`` or the first violation.
    """
    if not upper.dominates(lower):
        raise ConfigurationError("The initial pair is not ordered.")
    _upper = Chain(upper, c, stream.lam)
    _lower = Chain(lower, c, stream.lam)
    for _position in range(len(stream)):
        _site = int(stream.sites[_position])
        _mark = float(stream.marks[_position])
        _, _high = _upper.update(_site, _mark)
        _, _low = _lower.update(_site, _mark)
        if _high < _low:
            _time = float(stream.times[_position])
            LOGGER.warning("Order violated at site %d, time %g.", _site, _time)
            return MonotoneCheck(False, _time, _site)
    return MonotoneCheck(True, None, None)


def first_flip_time(
        initial: SpinConfig,
        c: RateFamily,
        stream: ArrivalStream,
        site: int
) -> Optional[float]:
    """ Time of the first spin change at ``site``, None if it never flips. """
    _chain = Chain(initial, c, stream.lam)
    for _position in range(len(stream)):
        _target = int(stream.sites[_position])
        _old, _new = _chain.update(_target, float(stream.marks[_position]))
        if _target == site and _old != _new:
            return float(stream.times[_position])
    return None
