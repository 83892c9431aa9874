# -*- coding: utf-8 -*-
""" Backward dependence sets, influence clusters and lightrays.

For a target (x, t) the dependence set Y(s) holds the sites whose spin
at time s can change the spin of x at time t. It only changes at
arrivals and, once empty, stays empty further back in time.

Three methods compute it:

 exact       keeps the Boolean function from the spins of a candidate set
             to sigma_t(x) as a truth table and drops the variables it does
             not depend on. Exponential in the set size, capped.
 sandwich    couples all-plus and all-minus starts at time s and compares
             sigma_t(x). Only answers emptiness, valid for attractive rates.
 overapprox  at an arrival at z in Y, removes z when the mark fixes the
             update for every pattern and replaces z by its neighborhood
             otherwise. Always a superset of the exact set.
"""

import math
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from spinlat.errors import (ConfigurationError, ContractError, CouplingIdentityError, CoverageError,
                            DependenceCapExceeded, FitError)
from spinlat.graphical import ArrivalStream, Chain, UpdateTables, coupled_evolve, first_flip_time, sample_arrivals
from spinlat.lattice import Geometry, SpinConfig
from spinlat.rates import RateFamily, is_attractive
from spinlat.replicas import run_replicas
from spinlat.seeding import derive_seed
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

METHODS = ('exact', 'sandwich', 'overapprox')
DEFAULT_CAP = 20

# Slopes flatter than this count as no decay.
FLAT_SLOPE = 1e-12

Arrival = Tuple[float, int, float]


class DependenceSet(object):
    """ The map s -> Y(s) for a target (x, t), on ``floor <= s <= t``.

    ``breakpoints`` is ``[(t, {x}), (u_1, Y_1), (u_2, Y_2), ...]`` with
    decreasing change times; ``Y(s) = Y_i`` for ``u_{i+1} <= s < u_i``.
    Sandwich results only know when the set became empty and carry
    no breakpoints.

    :ivar processed_arrivals: ``(time, site, mark)`` of every arrival
                              that hit the set, latest first.
    """

    def __init__(
            self,
            site: int,
            time: float,
            floor: float,
            method: str,
            geometry: Geometry,
            breakpoints: Optional[List[Tuple[float, FrozenSet[int]]]] = None,
            emptied_at: Optional[float] = None,
            processed_arrivals: Optional[List[Arrival]] = None
    ):
        self.site = site
        self.time = time
        self.floor = floor
        self.method = method
        self.geometry = geometry
        self.breakpoints = breakpoints
        self.emptied_at = emptied_at
        self.processed_arrivals = processed_arrivals or []

    def __repr__(self) -> str:
        return "DependenceSet(site=%d, time=%g, floor=%g, method=%r, emptied_at=%r)" % (
            self.site, self.time, self.floor, self.method, self.emptied_at)

    def _check_time(self, s: float) -> None:
        if not self.floor <= s <= self.time:
            raise CoverageError("Time %g lies outside [%g, %g]." % (s, self.floor, self.time))

    def nonempty_at(self, s: float) -> bool:
        self._check_time(s)
        return self.emptied_at is None or s >= self.emptied_at

    def at(self, s: float) -> FrozenSet[int]:
        """ Y(s) as a set of site indices. """
        if self.breakpoints is None:
            raise ContractError("A %s dependence set only knows when it became empty." % self.method)
        self._check_time(s)
        _current = self.breakpoints[0][1]
        for _change, _sites in self.breakpoints[1:]:
            if s >= _change:
                break
            _current = _sites
        return _current

    def sites_ever(self) -> FrozenSet[int]:
        """ Every site that belongs to Y(s) for some s. """
        if self.breakpoints is None:
            raise ContractError("A %s dependence set only knows when it became empty." % self.method)
        return frozenset().union(*(sites for _, sites in self.breakpoints))


class LightrayReach(object):
    """ Space-time points reachable from (x, t) by backward lightrays.

    A site that joins the reach at time e stays in it for every earlier
    time, so the reach is the strips ``{y} x [floor, e_y]``.

    :ivar dict entry: Site index -> latest time at which it is reached.
    """

    def __init__(self, site: int, time: float, floor: float, entry: Dict[int, float], geometry: Geometry):
        self.site = site
        self.time = time
        self.floor = floor
        self.entry = entry
        self.geometry = geometry

    def sites_at(self, s: float) -> FrozenSet[int]:
        return frozenset(site for site, entry in self.entry.items() if entry >= s)

    def contains(self, site: int, s: float) -> bool:
        return self.floor <= s <= self.entry.get(site, -math.inf)

    def strips(self) -> Dict[int, List[Tuple[float, float]]]:
        return {site: [(self.floor, entry)] for site, entry in self.entry.items()}

    @property
    def touches_wrap(self) -> bool:
        """ True if the reach came within r of the far side of a torus. """
        _geom = self.geometry
        if _geom.boundary != 'periodic':
            return False
        _origin = _geom.coords_of(self.site)
        for _site in self.entry:
            for _axis, _coord in enumerate(_geom.coords_of(_site)):
                _side = _geom.sides[_axis]
                _distance = abs(_coord - _origin[_axis])
                if min(_distance, _side - _distance) > _side // 2 - _geom.radius:
                    return True
        return False


class InfluenceCluster(object):
    """ The closure of the graph of a dependence set, as closed strips per site.

    :param strips: Site index -> sorted, disjoint closed time intervals.
    """

    def __init__(self, strips: Dict[int, List[Tuple[float, float]]], geometry: Geometry):
        self.strips = {site: _merge(intervals) for site, intervals in strips.items() if intervals}
        self.geometry = geometry

    def __repr__(self) -> str:
        return "InfluenceCluster(sites=%d)" % len(self.strips)

    def is_empty(self) -> bool:
        return not self.strips

    def contains(self, site: int, time: float) -> bool:
        return any(low <= time <= high for low, high in self.strips.get(site, ()))

    def sites_at(self, time: float) -> FrozenSet[int]:
        return frozenset(site for site in self.strips if self.contains(site, time))

    def touches(self, sites: Iterable[int]) -> bool:
        """ True if the cluster meets any of ``sites`` at some time. """
        return any(site in self.strips for site in sites)

    def reaches(self, time: float) -> bool:
        """ True if the cluster extends down to ``time`` or below. """
        return any(intervals[0][0] <= time for intervals in self.strips.values())

    def lowest_time(self) -> float:
        return min(intervals[0][0] for intervals in self.strips.values())

    def below(self, time: float) -> 'InfluenceCluster':
        """ The part of the cluster at times up to ``time``. """
        _strips = {}
        for _site, _intervals in self.strips.items():
            _kept = [(low, min(high, time)) for low, high in _intervals if low <= time]
            if _kept:
                _strips[_site] = _kept
        return InfluenceCluster(_strips, self.geometry)

    def covered_by(self, others: Sequence['InfluenceCluster']) -> bool:
        """ True if every strip lies inside the union of ``others``. """
        for _site, _intervals in self.strips.items():
            _cover = _merge([interval for other in others for interval in other.strips.get(_site, ())])
            for _low, _high in _intervals:
                if not any(low <= _low and _high <= high for low, high in _cover):
                    return False
        return True


def _merge(intervals: Iterable[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """ Union of closed intervals, touching ones joined. """
    _merged = []
    for _low, _high in sorted(intervals):
        if _merged and _low <= _merged[-1][1]:
            _merged[-1] = (_merged[-1][0], max(_merged[-1][1], _high))
        else:
            _merged.append((_low, _high))
    return _merged


class DecayFit(object):
    """ Fit of ``p(t) = C exp(-t / tau)``.

    ``tau`` is ``inf`` when the fitted slope is not negative.
    """

    def __init__(
            self,
            amplitude: float,
            tau: float,
            amplitude_stderr: float,
            tau_stderr: float,
            r_squared: float,
            slope: float,
            points: int,
            dropped: int
    ):
        self.amplitude = amplitude
        self.tau = tau
        self.amplitude_stderr = amplitude_stderr
        self.tau_stderr = tau_stderr
        self.r_squared = r_squared
        self.slope = slope
        self.points = points
        self.dropped = dropped

    def __repr__(self) -> str:
        return "DecayFit(C=%g, tau=%g, R2=%g)" % (self.amplitude, self.tau, self.r_squared)

    @property
    def flat(self) -> bool:
        return math.isinf(self.tau)

    def predict(self, t: float) -> float:
        return self.amplitude * math.exp(-t / self.tau)

    def to_record(self) -> dict:
        return {
            'amplitude': self.amplitude,
            'amplitude_stderr': self.amplitude_stderr,
            'tau': self.tau,
            'tau_stderr': self.tau_stderr,
            'r_squared': self.r_squared,
            'slope': self.slope,
            'points': self.points,
            'dropped_censored': self.dropped,
            'flat': self.flat
        }


class SurvivalPoint(NamedTuple):
    """ One row of a survival scan. """
    t: float
    p_hat: float
    stderr: float
    method: str
    replicas: int


class GapEstimate(NamedTuple):
    """ Estimate of E+[sigma_t(0)] - E-[sigma_t(0)]. """
    gap: float
    stderr: float
    replicas: int


def _check_window(stream: ArrivalStream, floor: float, t: float) -> None:
    if floor < stream.window[0] or t > stream.window[1] or floor > t:
        raise CoverageError(
            "Stream window %s does not cover [%g, %g]." % (stream.window, floor, t)
        )


def _arrivals_between(stream: ArrivalStream, floor: float, t: float) -> Tuple[list, list, list]:
    """ Arrivals with ``floor < time <= t`` as plain lists, latest first. """
    _first, _last = stream.between(floor, t)
    return (
        stream.sites[_first:_last][::-1].tolist(),
        stream.times[_first:_last][::-1].tolist(),
        stream.marks[_first:_last][::-1].tolist()
    )


def _overapprox(site: int, t: float, floor: float, stream: ArrivalStream, tables: UpdateTables) -> DependenceSet:
    _current = {site}
    _breakpoints = [(t, frozenset(_current))]
    _processed = []
    _emptied = None
    for _z, _time, _mark in zip(*_arrivals_between(stream, floor, t)):
        if _z not in _current:
            continue
        _processed.append((_time, _z, _mark))
        _current.discard(_z)
        if not tables.determined(_z, _mark):
            _current.update(tables.interior_neighbors[_z])
        _frozen = frozenset(_current)
        if _frozen != _breakpoints[-1][1]:
            _breakpoints.append((_time, _frozen))
        if not _current:
            _emptied = _time
            break
    return DependenceSet(site, t, floor, 'overapprox', stream.geometry, _breakpoints, _emptied, _processed)


def _drop_free_variables(variables: List[int], table: np.ndarray) -> Tuple[List[int], np.ndarray]:
    """ Removes the variables a truth table does not depend on. """
    _variables = list(variables)
    _table = table.reshape([2] * len(_variables)) if _variables else table.reshape(())
    for _axis in range(len(_variables) - 1, -1, -1):
        _low = np.take(_table, 0, axis=_axis)
        if np.array_equal(_low, np.take(_table, 1, axis=_axis)):
            _table = _low
            del _variables[_axis]
    return _variables, _table.reshape(-1)


def _exact(site: int, t: float, floor: float, stream: ArrivalStream, tables: UpdateTables, cap: int) -> DependenceSet:
    _geom = stream.geometry
    _variables = [site]
    _table = np.array([0, 1], dtype=np.int8)
    _breakpoints = [(t, frozenset(_variables))]
    _processed = []
    _emptied = None
    for _z, _time, _mark in zip(*_arrivals_between(stream, floor, t)):
        if _z not in _variables:
            continue
        _processed.append((_time, _z, _mark))
        if tables.determined(_z, _mark):
            _candidates = [variable for variable in _variables if variable != _z]
        else:
            _candidates = sorted(set(_variables) | set(tables.interior_neighbors[_z]))
        if len(_candidates) > cap:
            raise DependenceCapExceeded(
                "The exact dependence set of site %d needs %d variables, cap is %d." % (site, len(_candidates), cap)
            )
        _size = len(_candidates)
        _assignments = np.arange(2 ** _size, dtype=np.int64)
        _position = {variable: j for j, variable in enumerate(_candidates)}

        def _bit(variable):
            return (_assignments >> (_size - 1 - _position[variable])) & 1

        if _z in _position:
            _pattern = np.zeros(2 ** _size, dtype=np.int64)
            for _target in tables.neighbors[_z]:
                _neighbor_bit = _geom.boundary_bit if _target == _geom.n_sites else _bit(_target)
                _pattern = (_pattern << 1) | _neighbor_bit
            _thresholds = tables.threshold_array[tables.classes[_z]]
            _new_z = (_mark >= _thresholds[_pattern]).astype(np.int64)
        else:
            _new_z = np.full(2 ** _size, 1 if _mark >= tables.highest[tables.classes[_z]] else 0, dtype=np.int64)

        _old_index = np.zeros(2 ** _size, dtype=np.int64)
        _width = len(_variables)
        for _j, _variable in enumerate(_variables):
            _value = _new_z if _variable == _z else _bit(_variable)
            _old_index |= _value << (_width - 1 - _j)
        _variables, _table = _drop_free_variables(_candidates, _table[_old_index])
        _frozen = frozenset(_variables)
        if _frozen != _breakpoints[-1][1]:
            _breakpoints.append((_time, _frozen))
        if not _variables:
            _emptied = _time
            break
    return DependenceSet(site, t, floor, 'exact', _geom, _breakpoints, _emptied, _processed)


def _relevant_arrivals(reach: LightrayReach, stream: ArrivalStream, floor: float, t: float) -> Tuple[list, list, list]:
    """ Arrivals inside the lightray reach, earliest first. """
    _first, _last = stream.between(floor, t)
    _sites, _times, _marks = [], [], []
    for _z, _time, _mark in zip(stream.sites[_first:_last].tolist(),
                                stream.times[_first:_last].tolist(),
                                stream.marks[_first:_last].tolist()):
        if _time <= reach.entry.get(_z, -math.inf):
            _sites.append(_z)
            _times.append(_time)
            _marks.append(_mark)
    return _sites, _times, _marks


def _extremes_disagree(site: int, s: float, relevant: Tuple[list, list, list], tables: UpdateTables) -> bool:
    """ Runs all-plus and all-minus from time s and compares the target spin. """
    _geom = tables.geometry
    _upper = Chain(SpinConfig.all_plus(_geom), tables.rates, tables.lam, tables)
    _lower = Chain(SpinConfig.all_minus(_geom), tables.rates, tables.lam, tables)
    for _z, _time, _mark in zip(*relevant):
        if _time <= s:
            continue
        _upper.update(_z, _mark)
        _lower.update(_z, _mark)
    return _upper.bits[site] != _lower.bits[site]


def _sandwich(site: int, t: float, floor: float, stream: ArrivalStream, tables: UpdateTables) -> DependenceSet:
    _reach = _lightray([site], t, floor, stream, tables.interior_neighbors)
    _relevant = _relevant_arrivals(_reach, stream, floor, t)
    _emptied = None
    if not _extremes_disagree(site, floor, _relevant, tables):
        # Disagreement is monotone in the start time and changes only at arrivals.
        _candidates = sorted(set(_relevant[1])) + [t]
        _low, _high = 0, len(_candidates) - 1
        while _low < _high:
            _middle = (_low + _high) // 2
            if _extremes_disagree(site, _candidates[_middle], _relevant, tables):
                _high = _middle
            else:
                _low = _middle + 1
        _emptied = _candidates[_low]
    return DependenceSet(site, t, floor, 'sandwich', stream.geometry, None, _emptied)


def _lightray(sources: Sequence[int], t: float, floor: float, stream: ArrivalStream,
              neighbors: List[List[int]]) -> LightrayReach:
    _entry = {source: t for source in sources}
    for _z, _time, _mark in zip(*_arrivals_between(stream, floor, t)):
        if _z in _entry:
            for _neighbor in neighbors[_z]:
                if _neighbor not in _entry:
                    _entry[_neighbor] = _time
    return LightrayReach(sources[0], t, floor, _entry, stream.geometry)


def _prepare(rates: RateFamily, stream: ArrivalStream, tables: Optional[UpdateTables]) -> UpdateTables:
    if tables is not None and tables.rates is rates and tables.geometry == stream.geometry \
            and tables.lam == stream.lam:
        return tables
    return UpdateTables(rates, stream.geometry, stream.lam)


def backward_dependence(
        x: Sequence[int],
        t: float,
        stream: ArrivalStream,
        rates: RateFamily,
        method: str = 'overapprox',
        cap: int = DEFAULT_CAP,
        floor: Optional[float] = None,
        tables: Optional[UpdateTables] = None
) -> DependenceSet:
    """ Computes Y_{x,t}(s) for ``floor <= s <= t``.

    :param x:      Target site.
    :param t:      Target time.
    :param stream: Arrivals covering ``[floor, t]``.
    :param rates:  The rates of the chain, bounded by ``stream.lam / 2``.
    :param method: ``exact``, ``sandwich`` or ``overapprox``.
    :param cap:    Largest candidate set of the exact method.
    :param floor:  Lowest time, the begin of the stream window by default.
    :raises DependenceCapExceeded: If the exact candidate set grows beyond ``cap``.
    :raises ConfigurationError:    On an unknown method or sandwich with non attractive rates.
    """
    if method not in METHODS:
        raise ConfigurationError("Unknown dependence method %r, expected one of %s." % (method, ', '.join(METHODS)))
    _floor = stream.window[0] if floor is None else floor
    _check_window(stream, _floor, t)
    _tables = _prepare(rates, stream, tables)
    _site = stream.geometry.site_index(x)
    if method == 'overapprox':
        return _overapprox(_site, t, _floor, stream, _tables)
    if method == 'exact':
        return _exact(_site, t, _floor, stream, _tables, cap)
    if not is_attractive(rates)[0]:
        raise ConfigurationError("The sandwich method needs attractive rates, %r is not." % rates)
    return _sandwich(_site, t, _floor, stream, _tables)


def dependence_nonempty(
        x: Sequence[int],
        t: float,
        stream: ArrivalStream,
        rates: RateFamily,
        method: str,
        s: float,
        cap: int = DEFAULT_CAP,
        tables: Optional[UpdateTables] = None
) -> bool:
    """ Whether Y_{x,t}(s) is nonempty, by the cheapest route of each method. """
    if method != 'sandwich':
        return backward_dependence(x, t, stream, rates, method, cap, s, tables).nonempty_at(s)
    if not is_attractive(rates)[0]:
        raise ConfigurationError("The sandwich method needs attractive rates, %r is not." % rates)
    _check_window(stream, s, t)
    _tables = _prepare(rates, stream, tables)
    _site = stream.geometry.site_index(x)
    _reach = _lightray([_site], t, s, stream, _tables.interior_neighbors)
    return _extremes_disagree(_site, s, _relevant_arrivals(_reach, stream, s, t), _tables)


def lightray_reach(
        x: Sequence[int],
        t: float,
        stream: ArrivalStream,
        s: float,
        tables: Optional[UpdateTables] = None
) -> LightrayReach:
    """ All points reachable from (x, t) by backward paths that may jump at arrivals.

    A path sitting at z when z has an arrival may continue at any site of S_z.
    """
    _reach = lightray_from_sites([stream.geometry.site_index(x)], t, stream, s, tables)
    if _reach.touches_wrap:
        LOGGER.debug("Lightray from site %d at time %g touches the torus wrap.", _reach.site, t)
    return _reach


def lightray_from_sites(
        sources: Sequence[int],
        t: float,
        stream: ArrivalStream,
        s: float,
        tables: Optional[UpdateTables] = None
) -> LightrayReach:
    """ The union of the lightray reaches of (y, t) over the site indices ``sources``. """
    _check_window(stream, s, t)
    _geom = stream.geometry
    if tables is None:
        _neighbors = [sorted(set(row) - {_geom.n_sites}) for row in _geom.neighbor_table.tolist()]
    else:
        _neighbors = tables.interior_neighbors
    return _lightray(list(sources), t, s, stream, _neighbors)


def cluster_of(dependence: DependenceSet) -> InfluenceCluster:
    """ Closed strips of the graph of a dependence set. """
    if dependence.breakpoints is None:
        raise ContractError("Clusters need the dependence sets, a %s result has none." % dependence.method)
    _strips = {}
    _points = dependence.breakpoints
    for _position, (_upper, _sites) in enumerate(_points):
        _lower = _points[_position + 1][0] if _position + 1 < len(_points) else dependence.floor
        for _site in _sites:
            _strips.setdefault(_site, []).append((_lower, _upper))
    return InfluenceCluster(_strips, dependence.geometry)


def _default_method(rates: RateFamily) -> str:
    return 'sandwich' if is_attractive(rates)[0] else 'overapprox'


def _survival_replica(task) -> Tuple[List[bool], bool]:
    _rates, _geom, _lam, _horizon, _offsets, _method, _seed, _cap = task
    _stream = sample_arrivals(_geom, _lam, (0.0, _horizon), _seed)
    _tables = UpdateTables(_rates, _geom, _lam)
    _origin = _geom.origin()
    _dependence = backward_dependence(_origin, _horizon, _stream, _rates, _method, _cap, 0.0, _tables)
    _wraps = lightray_reach(_origin, _horizon, _stream, 0.0, _tables).touches_wrap
    return [_dependence.nonempty_at(offset) for offset in _offsets], _wraps


def survival_scan(
        rates: RateFamily,
        geom: Geometry,
        horizons: Sequence[float],
        replicas: int,
        method: Optional[str] = None,
        seed: int = 0,
        lam: Optional[float] = None,
        cap: int = DEFAULT_CAP,
        workers: int = 1
) -> List[SurvivalPoint]:
    """ Survival probabilities P(Y_{0,t}(0) != empty) for several horizons.

    Every replica draws one stream on ``[0, max(horizons)]``; shorter
    horizons look at the same stream below the top, so survival is
    monotone in the horizon on every replica.

    :param method: Defaults to ``sandwich`` for attractive rates, ``overapprox`` otherwise.
    :param lam:    Clock rate, ``2 sup c`` by default.
    """
    _method = _default_method(rates) if method is None else method
    _lam = 2.0 * rates.sup_rate if lam is None else lam
    _horizons = [float(horizon) for horizon in horizons]
    if not _horizons or min(_horizons) < 0:
        raise ConfigurationError("Horizons must be a nonempty list of nonnegative times.")
    if replicas < 1:
        raise ConfigurationError("At least one replica is needed.")
    _top = max(_horizons)
    _offsets = [_top - horizon for horizon in _horizons]
    _tasks = [
        (rates, geom, _lam, _top, _offsets, _method, derive_seed(seed, 'survival', index), cap)
        for index in range(replicas)
    ]
    _results = run_replicas(_survival_replica, _tasks, workers)
    _wrapped = sum(1 for _, wraps in _results if wraps)
    if _wrapped:
        LOGGER.warning(
            "Lightrays touched the torus wrap in %d of %d replicas, enlarge %r.", _wrapped, replicas, geom
        )
    _survived = np.array([flags for flags, _ in _results], dtype=np.float64)
    _points = []
    for _column, _horizon in enumerate(_horizons):
        _p = float(np.mean(_survived[:, _column]))
        _points.append(SurvivalPoint(_horizon, _p, math.sqrt(_p * (1.0 - _p) / replicas), _method, replicas))
    return _points


def survival_estimate(
        rates: RateFamily,
        geom: Geometry,
        horizon: float,
        replicas: int,
        method: Optional[str] = None,
        seed: int = 0,
        lam: Optional[float] = None,
        cap: int = DEFAULT_CAP,
        workers: int = 1
) -> Tuple[float, float]:
    """ Fraction of replicas with Y_{0,t}(0) != empty, and its binomial standard error. """
    _point = survival_scan(rates, geom, [horizon], replicas, method, seed, lam, cap, workers)[0]
    return _point.p_hat, _point.stderr


def _gap_replica(task) -> int:
    _rates, _geom, _lam, _horizon, _seed = task
    _stream = sample_arrivals(_geom, _lam, (0.0, _horizon), _seed)
    _tables = UpdateTables(_rates, _geom, _lam)
    _origin = _geom.origin()
    _upper, _lower = coupled_evolve(
        [(SpinConfig.all_plus(_geom), _rates), (SpinConfig.all_minus(_geom), _rates)], _stream
    )
    _difference = (_upper[_origin] - _lower[_origin]) // 2
    _sandwich_flag = dependence_nonempty(_origin, _horizon, _stream, _rates, 'sandwich', 0.0, tables=_tables)
    if _difference != int(_sandwich_flag):
        raise CouplingIdentityError(
            "Seed %d: (sigma+ - sigma-)/2 = %d but the sandwich indicator is %d." % (
                _seed, _difference, int(_sandwich_flag))
        )
    if _sandwich_flag and not dependence_nonempty(_origin, _horizon, _stream, _rates, 'overapprox', 0.0,
                                                  tables=_tables):
        raise CouplingIdentityError("Seed %d: the spins disagree but the overapproximation is empty." % _seed)
    return _difference


def sandwich_gap(
        rates: RateFamily,
        geom: Geometry,
        t: float,
        replicas: int,
        seed: int = 0,
        lam: Optional[float] = None,
        workers: int = 1
) -> GapEstimate:
    """ Estimates E+[sigma_t(0)] - E-[sigma_t(0)] from the coupled extreme starts.

    Every replica asserts that (sigma+_t(0) - sigma-_t(0)) / 2 equals the
    sandwich emptiness indicator and that the overapproximation is not
    empty when the spins disagree.

    :raises CouplingIdentityError: On the first replica where either fails.
    """
    if not is_attractive(rates)[0]:
        raise ConfigurationError("The sandwich gap needs attractive rates.")
    _lam = 2.0 * rates.sup_rate if lam is None else lam
    _tasks = [(rates, geom, _lam, float(t), derive_seed(seed, 'gap', index)) for index in range(replicas)]
    try:
        _values = np.array(run_replicas(_gap_replica, _tasks, workers), dtype=np.float64)
    except CouplingIdentityError as error:
        LOGGER.error("Coupling identity failed: %s", error)
        raise
    _p = float(np.mean(_values))
    return GapEstimate(2.0 * _p, 2.0 * math.sqrt(_p * (1.0 - _p) / replicas), replicas)


def _first_flip_replica(task) -> float:
    _rates, _geom, _lam, _horizon, _site, _seed = task
    _stream = sample_arrivals(_geom, _lam, (0.0, _horizon), _seed)
    _time = first_flip_time(SpinConfig.all_plus(_geom), _rates, _stream, _site)
    return math.inf if _time is None else _time


def first_flip_times(
        rates: RateFamily,
        geom: Geometry,
        replicas: int,
        horizon: float,
        seed: int = 0,
        lam: Optional[float] = None,
        site: Optional[Sequence[int]] = None,
        workers: int = 1
) -> np.ndarray:
    """ Times of the first flip at a site from the all-plus start, ``inf`` when censored. """
    _lam = 2.0 * rates.sup_rate if lam is None else lam
    _site = geom.site_index(geom.origin() if site is None else site)
    _tasks = [(rates, geom, _lam, float(horizon), _site, derive_seed(seed, 'first_flip', index))
              for index in range(replicas)]
    return np.array(run_replicas(_first_flip_replica, _tasks, workers), dtype=np.float64)


def fit_decay(series: Sequence[Tuple[float, float, float]]) -> DecayFit:
    """ Weighted least squares fit of log p = log C - t / tau.

    Weights are ``p^2 / stderr^2`` (delta method on the log); if any
    standard error is zero all points get unit weight and the parameter
    errors come from the residual scatter instead.
    Zero estimates after the last positive one are dropped as censored.

    :param series: ``(t, p_hat, stderr)`` triples.
    :raises FitError: On a zero estimate inside the fit range or fewer
                      than three usable points.
    """
    _points = sorted((float(t), float(p), float(err)) for t, p, err in series)
    _positive = [position for position, point in enumerate(_points) if point[1] > 0]
    if not _positive:
        raise FitError("No positive estimate to fit.")
    _dropped = len(_points) - 1 - _positive[-1]
    if _dropped:
        LOGGER.warning("Dropped %d censored points at the end of the decay series.", _dropped)
    _points = _points[:_positive[-1] + 1]
    if any(point[1] <= 0 for point in _points):
        raise FitError("A zero estimate lies inside the fit range.")
    if len(_points) < 3:
        raise FitError("A decay fit needs at least three positive points, got %d." % len(_points))

    _t = np.array([point[0] for point in _points])
    _p = np.array([point[1] for point in _points])
    _err = np.array([point[2] for point in _points])
    _y = np.log(_p)
    _unit = bool(np.any(_err <= 0))
    _w = np.ones_like(_t) if _unit else (_p / _err) ** 2
    _design = np.stack([np.ones_like(_t), _t], axis=1)
    _normal = _design.T @ (_w[:, None] * _design)
    _intercept, _slope = np.linalg.solve(_normal, _design.T @ (_w * _y))
    _covariance = np.linalg.inv(_normal)
    _residuals = _y - (_intercept + _slope * _t)
    _ss_res = float(np.sum(_w * _residuals ** 2))
    if _unit:
        _covariance = _covariance * _ss_res / (len(_points) - 2)
    _mean = float(np.sum(_w * _y) / np.sum(_w))
    _ss_tot = float(np.sum(_w * (_y - _mean) ** 2))
    _r_squared = 1.0 - _ss_res / _ss_tot if _ss_tot > 0 else 1.0

    _amplitude = math.exp(_intercept)
    _amplitude_stderr = _amplitude * math.sqrt(max(_covariance[0, 0], 0.0))
    _slope_stderr = math.sqrt(max(_covariance[1, 1], 0.0))
    if _slope < -FLAT_SLOPE:
        _tau = -1.0 / _slope
        _tau_stderr = _slope_stderr / _slope ** 2
    else:
        LOGGER.info("Decay series is flat, slope %g.", _slope)
        _tau, _tau_stderr = math.inf, math.inf
    return DecayFit(_amplitude, _tau, _amplitude_stderr, _tau_stderr, _r_squared, float(_slope),
                    len(_points), _dropped)
