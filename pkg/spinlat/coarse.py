# -*- coding: utf-8 -*-
""" Space-time boxes and the bad box events.

Box ``n = (k, l)`` is ``{Mk_i, ..., Mk_i + M - 1}`` along every axis times
the time interval ``(l L, (l + 1) L]``. Its extended box keeps the time
interval and triples the spatial side, ``{Mk_i - M, ..., Mk_i + 2M - 1}``.
A box is bad when

 event1  a perturbation arrival falls into the extended box,
 event2  a lightray started in the box reaches the boundary of the extended box,
 event3  an influence cluster seeded at the top of the box avoids that
         boundary and still reaches the bottom of the extended box.

All three only read arrivals inside the extended box.
"""

import math
from typing import List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from spinlat.errors import ConfigurationError, CouplingIdentityError, CoverageError, GeometryMismatchError
from spinlat.graphical import ArrivalStream, PerturbationWindows, UpdateTables, check_rate_bound, sample_arrivals
from spinlat.influence import DEFAULT_CAP, backward_dependence, lightray_from_sites
from spinlat.lattice import Geometry, Kernel
from spinlat.rates import CoupledRates, RateFamily, checkerboard_perturbation
from spinlat.replicas import run_replicas
from spinlat.seeding import derive_seed
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

CLUSTER_METHODS = ('overapprox', 'exact')

BoxIndex = Tuple[Tuple[int, ...], int]


class BoxGrid(object):
    """ The box grid for scale N.

    :param N:      Dimensionless scale.
    :param tau0:   Decay time of the unperturbed survival probability.
    :param radius: Range r of the rates.
    :param M:      Spatial side, ``2 r ceil(N tau0)`` by default.
    :param speed:  Replaces the factor 2 of the default side, ``M = ceil(speed r L)``.
    """

    def __init__(self, N: float, tau0: float, radius: int = 1, M: Optional[int] = None, speed: float = 2.0):
        if N <= 0 or tau0 <= 0 or math.isinf(tau0):
            raise ConfigurationError("The box grid needs N > 0 and a finite tau0 > 0, got N=%g, tau0=%g." % (N, tau0))
        self.N = N
        self.tau0 = tau0
        self.radius = int(radius)
        self.L_box = max(1, int(math.ceil(N * tau0)))
        if M is None:
            M = int(math.ceil(speed * self.radius * self.L_box))
        if M < 1:
            raise ConfigurationError("The spatial box side must be positive, got %d." % M)
        self.M = int(M)
        self.speed = speed

    def __repr__(self) -> str:
        return "BoxGrid(N=%g, tau0=%g, L_box=%d, M=%d)" % (self.N, self.tau0, self.L_box, self.M)

    def time_span(self, n: BoxIndex) -> Tuple[float, float]:
        """ ``(bottom, top)`` of the half-open interval ``(bottom, top]``. """
        return float(self.L_box * n[1]), float(self.L_box * (n[1] + 1))

    @property
    def reach(self) -> int:
        """ Sites an extended box adds beyond its box on each side. """
        return self.M

    def _ranges(self, n: BoxIndex, extended: bool) -> List[range]:
        _margin = self.reach if extended else 0
        return [range(self.M * k - _margin, self.M * k + self.M + _margin) for k in n[0]]

    def _check_geometry(self, geom: Geometry, n: BoxIndex) -> None:
        if geom.boundary != 'periodic':
            raise GeometryMismatchError("Boxes live on a torus, got a %s box." % geom.boundary)
        if geom.dimension != len(n[0]) or geom.radius != self.radius:
            raise GeometryMismatchError("Box %s does not fit %r." % (n, geom))
        if any(side < 3 * self.M for side in geom.sides):
            raise GeometryMismatchError("Extended boxes of side %d do not fit on %r." % (3 * self.M, geom))

    @staticmethod
    def _sites_of(ranges: List[range], geom: Geometry) -> List[int]:
        return sorted(geom.site_index([axis[c] for axis, c in zip(ranges, coords)])
                      for coords in np.ndindex(*[len(axis) for axis in ranges]))

    def box_sites(self, n: BoxIndex, geom: Geometry) -> List[int]:
        self._check_geometry(geom, n)
        return self._sites_of(self._ranges(n, False), geom)

    def extended_sites(self, n: BoxIndex, geom: Geometry) -> List[int]:
        self._check_geometry(geom, n)
        return self._sites_of(self._ranges(n, True), geom)

    def extended_boundary(self, n: BoxIndex, geom: Geometry) -> Set[int]:
        """ Sites of the extended box with a neighbor outside it. """
        self._check_geometry(geom, n)
        _ranges = self._ranges(n, True)
        _side = 3 * self.M
        _boundary = set()
        for _coords in np.ndindex(*[_side] * len(_ranges)):
            if any(relative < self.radius or relative >= _side - self.radius for relative in _coords):
                _boundary.add(geom.site_index([axis[c] for axis, c in zip(_ranges, _coords)]))
        return _boundary

    def environment(
            self,
            dimension: int,
            margin: int = 0,
            first_side: Optional[int] = None
    ) -> Tuple[Geometry, BoxIndex, Tuple[float, float]]:
        """ A torus holding the extended box of one box, with ``margin`` boxes around it.

        :returns: The torus, the index of the box and the time window to sample.
        """
        _side = (3 + 2 * margin) * self.M
        _sides = [_side] * dimension
        if first_side is not None:
            _sides[0] = first_side
        _n = ((1 + margin,) * dimension, 0)
        return (
            Geometry(_sides, self.radius, 'periodic'),
            _n,
            (-float(margin * self.L_box), float((1 + margin) * self.L_box))
        )


class BoxVerdict(NamedTuple):
    """ The three bad box events of one box. """
    event1: bool
    event2: bool
    event3: bool
    method: str

    @property
    def bad(self) -> bool:
        return self.event1 or self.event2 or self.event3

    @property
    def verdict(self) -> str:
        for _name in ('event1', 'event2', 'event3'):
            if getattr(self, _name):
                return 'bad:%s' % _name
        return 'good'

    @property
    def conservative(self) -> bool:
        return self.method == 'overapprox'


class BadBoxReport(object):
    """ Bad box statistics at one scale. """

    def __init__(self, grid: BoxGrid, epsilon: float, verdicts: Sequence[BoxVerdict]):
        if not verdicts:
            raise ConfigurationError("A bad box report needs at least one replica.")
        self.grid = grid
        self.epsilon = epsilon
        self.verdicts = list(verdicts)
        self.replicas = len(self.verdicts)
        self.p_bad = sum(verdict.bad for verdict in self.verdicts) / self.replicas
        self.stderr = math.sqrt(self.p_bad * (1.0 - self.p_bad) / self.replicas)
        self.event_fractions = tuple(
            sum(getattr(verdict, name) for verdict in self.verdicts) / self.replicas
            for name in ('event1', 'event2', 'event3')
        )

    def __repr__(self) -> str:
        return "BadBoxReport(N=%g, p_bad=%g +- %g)" % (self.grid.N, self.p_bad, self.stderr)

    def to_row(self) -> dict:
        return {
            'N': self.grid.N,
            'M': self.grid.M,
            'L_box': self.grid.L_box,
            'epsilon': self.epsilon,
            'p_bad': self.p_bad,
            'stderr': self.stderr,
            'event1_frac': self.event_fractions[0],
            'event2_frac': self.event_fractions[1],
            'event3_frac': self.event_fractions[2]
        }


class BoxModel(NamedTuple):
    """ Glauber rates and their checkerboard perturbation, built per torus. """
    kernel: Kernel
    h: float
    beta: float
    delta: float

    def coupled(self, geom: Geometry) -> CoupledRates:
        return checkerboard_perturbation(self.kernel, self.h, self.beta, self.delta, geom)


class DependencyRadius(NamedTuple):
    """ Boxes further apart than this in some coordinate have disjoint extended boxes. """
    spatial: int
    temporal: int


def dependency_radius(grid: BoxGrid) -> DependencyRadius:
    """ Largest box distance at which extended boxes still overlap.

    An extended box spans ``M + 2 reach`` sites per axis, so boxes ``k``
    and ``k'`` overlap along an axis while ``|k - k'| M < M + 2 reach``.
    Extended boxes keep the time interval of their box, so different
    layers never overlap.
    """
    _spatial = int(math.ceil(2 * grid.reach / grid.M))
    return DependencyRadius(spatial=_spatial, temporal=0)


def _perturbation_in(sites: Sequence[int], bottom: float, top: float, stream: ArrivalStream,
                     windows: PerturbationWindows) -> bool:
    _inside = set(sites)
    _first, _last = stream.between(bottom, top)
    for _z, _mark in zip(stream.sites[_first:_last].tolist(), stream.marks[_first:_last].tolist()):
        if _z in _inside and windows.contains(_mark, _z):
            return True
    return False


def classify_box(
        n: BoxIndex,
        stream: ArrivalStream,
        c0: RateFamily,
        c1: RateFamily,
        grid: BoxGrid,
        method: str = 'overapprox',
        cap: int = DEFAULT_CAP,
        tables: Optional[UpdateTables] = None,
        windows: Optional[PerturbationWindows] = None
) -> BoxVerdict:
    """ Decides the three bad box events of box n.

    :param n:      ``(k, l)``, spatial and temporal box index.
    :param stream: Arrivals on a torus holding the extended box.
    :param c0:     Unperturbed rates, used for the influence clusters.
    :param c1:     Perturbed rates.
    :param method: Influence clusters by ``overapprox`` or ``exact``.
    :raises CoverageError:         If the stream misses part of the box time interval.
    :raises GeometryMismatchError: If the extended box does not fit on the torus.
    """
    if method not in CLUSTER_METHODS:
        raise ConfigurationError("Box clusters need one of %s, got %r." % (', '.join(CLUSTER_METHODS), method))
    _geom = stream.geometry
    _bottom, _top = grid.time_span(n)
    if stream.window[0] > _bottom or stream.window[1] < _top:
        raise CoverageError("Stream window %s does not cover box %s at (%g, %g]." % (stream.window, n, _bottom, _top))
    _box = grid.box_sites(n, _geom)
    _extended = grid.extended_sites(n, _geom)
    _boundary = grid.extended_boundary(n, _geom)
    _windows = windows if windows is not None else PerturbationWindows(c0, c1, stream.lam, _geom)
    _tables = tables if tables is not None else UpdateTables(c0, _geom, stream.lam)

    _event1 = _perturbation_in(_extended, _bottom, _top, stream, _windows)

    # Every lightray from inside the box is part of one from the top.
    _reach = lightray_from_sites(_box, _top, stream, _bottom, _tables)
    _event2 = any(site in _boundary for site in _reach.entry)

    _event3 = False
    for _site in _box:
        _dependence = backward_dependence(_geom.coords_of(_site), _top, stream, c0, method, cap, _bottom, _tables)
        if _dependence.sites_ever() & _boundary:
            continue
        if _dependence.nonempty_at(_bottom):
            _event3 = True
            break
    return BoxVerdict(_event1, _event2, _event3, method)


def local_verdict(n: BoxIndex, stream: ArrivalStream, c0: RateFamily, c1: RateFamily, grid: BoxGrid,
                  method: str = 'overapprox', cap: int = DEFAULT_CAP) -> BoxVerdict:
    """ Classifies box n from the arrivals inside its extended box only. """
    _bottom, _top = grid.time_span(n)
    _local = stream.clip(grid.extended_sites(n, stream.geometry)).restrict(_bottom, _top)
    return classify_box(n, _local, c0, c1, grid, method, cap)


def expected_event1(grid: BoxGrid, coupled: CoupledRates, geom: Geometry, n: BoxIndex) -> float:
    """ 1 - exp(-lambda L sum_x q_x) over the extended box, q_x the perturbation mark measure at x. """
    _windows = PerturbationWindows(coupled.c0, coupled.c1, coupled.lam, geom)
    _mass = sum(_windows.measure(site) for site in grid.extended_sites(n, geom))
    return 1.0 - math.exp(-coupled.lam * grid.L_box * _mass)


def _badbox_replica(task) -> BoxVerdict:
    _grid, _model, _dimension, _lam, _seed, _method, _cap, _margin = task
    _geom, _n, _window = _grid.environment(_dimension, _margin)
    _coupled = _model.coupled(_geom)
    _stream = sample_arrivals(_geom, _lam, _window, _seed)
    _verdict = classify_box(_n, _stream, _coupled.c0, _coupled.c1, _grid, _method, _cap)
    if _margin:
        _local = local_verdict(_n, _stream, _coupled.c0, _coupled.c1, _grid, _method, _cap)
        if _local != _verdict:
            raise CouplingIdentityError(
                "Box verdict %s differs from %s computed inside the extended box (seed %d)." % (
                    _verdict.verdict, _local.verdict, _seed)
            )
    return _verdict


def _clock_rate(grid: BoxGrid, model: BoxModel, dimension: int, lam: Optional[float]) -> Tuple[float, float]:
    _geom = grid.environment(dimension)[0]
    _coupled = model.coupled(_geom)
    _lam = _coupled.lam if lam is None else lam
    check_rate_bound(_coupled.c0, _lam)
    check_rate_bound(_coupled.c1, _lam)
    return _lam, _coupled.epsilon


def bad_probability(
        grid: BoxGrid,
        model: BoxModel,
        dimension: int,
        replicas: int,
        seed: int = 0,
        lam: Optional[float] = None,
        method: str = 'overapprox',
        cap: int = DEFAULT_CAP,
        workers: int = 1,
        check_locality: bool = False
) -> BadBoxReport:
    """ Fraction of bad boxes over independent box environments.

    :param check_locality: Also classify every box from the data inside its
                           extended box and require the same verdict.
    :raises CouplingIdentityError: If a local verdict differs.
    """
    _lam, _epsilon = _clock_rate(grid, model, dimension, lam)
    _margin = 1 if check_locality else 0
    _tasks = [(grid, model, dimension, _lam, derive_seed(seed, 'badbox', index), method, cap, _margin)
              for index in range(replicas)]
    _report = BadBoxReport(grid, _epsilon, run_replicas(_badbox_replica, _tasks, workers))
    LOGGER.info("Bad boxes at N=%g (M=%d, L=%d): %g +- %g", grid.N, grid.M, grid.L_box, _report.p_bad, _report.stderr)
    return _report


def bad_scan(
        scales: Sequence[float],
        tau0: float,
        model: BoxModel,
        dimension: int,
        replicas: int,
        seed: int = 0,
        radius: int = 1,
        speed: float = 2.0,
        lam: Optional[float] = None,
        method: str = 'overapprox',
        workers: int = 1,
        M: Optional[int] = None
) -> List[BadBoxReport]:
    """ :func:`bad_probability` over a list of scales N, with shared seeds.

    :param M: Fixed spatial side for every scale, derived from N and ``speed`` by default.
    """
    return [
        bad_probability(BoxGrid(N, tau0, radius, M, speed), model, dimension, replicas, seed, lam, method,
                        workers=workers)
        for N in scales
    ]


class CorrelationEstimate(NamedTuple):
    rho: float
    threshold: float
    replicas: int

    @property
    def uncorrelated(self) -> bool:
        return abs(self.rho) < self.threshold


def _pair_replica(task) -> Tuple[bool, bool]:
    _grid, _model, _dimension, _lam, _seed, _separation = task
    _side = (_separation + 3) * _grid.M
    _geom, _first, _window = _grid.environment(_dimension, first_side=_side)
    _second = ((_first[0][0] + _separation,) + _first[0][1:], _first[1])
    _coupled = _model.coupled(_geom)
    _stream = sample_arrivals(_geom, _lam, _window, _seed)
    _tables = UpdateTables(_coupled.c0, _geom, _lam)
    _windows = PerturbationWindows(_coupled.c0, _coupled.c1, _lam, _geom)
    return tuple(
        classify_box(index, _stream, _coupled.c0, _coupled.c1, _grid, tables=_tables, windows=_windows).bad
        for index in (_first, _second)
    )


def verdict_correlation(
        grid: BoxGrid,
        model: BoxModel,
        dimension: int,
        replicas: int,
        seed: int = 0,
        separation: int = 3,
        lam: Optional[float] = None,
        workers: int = 1
) -> CorrelationEstimate:
    """ Sample correlation of the verdicts of two boxes ``separation`` boxes apart along the first axis.

    Beyond :func:`dependency_radius` the verdicts are independent, so
    ``|rho|`` should stay below ``3 / sqrt(replicas)``.
    """
    if separation < 1:
        raise ConfigurationError("Boxes must be at least one box apart, got %d." % separation)
    _lam, _ = _clock_rate(grid, model, dimension, lam)
    _tasks = [(grid, model, dimension, _lam, derive_seed(seed, 'box_pair', index), separation)
              for index in range(replicas)]
    _pairs = np.array(run_replicas(_pair_replica, _tasks, workers), dtype=np.float64).reshape(-1, 2)
    _spread = _pairs.std(axis=0)
    if np.any(_spread == 0):
        _rho = 0.0
    else:
        _rho = float(np.corrcoef(_pairs[:, 0], _pairs[:, 1])[0, 1])
    return CorrelationEstimate(_rho, 3.0 / math.sqrt(replicas), replicas)
