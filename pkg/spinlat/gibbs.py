# -*- coding: utf-8 -*-
""" Finite-volume Ising Gibbs states.

The inverse temperature is absorbed into the couplings and the field.
A :class:`GibbsSpec` stores minus the Hamiltonian,

.. code-block:: python

    -H(sigma) = sum_{unordered pairs in S} J sigma_x sigma_y
                + sum_{x in S} h sigma_x
                + sum_{x in S, y outside the box} J_xy sigma_x b

and weights configurations with exp(-H). Plus and minus boxes have
``b = +1 / -1``, free and periodic boxes have no exterior term. Sites of
the box outside the region S do not couple to S.
"""

import math
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from spinlat.errors import ConfigurationError, ContractError, GeometryMismatchError, SizeLimitError
from spinlat.graphical import evolve, sample_arrivals
from spinlat.lattice import Geometry, Kernel, SpinConfig, nearest_neighbor_kernel, validate_kernel
from spinlat.rates import RateFamily, check_detailed_balance, general_rates
from spinlat.seeding import derive_seed
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

MAX_ENUMERATION_SITES = 20
WSM_METHODS = ('enumeration', 'transfer', 'mcmc')

# Negative gaps down to this size are rounding noise.
GAP_TOLERANCE = 1e-12
# Largest relative detailed balance violation accepted before sampling.
BALANCE_TOLERANCE = 1e-9
# Boxes above this size are checked for reversibility on a smaller box of the same kind.
BALANCE_CHECK_SITES = 12


class GibbsSpec(object):
    """ An Ising specification on a region of a box.

    :param geometry: The ambient box and its boundary mode.
    :param kernel:   Offset -> coupling, with beta absorbed.
    :param h:        Field, with beta absorbed.
    :param region:   Sites of S, the whole box if omitted.
    """

    def __init__(
            self,
            geometry: Geometry,
            kernel: Kernel,
            h: float,
            region: Optional[Sequence[Sequence[int]]] = None
    ):
        validate_kernel(kernel, geometry, ferromagnetic=False)
        self.geometry = geometry
        self.kernel = dict(kernel)
        self.h = float(h)
        if region is None:
            self.sites = list(range(geometry.n_sites))
        else:
            self.sites = sorted(set(geometry.site_index(site) for site in region))
        self.n_sites = len(self.sites)
        _local = {site: position for position, site in enumerate(self.sites)}
        _pairs = {}
        self.boundary_field = np.zeros(self.n_sites)
        for _position, _site in enumerate(self.sites):
            for _offset_position, _offset in enumerate(geometry.offsets):
                _coupling = self.kernel.get(tuple(_offset), 0.0)
                if _coupling == 0.0:
                    continue
                _target = int(geometry.neighbor_table[_site, _offset_position])
                if _target == geometry.n_sites:
                    self.boundary_field[_position] += _coupling
                elif _target in _local:
                    _key = tuple(sorted((_position, _local[_target])))
                    # Every unordered pair is seen once from each end.
                    _pairs[_key] = _pairs.get(_key, 0.0) + 0.5 * _coupling
        self.pairs = np.array(sorted(_pairs), dtype=np.int64).reshape(-1, 2)
        self.pair_couplings = np.array([_pairs[key] for key in sorted(_pairs)], dtype=np.float64)

    @classmethod
    def from_beta(cls, kernel: Kernel, h: float, beta: float, geometry: Geometry, region=None) -> 'GibbsSpec':
        """ Absorbs an explicit inverse temperature into couplings and field. """
        return cls(geometry, {offset: beta * coupling for offset, coupling in kernel.items()}, beta * h, region)

    def __repr__(self) -> str:
        return "GibbsSpec(geometry=%r, h=%g, sites=%d)" % (self.geometry, self.h, self.n_sites)

    @property
    def boundary_spin(self) -> int:
        return self.geometry.exterior_spin

    @property
    def field(self) -> np.ndarray:
        """ Field of every region site including the boundary term. """
        return self.h + self.boundary_spin * self.boundary_field

    def local_index(self, coords: Sequence[int]) -> int:
        """ Position of a site in the region. """
        _site = self.geometry.site_index(coords)
        try:
            return self.sites.index(_site)
        except ValueError:
            raise GeometryMismatchError("Site %s is not in the region." % (tuple(coords),))

    def center(self) -> int:
        """ Region position of the box center. """
        return self.local_index(self.geometry.center())


def spin_flip(spec: GibbsSpec) -> GibbsSpec:
    """ The specification with the field and the boundary spin reversed. """
    _boundary = {'plus': 'minus', 'minus': 'plus'}.get(spec.geometry.boundary, spec.geometry.boundary)
    _geom = Geometry(spec.geometry.sides, spec.geometry.radius, _boundary)
    return GibbsSpec(_geom, spec.kernel, -spec.h, [spec.geometry.coords_of(site) for site in spec.sites])


def enumerate_configurations(n_sites: int) -> np.ndarray:
    """ All configurations of ``n_sites`` spins; row k has bit ``n - 1 - x`` of k at site x. """
    if n_sites > MAX_ENUMERATION_SITES:
        raise SizeLimitError("Enumeration is limited to %d sites, got %d." % (MAX_ENUMERATION_SITES, n_sites))
    _states = np.arange(2 ** n_sites, dtype=np.int64)
    _shifts = np.arange(n_sites - 1, -1, -1, dtype=np.int64)
    return (((_states[:, None] >> _shifts[None, :]) & 1) * 2 - 1).astype(np.int8)


def _minus_energies(spec: GibbsSpec, spins: np.ndarray) -> np.ndarray:
    _spins = np.asarray(spins, dtype=np.float64)
    _values = _spins @ spec.field
    if spec.pairs.shape[0]:
        _values = _values + (_spins[..., spec.pairs[:, 0]] * _spins[..., spec.pairs[:, 1]]) @ spec.pair_couplings
    return _values


def energy(spec: GibbsSpec, spins: Union[SpinConfig, Sequence[int]]) -> float:
    """ Minus the Hamiltonian of a configuration of the region.

    :param spins: Region spins in region order, or a configuration of the whole box.
    """
    if isinstance(spins, SpinConfig):
        if spins.geometry != spec.geometry:
            raise GeometryMismatchError("Configuration and specification live on different boxes.")
        _spins = spins.spins[spec.sites]
    else:
        _spins = np.asarray(spins)
    if _spins.shape != (spec.n_sites,):
        raise GeometryMismatchError("Expected %d region spins, got %s." % (spec.n_sites, _spins.shape))
    return float(_minus_energies(spec, _spins))


def _log_weights(spec: GibbsSpec) -> Tuple[np.ndarray, np.ndarray]:
    _spins = enumerate_configurations(spec.n_sites)
    return _spins, _minus_energies(spec, _spins)


def partition_function(spec: GibbsSpec) -> float:
    """ Exact Z over all configurations of the region, with compensated summation. """
    _, _log = _log_weights(spec)
    _shift = float(np.max(_log))
    return math.exp(_shift) * math.fsum(np.exp(_log - _shift))


def exact_distribution(spec: GibbsSpec) -> np.ndarray:
    """ Gibbs probabilities of all configurations in enumeration order. """
    _, _log = _log_weights(spec)
    _weights = np.exp(_log - np.max(_log))
    return _weights / math.fsum(_weights)


def site_observable(spec: GibbsSpec, coords: Sequence[int]) -> Callable[[np.ndarray], np.ndarray]:
    """ The spin at one site, as a function of region spin rows. """
    _position = spec.local_index(coords)
    return lambda spins: spins[..., _position]


def exact_expectation(spec: GibbsSpec, observable: Callable[[np.ndarray], np.ndarray]) -> float:
    """ Exact Gibbs mean of a function of region spin rows. """
    _spins, _log = _log_weights(spec)
    _weights = np.exp(_log - np.max(_log))
    _values = np.asarray(observable(_spins), dtype=np.float64)
    return math.fsum(_weights * _values) / math.fsum(_weights)


def center_magnetization(spec: GibbsSpec) -> float:
    """ Exact <sigma> at the box center. """
    return exact_expectation(spec, site_observable(spec, spec.geometry.center()))


def transfer_magnetization_1d(L: int, J: float, h: float, boundary: str) -> float:
    """ <sigma> at the center of a chain of L sites, by 2x2 transfer matrices.

    The end sites feel an extra field ``b * J`` from their exterior neighbor.
    Forward and backward vectors are normalized after every step.

    :param L:        Chain length, center is site ``(L - 1) // 2``.
    :param J:        Nearest neighbor coupling, beta absorbed.
    :param h:        Field, beta absorbed.
    :param boundary: ``plus``, ``minus`` or ``free``.
    """
    if boundary not in ('plus', 'minus', 'free'):
        raise ConfigurationError("Transfer matrices take plus, minus or free boundaries, not %r." % boundary)
    if L < 1:
        raise ConfigurationError("A chain needs at least one site.")
    _b = {'plus': 1.0, 'minus': -1.0, 'free': 0.0}[boundary]
    _spins = np.array([-1.0, 1.0])
    _fields = np.full(L, float(h))
    _fields[0] += _b * J
    _fields[-1] += _b * J
    _bond = np.exp(J * np.outer(_spins, _spins))
    _center = (L - 1) // 2

    _forward = np.exp(_fields[0] * _spins)
    _forward /= _forward.sum()
    for _site in range(1, _center + 1):
        _forward = (_forward @ _bond) * np.exp(_fields[_site] * _spins)
        _forward /= _forward.sum()

    _backward = np.ones(2)
    for _site in range(L - 1, _center, -1):
        _backward = _bond @ (np.exp(_fields[_site] * _spins) * _backward)
        _backward /= _backward.sum()

    _marginal = _forward * _backward
    return float((_marginal[1] - _marginal[0]) / (_marginal[1] + _marginal[0]))


def _batch_means_stderr(values: np.ndarray, batches: int) -> float:
    _batches = max(2, min(batches, values.shape[0]))
    _means = np.array([chunk.mean() for chunk in np.array_split(values, _batches)])
    return float(np.std(_means, ddof=1) / math.sqrt(_batches))


def _balance_geometry(geom: Geometry) -> Geometry:
    """ A box of the same kind with at most ``BALANCE_CHECK_SITES`` sites. """
    _side = 1
    while (_side + 1) ** geom.dimension <= BALANCE_CHECK_SITES:
        _side += 1
    return Geometry([min(side, _side) for side in geom.sides], geom.radius, geom.boundary)


def verify_reversible(spec: GibbsSpec, rates: RateFamily, tolerance: float = BALANCE_TOLERANCE) -> float:
    """ Checks detailed balance of ``rates`` for ``spec``, on a capped box if needed.

    Boxes above ``BALANCE_CHECK_SITES`` sites are checked on a smaller box
    of the same kind and range. Families bound to their box by site
    classes can only be checked on that box.

    :returns: The violation found.
    :raises ContractError: If the violation exceeds ``tolerance`` or a
                           bound family sits on a box too large to check.
    """
    _geom = spec.geometry
    if _geom.n_sites <= BALANCE_CHECK_SITES:
        _violation = check_detailed_balance(rates, spec, _geom)
    elif rates.translation_invariant:
        _small = _balance_geometry(_geom)
        _violation = check_detailed_balance(rates, GibbsSpec(_small, spec.kernel, spec.h), _small)
    else:
        raise ContractError("%r is bound to a box of %d sites, too large to verify detailed balance."
                            % (rates, _geom.n_sites))
    if _violation > tolerance:
        raise ContractError("%r is not reversible for %r, violation %g." % (rates, spec, _violation))
    return _violation


def mcmc_expectation(
        spec: GibbsSpec,
        burn_in: float,
        samples: int,
        thinning: float,
        seed: int,
        observable: Optional[Callable[[SpinConfig], float]] = None,
        batches: int = 20,
        start: str = 'plus',
        rates: Optional[RateFamily] = None
) -> Tuple[float, float]:
    """ Time average of an observable along Glauber dynamics reversible for ``spec``.

    The rates run at beta = 1 since beta is absorbed in the specification.
    They are checked with :func:`verify_reversible` before sampling.

    :param burn_in:    Discarded time.
    :param samples:    Number of samples after the burn in.
    :param thinning:   Time between samples.
    :param observable: Function of a configuration, the center spin by default.
    :param start:      ``plus`` or ``minus`` initial configuration.
    :param rates:      Dynamics to sample with, Glauber rates of ``spec`` by default.
    :returns:          Estimate and batch means standard error.
    :raises ContractError: If the rates are not reversible for ``spec``.
    """
    _geom = spec.geometry
    if spec.n_sites != _geom.n_sites:
        raise ConfigurationError("Monte Carlo estimates need the region to fill the box.")
    if samples < 2 or thinning <= 0 or burn_in < 0:
        raise ConfigurationError("Need two or more samples, positive thinning and nonnegative burn in.")
    if rates is None:
        _rates = general_rates(spec.kernel, spec.h, 1.0, _geom, name='gibbs_mcmc')
        if _geom.n_sites > BALANCE_CHECK_SITES and not _rates.translation_invariant:
            # Free boxes vary by exterior mask, the constructor is checked on a small box instead.
            _small = _balance_geometry(_geom)
            verify_reversible(GibbsSpec(_small, spec.kernel, spec.h),
                              general_rates(spec.kernel, spec.h, 1.0, _small, name='gibbs_mcmc'))
        else:
            verify_reversible(spec, _rates)
    else:
        _rates = rates
        verify_reversible(spec, _rates)
    _center = _geom.site_index(_geom.center())
    _observable = observable or (lambda config: float(config.spins[_center]))
    _horizon = burn_in + samples * thinning
    _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, _horizon), seed)
    _initial = SpinConfig.all_plus(_geom) if start == 'plus' else SpinConfig.all_minus(_geom)
    _times = [burn_in + (index + 1) * thinning for index in range(samples)]
    _, _record = evolve(_initial, _rates, _stream, sample_times=_times, observables={'value': _observable})
    _values = np.array([value for _, value in _record.series('value')])
    return float(_values.mean()), _batch_means_stderr(_values, batches)


class WsmPoint(NamedTuple):
    """ One row of a weak spatial mixing scan. """
    L: int
    gap: float
    stderr: float
    method: str


def _box(L: int, dimension: int, boundary: str) -> Geometry:
    return Geometry((L,) * dimension, 1, boundary)


def wsm_gap(
        L: int,
        J: float,
        h: float,
        method: str = 'enumeration',
        dimension: int = 1,
        mcmc: Optional[Dict[str, float]] = None,
        seed: int = 0
) -> WsmPoint:
    """ <sigma_0>+ - <sigma_0>- at the center of a box of side L.

    :param J:         Nearest neighbor coupling, beta absorbed.
    :param h:         Field, beta absorbed.
    :param method:    ``enumeration``, ``transfer`` (d = 1) or ``mcmc``.
    :param mcmc:      ``burn_in``, ``samples``, ``thinning`` for the mcmc method.
    :raises ContractError: If the gap comes out negative beyond noise.
    """
    if method not in WSM_METHODS:
        raise ConfigurationError("Unknown gap method %r, expected one of %s." % (method, ', '.join(WSM_METHODS)))
    _kernel = nearest_neighbor_kernel(dimension, J)
    _stderr = 0.0
    if method == 'transfer':
        if dimension != 1:
            raise ConfigurationError("Transfer matrices are implemented for chains only.")
        _gap = transfer_magnetization_1d(L, J, h, 'plus') - transfer_magnetization_1d(L, J, h, 'minus')
    elif method == 'enumeration':
        _gap = (center_magnetization(GibbsSpec(_box(L, dimension, 'plus'), _kernel, h))
                - center_magnetization(GibbsSpec(_box(L, dimension, 'minus'), _kernel, h)))
    else:
        _settings = {'burn_in': 10.0, 'samples': 2000, 'thinning': 0.5}
        _settings.update(mcmc or {})
        _plus, _plus_err = mcmc_expectation(
            GibbsSpec(_box(L, dimension, 'plus'), _kernel, h), _settings['burn_in'], int(_settings['samples']),
            _settings['thinning'], derive_seed(seed, 'wsm_plus', L)
        )
        _minus, _minus_err = mcmc_expectation(
            GibbsSpec(_box(L, dimension, 'minus'), _kernel, h), _settings['burn_in'], int(_settings['samples']),
            _settings['thinning'], derive_seed(seed, 'wsm_minus', L), start='minus'
        )
        _gap = _plus - _minus
        _stderr = math.hypot(_plus_err, _minus_err)
    if _gap < -max(GAP_TOLERANCE, 3.0 * _stderr):
        raise ContractError("Negative gap %g (stderr %g) at L=%d." % (_gap, _stderr, L))
    return WsmPoint(L, _gap, _stderr, method)


def wsm_scan(
        sizes: Sequence[int],
        J: float,
        h: float,
        method: str = 'transfer',
        dimension: int = 1,
        mcmc: Optional[Dict[str, float]] = None,
        seed: int = 0
) -> List[WsmPoint]:
    """ :func:`wsm_gap` over a list of box sides. """
    _points = [wsm_gap(L, J, h, method, dimension, mcmc, seed) for L in sizes]
    for _smaller, _larger in zip(_points, _points[1:]):
        if _larger.gap > _smaller.gap + 3.0 * (_larger.stderr + _smaller.stderr) + GAP_TOLERANCE:
            LOGGER.warning("Gap grows from L=%d to L=%d.", _smaller.L, _larger.L)
    return _points
