# -*- coding: utf-8 -*-
""" Finite-range flip rates.

A :class:`RateFamily` stores the flip rate of the center spin of every
local pattern as a dense table. Families that are not translation
invariant (checkerboard perturbations, free boxes) hold several table
variants and a per-site class array selecting the variant of each site
of the geometry they are bound to.

Glauber rates use the convention

.. code-block:: python

    c_x(sigma) = exp(-beta * sigma(x) * h_eff(x, sigma))
    h_eff(x, sigma) = h + sum_y J(y - x) * sigma(y)

which is reversible for the weight ``exp(-beta H)`` with
``H = -sum_{unordered pairs} J sigma sigma - sum h sigma``.
The opposite sign, ``exp(+beta sigma h_eff)``, is available through
``sign_convention='flipped_sign'`` and fails the detailed balance check.
"""

import csv
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from spinlat.errors import ConfigurationError, GeometryMismatchError, SizeLimitError
from spinlat.lattice import Geometry, Kernel, LocalPattern, validate_kernel
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

SIGN_CONVENTIONS = {'detailed_balance': -1.0, 'flipped_sign': 1.0}

# Exact enumeration of the Gibbs law is done on at most this many sites.
MAX_BALANCE_SITES = 20


def pattern_spins(radius: int, dimension: int) -> np.ndarray:
    """ Spins of all local patterns, one row per pattern index. """
    _bits = (2 * radius + 1) ** dimension
    _indices = np.arange(2 ** _bits, dtype=np.int64)
    _shifts = np.arange(_bits - 1, -1, -1, dtype=np.int64)
    return (((_indices[:, None] >> _shifts[None, :]) & 1) * 2 - 1).astype(np.int8)


class RateFamily(object):
    """ Flip rates of a finite-range spin system.

    :param tables:       Array of shape (variants, patterns) with the rate
                         of each pattern, in 1/time.
    :param radius:       Range r of the rates.
    :param dimension:    Dimension d.
    :param site_classes: Variant index of every site of ``geometry``.
                         Needed whenever there is more than one variant.
    :param geometry:     Geometry the site classes refer to.
    :param name:         Free text label used in logs and exports.
    """

    def __init__(
            self,
            tables: np.ndarray,
            radius: int,
            dimension: int,
            site_classes: Optional[np.ndarray] = None,
            geometry: Optional[Geometry] = None,
            name: str = ''
    ):
        self.tables = np.array(tables, dtype=np.float64, ndmin=2)
        self.radius = int(radius)
        self.dimension = int(dimension)
        self.name = name
        _patterns = 2 ** ((2 * self.radius + 1) ** self.dimension)
        if self.tables.shape[1] != _patterns:
            raise ConfigurationError(
                "A rate table for r=%d, d=%d needs %d entries, got %d." % (
                    self.radius, self.dimension, _patterns, self.tables.shape[1])
            )
        if not np.all(np.isfinite(self.tables)) or np.any(self.tables < 0):
            raise ConfigurationError("Rates must be finite and nonnegative.")
        if site_classes is None:
            if self.tables.shape[0] != 1:
                raise ConfigurationError("Several table variants need a site class array.")
            self.site_classes = None
            self.geometry = geometry
        else:
            if geometry is None:
                raise ConfigurationError("Site classes need the geometry they refer to.")
            self.site_classes = np.asarray(site_classes, dtype=np.int64)
            self.geometry = geometry
            if self.site_classes.shape != (geometry.n_sites,):
                raise GeometryMismatchError("One site class per site is needed.")
            if self.site_classes.min() < 0 or self.site_classes.max() >= self.tables.shape[0]:
                raise ConfigurationError("Site classes point outside the table variants.")
        if self.geometry is not None:
            if (self.geometry.radius, self.geometry.dimension) != (self.radius, self.dimension):
                raise GeometryMismatchError("Rates and geometry disagree on range or dimension.")
            if self.geometry.boundary == 'free':
                check_free_boundary(self, self.geometry)

    def __repr__(self) -> str:
        return "RateFamily(name=%r, radius=%d, dimension=%d, variants=%d)" % (
            self.name, self.radius, self.dimension, self.tables.shape[0])

    @property
    def translation_invariant(self) -> bool:
        return self.tables.shape[0] == 1

    @property
    def variants_in_use(self) -> np.ndarray:
        if self.site_classes is None:
            return np.zeros(1, dtype=np.int64)
        return np.unique(self.site_classes)

    @property
    def sup_rate(self) -> float:
        """ Largest rate over the table variants actually in use. """
        return float(self.tables[self.variants_in_use].max())

    def classes_on(self, geom: Geometry) -> np.ndarray:
        """ Variant index of every site of ``geom``.

        :raises GeometryMismatchError: If the family is bound to another geometry.
        """
        if self.site_classes is None:
            if (geom.radius, geom.dimension) != (self.radius, self.dimension):
                raise GeometryMismatchError("Rates and geometry disagree on range or dimension.")
            if geom.boundary == 'free':
                check_free_boundary(self, geom)
            return np.zeros(geom.n_sites, dtype=np.int64)
        if geom != self.geometry:
            raise GeometryMismatchError("%r is bound to %r, not %r." % (self, self.geometry, geom))
        return self.site_classes

    def rate(self, pattern: LocalPattern, variant: int = 0) -> float:
        """ Flip rate of the center of ``pattern``. """
        return float(self.tables[variant, pattern.index])

    def thresholds(self, lam: float) -> np.ndarray:
        """ Update thresholds v = c/lambda (center +1) or 1 - c/lambda (center -1). """
        _center_plus = pattern_spins(self.radius, self.dimension)[:, self._center_position] > 0
        _scaled = self.tables / lam
        return np.where(_center_plus[None, :], _scaled, 1.0 - _scaled)

    @property
    def _center_position(self) -> int:
        return (2 * self.radius + 1) ** self.dimension // 2

    def pad_to(self, radius: int, geometry: Optional[Geometry] = None) -> 'RateFamily':
        """ The same rates written as tables over a larger offset cube.

        :param radius:   The new range, at least the current one.
        :param geometry: Geometry with the new range, needed for families
                         with site classes.
        """
        if radius == self.radius:
            return self
        if radius < self.radius:
            raise ConfigurationError("Rates cannot be padded to a smaller range.")
        _small = list(np.ndindex(*([2 * self.radius + 1] * self.dimension)))
        _large_side = 2 * radius + 1
        _shift = radius - self.radius
        _positions = [
            int(np.ravel_multi_index(tuple(coord + _shift for coord in offset), [_large_side] * self.dimension))
            for offset in _small
        ]
        _spins = pattern_spins(radius, self.dimension)[:, _positions] > 0
        _weights = 2 ** np.arange(len(_positions) - 1, -1, -1, dtype=np.int64)
        _small_index = _spins.astype(np.int64) @ _weights
        _classes = self.site_classes
        if _classes is not None and geometry is None:
            raise ConfigurationError("Padding modulated rates needs the new geometry.")
        return RateFamily(
            self.tables[:, _small_index],
            radius,
            self.dimension,
            site_classes=_classes,
            geometry=geometry if _classes is not None else None,
            name=self.name
        )

    def to_csv(self, path: str) -> None:
        """ Writes all table entries for audit, columns variant, pattern_index, rate. """
        with open(path, 'w', newline='') as _file:
            _writer = csv.writer(_file)
            _writer.writerow(['variant', 'pattern_index', 'rate'])
            for _variant, _table in enumerate(self.tables):
                for _index, _rate in enumerate(_table):
                    _writer.writerow([_variant, _index, repr(float(_rate))])


class CoupledRates(NamedTuple):
    """ An unperturbed and a perturbed family on a shared clock. """
    c0: RateFamily
    c1: RateFamily
    lam: float
    epsilon: float


def check_free_boundary(rates: RateFamily, geom: Geometry) -> None:
    """ Checks that rates used on a free box ignore the exterior offsets.

    :raises ConfigurationError: If some table entry changes when exterior bits change.
    """
    _classes = rates.site_classes if rates.site_classes is not None else np.zeros(geom.n_sites, dtype=np.int64)
    _indices = np.arange(rates.tables.shape[1], dtype=np.int64)
    _checked = set()
    for _site in range(geom.n_sites):
        _mask = geom.exterior_mask(_site)
        _key = (int(_classes[_site]), _mask)
        if _mask == 0 or _key in _checked:
            continue
        _checked.add(_key)
        _table = rates.tables[_key[0]]
        if not np.array_equal(_table[_indices], _table[_indices & ~_mask]):
            raise ConfigurationError(
                "Rates %r depend on exterior offsets of site %s in a free box." % (
                    rates.name, geom.coords_of(_site))
            )


def _glauber_table(
        kernel: Kernel,
        h: float,
        beta: float,
        geom: Geometry,
        exterior_mask: int = 0,
        sign: float = -1.0
) -> np.ndarray:
    """ Table of exp(sign * beta * sigma(x) * h_eff) over all patterns.

    Offsets whose bit is set in ``exterior_mask`` carry no coupling.
    """
    _spins = pattern_spins(geom.radius, geom.dimension).astype(np.float64)
    _h_eff = np.full(_spins.shape[0], float(h))
    for _position, _offset in enumerate(geom.offsets):
        _coupling = kernel.get(tuple(_offset), 0.0)
        if _coupling == 0.0:
            continue
        if exterior_mask >> (geom.pattern_bits - 1 - _position) & 1:
            continue
        _h_eff += _coupling * _spins[:, _position]
    return np.exp(sign * beta * _spins[:, geom.center_position] * _h_eff)


def _free_box_classes(geom: Geometry) -> Tuple[np.ndarray, List[int]]:
    """ Site classes of a free box by exterior mask, and the mask of each class. """
    _masks = [geom.exterior_mask(site) for site in range(geom.n_sites)]
    _distinct = sorted(set(_masks))
    _lookup = {mask: position for position, mask in enumerate(_distinct)}
    return np.array([_lookup[mask] for mask in _masks], dtype=np.int64), _distinct


def general_rates(
        kernel: Kernel,
        h: float,
        beta: float,
        geom: Geometry,
        sign_convention: str = 'detailed_balance',
        beta_of_site=None,
        name: str = 'glauber'
) -> RateFamily:
    """ Glauber-type rates for an arbitrary symmetric kernel.

    :param kernel:          Offset -> coupling, couplings may be negative.
    :param h:               Field.
    :param beta:            Inverse temperature, > 0.
    :param geom:            Geometry the rates will run on.
    :param sign_convention: ``detailed_balance`` or ``flipped_sign``.
    :param beta_of_site:    Optional function coords -> inverse temperature,
                            turning the family into a modulated one.
    """
    if sign_convention not in SIGN_CONVENTIONS:
        raise ConfigurationError("Unknown sign convention %r." % sign_convention)
    if beta <= 0:
        raise ConfigurationError("The inverse temperature must be positive, got %g." % beta)
    validate_kernel(kernel, geom, ferromagnetic=False)
    _sign = SIGN_CONVENTIONS[sign_convention]

    if geom.boundary == 'free':
        _mask_classes, _masks = _free_box_classes(geom)
    else:
        _mask_classes, _masks = np.zeros(geom.n_sites, dtype=np.int64), [0]

    if beta_of_site is None:
        if len(_masks) == 1:
            return RateFamily(
                _glauber_table(kernel, h, beta, geom, _masks[0], _sign),
                geom.radius, geom.dimension, name=name
            )
        _tables = [_glauber_table(kernel, h, beta, geom, mask, _sign) for mask in _masks]
        return RateFamily(np.array(_tables), geom.radius, geom.dimension, _mask_classes, geom, name)

    # Modulated families get one variant per (inverse temperature, exterior mask).
    _keys = []
    _classes = np.empty(geom.n_sites, dtype=np.int64)
    for _index, _site in enumerate(geom.sites()):
        _key = (float(beta_of_site(_site)), _masks[_mask_classes[_index]])
        if _key[0] <= 0:
            raise ConfigurationError("Site %s gets a nonpositive inverse temperature." % (_site,))
        if _key not in _keys:
            _keys.append(_key)
        _classes[_index] = _keys.index(_key)
    _tables = [_glauber_table(kernel, h, site_beta, geom, mask, _sign) for site_beta, mask in _keys]
    return RateFamily(np.array(_tables), geom.radius, geom.dimension, _classes, geom, name)


def glauber_rates(kernel: Kernel, h: float, beta: float, geom: Geometry) -> RateFamily:
    """ Ferromagnetic Glauber rates.

    :raises ConfigurationError: On negative couplings, use :func:`general_rates` for those.
    """
    validate_kernel(kernel, geom, ferromagnetic=True)
    return general_rates(kernel, h, beta, geom)


def table_rates(tables: np.ndarray, radius: int, dimension: int, name: str = 'table') -> RateFamily:
    """ A translation invariant family from a raw table. """
    return RateFamily(np.asarray(tables, dtype=np.float64), radius, dimension, name=name)


def is_attractive(c: RateFamily) -> Tuple[bool, Optional[Tuple[LocalPattern, LocalPattern]]]:
    """ Checks the attractivity conditions on every table variant.

    For comparable patterns that agree at the center, the rate must not
    decrease when raising neighbors around a -1 center and must not
    increase around a +1 center. Monotonicity along single-spin raises
    is equivalent to monotonicity over all comparable pairs.

    :returns: ``(True, None)`` or ``(False, (higher, lower))`` with a
              violating pair of patterns.
    """
    _bits = (2 * c.radius + 1) ** c.dimension
    _center_shift = _bits - 1 - _bits // 2
    _indices = np.arange(2 ** _bits, dtype=np.int64)
    _center_plus = (_indices >> _center_shift) & 1
    for _variant in c.variants_in_use:
        _table = c.tables[_variant]
        for _shift in range(_bits):
            if _shift == _center_shift:
                continue
            _lows = _indices[((_indices >> _shift) & 1) == 0]
            _highs = _lows | (1 << _shift)
            _violations = np.where(
                _center_plus[_lows] == 1,
                _table[_highs] > _table[_lows],
                _table[_highs] < _table[_lows]
            )
            if np.any(_violations):
                _first = int(np.argmax(_violations))
                return False, (
                    LocalPattern.from_index(int(_highs[_first]), c.radius, c.dimension),
                    LocalPattern.from_index(int(_lows[_first]), c.radius, c.dimension)
                )
    return True, None


def _variant_pairs(c0: RateFamily, c1: RateFamily, geom: Optional[Geometry]) -> List[Tuple[int, int]]:
    """ Pairs of variants that meet at some site. """
    if c0.translation_invariant and c1.translation_invariant:
        return [(0, 0)]
    _geom = geom if geom is not None else (c0.geometry or c1.geometry)
    _classes = np.stack([c0.classes_on(_geom), c1.classes_on(_geom)], axis=1)
    return [tuple(int(value) for value in pair) for pair in np.unique(_classes, axis=0)]


def shared_range(c0: RateFamily, c1: RateFamily) -> Tuple[RateFamily, RateFamily]:
    """ Pads the family with the smaller range to the larger one. """
    if c0.radius == c1.radius:
        return c0, c1
    if c0.radius < c1.radius:
        return c0.pad_to(c1.radius, c1.geometry), c1
    return c0, c1.pad_to(c0.radius, c0.geometry)


def epsilon(c0: RateFamily, c1: RateFamily, geom: Optional[Geometry] = None) -> float:
    """ Twice the largest rate difference over sites and patterns. """
    c0, c1 = shared_range(c0, c1)
    _largest = 0.0
    for _first, _second in _variant_pairs(c0, c1, geom):
        _largest = max(_largest, float(np.max(np.abs(c0.tables[_first] - c1.tables[_second]))))
    return 2.0 * _largest


def coupled_rates(c0: RateFamily, c1: RateFamily, geom: Optional[Geometry] = None) -> CoupledRates:
    """ Bundles two families with their shared clock rate and distance. """
    c0, c1 = shared_range(c0, c1)
    return CoupledRates(
        c0=c0,
        c1=c1,
        lam=2.0 * max(c0.sup_rate, c1.sup_rate),
        epsilon=epsilon(c0, c1, geom)
    )


def checkerboard_perturbation(
        kernel: Kernel,
        h: float,
        beta: float,
        delta: float,
        geom: Geometry
) -> CoupledRates:
    """ Glauber rates against the same rates at beta +/- delta on the two sublattices.

    Sites with even coordinate sum get ``beta + delta``, odd ones ``beta - delta``.
    """
    if delta < 0:
        raise ConfigurationError("The perturbation strength must be nonnegative.")
    if delta >= beta:
        raise ConfigurationError("beta - delta must stay positive.")
    _c0 = glauber_rates(kernel, h, beta, geom)
    if delta == 0:
        _c1 = _c0
    else:
        _c1 = general_rates(
            kernel, h, beta, geom,
            beta_of_site=lambda site: beta + delta if sum(site) % 2 == 0 else beta - delta,
            name='checkerboard'
        )
    return coupled_rates(_c0, _c1, geom)


def check_detailed_balance(c: RateFamily, spec, geom: Geometry) -> float:
    """ Largest relative violation of detailed balance against the exact Gibbs law.

    :param c:    The rates.
    :param spec: A :class:`spinlat.gibbs.GibbsSpec` on ``geom`` with beta absorbed.
    :param geom: The geometry, at most 20 sites.
    :returns:    max over sigma, x of
                 |pi(s)c(s) - pi(s^x)c(s^x)| / max(pi(s)c(s), pi(s^x)c(s^x)).
    """
    # gibbs builds on the rates for its Monte Carlo estimates.
    from spinlat.gibbs import enumerate_configurations, exact_distribution

    if geom.n_sites > MAX_BALANCE_SITES:
        raise SizeLimitError("Detailed balance is checked on at most %d sites." % MAX_BALANCE_SITES)
    if spec.geometry != geom:
        raise GeometryMismatchError("Gibbs specification and rates live on different geometries.")
    _spins = enumerate_configurations(geom.n_sites)
    _pi = exact_distribution(spec)
    _bits = np.empty((_spins.shape[0], geom.n_sites + 1), dtype=np.int64)
    _bits[:, :-1] = _spins > 0
    _bits[:, -1] = geom.boundary_bit
    _patterns = _bits[:, geom.neighbor_table] @ geom.pattern_weights()
    _rates = c.tables[c.classes_on(geom)[None, :], _patterns]
    _flux = _pi[:, None] * _rates
    _states = np.arange(_spins.shape[0], dtype=np.int64)
    _worst = 0.0
    for _site in range(geom.n_sites):
        _flipped = _states ^ (1 << (geom.n_sites - 1 - _site))
        _forward = _flux[:, _site]
        _backward = _flux[_flipped, _site]
        _scale = np.maximum(_forward, _backward)
        _used = _scale > 0
        if np.any(_used):
            _worst = max(_worst, float(np.max(np.abs(_forward - _backward)[_used] / _scale[_used])))
    LOGGER.debug("Detailed balance violation of %r: %g", c, _worst)
    return _worst
