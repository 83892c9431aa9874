# -*- coding: utf-8 -*-
""" Finite sublattices of Z^d and local spin patterns.

A :class:`Geometry` is a box of sites with one of four boundary modes:

 periodic   distances are toroidal, there are no exterior sites.
 plus       every site outside the box reads as spin +1.
 minus      every site outside the box reads as spin -1.
 free       exterior sites carry no coupling at all.

Sites are coordinate tuples. They are indexed row-major with the
last axis running fastest. The offsets of the cube ``[-r, r]^d`` are
ordered the same way; the first offset is the most significant bit of
a pattern index and a set bit means spin +1.
"""

import itertools
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from spinlat.errors import ConfigurationError, GeometryMismatchError

BOUNDARY_MODES = ('periodic', 'plus', 'minus', 'free')

# Exterior offsets of a free box read this bit. Rate tables used on
# free boxes must not depend on it.
NEUTRAL_BIT = 0

# Patterns are stored as dense tables, 2**27 entries is the largest we accept.
MAX_PATTERN_BITS = 27

Site = Tuple[int, ...]
Kernel = Dict[Tuple[int, ...], float]


class Neighbor(NamedTuple):
    """ One entry of a neighborhood.

    ``index`` is None for exterior sites, ``coords`` are then
    the unwrapped coordinates outside the box.
    """
    coords: Site
    index: Optional[int]
    exterior: bool


class Geometry(object):
    """ A box of sites with a boundary mode and an interaction range.

    :param sides:    Side length per axis, in sites.
    :param radius:   Interaction range r in the l-infinity norm.
    :param boundary: One of ``periodic``, ``plus``, ``minus``, ``free``.
    :raises ConfigurationError: On empty sides, r < 1 or unknown boundary.

    On a torus with a side below 2r+1 several offsets wrap onto the same
    site, the site itself included. Every offset keeps its own entry in
    the neighbor table, so couplings of folded offsets add up.
    """

    def __init__(self, sides: Sequence[int], radius: int = 1, boundary: str = 'periodic'):
        self.sides = tuple(int(side) for side in sides)
        self.radius = int(radius)
        self.boundary = boundary
        if not self.sides:
            raise ConfigurationError("A geometry needs at least one axis.")
        if min(self.sides) < 1:
            raise ConfigurationError("Side lengths must be at least 1, got %s." % (self.sides,))
        if self.radius < 1:
            raise ConfigurationError("The range must be at least 1, got %d." % self.radius)
        if boundary not in BOUNDARY_MODES:
            raise ConfigurationError(
                "Unknown boundary mode %r, expected one of %s." % (boundary, ', '.join(BOUNDARY_MODES))
            )
        self.dimension = len(self.sides)
        self.n_sites = int(np.prod(self.sides))
        self.offsets = list(itertools.product(range(-self.radius, self.radius + 1), repeat=self.dimension))
        self.pattern_bits = len(self.offsets)
        if self.pattern_bits > MAX_PATTERN_BITS:
            raise ConfigurationError(
                "Patterns of %d spins are too large for dense rate tables." % self.pattern_bits
            )
        self.n_patterns = 2 ** self.pattern_bits
        self.center_position = self.pattern_bits // 2
        self._strides = tuple(
            int(np.prod(self.sides[axis + 1:])) for axis in range(self.dimension)
        )
        self.neighbor_table = self._build_neighbor_table()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Geometry):
            return NotImplemented
        return (self.sides, self.radius, self.boundary) == (other.sides, other.radius, other.boundary)

    def __hash__(self) -> int:
        return hash((self.sides, self.radius, self.boundary))

    def __repr__(self) -> str:
        return "Geometry(sides=%s, radius=%d, boundary=%r)" % (self.sides, self.radius, self.boundary)

    @property
    def boundary_bit(self) -> int:
        """ Bit read on exterior offsets. """
        return 1 if self.boundary == 'plus' else NEUTRAL_BIT

    @property
    def exterior_spin(self) -> int:
        """ Spin of the exterior, 0 for free and periodic boxes. """
        return {'plus': 1, 'minus': -1}.get(self.boundary, 0)

    def site_index(self, coords: Sequence[int]) -> int:
        """ Row-major index of a site inside the box (wrapped on a torus). """
        _coords = self.wrap(coords)
        if _coords is None:
            raise GeometryMismatchError("Site %s lies outside %r." % (tuple(coords), self))
        return sum(coord * stride for coord, stride in zip(_coords, self._strides))

    def coords_of(self, index: int) -> Site:
        """ Coordinates of the site with row-major index ``index``. """
        return tuple(int(coord) for coord in np.unravel_index(index, self.sides))

    def sites(self) -> List[Site]:
        """ All sites in row-major order. """
        return list(itertools.product(*(range(side) for side in self.sides)))

    def origin(self) -> Site:
        """ The site with all coordinates zero. """
        return (0,) * self.dimension

    def center(self) -> Site:
        """ The center of the box, the floor-half site for even sides. """
        return tuple((side - 1) // 2 for side in self.sides)

    def wrap(self, coords: Sequence[int]) -> Optional[Site]:
        """ Maps coordinates into the box, None for exterior sites. """
        if self.boundary == 'periodic':
            return tuple(int(coord) % side for coord, side in zip(coords, self.sides))
        if all(0 <= coord < side for coord, side in zip(coords, self.sides)):
            return tuple(int(coord) for coord in coords)
        return None

    def _build_neighbor_table(self) -> np.ndarray:
        """ Site index of every offset of every site, ``n_sites`` marks the exterior. """
        _table = np.empty((self.n_sites, self.pattern_bits), dtype=np.int64)
        for _index, _site in enumerate(self.sites()):
            for _position, _offset in enumerate(self.offsets):
                _wrapped = self.wrap([coord + shift for coord, shift in zip(_site, _offset)])
                if _wrapped is None:
                    _table[_index, _position] = self.n_sites
                else:
                    _table[_index, _position] = sum(
                        coord * stride for coord, stride in zip(_wrapped, self._strides)
                    )
        return _table

    def exterior_mask(self, index: int) -> int:
        """ Pattern bits of the exterior offsets of site ``index``, as a bit mask. """
        _mask = 0
        for _position in range(self.pattern_bits):
            if self.neighbor_table[index, _position] == self.n_sites:
                _mask |= 1 << (self.pattern_bits - 1 - _position)
        return _mask

    def pattern_weights(self) -> np.ndarray:
        """ Value of each pattern position in a pattern index. """
        return 2 ** np.arange(self.pattern_bits - 1, -1, -1, dtype=np.int64)

    def to_record(self) -> dict:
        """ Plain description for headers and manifests. """
        return {'sides': list(self.sides), 'radius': self.radius, 'boundary': self.boundary}


class LocalPattern(object):
    """ Spins on the offset cube ``[-r, r]^d`` around a center site.

    :param spins:     Spins in offset order, each -1 or +1.
    :param radius:    Range r.
    :param dimension: Dimension d.
    """

    def __init__(self, spins: Sequence[int], radius: int, dimension: int):
        self.radius = radius
        self.dimension = dimension
        self.spins = tuple(int(spin) for spin in spins)
        if len(self.spins) != (2 * radius + 1) ** dimension:
            raise ConfigurationError("A pattern needs (2r+1)^d spins.")
        if any(spin not in (-1, 1) for spin in self.spins):
            raise ConfigurationError("Pattern spins must be -1 or +1.")

    @classmethod
    def from_index(cls, index: int, radius: int, dimension: int) -> 'LocalPattern':
        """ Decodes a canonical pattern index. """
        _bits = (2 * radius + 1) ** dimension
        if not 0 <= index < 2 ** _bits:
            raise ConfigurationError("Pattern index %d out of range." % index)
        _spins = [1 if (index >> (_bits - 1 - position)) & 1 else -1 for position in range(_bits)]
        return cls(_spins, radius, dimension)

    @property
    def index(self) -> int:
        """ Canonical index, first offset is the most significant bit. """
        _index = 0
        for spin in self.spins:
            _index = (_index << 1) | (1 if spin > 0 else 0)
        return _index

    @property
    def center(self) -> int:
        """ Spin of the center site. """
        return self.spins[len(self.spins) // 2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LocalPattern):
            return NotImplemented
        return (self.spins, self.radius, self.dimension) == (other.spins, other.radius, other.dimension)

    def __repr__(self) -> str:
        return "LocalPattern(index=%d, radius=%d, dimension=%d)" % (self.index, self.radius, self.dimension)


class SpinConfig(object):
    """ A spin configuration on a geometry.

    Spins are kept as an int8 array of -1/+1 in row-major site order.

    :param geometry: The geometry the configuration lives on.
    :param spins:    Initial spins, all +1 if omitted.
    """

    def __init__(self, geometry: Geometry, spins: Optional[Sequence[int]] = None):
        self.geometry = geometry
        if spins is None:
            self.spins = np.ones(geometry.n_sites, dtype=np.int8)
        else:
            self.spins = np.array(spins, dtype=np.int8).reshape(-1)
            if self.spins.shape[0] != geometry.n_sites:
                raise GeometryMismatchError(
                    "Configuration has %d spins, geometry %d sites." % (self.spins.shape[0], geometry.n_sites)
                )
            if not np.all(np.abs(self.spins) == 1):
                raise ConfigurationError("Spins must be -1 or +1.")

    @classmethod
    def all_plus(cls, geometry: Geometry) -> 'SpinConfig':
        return cls(geometry, np.ones(geometry.n_sites, dtype=np.int8))

    @classmethod
    def all_minus(cls, geometry: Geometry) -> 'SpinConfig':
        return cls(geometry, -np.ones(geometry.n_sites, dtype=np.int8))

    def copy(self) -> 'SpinConfig':
        return SpinConfig(self.geometry, self.spins.copy())

    def __getitem__(self, site: Sequence[int]) -> int:
        return int(self.spins[self.geometry.site_index(site)])

    def __setitem__(self, site: Sequence[int], spin: int):
        self.spins[self.geometry.site_index(site)] = spin

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpinConfig):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.spins, other.spins)

    def dominates(self, other: 'SpinConfig') -> bool:
        """ True if this configuration is sitewise >= ``other``. """
        return bool(np.all(self.spins >= other.spins))

    def magnetization(self) -> float:
        return float(np.mean(self.spins))

    def padded_bits(self) -> np.ndarray:
        """ Spin bits with one extra slot holding the exterior bit. """
        _bits = np.empty(self.geometry.n_sites + 1, dtype=np.int64)
        _bits[:-1] = self.spins > 0
        _bits[-1] = self.geometry.boundary_bit
        return _bits


def neighborhood(x: Sequence[int], geom: Geometry) -> List[Neighbor]:
    """ All sites within l-infinity distance r of ``x``, in offset order.

    :param x:    A site inside the geometry.
    :param geom: The geometry.
    :returns:    One :class:`Neighbor` per offset, wrapped on a torus and
                 flagged as exterior outside a plus, minus or free box.
    """
    _index = geom.site_index(x)
    _neighbors = []
    for _position, _offset in enumerate(geom.offsets):
        _coords = tuple(coord + shift for coord, shift in zip(x, _offset))
        _target = int(geom.neighbor_table[_index, _position])
        if _target == geom.n_sites:
            _neighbors.append(Neighbor(_coords, None, True))
        else:
            _neighbors.append(Neighbor(geom.coords_of(_target), _target, False))
    return _neighbors


def pattern_of(config: SpinConfig, x: Sequence[int], geom: Geometry) -> LocalPattern:
    """ Reads the local pattern around ``x``.

    Interior offsets read the configuration, exterior offsets read the
    boundary spin of a plus or minus box and the neutral bit of a free box.
    """
    if config.geometry != geom:
        raise GeometryMismatchError("Configuration and geometry differ.")
    _bits = config.padded_bits()[geom.neighbor_table[geom.site_index(x)]]
    return LocalPattern([1 if bit else -1 for bit in _bits], geom.radius, geom.dimension)


def write_pattern(config: SpinConfig, x: Sequence[int], pattern: LocalPattern) -> None:
    """ Writes the interior spins of ``pattern`` around ``x`` into ``config``.

    Offsets folded onto one site on a small torus are written in offset
    order, the last one wins.
    """
    _geom = config.geometry
    _row = _geom.neighbor_table[_geom.site_index(x)]
    for _position, _target in enumerate(_row):
        if _target != _geom.n_sites:
            config.spins[_target] = pattern.spins[_position]


def pattern_indices(bits: np.ndarray, geom: Geometry, sites: Optional[np.ndarray] = None) -> np.ndarray:
    """ Pattern index of every site (or of ``sites``) given padded spin bits.

    ``bits`` may carry leading batch axes, the site axis is the last one.
    """
    _table = geom.neighbor_table if sites is None else geom.neighbor_table[sites]
    return bits[..., _table] @ geom.pattern_weights()


def nearest_neighbor_kernel(dimension: int, coupling: float = 1.0) -> Kernel:
    """ Coupling kernel of the nearest neighbor model, offset -> J. """
    _kernel = {}
    for axis in range(dimension):
        for sign in (-1, 1):
            _offset = [0] * dimension
            _offset[axis] = sign
            _kernel[tuple(_offset)] = float(coupling)
    return _kernel


def validate_kernel(kernel: Kernel, geom: Geometry, ferromagnetic: bool = True) -> None:
    """ Checks symmetry, range and (optionally) sign of a coupling kernel.

    :raises ConfigurationError: If the kernel is not symmetric, reaches
                                beyond the range of the geometry, couples a
                                site to itself or has negative entries while
                                ``ferromagnetic`` is set.
    """
    for _offset, _coupling in kernel.items():
        if len(_offset) != geom.dimension:
            raise ConfigurationError("Offset %s does not match dimension %d." % (_offset, geom.dimension))
        if not any(_offset):
            raise ConfigurationError("A kernel must not couple a site to itself.")
        if max(abs(shift) for shift in _offset) > geom.radius:
            raise ConfigurationError("Offset %s lies beyond the range %d." % (_offset, geom.radius))
        _mirror = tuple(-shift for shift in _offset)
        if kernel.get(_mirror) != _coupling:
            raise ConfigurationError("Kernel is not symmetric at offset %s." % (_offset,))
        if ferromagnetic and _coupling < 0:
            raise ConfigurationError("Negative coupling %g at offset %s." % (_coupling, _offset))
