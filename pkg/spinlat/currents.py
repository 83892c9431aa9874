# -*- coding: utf-8 -*-
""" Brute force checks of the random current algebra on small graphs.

Graphs carry positive couplings on their edges, an optional ghost vertex
collecting the couplings to the exterior of a box, and a field h.
All couplings have the inverse temperature absorbed. With ``Z^{b,J,h}_A``
the Ising partition function of the vertex set A (``b = +1`` couples A to
the ghost with ``+g``, ``b = -1`` with ``-g``, free drops the ghost):

 doubling    Z+ Z- equals the sum over (chi, eta) pairs under exclusion
             of exp(sum 2J[chi chi + eta eta] + sum 2h chi + sum 2g eta).
 partition   Z+ Z- = sum_V Z^{f,2J,2h}_{B-V} Z^{+,2J,0}_V.
 difference  Z+ Z- (<s_0>+ - <s_0>-) = 2 sum_{V with 0} Z^{f,2J,2h}_{B-V} Z^{+,2J,0}_V <eta_0>_V.

Current weights are ``prod (2J)^k / k!`` over edges times
``prod (2h)^l / l!`` over vertices. Expanding the exponentials and
summing over spins gives a factor ``2^|A|`` per vertex set, so the current
sums below are compared against ``2^-|A|`` times the spin sums.
Truncated series are summed up to a cutoff K that is doubled until two
successive values agree.
"""

import hashlib
import itertools
import json
import math
from collections import deque
from typing import Callable, Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from spinlat.errors import ConfigurationError, ConvergenceError, CouplingIdentityError, SizeLimitError
from spinlat.gibbs import GibbsSpec, enumerate_configurations
from spinlat.lattice import Geometry, Kernel
from spinlat.seeding import derive_seed, make_generator
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')

MAX_GRAPH_VERTICES = 10
MAX_EXACT_VERTICES = 8
MAX_TRUNCATED_VERTICES = 5
MAX_PARITY_VERTICES = 6

FIRST_TRUNCATION = 8
MAX_TRUNCATION = 64

EXACT_TOLERANCE = 1e-9
SERIES_TOLERANCE = 1e-9
SUPPORT_TOLERANCE = 1e-12

Edge = Tuple[int, int]


class SmallGraph(object):
    """ A weighted graph on vertices ``0 .. n-1`` with an optional ghost vertex.

    The ghost has index ``n``. Vertex 0 is the marked site.

    :param n_vertices: Number of vertices, at most 10.
    :param edges:      ``{(x, y): J}`` with positive couplings.
    :param ghost:      Coupling of every vertex to the ghost, None for no ghost.
    :param h:          Field.
    :param labels:     Optional names of the vertices, e.g. lattice coordinates.
    :param limit:      Largest accepted vertex count, None for graphs that are never enumerated.
    """

    def __init__(
            self,
            n_vertices: int,
            edges: Dict[Edge, float],
            ghost: Optional[Sequence[float]] = None,
            h: float = 0.0,
            labels: Optional[Sequence] = None,
            limit: Optional[int] = MAX_GRAPH_VERTICES
    ):
        if n_vertices < 1:
            raise ConfigurationError("Graphs need at least one vertex.")
        if limit is not None and n_vertices > limit:
            raise SizeLimitError("Graphs have at most %d vertices, got %d." % (limit, n_vertices))
        self.n_vertices = int(n_vertices)
        self.edges = {}
        for (_x, _y), _coupling in edges.items():
            if _x == _y or not (0 <= _x < n_vertices and 0 <= _y < n_vertices):
                raise ConfigurationError("Edge (%d, %d) is not a pair of distinct vertices." % (_x, _y))
            if _coupling < 0:
                raise ConfigurationError("Couplings must be nonnegative, got %g." % _coupling)
            _key = (min(_x, _y), max(_x, _y))
            if _key in self.edges and self.edges[_key] != _coupling:
                raise ConfigurationError("Edge %s is given twice with different couplings." % (_key,))
            if _coupling > 0:
                self.edges[_key] = float(_coupling)
        self.has_ghost = ghost is not None
        self.ghost = np.zeros(self.n_vertices) if ghost is None else np.asarray(ghost, dtype=np.float64)
        if self.ghost.shape != (self.n_vertices,) or np.any(self.ghost < 0):
            raise ConfigurationError("Ghost couplings must be one nonnegative value per vertex.")
        self.h = float(h)
        self.labels = list(labels) if labels is not None else list(range(self.n_vertices))

    @property
    def ghost_index(self) -> int:
        return self.n_vertices

    @classmethod
    def from_box(cls, geom: Geometry, kernel: Kernel, h: float, region=None) -> 'SmallGraph':
        """ The graph of a box, ghost couplings summed over exterior neighbors.

        Plus and minus boxes get a ghost, free and periodic ones do not.
        """
        _spec = GibbsSpec(geom, kernel, h, region)
        _edges = {(int(x), int(y)): float(coupling) for (x, y), coupling in zip(_spec.pairs, _spec.pair_couplings)}
        _ghost = _spec.boundary_field if geom.boundary in ('plus', 'minus') else None
        return cls(_spec.n_sites, _edges, _ghost, h, [geom.coords_of(site) for site in _spec.sites])

    def all_edges(self, include_ghost: bool = True) -> List[Tuple[Edge, float]]:
        """ Edges with their couplings, ghost edges last. """
        _edges = sorted(self.edges.items())
        if include_ghost and self.has_ghost:
            _edges += [((x, self.ghost_index), float(self.ghost[x]))
                       for x in range(self.n_vertices) if self.ghost[x] > 0]
        return _edges

    def to_record(self) -> dict:
        return {
            'n_vertices': self.n_vertices,
            'edges': [[x, y, coupling] for (x, y), coupling in sorted(self.edges.items())],
            'ghost': self.ghost.tolist() if self.has_ghost else None,
            'h': self.h
        }

    @property
    def instance_hash(self) -> str:
        _canonical = json.dumps(self.to_record(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(_canonical.encode('utf-8')).hexdigest()[:16]

    def connected_to_ghost(self, members: Iterable[int], start: int = 0) -> bool:
        """ True if ``start`` reaches a vertex with ghost coupling through ``members``. """
        _members = set(members)
        if start not in _members:
            return False
        _seen = {start}
        _queue = deque([start])
        while _queue:
            _vertex = _queue.popleft()
            if self.ghost[_vertex] > 0:
                return True
            for (_x, _y) in self.edges:
                for _a, _b in ((_x, _y), (_y, _x)):
                    if _a == _vertex and _b in _members and _b not in _seen:
                        _seen.add(_b)
                        _queue.append(_b)
        return False


class DoubledConfig(object):
    """ A pair (chi, eta) of maps into {-1, 0, 1} with exactly one nonzero entry per vertex. """

    def __init__(self, chi: Sequence[int], eta: Sequence[int]):
        self.chi = np.asarray(chi, dtype=np.int8)
        self.eta = np.asarray(eta, dtype=np.int8)
        if self.chi.shape != self.eta.shape:
            raise ConfigurationError("chi and eta need the same vertices.")
        if np.any((self.chi != 0) == (self.eta != 0)):
            raise ConfigurationError("Exactly one of chi and eta must vanish at every vertex.")

    @classmethod
    def from_spins(cls, first: Sequence[int], second: Sequence[int]) -> 'DoubledConfig':
        """ chi = (s1 + s2) / 2 and eta = (s1 - s2) / 2. """
        _first = np.asarray(first, dtype=np.int8)
        _second = np.asarray(second, dtype=np.int8)
        return cls((_first + _second) // 2, (_first - _second) // 2)

    def eta_support(self) -> FrozenSet[int]:
        return frozenset(int(x) for x in np.nonzero(self.eta)[0])


class CurrentConfig(object):
    """ Edge currents k and vertex currents l on a graph.

    Edges are ``(x, y)`` with ``x < y``; the ghost is vertex ``n``.
    The boundary is recomputed on every access.
    """

    def __init__(self, graph: SmallGraph, k: Dict[Edge, int], l: Optional[Dict[int, int]] = None):
        self.graph = graph
        self.k = {}
        for (_x, _y), _count in k.items():
            if int(_count) != _count or _count < 0:
                raise ConfigurationError("Currents are nonnegative integers, got %r." % (_count,))
            if _count:
                self.k[(min(_x, _y), max(_x, _y))] = int(_count)
        self.l = {int(x): int(count) for x, count in (l or {}).items() if count}
        if any(count < 0 for count in self.l.values()):
            raise ConfigurationError("Currents are nonnegative integers.")

    def degree(self, vertex: int) -> int:
        return self.l.get(vertex, 0) + sum(count for edge, count in self.k.items() if vertex in edge)

    @property
    def boundary(self) -> FrozenSet[int]:
        _vertices = set(self.l)
        for _edge in self.k:
            _vertices.update(_edge)
        return frozenset(vertex for vertex in _vertices if self.degree(vertex) % 2 == 1)

    def __add__(self, other: 'CurrentConfig') -> 'CurrentConfig':
        _k = dict(self.k)
        for _edge, _count in other.k.items():
            _k[_edge] = _k.get(_edge, 0) + _count
        _l = dict(self.l)
        for _vertex, _count in other.l.items():
            _l[_vertex] = _l.get(_vertex, 0) + _count
        return CurrentConfig(self.graph, _k, _l)


def boundary(n: CurrentConfig) -> FrozenSet[int]:
    """ Vertices where ``l_x + sum_y k_xy`` is odd. """
    return n.boundary


def current_weight(A: Optional[Iterable[int]], n: CurrentConfig, variant: str = 'plus') -> float:
    """ The weight of a current on the vertex set A.

    ``plus`` is W^{+,2J,0}: ghost edges allowed, field zero.
    ``free`` is W^{f,2J,2h}: no ghost edges, vertex currents weighted by 2h.

    :raises ConfigurationError: If the current lives outside the edges of A.
    """
    _graph = n.graph
    _members = set(range(_graph.n_vertices)) if A is None else set(A)
    if variant not in ('plus', 'free'):
        raise ConfigurationError("Unknown weight variant %r." % variant)
    _weight = 1.0
    for (_x, _y), _count in n.k.items():
        if _y == _graph.ghost_index:
            if variant == 'free' or not _graph.has_ghost or _x not in _members:
                raise ConfigurationError("Current on ghost edge (%d, ghost) outside the support." % _x)
            _coupling = float(_graph.ghost[_x])
        else:
            if _x not in _members or _y not in _members:
                raise ConfigurationError("Current on edge (%d, %d) outside the vertex set." % (_x, _y))
            _coupling = _graph.edges.get((_x, _y), 0.0)
        _weight *= (2.0 * _coupling) ** _count / math.factorial(_count)
    _field = 2.0 * _graph.h if variant == 'free' else 0.0
    for _vertex, _count in n.l.items():
        if _vertex not in _members:
            raise ConfigurationError("Vertex current at %d outside the vertex set." % _vertex)
        _weight *= _field ** _count / math.factorial(_count)
    return _weight


class IdentityReport(NamedTuple):
    """ Outcome of one identity check. """
    identity: str
    instance_hash: str
    lhs: float
    rhs: float
    abs_err: float
    rel_err: float
    K: Optional[int]
    passed: bool
    notes: dict

    def to_record(self) -> dict:
        return {
            'identity': self.identity,
            'instance_hash': self.instance_hash,
            'lhs': self.lhs,
            'rhs': self.rhs,
            'abs_err': self.abs_err,
            'rel_err': self.rel_err,
            'K': self.K,
            'pass': self.passed,
            'notes': self.notes
        }


def _report(identity: str, graph: SmallGraph, lhs: float, rhs: float, tolerance: float,
            scale: float = 0.0, K: Optional[int] = None, notes: Optional[dict] = None,
            converged: bool = True) -> IdentityReport:
    _abs = abs(lhs - rhs)
    _magnitude = max(abs(lhs), abs(rhs), scale)
    _rel = _abs / _magnitude if _magnitude > 0 else 0.0
    _passed = converged and _abs <= tolerance * _magnitude
    _report_tuple = IdentityReport(identity, graph.instance_hash, float(lhs), float(rhs), _abs, _rel, K,
                                   bool(_passed), notes or {})
    if not _passed:
        LOGGER.warning("Identity %s failed on %s: lhs=%r rhs=%r.", identity, graph.instance_hash, lhs, rhs)
    return _report_tuple


def _check_size(graph: SmallGraph, limit: int, operation: str) -> None:
    if graph.n_vertices > limit:
        raise SizeLimitError("%s runs on at most %d vertices, got %d." % (operation, limit, graph.n_vertices))


def _ising_sums(
        graph: SmallGraph,
        members: Sequence[int],
        scale: float,
        field: float,
        ghost_sign: float,
        marked: Optional[int] = None
) -> Tuple[float, float]:
    """ Z and sum sigma_marked exp(...) of the Ising model on ``members``.

    Couplings and ghost couplings are multiplied by ``scale``.
    """
    _members = list(members)
    if not _members:
        return 1.0, 0.0
    _spins = enumerate_configurations(len(_members)).astype(np.float64)
    _position = {vertex: index for index, vertex in enumerate(_members)}
    _exponent = _spins @ (field + ghost_sign * scale * graph.ghost[_members])
    for (_x, _y), _coupling in graph.edges.items():
        if _x in _position and _y in _position:
            _exponent = _exponent + scale * _coupling * _spins[:, _position[_x]] * _spins[:, _position[_y]]
    _weights = np.exp(_exponent)
    _z = math.fsum(_weights)
    _marked = math.fsum(_weights * _spins[:, _position[marked]]) if marked in _position else 0.0
    return _z, _marked


def _subsets(n: int) -> List[Tuple[int, ...]]:
    """ All subsets of ``range(n)``, ordered by size. """
    return [subset for size in range(n + 1) for subset in itertools.combinations(range(n), size)]


def doubling_check(graph: SmallGraph, tolerance: float = EXACT_TOLERANCE) -> IdentityReport:
    """ Z+ Z- against the exclusion sum over doubled configurations. """
    _check_size(graph, MAX_EXACT_VERTICES, "The doubling check")
    _n = graph.n_vertices
    _vertices = list(range(_n))
    _plus, _ = _ising_sums(graph, _vertices, 1.0, graph.h, 1.0)
    _minus, _ = _ising_sums(graph, _vertices, 1.0, graph.h, -1.0)
    # Per vertex: chi = +1, chi = -1, eta = +1, eta = -1.
    _chi_states = np.array([1, -1, 0, 0], dtype=np.float64)
    _eta_states = np.array([0, 0, 1, -1], dtype=np.float64)
    _codes = np.array(list(itertools.product(range(4), repeat=_n)), dtype=np.int64).reshape(-1, _n)
    _chi = _chi_states[_codes]
    _eta = _eta_states[_codes]
    _exponent = 2.0 * graph.h * _chi.sum(axis=1) + 2.0 * (_eta @ graph.ghost)
    for (_x, _y), _coupling in graph.edges.items():
        _exponent += 2.0 * _coupling * (_chi[:, _x] * _chi[:, _y] + _eta[:, _x] * _eta[:, _y])
    _rhs = math.fsum(np.exp(_exponent))
    return _report('doubling', graph, _plus * _minus, _rhs, tolerance)


def part_identity_check(graph: SmallGraph, tolerance: float = EXACT_TOLERANCE) -> IdentityReport:
    """ Z+ Z- against the sum over the eta support V of free and plus partition functions. """
    _check_size(graph, MAX_EXACT_VERTICES, "The partition identity check")
    _vertices = list(range(graph.n_vertices))
    _plus, _ = _ising_sums(graph, _vertices, 1.0, graph.h, 1.0)
    _minus, _ = _ising_sums(graph, _vertices, 1.0, graph.h, -1.0)
    _terms = []
    for _subset in _subsets(graph.n_vertices):
        _rest = [vertex for vertex in _vertices if vertex not in _subset]
        _free, _ = _ising_sums(graph, _rest, 2.0, 2.0 * graph.h, 0.0)
        _doubled, _ = _ising_sums(graph, _subset, 2.0, 0.0, 1.0)
        _terms.append(_free * _doubled)
    return _report('partition', graph, _plus * _minus, math.fsum(_terms), tolerance)


def diff_identity_check(graph: SmallGraph, tolerance: float = EXACT_TOLERANCE) -> IdentityReport:
    """ Z+ Z- (<s_0>+ - <s_0>-) against twice the sum over eta supports containing 0.

    Also checks that <eta_0>_V vanishes whenever 0 has no path to the ghost inside V.

    :raises CouplingIdentityError: If a disconnected term does not vanish.
    """
    _check_size(graph, MAX_EXACT_VERTICES, "The difference identity check")
    _vertices = list(range(graph.n_vertices))
    _plus, _plus_marked = _ising_sums(graph, _vertices, 1.0, graph.h, 1.0, marked=0)
    _minus, _minus_marked = _ising_sums(graph, _vertices, 1.0, graph.h, -1.0, marked=0)
    _lhs = _minus * _plus_marked - _plus * _minus_marked
    _terms = []
    _disconnected = 0
    for _subset in _subsets(graph.n_vertices):
        if 0 not in _subset:
            continue
        _rest = [vertex for vertex in _vertices if vertex not in _subset]
        _free, _ = _ising_sums(graph, _rest, 2.0, 2.0 * graph.h, 0.0)
        _doubled, _eta_marked = _ising_sums(graph, _subset, 2.0, 0.0, 1.0, marked=0)
        if not graph.connected_to_ghost(_subset):
            _disconnected += 1
            if abs(_eta_marked) > SUPPORT_TOLERANCE * _doubled:
                raise CouplingIdentityError(
                    "<eta_0> = %g on %s although 0 has no path to the ghost." % (_eta_marked / _doubled, _subset)
                )
        _terms.append(_free * _eta_marked)
    return _report(
        'difference', graph, _lhs, 2.0 * math.fsum(_terms), tolerance, scale=_plus * _minus,
        notes={'disconnected_terms': _disconnected}
    )


def truncated_series(w: float, K: int, parity: int, lowest: int = 0) -> float:
    """ sum of w^k / k! over ``lowest <= k <= K`` with ``k % 2 == parity``. """
    _terms = []
    _term = 1.0
    for _k in range(K + 1):
        if _k:
            _term *= w / _k
        if _k % 2 == parity and _k >= lowest:
            _terms.append(_term)
    return math.fsum(_terms)


def series_tail(w: float, K: int) -> float:
    """ sum of |w|^k / k! over k > K, the truncation error bound of one series. """
    _w = abs(w)
    if _w == 0.0:
        return 0.0
    return math.exp(_w) * float(special.gammainc(K + 1, _w))


class Convergence(NamedTuple):
    value: float
    K: int
    gap: float
    converged: bool


def converge(evaluate: Callable[[int], float], tolerance: float = SERIES_TOLERANCE,
             first: int = FIRST_TRUNCATION, largest: int = MAX_TRUNCATION) -> Convergence:
    """ Doubles the cutoff until two successive values agree.

    Agreement means ``|value(2K) - value(K)| <= tolerance * max(1, |value(2K)|)``.
    """
    _K = first
    _value = evaluate(_K)
    _gap = math.inf
    while 2 * _K <= largest:
        _next = evaluate(2 * _K)
        _gap = abs(_next - _value)
        _K, _value = 2 * _K, _next
        if _gap <= tolerance * max(1.0, abs(_next)):
            return Convergence(_value, _K, _gap, True)
    LOGGER.warning("Series did not settle up to K=%d, last change %g.", _K, _gap)
    return Convergence(_value, _K, _gap, False)


def _parity_sum(
        edges: List[Tuple[Edge, float]],
        n_vertices: int,
        target: Sequence[int],
        K: int
) -> float:
    """ Sum of prod (2J)^k/k! over currents with k <= K whose odd vertices are ``target``.

    Vertices are ``0 .. n_vertices`` (the last one may be the ghost).
    """
    _count = len(edges)
    if _count == 0:
        return 1.0 if not any(target) else 0.0
    _series = np.array([[truncated_series(2.0 * coupling, K, parity) for parity in (0, 1)]
                        for _, coupling in edges])
    _incidence = np.zeros((_count, n_vertices + 1), dtype=np.int64)
    for _index, ((_x, _y), _) in enumerate(edges):
        _incidence[_index, _x] = 1
        _incidence[_index, _y] = 1
    _assignments = np.arange(2 ** _count, dtype=np.int64)
    _bits = (_assignments[:, None] >> np.arange(_count, dtype=np.int64)[None, :]) & 1
    _parities = (_bits @ _incidence) % 2
    _wanted = np.all(_parities == np.asarray(target, dtype=np.int64)[None, :], axis=1)
    _values = np.prod(np.where(_bits[_wanted] == 1, _series[:, 1], _series[:, 0]), axis=1)
    return math.fsum(_values)


def rcr2_check(graph: SmallGraph, tolerance: float = SERIES_TOLERANCE) -> IdentityReport:
    """ 2^-|V| Z^{+,2J,0}_V <eta_0> against the current sum over dk = {0, ghost}.

    The current sum is truncated at k <= K on every edge.
    """
    _check_size(graph, MAX_TRUNCATED_VERTICES, "The two-current check")
    _n = graph.n_vertices
    _, _marked = _ising_sums(graph, list(range(_n)), 2.0, 0.0, 1.0, marked=0)
    _lhs = _marked / 2.0 ** _n
    _edges = graph.all_edges(include_ghost=True)
    _target = [0] * (_n + 1)
    _target[0] = 1
    _target[_n] = 1
    _result = converge(lambda K: _parity_sum(_edges, _n, _target, K), tolerance)
    _tail = sum(series_tail(2.0 * coupling, _result.K) for _, coupling in _edges)
    return _report(
        'rcr2', graph, _lhs, _result.value, tolerance, K=_result.K, converged=_result.converged,
        notes={'cauchy_gap': _result.gap, 'tail_bound': _tail, 'spin_sum_factor': 2.0 ** _n}
    )


def parity_resum_check(
        graph: SmallGraph,
        members: Sequence[int],
        k: CurrentConfig,
        tolerance: float = SERIES_TOLERANCE
) -> IdentityReport:
    """ Sum over vertex currents l with d(k, l) empty against the sinh / cosh closed form.

    Each vertex needs ``l_x`` of the parity of its k-degree, so the sum is
    ``W(k) prod_x (sinh(2h) if the degree is odd else cosh(2h))``.
    The report also carries the value with the marked vertex always in the
    sinh class and flags whether the two agree.
    """
    _members = sorted(set(members))
    if len(_members) > MAX_PARITY_VERTICES:
        raise SizeLimitError("The parity resummation runs on at most %d vertices." % MAX_PARITY_VERTICES)
    if k.l:
        raise ConfigurationError("The edge current of a parity resummation carries no vertex currents.")
    _edge_weight = current_weight(_members, k, 'free')
    _field = 2.0 * graph.h
    _odd = [vertex for vertex in _members if k.degree(vertex) % 2 == 1]

    def _truncated(K: int) -> float:
        _product = _edge_weight
        for _vertex in _members:
            _product *= truncated_series(_field, K, k.degree(_vertex) % 2)
        return _product

    _result = converge(_truncated, tolerance)
    _closed = _edge_weight * math.sinh(_field) ** len(_odd) * math.cosh(_field) ** (len(_members) - len(_odd))
    _even_away_from_origin = [vertex for vertex in _members if vertex != 0 and vertex not in _odd]
    _as_sinh = (_edge_weight * math.sinh(_field) ** (len(_members) - len(_even_away_from_origin))
                * math.cosh(_field) ** len(_even_away_from_origin))
    _sinh_matches = abs(_as_sinh - _closed) <= tolerance * max(abs(_closed), 1e-300) or _as_sinh == _closed
    if not _sinh_matches:
        LOGGER.info("Parity resummation: origin parity differs from the sinh class (%g vs %g).", _as_sinh, _closed)
    return _report(
        'parity_resum', graph, _result.value, _closed, tolerance, K=_result.K, converged=_result.converged,
        notes={'cauchy_gap': _result.gap, 'origin_as_sinh': _as_sinh, 'origin_as_sinh_matches': _sinh_matches,
               'origin_degree_odd': 0 in _odd}
    )


def _normalized_free(graph: SmallGraph, members: Sequence[int]) -> float:
    """ 2^-|A| Z^{f,2J,2h}_A, the sum of free current weights with empty boundary. """
    _z, _ = _ising_sums(graph, list(members), 2.0, 2.0 * graph.h, 0.0)
    return _z / 2.0 ** len(members)


def _connected(edges: Sequence[Edge], members: Sequence[int]) -> bool:
    _members = set(members)
    _start = min(_members)
    _seen = {_start}
    _queue = deque([_start])
    while _queue:
        _vertex = _queue.popleft()
        for _x, _y in edges:
            for _a, _b in ((_x, _y), (_y, _x)):
                if _a == _vertex and _b not in _seen:
                    _seen.add(_b)
                    _queue.append(_b)
    return _seen == _members


def key_weight(graph: SmallGraph, members: Sequence[int], K: int) -> float:
    """ K_Y: free current weights on Y with empty boundary whose edges connect all of Y.

    Every edge is either empty, odd, or even and at least 2, and every
    vertex current takes the parity of its degree, truncated at K.
    """
    _members = sorted(set(members))
    if not _members:
        return 1.0
    _edges = [(edge, coupling) for edge, coupling in sorted(graph.edges.items())
              if edge[0] in _members and edge[1] in _members]
    _field = 2.0 * graph.h
    _site = [truncated_series(_field, K, parity) for parity in (0, 1)]
    if not _edges:
        return _site[0] if len(_members) == 1 else 0.0
    _count = len(_edges)
    _connected_masks = np.array([
        _connected([_edges[index][0] for index in range(_count) if mask >> index & 1], _members)
        for mask in range(2 ** _count)
    ])
    _edge_values = np.array([
        [1.0, truncated_series(2.0 * coupling, K, 1), truncated_series(2.0 * coupling, K, 0, lowest=2)]
        for _, coupling in _edges
    ])
    _states = np.array(list(itertools.product(range(3), repeat=_count)), dtype=np.int64)
    _support = ((_states > 0).astype(np.int64) << np.arange(_count, dtype=np.int64)).sum(axis=1)
    _keep = _connected_masks[_support]
    _states = _states[_keep]
    _weights = np.prod(_edge_values[np.arange(_count), _states], axis=1)
    _position = {vertex: index for index, vertex in enumerate(_members)}
    _incidence = np.zeros((_count, len(_members)), dtype=np.int64)
    for _index, ((_x, _y), _) in enumerate(_edges):
        _incidence[_index, _position[_x]] = 1
        _incidence[_index, _position[_y]] = 1
    _parities = ((_states == 1).astype(np.int64) @ _incidence) % 2
    _site_factors = np.prod(np.where(_parities == 1, _site[1], _site[0]), axis=1)
    return math.fsum(_weights * _site_factors)


def ky_check(
        graph: SmallGraph,
        members: Sequence[int],
        tolerance: float = SERIES_TOLERANCE
) -> IdentityReport:
    """ Splitting off the current cluster of the marked vertex.

    With Z^ = 2^-|A| Z^{f,2J,2h}_A: if 0 is in A, Z^_A = sum_{Y with 0} Z^_{A-Y} K_Y,
    otherwise Z^_A = Z^_A K_empty. The report also carries the sum over all Y
    including the empty set (with K_empty = 1) and flags its mismatch.
    """
    _members = sorted(set(members))
    if len(_members) > MAX_TRUNCATED_VERTICES:
        raise SizeLimitError("The cluster splitting check runs on at most %d vertices." % MAX_TRUNCATED_VERTICES)
    _lhs = _normalized_free(graph, _members)
    if 0 not in _members:
        return _report('ky', graph, _lhs, _lhs * 1.0, tolerance, K=None, notes={'marked_in_set': False})
    _others = [vertex for vertex in _members if vertex != 0]
    _pivots = [(0,) + subset for size in range(len(_others) + 1) for subset in itertools.combinations(_others, size)]
    _rests = {pivot: _normalized_free(graph, [vertex for vertex in _members if vertex not in pivot])
              for pivot in _pivots}

    def _split(K: int) -> float:
        return math.fsum(_rests[pivot] * key_weight(graph, pivot, K) for pivot in _pivots)

    _result = converge(_split, tolerance)
    _with_empty = _result.value + _lhs
    return _report(
        'ky', graph, _lhs, _result.value, tolerance, K=_result.K, converged=_result.converged,
        notes={'marked_in_set': True, 'cauchy_gap': _result.gap, 'with_empty_set': _with_empty,
               'with_empty_set_matches': abs(_with_empty - _lhs) <= tolerance * abs(_lhs)}
    )


def distances(k: CurrentConfig, members: Sequence[int], start: int = 0) -> Dict[int, int]:
    """ Edge count of the shortest path through nonzero currents, ghost excluded. """
    _members = set(members)
    _ghost = k.graph.ghost_index
    _adjacent = {vertex: [] for vertex in _members}
    for (_x, _y) in k.k:
        if _y != _ghost and _x in _members and _y in _members:
            _adjacent[_x].append(_y)
            _adjacent[_y].append(_x)
    _distance = {start: 0}
    _queue = deque([start])
    while _queue:
        _vertex = _queue.popleft()
        for _next in _adjacent[_vertex]:
            if _next not in _distance:
                _distance[_next] = _distance[_vertex] + 1
                _queue.append(_next)
    return _distance


def cluster_sets(k: CurrentConfig, members: Sequence[int], R: int) -> Tuple[FrozenSet[int], FrozenSet[Edge]]:
    """ T_R, the vertices within current distance R of 0, and F_R, the nonzero edges leaving it. """
    _distance = distances(k, members)
    _inside = frozenset(vertex for vertex, value in _distance.items() if value <= R)
    _members = set(members)
    _ghost = k.graph.ghost_index
    _leaving = frozenset(
        edge for edge in k.k
        if edge[1] != _ghost and edge[0] in _members and edge[1] in _members
        and (edge[0] in _inside) != (edge[1] in _inside)
    )
    return _inside, _leaving


def r0(k: CurrentConfig, members: Sequence[int], a: float, L: float, r: int = 1) -> float:
    """ The smallest integer R > L / (4r) with |F_R| <= a |T_R|, ``inf`` if none. """
    _first = int(math.floor(L / (4.0 * r))) + 1
    _longest = max(distances(k, members).values())
    for _R in range(_first, max(_first, _longest + 1) + 1):
        _inside, _leaving = cluster_sets(k, members, _R)
        if len(_leaving) <= a * len(_inside):
            return float(_R)
    return math.inf


def random_corpus(size: int, max_vertices: int = 6, seed: int = 0, ghost: Optional[bool] = None) -> List[SmallGraph]:
    """ Random graphs with couplings in (0, 1] and fields in [-1, 1].

    Every other graph gets a ghost unless ``ghost`` forces the choice.
    """
    _graphs = []
    for _index in range(size):
        _rng = make_generator(derive_seed(seed, 'corpus', _index))
        _n = int(_rng.integers(1, max_vertices + 1))
        _edges = {}
        for _x, _y in itertools.combinations(range(_n), 2):
            if _rng.random() < 0.6:
                _edges[(_x, _y)] = float(1.0 - _rng.random())
        _with_ghost = (_index % 2 == 0) if ghost is None else ghost
        _ghost = None
        if _with_ghost:
            _ghost = np.where(_rng.random(_n) < 0.5, 1.0 - _rng.random(_n), 0.0)
        _graphs.append(SmallGraph(_n, _edges, _ghost, float(_rng.uniform(-1.0, 1.0))))
    return _graphs


def random_current(graph: SmallGraph, seed: int, largest: int = 2) -> CurrentConfig:
    """ Edge currents drawn uniformly from ``0 .. largest`` on the non-ghost edges. """
    _rng = make_generator(seed)
    return CurrentConfig(graph, {edge: int(_rng.integers(0, largest + 1)) for edge in sorted(graph.edges)})


def chain_graph(L: int, J: float) -> SmallGraph:
    """ A chain of L vertices with vertex 0 in the middle, no ghost.

    Only the currents are used, so any L is accepted.
    """
    _order = sorted(range(L), key=lambda position: (abs(position - (L - 1) // 2), position))
    _relabel = {position: vertex for vertex, position in enumerate(_order)}
    _edges = {(_relabel[p], _relabel[p + 1]): float(J) for p in range(L - 1)}
    return SmallGraph(L, _edges, None, 0.0, [_order[vertex] - (L - 1) // 2 for vertex in range(L)], limit=None)


def sample_chain_currents(L: int, J: float, samples: int, seed: int) -> List[CurrentConfig]:
    """ Independent Poisson(2J) currents on the edges of a chain around 0. """
    _graph = chain_graph(L, J)
    _currents = []
    for _index in range(samples):
        _rng = make_generator(derive_seed(seed, 'chain_currents', _index))
        _counts = _rng.poisson(2.0 * J, size=len(_graph.edges))
        _currents.append(CurrentConfig(_graph, dict(zip(sorted(_graph.edges), _counts.tolist()))))
    return _currents


class R0Point(NamedTuple):
    L: int
    samples: int
    violations: int
    mean_r0: float


def r0_scan(sizes: Sequence[int], J: float, a: float, samples: int, seed: int, r: int = 1) -> List[R0Point]:
    """ How often R_0 < L / (2r) fails on sampled chain currents. Violations are reported, not raised. """
    _points = []
    for _L in sizes:
        _members = list(range(_L))
        _values = [r0(current, _members, a, _L, r) for current in sample_chain_currents(_L, J, samples, seed)]
        _violations = sum(1 for value in _values if not value < _L / (2.0 * r))
        if _violations:
            LOGGER.info("R_0 >= L/(2r) on %d of %d chain samples at L=%d.", _violations, samples, _L)
        _points.append(R0Point(_L, samples, _violations, float(np.mean(_values))))
    return _points


def exact_suite(graph: SmallGraph, tolerance: float = EXACT_TOLERANCE) -> List[IdentityReport]:
    return [doubling_check(graph, tolerance), part_identity_check(graph, tolerance),
            diff_identity_check(graph, tolerance)]


def truncated_suite(graph: SmallGraph, seed: int, tolerance: float = SERIES_TOLERANCE) -> List[IdentityReport]:
    """ Current sum, parity resummation and cluster splitting on one small graph. """
    _reports = []
    if graph.has_ghost:
        _reports.append(rcr2_check(graph, tolerance))
    _members = list(range(graph.n_vertices))
    _reports.append(parity_resum_check(graph, _members, random_current(graph, seed), tolerance))
    _reports.append(ky_check(graph, _members, tolerance))
    return _reports


def identity_reports(
        corpus_size: int = 100,
        max_vertices: int = 6,
        seed: int = 0,
        strict: bool = False
) -> List[IdentityReport]:
    """ All identities on a random corpus; truncated ones on graphs of up to five vertices.

    :param strict: Raise on the first failure instead of reporting it.
    :raises CouplingIdentityError: In strict mode, if an exact identity fails.
    :raises ConvergenceError:      In strict mode, if a truncated one fails.
    """
    _reports = []
    for _index, _graph in enumerate(random_corpus(corpus_size, max_vertices, seed)):
        _exact = exact_suite(_graph)
        _truncated = []
        if _graph.n_vertices <= MAX_TRUNCATED_VERTICES:
            _truncated = truncated_suite(_graph, derive_seed(seed, 'corpus_current', _index))
        if strict:
            for _report_item in _exact:
                if not _report_item.passed:
                    raise CouplingIdentityError("%s failed on %s." % (_report_item.identity, _graph.instance_hash))
            for _report_item in _truncated:
                if not _report_item.passed:
                    raise ConvergenceError("%s failed on %s." % (_report_item.identity, _graph.instance_hash))
        _reports.extend(_exact + _truncated)
    return _reports
