# -*- coding: utf-8 -*-
""" Unittests for the random current identities. """
import math
import unittest

from spinlat.currents import (Convergence, CurrentConfig, DoubledConfig, SmallGraph, boundary, chain_graph,
                              cluster_sets, converge, current_weight, diff_identity_check, distances,
                              doubling_check, exact_suite, identity_reports, key_weight, ky_check,
                              parity_resum_check, part_identity_check, r0, r0_scan, random_corpus,
                              random_current, rcr2_check, sample_chain_currents, series_tail, truncated_series)
from spinlat.errors import ConfigurationError, SizeLimitError
from spinlat.lattice import Geometry, nearest_neighbor_kernel
from spinlat.test.configurator import configure_tests

CONFIG = configure_tests()
SEED = CONFIG['TEST_RUN'].getint('seed')
BETA = CONFIG['TEST_MODEL'].getfloat('beta')
CORPUS_SIZE = CONFIG['TEST_CURRENTS'].getint('corpus_size')
MAX_VERTICES = CONFIG['TEST_CURRENTS'].getint('max_vertices')


def _path_graph(h: float = 0.3, ghost=None) -> SmallGraph:
    return SmallGraph(3, {(0, 1): 0.5, (1, 2): 0.25}, ghost, h)


class TestSmallGraph(unittest.TestCase):
    """ Graph validation and hashing. """

    def test__init__exception(self):
        self.assertRaises(ConfigurationError, SmallGraph, 0, {})
        self.assertRaises(SizeLimitError, SmallGraph, 11, {})
        self.assertRaises(ConfigurationError, SmallGraph, 3, {(1, 1): 1.0})
        self.assertRaises(ConfigurationError, SmallGraph, 3, {(0, 3): 1.0})
        self.assertRaises(ConfigurationError, SmallGraph, 3, {(0, 1): -1.0})
        self.assertRaises(ConfigurationError, SmallGraph, 3, {(0, 1): 1.0, (1, 0): 2.0})
        self.assertRaises(ConfigurationError, SmallGraph, 3, {}, [1.0, 1.0])
        self.assertRaises(ConfigurationError, SmallGraph, 2, {}, [1.0, -1.0])
        self.assertEqual(SmallGraph(11, {}, limit=None).n_vertices, 11)

    def test_edges(self):
        """ Edges are stored once, zero couplings are dropped and ghost edges come last. """
        _graph = SmallGraph(3, {(1, 0): 0.5, (0, 1): 0.5, (1, 2): 0.0}, [0.0, 0.0, 0.75])
        self.assertEqual(_graph.edges, {(0, 1): 0.5})
        self.assertEqual(_graph.ghost_index, 3)
        self.assertEqual(_graph.all_edges(), [((0, 1), 0.5), ((2, 3), 0.75)])
        self.assertEqual(_graph.all_edges(include_ghost=False), [((0, 1), 0.5)])
        self.assertEqual(_graph.labels, [0, 1, 2])

    def test_instance_hash(self):
        _hash = _path_graph().instance_hash
        self.assertEqual(len(_hash), 16)
        int(_hash, 16)
        self.assertEqual(_hash, _path_graph().instance_hash)
        self.assertNotEqual(_hash, _path_graph(h=0.2).instance_hash)
        self.assertNotEqual(_hash, _path_graph(ghost=[0.0, 0.0, 0.0]).instance_hash)

    def test_connected_to_ghost(self):
        _graph = _path_graph(ghost=[0.0, 0.0, 1.0])
        self.assertTrue(_graph.connected_to_ghost([0, 1, 2]))
        self.assertFalse(_graph.connected_to_ghost([0, 1]))
        self.assertFalse(_graph.connected_to_ghost([1, 2]))

    def test_from_box(self):
        """ A plus chain of three sites couples both ends to the ghost. """
        _graph = SmallGraph.from_box(Geometry([3], 1, 'plus'), nearest_neighbor_kernel(1, 0.5), 0.1)
        self.assertEqual(_graph.edges, {(0, 1): 0.5, (1, 2): 0.5})
        self.assertEqual(_graph.ghost.tolist(), [0.5, 0.0, 0.5])
        self.assertEqual(_graph.labels, [(0,), (1,), (2,)])
        _free = SmallGraph.from_box(Geometry([3], 1, 'free'), nearest_neighbor_kernel(1, 0.5), 0.1)
        self.assertFalse(_free.has_ghost)


class TestConfigurations(unittest.TestCase):

    def test_doubled_config(self):
        _doubled = DoubledConfig.from_spins([1, -1, -1], [1, 1, -1])
        self.assertEqual(_doubled.chi.tolist(), [1, 0, -1])
        self.assertEqual(_doubled.eta.tolist(), [0, -1, 0])
        self.assertEqual(_doubled.eta_support(), frozenset({1}))
        self.assertRaises(ConfigurationError, DoubledConfig, [1, 0], [1, 0])
        self.assertRaises(ConfigurationError, DoubledConfig, [0, 0], [1, 0])
        self.assertRaises(ConfigurationError, DoubledConfig, [1], [0, 1])

    def test_boundary(self):
        """ The boundary is the set of odd degree vertices. """
        _graph = _path_graph()
        _current = CurrentConfig(_graph, {(0, 1): 2, (2, 1): 1})
        self.assertEqual(_current.k, {(0, 1): 2, (1, 2): 1})
        self.assertEqual(_current.degree(1), 3)
        self.assertEqual(boundary(_current), frozenset({1, 2}))
        _with_vertex = CurrentConfig(_graph, {(0, 1): 2, (1, 2): 1}, {1: 1})
        self.assertEqual(boundary(_with_vertex), frozenset({2}))
        self.assertEqual(boundary(CurrentConfig(_graph, {})), frozenset())

    def test_sum(self):
        """ Boundaries of a sum are the symmetric difference. """
        _graph = _path_graph()
        _first = CurrentConfig(_graph, {(0, 1): 1})
        _second = CurrentConfig(_graph, {(1, 2): 1}, {0: 1})
        _sum = _first + _second
        self.assertEqual(_sum.k, {(0, 1): 1, (1, 2): 1})
        self.assertEqual(_sum.boundary, frozenset({2}))
        self.assertEqual(_sum.boundary, _first.boundary ^ _second.boundary)

    def test__init__exception(self):
        _graph = _path_graph()
        self.assertRaises(ConfigurationError, CurrentConfig, _graph, {(0, 1): -1})
        self.assertRaises(ConfigurationError, CurrentConfig, _graph, {(0, 1): 1.5})
        self.assertRaises(ConfigurationError, CurrentConfig, _graph, {}, {0: -2})


class TestCurrentWeight(unittest.TestCase):
    """ Plus and free current weights. """

    def test_plus_weight(self):
        _graph = _path_graph()
        _current = CurrentConfig(_graph, {(0, 1): 2, (1, 2): 1})
        # (2 * 0.5)^2 / 2! * (2 * 0.25)^1 / 1!
        self.assertAlmostEqual(current_weight(None, _current), 0.25)
        self.assertAlmostEqual(current_weight(None, _current, 'free'), 0.25)
        # Vertex currents carry the field, which vanishes for the plus weight.
        _with_vertex = CurrentConfig(_graph, {(0, 1): 2, (1, 2): 1}, {1: 1})
        self.assertEqual(current_weight(None, _with_vertex, 'plus'), 0.0)
        self.assertAlmostEqual(current_weight(None, _with_vertex, 'free'), 0.25 * 0.6)
        self.assertEqual(current_weight(None, CurrentConfig(_graph, {})), 1.0)

    def test_ghost_edges(self):
        _graph = _path_graph(ghost=[0.75, 0.0, 0.0])
        _current = CurrentConfig(_graph, {(0, _graph.ghost_index): 1})
        self.assertAlmostEqual(current_weight(None, _current, 'plus'), 1.5)
        self.assertRaises(ConfigurationError, current_weight, None, _current, 'free')
        self.assertRaises(ConfigurationError, current_weight, [1, 2], _current, 'plus')

    def test_exceptions(self):
        _graph = _path_graph()
        _current = CurrentConfig(_graph, {(1, 2): 1})
        self.assertRaises(ConfigurationError, current_weight, [0, 1], _current)
        self.assertRaises(ConfigurationError, current_weight, None, _current, 'minus')
        self.assertRaises(ConfigurationError, current_weight, [0], CurrentConfig(_graph, {}, {2: 1}), 'free')


class TestSeries(unittest.TestCase):

    def test_truncated_series(self):
        self.assertAlmostEqual(truncated_series(1.5, 40, 0), math.cosh(1.5))
        self.assertAlmostEqual(truncated_series(1.5, 40, 1), math.sinh(1.5))
        self.assertAlmostEqual(truncated_series(1.5, 40, 0, lowest=2), math.cosh(1.5) - 1.0)
        self.assertAlmostEqual(truncated_series(2.0, 3, 1), 2.0 + 8.0 / 6.0)
        self.assertEqual(truncated_series(0.0, 10, 1), 0.0)
        self.assertEqual(truncated_series(0.0, 10, 0), 1.0)

    def test_series_tail(self):
        """ The tail of exp(w) beyond K. """
        self.assertAlmostEqual(series_tail(1.0, 0), math.e - 1.0)
        self.assertAlmostEqual(series_tail(-1.0, 1), math.e - 2.0)
        self.assertEqual(series_tail(0.0, 5), 0.0)
        self.assertLess(series_tail(1.0, 30), 1e-30)

    def test_converge(self):
        _result = converge(lambda K: truncated_series(1.0, K, 0))
        self.assertIsInstance(_result, Convergence)
        self.assertTrue(_result.converged)
        self.assertAlmostEqual(_result.value, math.cosh(1.0))
        self.assertIn(_result.K, (16, 32, 64))
        _stuck = converge(float)
        self.assertFalse(_stuck.converged)
        self.assertEqual(_stuck.K, 64)


class TestExactIdentities(unittest.TestCase):
    """ Doubling, partition and difference identities by enumeration. """

    def setUp(self):
        self.corpus = random_corpus(CORPUS_SIZE, MAX_VERTICES, SEED)

    def test_corpus(self):
        self.assertEqual(len(self.corpus), CORPUS_SIZE)
        self.assertTrue(all(1 <= graph.n_vertices <= MAX_VERTICES for graph in self.corpus))
        self.assertTrue(self.corpus[0].has_ghost)
        self.assertFalse(self.corpus[1].has_ghost)
        self.assertEqual([graph.instance_hash for graph in random_corpus(CORPUS_SIZE, MAX_VERTICES, SEED)],
                         [graph.instance_hash for graph in self.corpus])
        self.assertTrue(all(graph.has_ghost for graph in random_corpus(4, MAX_VERTICES, SEED, ghost=True)))

    def test_identities_hold(self):
        for _graph in self.corpus:
            for _report in exact_suite(_graph):
                self.assertTrue(_report.passed, msg="%s on %s" % (_report.identity, _graph.instance_hash))
                self.assertLessEqual(_report.rel_err, 1e-9)

    def test_single_vertex(self):
        """ One vertex with field h and ghost coupling g: Z+ Z- = 4 cosh(h + g) cosh(h - g). """
        _graph = SmallGraph(1, {}, [0.5], 0.2)
        _report = doubling_check(_graph)
        self.assertAlmostEqual(_report.lhs, 4.0 * math.cosh(0.7) * math.cosh(-0.3))
        self.assertTrue(part_identity_check(_graph).passed)
        _difference = diff_identity_check(_graph)
        self.assertTrue(_difference.passed)
        self.assertEqual(_difference.notes['disconnected_terms'], 0)

    def test_disconnected_terms(self):
        """ Supports with no path from 0 to the ghost add nothing. """
        _graph = SmallGraph(3, {(1, 2): 0.5}, [0.0, 0.0, 0.5], 0.3)
        _report = diff_identity_check(_graph)
        self.assertTrue(_report.passed)
        self.assertEqual(_report.notes['disconnected_terms'], 4)
        self.assertAlmostEqual(_report.lhs, 0.0)

    def test_size_limit(self):
        self.assertRaises(SizeLimitError, doubling_check, SmallGraph(9, {}))

    def test_to_record(self):
        _record = doubling_check(_path_graph(ghost=[0.5, 0.0, 0.0])).to_record()
        self.assertEqual(set(_record), {'identity', 'instance_hash', 'lhs', 'rhs', 'abs_err', 'rel_err', 'K',
                                        'pass', 'notes'})
        self.assertTrue(_record['pass'])
        self.assertIsNone(_record['K'])


class TestTruncatedIdentities(unittest.TestCase):
    """ Current expansions checked by truncated sums. """

    def test_single_site_current_sum(self):
        """ A single site with ghost coupling 1/2 gives sinh(1) on both sides. """
        _report = rcr2_check(SmallGraph(1, {}, [0.5]))
        self.assertAlmostEqual(_report.lhs, math.sinh(1.0))
        self.assertAlmostEqual(_report.rhs, math.sinh(1.0))
        self.assertTrue(_report.passed)
        self.assertLess(_report.notes['tail_bound'], 1e-9)

    def test_current_sum(self):
        for _graph in random_corpus(CORPUS_SIZE, MAX_VERTICES, SEED, ghost=True):
            _report = rcr2_check(_graph)
            self.assertTrue(_report.passed, msg=_graph.instance_hash)
            self.assertIn(_report.K, (16, 32, 64))

    def test_parity_resummation(self):
        _graph = _path_graph()
        _current = CurrentConfig(_graph, {(0, 1): 1})
        _report = parity_resum_check(_graph, [0, 1, 2], _current)
        _expected = 1.0 * math.sinh(0.6) ** 2 * math.cosh(0.6)
        self.assertAlmostEqual(_report.rhs, _expected)
        self.assertTrue(_report.passed)
        self.assertTrue(_report.notes['origin_degree_odd'])
        self.assertTrue(_report.notes['origin_as_sinh_matches'])

    def test_parity_resummation_even_origin(self):
        """ With an even origin only the sinh reading of the origin disagrees. """
        _graph = _path_graph()
        _report = parity_resum_check(_graph, [0, 1, 2], CurrentConfig(_graph, {(1, 2): 1}))
        self.assertTrue(_report.passed)
        self.assertFalse(_report.notes['origin_degree_odd'])
        self.assertFalse(_report.notes['origin_as_sinh_matches'])
        self.assertAlmostEqual(_report.notes['origin_as_sinh'], 0.5 * math.sinh(0.6) ** 3)

    def test_parity_resummation_exceptions(self):
        _graph = _path_graph()
        self.assertRaises(ConfigurationError, parity_resum_check, _graph, [0, 1, 2],
                          CurrentConfig(_graph, {(0, 1): 1}, {0: 1}))
        _large = SmallGraph(7, {})
        self.assertRaises(SizeLimitError, parity_resum_check, _large, range(7), CurrentConfig(_large, {}))

    def test_key_weight(self):
        """ One edge connects two vertices through an even current of at least two. """
        _graph = SmallGraph(2, {(0, 1): 0.5}, None, 0.0)
        self.assertEqual(key_weight(_graph, [], 16), 1.0)
        self.assertAlmostEqual(key_weight(_graph, [0, 1], 32), math.cosh(1.0) - 1.0)
        self.assertEqual(key_weight(SmallGraph(2, {}), [0, 1], 16), 0.0)
        _field = SmallGraph(1, {}, None, 0.25)
        self.assertAlmostEqual(key_weight(_field, [0], 32), math.cosh(0.5))

    def test_cluster_splitting(self):
        for _graph in random_corpus(CORPUS_SIZE, MAX_VERTICES, SEED, ghost=False):
            _report = ky_check(_graph, range(_graph.n_vertices))
            self.assertTrue(_report.passed, msg=_graph.instance_hash)
            self.assertTrue(_report.notes['marked_in_set'])
            self.assertFalse(_report.notes['with_empty_set_matches'])
        _outside = ky_check(_path_graph(), [1, 2])
        self.assertTrue(_outside.passed)
        self.assertIsNone(_outside.K)
        self.assertRaises(SizeLimitError, ky_check, SmallGraph(6, {}), range(6))

    def test_random_current(self):
        _graph = _path_graph()
        _current = random_current(_graph, SEED, largest=3)
        self.assertTrue(all(0 < count <= 3 for count in _current.k.values()))
        self.assertEqual(random_current(_graph, SEED, largest=3).k, _current.k)


class TestChainCurrents(unittest.TestCase):
    """ Current distances and R_0 on chains. """

    def setUp(self):
        self.graph = chain_graph(5, BETA)
        self.members = list(range(5))

    def test_chain_graph(self):
        """ Vertex 0 sits in the middle, labels are signed positions. """
        self.assertEqual(self.graph.labels, [0, -1, 1, -2, 2])
        self.assertEqual(set(self.graph.edges), {(0, 1), (0, 2), (1, 3), (2, 4)})
        self.assertFalse(self.graph.has_ghost)
        self.assertEqual(chain_graph(40, BETA).n_vertices, 40)

    def test_distances(self):
        _full = CurrentConfig(self.graph, {edge: 1 for edge in self.graph.edges})
        self.assertEqual(distances(_full, self.members), {0: 0, 1: 1, 2: 1, 3: 2, 4: 2})
        _cut = CurrentConfig(self.graph, {(0, 1): 1, (2, 4): 3})
        self.assertEqual(distances(_cut, self.members), {0: 0, 1: 1})

    def test_cluster_sets(self):
        _full = CurrentConfig(self.graph, {edge: 1 for edge in self.graph.edges})
        _inside, _leaving = cluster_sets(_full, self.members, 1)
        self.assertEqual(_inside, frozenset({0, 1, 2}))
        self.assertEqual(_leaving, frozenset({(1, 3), (2, 4)}))
        _inside, _leaving = cluster_sets(_full, self.members, 2)
        self.assertEqual(_inside, frozenset(self.members))
        self.assertEqual(_leaving, frozenset())

    def test_r0(self):
        _full = CurrentConfig(self.graph, {edge: 1 for edge in self.graph.edges})
        # R must exceed L / 4 = 1.
        self.assertEqual(r0(_full, self.members, 1.0, 4.0), 2.0)
        self.assertEqual(r0(_full, self.members, 1.0, 0.0), 1.0)
        self.assertEqual(r0(_full, self.members, -1.0, 4.0), math.inf)

    def test_r0_scan(self):
        _points = r0_scan([5, 9], BETA, 0.5, 20, SEED)
        self.assertEqual([point.L for point in _points], [5, 9])
        for _point in _points:
            self.assertEqual(_point.samples, 20)
            self.assertTrue(0 <= _point.violations <= 20)
            self.assertGreaterEqual(_point.mean_r0, 1.0)
        _currents = sample_chain_currents(5, BETA, 3, SEED)
        self.assertEqual([current.k for current in _currents],
                         [current.k for current in sample_chain_currents(5, BETA, 3, SEED)])


class TestIdentityReports(unittest.TestCase):

    def test_all_pass(self):
        _reports = identity_reports(CORPUS_SIZE, MAX_VERTICES, SEED)
        self.assertTrue(all(report.passed for report in _reports))
        _identities = {report.identity for report in _reports}
        self.assertEqual(_identities, {'doubling', 'partition', 'difference', 'rcr2', 'parity_resum', 'ky'})

    def test_strict(self):
        _reports = identity_reports(2, MAX_VERTICES, SEED, strict=True)
        self.assertTrue(all(report.passed for report in _reports))


if __name__ == '__main__':
    unittest.main()
