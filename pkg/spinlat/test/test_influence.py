# -*- coding: utf-8 -*-
""" Unittests for dependence sets, lightrays and survival estimates. """
import itertools
import math
import unittest

import numpy as np
from scipy import stats

from spinlat.errors import ConfigurationError, CoverageError, DependenceCapExceeded, FitError
from spinlat.graphical import UpdateTables, evolve, sample_arrivals
from spinlat.influence import (backward_dependence, cluster_of, dependence_nonempty, first_flip_times, fit_decay,
                               lightray_from_sites, lightray_reach, sandwich_gap, survival_scan)
from spinlat.lattice import Geometry, SpinConfig, nearest_neighbor_kernel
from spinlat.rates import general_rates, glauber_rates
from spinlat.test.configurator import configure_tests

CONFIG = configure_tests()
SEED = CONFIG['TEST_RUN'].getint('seed')
REPLICAS = CONFIG['TEST_RUN'].getint('replicas')
SIGMAS = CONFIG['TEST_RUN'].getfloat('sigmas')
BETA = CONFIG['TEST_MODEL'].getfloat('beta')
H = CONFIG['TEST_MODEL'].getfloat('h')
HOT_BETA = CONFIG['TEST_MODEL'].getfloat('high_temperature_beta')
CHAIN_SIDE = CONFIG['TEST_GEOMETRY'].getint('chain_side')


def _brute_force_dependence(geom, rates, stream, site, floor, t):
    """ Sites y such that flipping y at time floor changes the spin of site at t, for some configuration. """
    _dependent = set()
    for _spins in itertools.product((-1, 1), repeat=geom.n_sites):
        _config = SpinConfig(geom, _spins)
        _base, _ = evolve(_config, rates, stream, t_start=floor, t_stop=t)
        for _y in range(geom.n_sites):
            if _y in _dependent:
                continue
            _flipped = _config.copy()
            _flipped.spins[_y] = -_flipped.spins[_y]
            _other, _ = evolve(_flipped, rates, stream, t_start=floor, t_stop=t)
            if _other.spins[site] != _base.spins[site]:
                _dependent.add(_y)
    return frozenset(_dependent)


class TestDependenceSets(unittest.TestCase):
    """ The three methods against each other and against brute force. """

    def setUp(self):
        self.geom = Geometry([5], 1, 'periodic')
        self.rates = glauber_rates(nearest_neighbor_kernel(1), H, BETA, self.geom)
        self.lam = 2.0 * self.rates.sup_rate

    def test_exact_against_brute_force(self):
        """ The exact set at the floor is the set of sites the target depends on. """
        for _replica in range(4):
            _stream = sample_arrivals(self.geom, self.lam, (0.0, 1.0), SEED + _replica)
            _exact = backward_dependence((2,), 1.0, _stream, self.rates, 'exact')
            _expected = _brute_force_dependence(self.geom, self.rates, _stream, 2, 0.0, 1.0)
            self.assertEqual(_exact.at(0.0), _expected)

    def test_overapprox_contains_exact(self):
        """ Y_exact(s) is a subset of Y_over(s) at every change time. """
        _geom = Geometry([CHAIN_SIDE])
        _rates = glauber_rates(nearest_neighbor_kernel(1), H, BETA, _geom)
        for _replica in range(10):
            _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, 2.0), SEED + _replica)
            _exact = backward_dependence((0,), 2.0, _stream, _rates, 'exact')
            _over = backward_dependence((0,), 2.0, _stream, _rates, 'overapprox')
            _times = [0.0, 2.0] + [time for time, _ in _exact.breakpoints] + [time for time, _ in _over.breakpoints]
            for _s in _times:
                self.assertTrue(_exact.at(_s) <= _over.at(_s), "s=%g" % _s)

    def test_sandwich_matches_exact(self):
        """ For attractive rates the extremes disagree exactly when the exact set is nonempty. """
        _geom = Geometry([CHAIN_SIDE])
        _rates = glauber_rates(nearest_neighbor_kernel(1), H, BETA, _geom)
        for _replica in range(10):
            _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, 1.5), SEED + _replica)
            _exact = backward_dependence((0,), 1.5, _stream, _rates, 'exact')
            _sandwich = backward_dependence((0,), 1.5, _stream, _rates, 'sandwich')
            for _s in (0.0, 0.5, 1.0, 1.5):
                self.assertEqual(_exact.nonempty_at(_s), _sandwich.nonempty_at(_s))
                self.assertEqual(_exact.nonempty_at(_s),
                                 dependence_nonempty((0,), 1.5, _stream, _rates, 'sandwich', _s))
            self.assertEqual(_exact.emptied_at, _sandwich.emptied_at)

    def test_emptiness_persists(self):
        _stream = sample_arrivals(self.geom, self.lam, (0.0, 10.0), SEED)
        _over = backward_dependence((0,), 10.0, _stream, self.rates, 'overapprox')
        self.assertEqual(_over.at(10.0), frozenset({0}))
        if _over.emptied_at is not None:
            self.assertFalse(_over.nonempty_at(0.0))
            self.assertFalse(_over.nonempty_at(_over.emptied_at * 0.5))
            self.assertTrue(_over.nonempty_at(_over.emptied_at))
            self.assertEqual(_over.at(0.0), frozenset())

    def test_processed_arrivals(self):
        """ Every processed arrival hit the set just above its time. """
        _stream = sample_arrivals(self.geom, self.lam, (0.0, 3.0), SEED)
        _over = backward_dependence((0,), 3.0, _stream, self.rates, 'overapprox')
        for _time, _site, _mark in _over.processed_arrivals:
            self.assertIn(_site, _over.at(np.nextafter(_time, np.inf)))

    def test_lightray_contains_dependence(self):
        _geom = Geometry([CHAIN_SIDE])
        _rates = glauber_rates(nearest_neighbor_kernel(1), H, BETA, _geom)
        _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, 2.0), SEED)
        _over = backward_dependence((4,), 2.0, _stream, _rates, 'overapprox')
        _reach = lightray_reach((4,), 2.0, _stream, 0.0)
        for _time, _sites in _over.breakpoints:
            self.assertTrue(_sites <= _reach.sites_at(_time))
        self.assertTrue(_reach.contains(4, 0.0))

    def test_lightray_from_sites(self):
        """ The reach of several sources is the union of the single reaches. """
        _geom = Geometry([CHAIN_SIDE])
        _stream = sample_arrivals(_geom, 2.0, (0.0, 1.0), SEED)
        _union = lightray_from_sites([2, 6], 1.0, _stream, 0.0)
        _left = lightray_reach((2,), 1.0, _stream, 0.0)
        _right = lightray_reach((6,), 1.0, _stream, 0.0)
        for _s in (0.0, 0.25, 0.5, 1.0):
            self.assertEqual(_union.sites_at(_s), _left.sites_at(_s) | _right.sites_at(_s))

    def test_cluster(self):
        _stream = sample_arrivals(self.geom, self.lam, (0.0, 2.0), SEED)
        _over = backward_dependence((1,), 2.0, _stream, self.rates, 'overapprox')
        _cluster = cluster_of(_over)
        self.assertTrue(_cluster.contains(1, 2.0))
        self.assertFalse(_cluster.is_empty())
        self.assertTrue(_cluster.covered_by([_cluster]))
        self.assertEqual(_cluster.reaches(0.0), _over.nonempty_at(0.0))

    def test_tables_shared(self):
        """ Prepared tables give the same answer. """
        _stream = sample_arrivals(self.geom, self.lam, (0.0, 2.0), SEED)
        _tables = UpdateTables(self.rates, self.geom, self.lam)
        _with = backward_dependence((0,), 2.0, _stream, self.rates, 'exact', tables=_tables)
        _without = backward_dependence((0,), 2.0, _stream, self.rates, 'exact')
        self.assertEqual(_with.breakpoints, _without.breakpoints)

    def test_exceptions(self):
        _stream = sample_arrivals(self.geom, self.lam, (0.0, 2.0), SEED)
        self.assertRaises(ConfigurationError, backward_dependence, (0,), 2.0, _stream, self.rates, 'guess')
        self.assertRaises(CoverageError, backward_dependence, (0,), 3.0, _stream, self.rates)
        self.assertRaises(CoverageError, backward_dependence, (0,), 1.0, _stream, self.rates, 'overapprox', 20, 1.5)
        _antiferromagnet = general_rates({(1,): -1.0, (-1,): -1.0}, 0.0, BETA, self.geom)
        _stream = sample_arrivals(self.geom, 2.0 * _antiferromagnet.sup_rate, (0.0, 2.0), SEED)
        self.assertRaises(ConfigurationError, backward_dependence, (0,), 2.0, _stream, _antiferromagnet, 'sandwich')

    def test_cap(self):
        """ A small cap is exceeded on a long horizon in two dimensions. """
        _geom = Geometry([6, 6])
        _rates = glauber_rates(nearest_neighbor_kernel(2), H, BETA, _geom)
        _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, 20.0), SEED)
        self.assertRaises(DependenceCapExceeded, backward_dependence, (0, 0), 20.0, _stream, _rates, 'exact', 2)


class TestSurvival(unittest.TestCase):
    """ Monte Carlo survival probabilities and gaps. """

    def setUp(self):
        self.geom = Geometry([CHAIN_SIDE])
        self.rates = glauber_rates(nearest_neighbor_kernel(1), H, HOT_BETA, self.geom)

    def test_survival_scan(self):
        _points = survival_scan(self.rates, self.geom, [0.0, 0.5, 1.0, 2.0], 50, 'overapprox', SEED)
        self.assertEqual([point.t for point in _points], [0.0, 0.5, 1.0, 2.0])
        self.assertEqual(_points[0].p_hat, 1.0)
        self.assertEqual(_points[0].stderr, 0.0)
        for _earlier, _later in zip(_points, _points[1:]):
            self.assertGreaterEqual(_earlier.p_hat, _later.p_hat)
        self.assertTrue(all(point.method == 'overapprox' and point.replicas == 50 for point in _points))

    def test_methods_agree(self):
        """ Exact and sandwich see the same streams and give the same estimate. """
        _exact = survival_scan(self.rates, self.geom, [1.0], 40, 'exact', SEED)
        _sandwich = survival_scan(self.rates, self.geom, [1.0], 40, 'sandwich', SEED)
        _over = survival_scan(self.rates, self.geom, [1.0], 40, 'overapprox', SEED)
        self.assertEqual(_exact[0].p_hat, _sandwich[0].p_hat)
        self.assertLessEqual(_exact[0].p_hat, _over[0].p_hat)
        self.assertEqual(survival_scan(self.rates, self.geom, [1.0], 40, None, SEED)[0].method, 'sandwich')

    def test_workers(self):
        """ The pool gives the same numbers as the serial loop. """
        _serial = survival_scan(self.rates, self.geom, [1.0], 20, 'overapprox', SEED)
        _pooled = survival_scan(self.rates, self.geom, [1.0], 20, 'overapprox', SEED, workers=2)
        self.assertEqual(_serial, _pooled)

    def test_survival_exceptions(self):
        self.assertRaises(ConfigurationError, survival_scan, self.rates, self.geom, [], 10)
        self.assertRaises(ConfigurationError, survival_scan, self.rates, self.geom, [-1.0], 10)
        self.assertRaises(ConfigurationError, survival_scan, self.rates, self.geom, [1.0], 0)

    def test_sandwich_gap(self):
        """ The gap estimate equals twice the sandwich survival on the same replicas. """
        _gap = sandwich_gap(self.rates, self.geom, 1.0, 60, SEED)
        self.assertGreaterEqual(_gap.gap, 0.0)
        self.assertLessEqual(_gap.gap, 2.0)
        self.assertEqual(_gap.replicas, 60)
        self.assertEqual(sandwich_gap(self.rates, self.geom, 0.0, 5, SEED).gap, 2.0)

    def test_first_flip_times(self):
        _times = first_flip_times(self.rates, self.geom, 30, 1e-9, SEED)
        self.assertTrue(np.all(np.isinf(_times)))
        _times = first_flip_times(self.rates, self.geom, 30, 100.0, SEED)
        self.assertTrue(np.all(np.isfinite(_times)))
        self.assertTrue(np.all(_times > 0))


class TestFitDecay(unittest.TestCase):

    def test_exact_exponential(self):
        _series = [(t, 2.0 * math.exp(-t / 3.0), 0.01 * math.exp(-t / 3.0)) for t in (1.0, 2.0, 4.0, 8.0)]
        _fit = fit_decay(_series)
        self.assertAlmostEqual(_fit.tau, 3.0, places=6)
        self.assertAlmostEqual(_fit.amplitude, 2.0, places=6)
        self.assertAlmostEqual(_fit.r_squared, 1.0, places=6)
        self.assertAlmostEqual(_fit.predict(3.0), 2.0 * math.exp(-1.0), places=6)
        self.assertFalse(_fit.flat)
        self.assertEqual(_fit.to_record()['points'], 4)

    def test_censored(self):
        """ Trailing zeros are dropped, zero standard errors fall back to unit weights. """
        _series = [(1.0, 0.5, 0.0), (2.0, 0.25, 0.0), (3.0, 0.125, 0.0), (4.0, 0.0, 0.0), (5.0, 0.0, 0.0)]
        _fit = fit_decay(_series)
        self.assertEqual(_fit.dropped, 2)
        self.assertAlmostEqual(_fit.tau, 1.0 / math.log(2.0), places=6)

    def test_flat(self):
        _fit = fit_decay([(1.0, 0.5, 0.1), (2.0, 0.5, 0.1), (3.0, 0.5, 0.1)])
        self.assertTrue(_fit.flat)
        self.assertTrue(math.isinf(_fit.tau))

    def test_exceptions(self):
        self.assertRaises(FitError, fit_decay, [(1.0, 0.0, 0.0), (2.0, 0.0, 0.0)])
        self.assertRaises(FitError, fit_decay, [(1.0, 0.5, 0.1), (2.0, 0.25, 0.1)])
        self.assertRaises(FitError, fit_decay, [(1.0, 0.5, 0.1), (2.0, 0.0, 0.1), (3.0, 0.1, 0.1)])


class TestUniformization(unittest.TestCase):

    def test_single_site_exponential(self):
        """ The first flip of a lone site in a plus box is exponential with rate c(+). """
        _geom = Geometry([1], 1, 'plus')
        _rates = glauber_rates(nearest_neighbor_kernel(1), H, BETA, _geom)
        _rate = math.exp(-BETA * (H + 2.0))
        _times = first_flip_times(_rates, _geom, 10000, 30.0 / _rate, SEED)
        self.assertTrue(np.all(np.isfinite(_times)))
        self.assertLess(stats.kstest(_times, 'expon', args=(0.0, 1.0 / _rate)).statistic, 0.02)


if __name__ == '__main__':
    unittest.main()
