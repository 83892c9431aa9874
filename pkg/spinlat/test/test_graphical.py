# -*- coding: utf-8 -*-
""" Unittests for the graphical construction. """
import math
import os
import tempfile
import unittest

import numpy as np

from spinlat.errors import ConfigurationError, GeometryMismatchError, RateBoundError
from spinlat.graphical import (ArrivalStream, PerturbationWindows, check_monotone, check_rate_bound,
                               coupled_evolve, energy_density_observable, evolve, first_flip_time,
                               is_perturbation_arrival, magnetization, sample_arrivals, update_value)
from spinlat.lattice import Geometry, LocalPattern, SpinConfig, nearest_neighbor_kernel
from spinlat.rates import checkerboard_perturbation, general_rates, glauber_rates, table_rates
from spinlat.test.configurator import configure_tests

CONFIG = configure_tests()
SEED = CONFIG['TEST_RUN'].getint('seed')
REPLICAS = CONFIG['TEST_RUN'].getint('replicas')
SIGMAS = CONFIG['TEST_RUN'].getfloat('sigmas')
BETA = CONFIG['TEST_MODEL'].getfloat('beta')
H = CONFIG['TEST_MODEL'].getfloat('h')
DELTA = CONFIG['TEST_MODEL'].getfloat('delta')
CHAIN_SIDE = CONFIG['TEST_GEOMETRY'].getint('chain_side')
SQUARE_SIDE = CONFIG['TEST_GEOMETRY'].getint('square_side')


class TestSampleArrivals(unittest.TestCase):
    """ Poisson clocks and their reproducibility. """

    def setUp(self):
        self.geom = Geometry([CHAIN_SIDE])

    def test_reproducible(self):
        """ Same seed gives the same stream, another seed another one. """
        _first = sample_arrivals(self.geom, 2.0, (0.0, 5.0), SEED)
        _second = sample_arrivals(self.geom, 2.0, (0.0, 5.0), SEED)
        self.assertEqual(_first, _second)
        self.assertNotEqual(_first, sample_arrivals(self.geom, 2.0, (0.0, 5.0), SEED + 1))

    def test_ordered(self):
        _stream = sample_arrivals(self.geom, 3.0, (1.0, 4.0), SEED)
        self.assertTrue(np.all(np.diff(_stream.times) > 0))
        self.assertTrue(np.all((_stream.times > 1.0) & (_stream.times <= 4.0)))
        self.assertTrue(np.all((_stream.marks >= 0.0) & (_stream.marks < 1.0)))

    def test_ties_stay_in_window(self):
        """ Times spaced a few doubles apart tie across sites, nudged ties never leave the window. """
        _begin = 2.0 ** 50
        _end = _begin + 4 * np.spacing(_begin)
        _stream = sample_arrivals(Geometry([SQUARE_SIDE, SQUARE_SIDE]), 50.0, (_begin, _end), SEED)
        self.assertGreater(len(_stream), 0)
        self.assertTrue(np.all(np.diff(_stream.times) > 0))
        self.assertTrue(np.all((_stream.times > _begin) & (_stream.times <= _end)))
        self.assertEqual(_stream.sites.shape, _stream.times.shape)
        self.assertEqual(_stream.marks.shape, _stream.times.shape)

    def test_rate(self):
        """ About lambda * |window| arrivals per site. """
        _lam, _length = 2.0, 50.0
        _stream = sample_arrivals(self.geom, _lam, (0.0, _length), SEED)
        _expected = _lam * _length * self.geom.n_sites
        self.assertLess(abs(len(_stream) - _expected), SIGMAS * math.sqrt(_expected))

    def test_shared_sites(self):
        """ A site has the same clock in every geometry that contains it. """
        _small = sample_arrivals(Geometry([4, 4], 1, 'plus'), 1.0, (0.0, 3.0), SEED)
        _large = sample_arrivals(Geometry([6, 6], 1, 'plus'), 1.0, (0.0, 3.0), SEED)
        _small_times, _small_marks = _small.site_arrivals(_small.geometry.site_index((2, 3)))
        _large_times, _large_marks = _large.site_arrivals(_large.geometry.site_index((2, 3)))
        np.testing.assert_array_equal(_small_times, _large_times)
        np.testing.assert_array_equal(_small_marks, _large_marks)

    def test_empty_window(self):
        _stream = sample_arrivals(self.geom, 1.0, (2.0, 2.0), SEED)
        self.assertEqual(len(_stream), 0)

    def test_exceptions(self):
        self.assertRaises(ConfigurationError, sample_arrivals, self.geom, 0.0, (0.0, 1.0), SEED)
        self.assertRaises(ConfigurationError, sample_arrivals, self.geom, 1.0, (1.0, 0.0), SEED)

    def test_serialization(self):
        """ The binary layout restores the stream exactly. """
        _stream = sample_arrivals(Geometry([3, 4], 1, 'minus'), 1.5, (0.0, 2.0), SEED)
        with tempfile.TemporaryDirectory() as _directory:
            _path = os.path.join(_directory, 'stream.bin')
            _stream.save(_path)
            _loaded = ArrivalStream.load(_path)
        self.assertEqual(_loaded.geometry, _stream.geometry)
        self.assertEqual(_loaded.window, _stream.window)
        np.testing.assert_array_equal(_loaded.times, _stream.times)
        np.testing.assert_array_equal(_loaded.sites, _stream.sites)
        self.assertRaises(ConfigurationError, ArrivalStream.from_bytes, b'NOTASTREAM' + bytes(64))

    def test_restrict_and_clip(self):
        _stream = sample_arrivals(self.geom, 2.0, (0.0, 4.0), SEED)
        _restricted = _stream.restrict(1.0, 2.0)
        self.assertTrue(np.all((_restricted.times >= 1.0) & (_restricted.times <= 2.0)))
        _clipped = _stream.clip([0, 1])
        self.assertEqual(set(_clipped.sites.tolist()), {0, 1})
        self.assertEqual(len(_clipped), len(_stream.site_arrivals(0)[0]) + len(_stream.site_arrivals(1)[0]))


class TestUpdate(unittest.TestCase):
    """ The update rule at a single arrival. """

    def setUp(self):
        self.geom = Geometry([CHAIN_SIDE])
        self.rates = glauber_rates(nearest_neighbor_kernel(1), H, BETA, self.geom)
        self.lam = 2.0 * self.rates.sup_rate

    def test_update_value(self):
        _plus = LocalPattern([1, 1, 1], 1, 1)
        _threshold = self.rates.rate(_plus) / self.lam
        self.assertEqual(update_value(_plus, _threshold, self.rates, self.lam), 1)
        self.assertEqual(update_value(_plus, _threshold * 0.5, self.rates, self.lam), -1)
        _minus = LocalPattern([-1, -1, -1], 1, 1)
        _threshold = 1.0 - self.rates.rate(_minus) / self.lam
        self.assertEqual(update_value(_minus, _threshold, self.rates, self.lam), 1)
        self.assertEqual(update_value(_minus, _threshold - 1e-9, self.rates, self.lam), -1)

    def test_rate_bound(self):
        """ lambda below 2 sup c is refused. """
        self.assertRaises(RateBoundError, check_rate_bound, self.rates, self.rates.sup_rate)
        check_rate_bound(self.rates, self.lam)
        self.assertRaises(RateBoundError, update_value, LocalPattern([1, 1, 1], 1, 1), 0.5, self.rates, 1.0)

    def test_flip_probability(self):
        """ The spin flips with probability c/lambda at an arrival. """
        _pattern = LocalPattern([-1, 1, -1], 1, 1)
        _marks = np.random.default_rng(SEED).random(20000)
        _flips = sum(update_value(_pattern, mark, self.rates, self.lam) == -1 for mark in _marks)
        _p = self.rates.rate(_pattern) / self.lam
        self.assertLess(abs(_flips / 20000 - _p), SIGMAS * math.sqrt(_p * (1 - _p) / 20000))


class TestEvolve(unittest.TestCase):
    """ Chains driven by a shared stream. """

    def setUp(self):
        self.geom = Geometry([SQUARE_SIDE, SQUARE_SIDE])
        self.kernel = nearest_neighbor_kernel(2)
        self.rates = glauber_rates(self.kernel, H, BETA, self.geom)
        self.lam = 2.0 * self.rates.sup_rate
        self.stream = sample_arrivals(self.geom, self.lam, (0.0, 3.0), SEED)

    def test_deterministic(self):
        _first, _ = evolve(SpinConfig.all_plus(self.geom), self.rates, self.stream)
        _second, _ = evolve(SpinConfig.all_plus(self.geom), self.rates, self.stream)
        self.assertEqual(_first, _second)

    def test_segments(self):
        """ Running [0, 1] then (1, 3] equals running [0, 3]. """
        _whole, _ = evolve(SpinConfig.all_plus(self.geom), self.rates, self.stream)
        _middle, _ = evolve(SpinConfig.all_plus(self.geom), self.rates, self.stream, t_stop=1.0)
        _end, _ = evolve(_middle, self.rates, self.stream, t_start=1.0)
        self.assertEqual(_whole, _end)

    def test_samples(self):
        _times = [0.0, 1.0, 2.0, 3.0]
        _, _record = evolve(SpinConfig.all_plus(self.geom), self.rates, self.stream, sample_times=_times,
                            record_events=True)
        _series = _record.series('magnetization')
        self.assertEqual([time for time, _ in _series], _times)
        self.assertEqual(_series[0][1], 1.0)
        self.assertEqual(len(_record.events), len(self.stream))
        for _time, _site, _old, _new, _mark, _flag in _record.events:
            self.assertIn(_old, (-1, 1))
            self.assertFalse(_flag)

    def test_coupled_evolve(self):
        """ Each chain of a coupling equals the chain run alone. """
        _perturbed = checkerboard_perturbation(self.kernel, H, BETA, DELTA, self.geom)
        _stream = sample_arrivals(self.geom, _perturbed.lam, (0.0, 3.0), SEED)
        _start = SpinConfig.all_minus(self.geom)
        _coupled = coupled_evolve([(_start, _perturbed.c0), (_start, _perturbed.c1)], _stream)
        self.assertEqual(_coupled[0], evolve(_start, _perturbed.c0, _stream)[0])
        self.assertEqual(_coupled[1], evolve(_start, _perturbed.c1, _stream)[0])

    def test_geometry_mismatch(self):
        _other = SpinConfig.all_plus(Geometry([SQUARE_SIDE + 1, SQUARE_SIDE]))
        self.assertRaises(GeometryMismatchError, evolve, _other, self.rates, self.stream)

    def test_energy_density(self):
        """ The all plus state has energy density d J + h per site. """
        _energy = energy_density_observable(self.kernel, H)
        self.assertAlmostEqual(_energy(SpinConfig.all_plus(self.geom)), 2.0 + H)
        self.assertAlmostEqual(_energy(SpinConfig.all_minus(self.geom)), 2.0 - H)
        _plus_box = Geometry([SQUARE_SIDE, SQUARE_SIDE], 1, 'plus')
        # Boundary bonds of the minus state against the plus exterior count once.
        _boundary_bonds = 4 * SQUARE_SIDE
        _bulk_bonds = 2 * SQUARE_SIDE * (SQUARE_SIDE - 1)
        _expected = (_bulk_bonds - _boundary_bonds - H * SQUARE_SIDE ** 2) / SQUARE_SIDE ** 2
        self.assertAlmostEqual(_energy(SpinConfig.all_minus(_plus_box)), _expected)


class TestMonotonicity(unittest.TestCase):
    """ Attractive rates preserve the order on every realization. """

    def test_attractive(self):
        _geom = Geometry([SQUARE_SIDE, SQUARE_SIDE], 1, 'plus')
        _rates = glauber_rates(nearest_neighbor_kernel(2), H, BETA, _geom)
        _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, 5.0), SEED)
        _generator = np.random.default_rng(SEED)
        _lower = SpinConfig(_geom, _generator.choice([-1, 1], size=_geom.n_sites))
        self.assertTrue(check_monotone(_rates, _stream, SpinConfig.all_plus(_geom), _lower).ok)
        self.assertTrue(check_monotone(_rates, _stream, _lower, SpinConfig.all_minus(_geom)).ok)
        self.assertRaises(ConfigurationError, check_monotone, _rates, _stream, _lower, SpinConfig.all_plus(_geom))

    def test_antiferromagnet(self):
        """ The order breaks for an antiferromagnet within a few arrivals. """
        _geom = Geometry([CHAIN_SIDE])
        _rates = general_rates({(1,): -1.0, (-1,): -1.0}, 0.0, 1.0, _geom)
        _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, 20.0), SEED)
        _check = check_monotone(_rates, _stream, SpinConfig.all_plus(_geom), SpinConfig.all_minus(_geom))
        self.assertFalse(_check.ok)
        self.assertIsNotNone(_check.time)
        self.assertIn(_check.site, range(_geom.n_sites))


class TestPerturbationWindows(unittest.TestCase):

    def test_constant_rates(self):
        """ Constant rates 1 and 1.5 on lambda 4: a plus center separates on (1/4, 3/8). """
        _c0 = table_rates(np.ones(8), 1, 1)
        _c1 = table_rates(np.full(8, 1.5), 1, 1)
        _windows = PerturbationWindows(_c0, _c1, 4.0)
        self.assertTrue(_windows.contains(0.3))
        self.assertFalse(_windows.contains(0.25))
        self.assertFalse(_windows.contains(0.5))
        self.assertTrue(_windows.contains(1.0 - 0.3))
        self.assertAlmostEqual(_windows.measure(), 0.25)
        self.assertTrue(is_perturbation_arrival(0.3, _c0, _c1, 4.0))

    def test_no_perturbation(self):
        _c0 = table_rates(np.ones(8), 1, 1)
        self.assertEqual(PerturbationWindows(_c0, _c0, 4.0).measure(), 0.0)

    def test_checkerboard_windows(self):
        """ Every site of a checkerboard perturbation has a nonempty window. """
        _geom = Geometry([SQUARE_SIDE + 1, SQUARE_SIDE + 1])
        _coupled = checkerboard_perturbation(nearest_neighbor_kernel(2), H, BETA, DELTA, _geom)
        _windows = PerturbationWindows(_coupled.c0, _coupled.c1, _coupled.lam, _geom)
        for _site in range(_geom.n_sites):
            self.assertGreater(_windows.measure(_site), 0.0)
            self.assertLess(_windows.measure(_site), 1.0)


class TestFirstFlip(unittest.TestCase):

    def test_first_flip(self):
        _geom = Geometry([CHAIN_SIDE])
        _rates = glauber_rates(nearest_neighbor_kernel(1), 0.0, BETA, _geom)
        _stream = sample_arrivals(_geom, 2.0 * _rates.sup_rate, (0.0, 50.0), SEED)
        _time = first_flip_time(SpinConfig.all_plus(_geom), _rates, _stream, 0)
        self.assertIsNotNone(_time)
        _before, _ = evolve(SpinConfig.all_plus(_geom), _rates, _stream, t_stop=np.nextafter(_time, -np.inf))
        _after, _ = evolve(SpinConfig.all_plus(_geom), _rates, _stream, t_stop=_time)
        self.assertEqual(_before[(0,)], 1)
        self.assertEqual(_after[(0,)], -1)
        self.assertEqual(magnetization(SpinConfig.all_plus(_geom)), 1.0)


if __name__ == '__main__':
    unittest.main()
