# -*- coding: utf-8 -*-
""" Unittests for seed derivation and replica execution. """
import unittest

from spinlat.replicas import run_replicas
from spinlat.seeding import MASK_64, derive_seed, fold, make_generator, mix64, site_seed, tag_word
from spinlat.test.configurator import configure_tests

CONFIG = configure_tests()
SEED = CONFIG['TEST_RUN'].getint('seed')


def _square(task):
    return task * task


def _draw(task):
    return float(make_generator(task).random())


class TestSeeding(unittest.TestCase):
    """ Seeds are deterministic 64-bit words. """

    def test_mix64(self):
        # First output of a splitmix64 generator started at zero.
        self.assertEqual(mix64(0), 0xE220A8397B1DCDAF)
        self.assertEqual(fold([]), 0)
        self.assertEqual(fold([0]), mix64(0))
        self.assertTrue(0 <= mix64(MASK_64) <= MASK_64)

    def test_derive_seed(self):
        _seed = derive_seed(SEED, 'survival', 3)
        self.assertEqual(_seed, derive_seed(SEED, 'survival', 3))
        self.assertEqual(_seed, fold((SEED, tag_word('survival'), 3)))
        _others = {derive_seed(SEED, 'survival', 4), derive_seed(SEED, 'badbox', 3),
                   derive_seed(SEED + 1, 'survival', 3)}
        self.assertNotIn(_seed, _others)
        self.assertEqual(len(_others), 3)

    def test_site_seed(self):
        self.assertEqual(site_seed(SEED, (1, 2)), site_seed(SEED, [1, 2]))
        self.assertNotEqual(site_seed(SEED, (1, 2)), site_seed(SEED, (2, 1)))
        # Negative coordinates fold as 64-bit words.
        self.assertTrue(0 <= site_seed(SEED, (-1,)) <= MASK_64)

    def test_generator(self):
        self.assertEqual(make_generator(SEED).random(), make_generator(SEED).random())
        self.assertNotEqual(make_generator(SEED).random(), make_generator(SEED + 1).random())


class TestReplicas(unittest.TestCase):

    def test_serial(self):
        self.assertEqual(run_replicas(_square, range(5)), [0, 1, 4, 9, 16])
        self.assertEqual(run_replicas(_square, []), [])

    def test_pool(self):
        """ Results come back in task order whatever the worker count. """
        _tasks = [derive_seed(SEED, 'pool', index) for index in range(8)]
        self.assertEqual(run_replicas(_draw, _tasks, workers=3), run_replicas(_draw, _tasks))


if __name__ == '__main__':
    unittest.main()
