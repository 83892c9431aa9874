# -*- coding: utf-8 -*-
""" Deterministic seed derivation.

All randomness of spinlat starts from one 64-bit master seed.
Seeds for replicas and for the arrival clocks of single sites
are derived from it with the splitmix64 finalizer:

.. code-block:: python

    z = (z + 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    z = z ^ (z >> 31)

Several words are folded in one after another,
``state = mix(state ^ word)``.
Replica seeds fold ``(master, tag, replica index)``, where the tag is
reduced to 64 bits with SHA-256 (stable across interpreter runs,
unlike :func:`hash`).
Site seeds fold ``(master, coordinate_1, ..., coordinate_d)``, so two
geometries that share a site agree on the arrivals of that site.
"""

import hashlib
from typing import Iterable

import numpy as np

MASK_64 = 0xFFFFFFFFFFFFFFFF


def mix64(value: int) -> int:
    """ The splitmix64 finalizer on a 64-bit word. """
    _z = (value + 0x9E3779B97F4A7C15) & MASK_64
    _z = ((_z ^ (_z >> 30)) * 0xBF58476D1CE4E5B9) & MASK_64
    _z = ((_z ^ (_z >> 27)) * 0x94D049BB133111EB) & MASK_64
    return _z ^ (_z >> 31)


def fold(words: Iterable[int]) -> int:
    """ Folds a sequence of integers into one 64-bit seed. """
    _state = 0
    for word in words:
        _state = mix64(_state ^ (int(word) & MASK_64))
    return _state


def tag_word(tag: str) -> int:
    """ Reduces an experiment tag to a 64-bit word. """
    _digest = hashlib.sha256(tag.encode('utf-8')).digest()
    return int.from_bytes(_digest[:8], 'little')


def derive_seed(master: int, tag: str, index: int) -> int:
    """ Seed of replica ``index`` of the experiment ``tag``.

    :param master: The master seed of the run.
    :param tag:    Name of the experiment or sub experiment.
    :param index:  Replica index.
    """
    return fold((master, tag_word(tag), index))


def site_seed(master: int, coords: Iterable[int]) -> int:
    """ Seed of the arrival clock of the site with coordinates ``coords``. """
    return fold([master] + [int(coord) for coord in coords])


def make_generator(seed: int) -> np.random.Generator:
    """ Returns a numpy generator seeded with a 64-bit seed. """
    return np.random.Generator(np.random.PCG64(seed & MASK_64))
