# -*- coding: utf-8 -*-
""" Simulation and verification of finite-range spin dynamics on lattice boxes. """

__version__ = '0.1.0'
