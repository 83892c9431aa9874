# -*- coding: utf-8 -*-
""" The experiments behind the command line.

Each experiment kind maps an :class:`spinlat.config.ExperimentConfig` to a
set of files in the output directory:

 simulate    trajectory.csv, simulate.json, rates.csv
 wsm         wsm.csv, wsm_fit.json
 survival    survival.csv, survival_fit.json
 stability   stability.csv, mixing_report.json
 identities  identities.json (and r0.csv with [scan] sizes)
 badbox      badbox.csv, badbox_summary.json

plus ``run.json`` and ``plot_recipe.json``. Monte Carlo replicas draw their
seeds from the master seed, an experiment tag and the replica index.
"""

import math
import os
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from spinlat import coarse, currents, gibbs, influence, reporting
from spinlat.config import ExperimentConfig
from spinlat.errors import ConfigurationError, FitError
from spinlat.gibbs import GibbsSpec
from spinlat.graphical import (check_monotone, coupled_evolve, energy_density_observable, evolve, magnetization,
                               origin_spin, sample_arrivals)
from spinlat.influence import DecayFit
from spinlat.lattice import Geometry, Kernel, SpinConfig, nearest_neighbor_kernel
from spinlat.rates import (MAX_BALANCE_SITES, CoupledRates, RateFamily, check_detailed_balance,
                           checkerboard_perturbation, general_rates, glauber_rates, is_attractive)
from spinlat.replicas import run_replicas
from spinlat.seeding import derive_seed
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name=__name__, level='INFO')


class RunResult(NamedTuple):
    """ Files written by a run and whether every checked identity held. """
    out_dir: str
    files: List[str]
    passed: bool


class MixingReport(object):
    """ Mixing diagnostics of one rate family.

    :ivar list gap_series:  ``(t, gap, stderr, magnetization_gap, magnetization_stderr, replicas)``
                            rows, the gap of the origin spin between all-plus and all-minus starts.
    :ivar dict stationary:  Observable -> ``{'plus': (mean, stderr), 'minus': (mean, stderr)}``
                            at the largest horizon.
    :ivar bool attractive:  Whether the perturbed family is attractive.
    """

    def __init__(
            self,
            name: str,
            epsilon: float,
            gap_series: List[tuple],
            stationary: Dict[str, Dict[str, Tuple[float, float]]],
            survival: List[influence.SurvivalPoint],
            attractive: bool
    ):
        self.name = name
        self.epsilon = epsilon
        self.gap_series = gap_series
        self.stationary = stationary
        self.survival = survival
        self.attractive = attractive
        self.gap_fit = _try_fit([(row[0], row[1], row[2]) for row in gap_series if row[0] > 0])
        self.survival_fit = _try_fit([(point.t, point.p_hat, point.stderr) for point in survival if point.t > 0])

    @property
    def ordered(self) -> bool:
        """ mu+ >= mu- within three standard errors for every observable. """
        for _estimates in self.stationary.values():
            _plus, _plus_err = _estimates['plus']
            _minus, _minus_err = _estimates['minus']
            if _plus < _minus - 3.0 * math.hypot(_plus_err, _minus_err):
                return False
        return True

    def to_record(self) -> dict:
        return {
            'rates': self.name,
            'epsilon': self.epsilon,
            'attractive': self.attractive,
            'ordered': self.ordered,
            'stationary': {name: {start: {'mean': value[0], 'stderr': value[1]} for start, value in estimates.items()}
                           for name, estimates in self.stationary.items()},
            'gap_fit': self.gap_fit.to_record() if self.gap_fit is not None else None,
            'survival': [point._asdict() for point in self.survival],
            'survival_fit': self.survival_fit.to_record() if self.survival_fit is not None else None
        }


def _try_fit(series: Sequence[Tuple[float, float, float]]) -> Optional[DecayFit]:
    try:
        return influence.fit_decay(series)
    except FitError as error:
        LOGGER.info("No decay fit: %s", error)
        return None


def base_rates(kernel: Kernel, h: float, beta: float, geom: Geometry) -> RateFamily:
    """ Glauber rates, through the general constructor when some coupling is negative. """
    if all(coupling >= 0 for coupling in kernel.values()):
        return glauber_rates(kernel, h, beta, geom)
    return general_rates(kernel, h, beta, geom)


def _clock(config: ExperimentConfig, rates: Sequence[RateFamily]) -> float:
    return config.lam if config.lam is not None else 2.0 * max(family.sup_rate for family in rates)


def _stability_replica(task) -> np.ndarray:
    _rates, _geom, _lam, _horizons, _seed, _kernel, _h = task
    _stream = sample_arrivals(_geom, _lam, (0.0, _horizons[-1]), _seed)
    _energy = energy_density_observable(_kernel, _h)
    _origin = _geom.origin()
    _upper, _lower = SpinConfig.all_plus(_geom), SpinConfig.all_minus(_geom)
    _rows = []
    _previous = 0.0
    for _horizon in _horizons:
        if _horizon > 0:
            _upper, _lower = coupled_evolve([(_upper, _rates), (_lower, _rates)], _stream, _previous, _horizon)
            _previous = _horizon
        _rows.append([_upper[_origin], _lower[_origin], magnetization(_upper), magnetization(_lower),
                      _energy(_upper), _energy(_lower)])
    return np.array(_rows, dtype=np.float64)


def _mean_and_error(values: np.ndarray) -> Tuple[float, float]:
    _n = values.shape[0]
    _spread = float(values.std(ddof=1)) if _n > 1 else 0.0
    return float(values.mean()), _spread / math.sqrt(_n)


def stability_experiment(
        beta: float,
        h: float,
        delta: float,
        geometry: Geometry,
        horizons: Sequence[float],
        replicas: int,
        seed: int = 0,
        kernel: Optional[Kernel] = None,
        lam: Optional[float] = None,
        workers: int = 1
) -> MixingReport:
    """ Mixing report of the checkerboard perturbation of Glauber rates.

    Both extreme starts run the perturbed rates on shared arrivals. The
    survival scan of the perturbed rates uses the overapproximation.

    :param kernel: Couplings, nearest neighbor with J = 1 by default.
    """
    _kernel = kernel if kernel is not None else nearest_neighbor_kernel(geometry.dimension)
    _coupled = checkerboard_perturbation(_kernel, h, beta, delta, geometry)
    _lam = _coupled.lam if lam is None else lam
    if not is_attractive(_coupled.c0)[0]:
        raise ConfigurationError("The stability experiment needs attractive unperturbed rates.")
    _horizons = sorted({0.0} | {float(horizon) for horizon in horizons})
    _tasks = [(_coupled.c1, geometry, _lam, _horizons, derive_seed(seed, 'stability', index), _kernel, h)
              for index in range(replicas)]
    _samples = np.stack(run_replicas(_stability_replica, _tasks, workers))
    _rows = []
    for _column, _horizon in enumerate(_horizons):
        _origin_gap = _mean_and_error(_samples[:, _column, 0] - _samples[:, _column, 1])
        _magnetization_gap = _mean_and_error(_samples[:, _column, 2] - _samples[:, _column, 3])
        _rows.append((_horizon, _origin_gap[0], _origin_gap[1], _magnetization_gap[0], _magnetization_gap[1],
                      replicas))
    _stationary = {}
    for _name, (_plus, _minus) in (('magnetization', (2, 3)), ('energy_density', (4, 5))):
        _stationary[_name] = {'plus': _mean_and_error(_samples[:, -1, _plus]),
                              'minus': _mean_and_error(_samples[:, -1, _minus])}
    _survival = influence.survival_scan(_coupled.c1, geometry, _horizons, replicas, 'overapprox',
                                        seed, _lam, workers=workers)
    _report = MixingReport(_coupled.c1.name, _coupled.epsilon, _rows, _stationary, _survival,
                           is_attractive(_coupled.c1)[0])
    if not _report.ordered:
        LOGGER.warning("Plus start ended below minus start beyond noise for %s.", _report.name)
    return _report


def _simulate(config: ExperimentConfig, out_dir: str) -> Tuple[Dict[str, str], List[str], bool]:
    _geom = config.geometry
    _rates = base_rates(config.kernel, config.h, config.beta, _geom)
    _lam = _clock(config, [_rates])
    _stream = sample_arrivals(_geom, _lam, (0.0, config.t_max), derive_seed(config.seed, 'simulate', 0))
    _times = list(np.arange(0.0, config.t_max + 0.5 * config.time_step, config.time_step))
    _observables = {
        'magnetization': magnetization,
        'origin_spin': origin_spin,
        'energy_density': energy_density_observable(config.kernel, config.h)
    }
    _final, _record = evolve(SpinConfig.all_plus(_geom), _rates, _stream, sample_times=_times,
                             observables=_observables)
    _tables = {reporting.write_table(out_dir, 'trajectory', 'trajectory', _record.samples, config.format):
               'trajectory'}
    _rates.to_csv(os.path.join(out_dir, 'rates.csv'))
    _attractive, _witness = is_attractive(_rates)
    _summary = {
        'arrivals': len(_stream),
        'lam': _lam,
        'final_magnetization': _final.magnetization(),
        'attractive': _attractive,
        'attractivity_witness': None if _witness is None else [list(_witness[0].spins), list(_witness[1].spins)]
    }
    if _attractive:
        _check = check_monotone(_rates, _stream, SpinConfig.all_plus(_geom), SpinConfig.all_minus(_geom))
        _summary['order_preserved'] = _check.ok
    if _geom.n_sites <= MAX_BALANCE_SITES:
        _spec = GibbsSpec.from_beta(config.kernel, config.h, config.beta, _geom)
        _summary['detailed_balance_violation'] = check_detailed_balance(_rates, _spec, _geom)
    reporting.write_json(os.path.join(out_dir, 'simulate.json'), _summary)
    return _tables, ['rates.csv', 'simulate.json'], _summary.get('order_preserved', True)


def _wsm(config: ExperimentConfig, out_dir: str) -> Tuple[Dict[str, str], List[str], bool]:
    _J = config.nearest_coupling * config.beta
    _mcmc = {'burn_in': config.burn_in, 'samples': config.samples, 'thinning': config.thinning}
    _points = gibbs.wsm_scan(config.sizes, _J, config.h * config.beta, config.wsm_method, config.dimension,
                             _mcmc, config.seed)
    _tables = {reporting.write_table(out_dir, 'wsm', 'wsm', [point._asdict() for point in _points],
                                     config.format): 'wsm'}
    _fit = _try_fit([(point.L, point.gap, point.stderr) for point in _points])
    reporting.write_json(os.path.join(out_dir, 'wsm_fit.json'), _fit.to_record() if _fit is not None else None)
    return _tables, ['wsm_fit.json'], True


def _survival(config: ExperimentConfig, out_dir: str) -> Tuple[Dict[str, str], List[str], bool]:
    _geom = config.geometry
    _rates = base_rates(config.kernel, config.h, config.beta, _geom)
    _method = None if config.dependence == 'auto' else config.dependence
    _points = influence.survival_scan(_rates, _geom, config.horizons, config.replicas, _method, config.seed,
                                      _clock(config, [_rates]), workers=config.workers)
    _tables = {reporting.write_table(out_dir, 'survival', 'survival', [point._asdict() for point in _points],
                                     config.format): 'survival'}
    _fit = _try_fit([(point.t, point.p_hat, point.stderr) for point in _points if point.t > 0])
    reporting.write_json(os.path.join(out_dir, 'survival_fit.json'), _fit.to_record() if _fit is not None else None)
    return _tables, ['survival_fit.json'], True


def _stability(config: ExperimentConfig, out_dir: str) -> Tuple[Dict[str, str], List[str], bool]:
    _report = stability_experiment(config.beta, config.h, config.delta, config.geometry, config.horizons,
                                   config.replicas, config.seed, config.kernel, config.lam, config.workers)
    _tables = {reporting.write_table(out_dir, 'stability', 'stability', _report.gap_series, config.format):
               'stability'}
    reporting.write_json(os.path.join(out_dir, 'mixing_report.json'), _report.to_record())
    return _tables, ['mixing_report.json'], True


def _identities(config: ExperimentConfig, out_dir: str) -> Tuple[Dict[str, str], List[str], bool]:
    _reports = currents.identity_reports(config.corpus_size, config.max_vertices, config.seed, config.strict)
    _passed = all(report.passed for report in _reports)
    reporting.write_json(os.path.join(out_dir, 'identities.json'), [report.to_record() for report in _reports])
    _failed = sum(1 for report in _reports if not report.passed)
    LOGGER.info("%d identity checks, %d failed.", len(_reports), _failed)
    _tables = {}
    if config.sizes:
        _points = currents.r0_scan(config.sizes, config.nearest_coupling * config.beta, 0.5, config.replicas,
                                   config.seed, config.radius)
        _tables[reporting.write_table(out_dir, 'r0', 'r0', [point._asdict() for point in _points],
                                      config.format)] = 'r0'
    return _tables, ['identities.json'], _passed


def _box_tau0(config: ExperimentConfig, geom: Geometry) -> float:
    if config.tau0 is not None:
        return config.tau0
    if not config.horizons:
        raise ConfigurationError("A badbox experiment needs [scan] tau0 or horizons to fit it.")
    _rates = base_rates(config.kernel, config.h, config.beta, geom)
    _points = influence.survival_scan(_rates, geom, config.horizons, config.replicas, None, config.seed,
                                      workers=config.workers)
    _fit = influence.fit_decay([(point.t, point.p_hat, point.stderr) for point in _points if point.t > 0])
    if _fit.flat:
        raise FitError("Survival does not decay, no tau0 for the box grid.")
    LOGGER.info("Box grid uses the fitted tau0 = %g.", _fit.tau)
    return _fit.tau


def _badbox(config: ExperimentConfig, out_dir: str) -> Tuple[Dict[str, str], List[str], bool]:
    _tau0 = _box_tau0(config, config.geometry)
    _model = coarse.BoxModel(config.kernel, config.h, config.beta, config.delta)
    _reports = coarse.bad_scan(config.scales, _tau0, _model, config.dimension, config.replicas, config.seed,
                               config.radius, config.box_speed, config.lam, config.cluster_method,
                               config.workers, config.box_side)
    _expected = []
    for _report in _reports:
        _geom, _n, _ = _report.grid.environment(config.dimension)
        _coupled = _model.coupled(_geom)
        if config.lam is not None:
            _coupled = CoupledRates(_coupled.c0, _coupled.c1, config.lam, _coupled.epsilon)
        _expected.append(coarse.expected_event1(_report.grid, _coupled, _geom, _n))
    _tables = {reporting.write_table(out_dir, 'badbox', 'badbox', [report.to_row() for report in _reports],
                                     config.format): 'badbox'}
    _fit = _try_fit([(report.grid.N, report.p_bad, report.stderr) for report in _reports])
    _radius = coarse.dependency_radius(_reports[0].grid)
    reporting.write_json(os.path.join(out_dir, 'badbox_summary.json'), {
        'tau0': _tau0,
        'conservative': config.cluster_method == 'overapprox',
        'expected_event1': dict(zip([str(scale) for scale in config.scales], _expected)),
        'dependency_radius': _radius._asdict(),
        'fit': _fit.to_record() if _fit is not None else None
    })
    return _tables, ['badbox_summary.json'], True


EXPERIMENTS = {
    'simulate': _simulate,
    'wsm': _wsm,
    'survival': _survival,
    'stability': _stability,
    'identities': _identities,
    'badbox': _badbox
}


def run(config: ExperimentConfig) -> RunResult:
    """ Runs the configured experiment and writes its files.

    :returns: The output directory, the written files and whether all checks passed.
    :raises ConfigurationError: On invalid parameters.
    :raises ContractError:      When a runtime contract of the model is violated.
    """
    _out_dir = reporting.ensure_directory(config.output_dir)
    LOGGER.info("Starting %s experiment, output in %s", config.kind, _out_dir)
    _tables, _files, _passed = EXPERIMENTS[config.kind](config, _out_dir)
    _files = sorted(list(_tables) + _files)
    reporting.write_plot_recipe(_out_dir, _tables)
    reporting.write_manifest(_out_dir, config.config_hash, config.kind, config.seed,
                             _files + ['plot_recipe.json'], {'passed': _passed})
    LOGGER.info("Finished %s experiment: %s", config.kind, ', '.join(_files))
    return RunResult(_out_dir, _files + ['plot_recipe.json', 'run.json'], _passed)
