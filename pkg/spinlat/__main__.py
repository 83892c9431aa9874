# -*- coding: utf-8 -*-
""" Main Module to make spinlat directly executable through cli.


This __main__ module contains function arg_parser(),
parsing command line options and
function main(), running one experiment.

Usage:

 spinlat <experiment> --config FILE [options]

Command line Options are:


 experiment     One of simulate, wsm, survival, stability, identities, badbox.
                Must match [experiment] kind of the configuration.
 --config       Path to the INI configuration file.
 --seed         Master seed, overrides the configuration.
 --replicas     Number of Monte Carlo replicas, overrides the configuration.
 --out          Output directory, overrides the configuration.
 --format       csv or json, overrides the configuration.
 --workers      Worker processes for the replicas.

Exit codes are 0 on success, 1 when an identity check failed,
2 on an invalid configuration and 3 when a runtime contract was violated.
"""

import argparse
import sys
from textwrap import dedent
from typing import Optional

from spinlat.config import EXPERIMENT_KINDS, ExperimentConfig
from spinlat.errors import ConfigurationError, SpinlatError
from spinlat.experiments import run
from spinlat.spinlat_logger import get_stdout_logger

LOGGER = get_stdout_logger(name='main', level='INFO')


def arg_parser() -> argparse.Namespace:
    """ Reads command line arguments.

    :returns: Values of accepted command line arguments.
    """
    _parser = argparse.ArgumentParser(
        description=dedent(
            """Run an experiment on an interacting particle system.
            The configuration file names the lattice, the rates and the scan.
            Results are written as tables and JSON summaries
            together with a run.json manifest and a plot_recipe.json.
            Runs are deterministic given the configuration and the seed.
            """
            )
    )
    _parser.add_argument(
        'experiment',
        type=str,
        choices=EXPERIMENT_KINDS,
        help="The experiment to run."
    )
    _parser.add_argument(
        '--config',
        '-c',
        type=str,
        help="Path to the INI configuration file.",
        required=True
    )
    _parser.add_argument(
        '--seed',
        '-s',
        type=int,
        help="Master seed of all random streams."
    )
    _parser.add_argument(
        '--replicas',
        '-r',
        type=int,
        help="Number of Monte Carlo replicas."
    )
    _parser.add_argument(
        '--out',
        '-o',
        type=str,
        help="Output directory. Will be created if not existent."
    )
    _parser.add_argument(
        '--format',
        '-f',
        type=str,
        choices=('csv', 'json'),
        help="Table format."
    )
    _parser.add_argument(
        '--workers',
        '-w',
        type=int,
        help="Worker processes for the replicas."
    )
    return _parser.parse_args()


def main(
        experiment: str,
        config_path: str,
        seed: Optional[int] = None,
        replicas: Optional[int] = None,
        output_dir: Optional[str] = None,
        output_format: Optional[str] = None,
        workers: Optional[int] = None
) -> int:
    """ Loads the configuration, runs the experiment and maps the outcome to an exit code.

    :param experiment:  The experiment kind named on the command line.
    :param config_path: Path to the INI configuration file.
    :returns:           The process exit code.
    """
    try:
        _config = ExperimentConfig.from_file(config_path)
        if _config.kind != experiment:
            raise ConfigurationError("%s configures a %s experiment, not %s." % (
                config_path, _config.kind, experiment))
        _config = _config.with_overrides(seed, replicas, output_dir, output_format, workers)
        _result = run(_config)
    except SpinlatError as error:
        LOGGER.error("%s: %s", type(error).__name__, error)
        return error.exit_code
    if not _result.passed:
        LOGGER.error("Checks failed, see %s.", _result.out_dir)
        return 1
    LOGGER.info("Results in %s", _result.out_dir)
    return 0


def entrypoint_run():
    """ Target for setup.py entrypoint.

    Gathers the command line arguments and calls main with the values set.
    """
    _function_arguments = {}
    _cli_arguments = arg_parser()

    for _name, _key in (('seed', 'seed'), ('replicas', 'replicas'), ('out', 'output_dir'),
                        ('format', 'output_format'), ('workers', 'workers')):
        if getattr(_cli_arguments, _name) is not None:
            _function_arguments[_key] = getattr(_cli_arguments, _name)

    _function_arguments['experiment'] = _cli_arguments.experiment
    _function_arguments['config_path'] = _cli_arguments.config

    sys.exit(main(**_function_arguments))


# Still testing for __name__ == __main__
# to cleanly import this module during unit testing.
if __name__ == "__main__":
    entrypoint_run()
