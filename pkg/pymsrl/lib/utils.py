"""General utility functions and classes: the error hierarchy, seed
handling and the worker pool size"""
import logging
import os

import numpy as np

THREADS_ENV = 'MSRL_THREADS'

logger = logging.getLogger(__name__)


class MsrlError(Exception):
    """Base class for every error raised by the library

    Attributes:
        exit_code: the process exit code the command line tool uses
            when this error escapes a command
    """
    exit_code = 1


class ConfigError(MsrlError):
    """Invalid parameters, names or configuration values"""
    exit_code = 2


class DataError(MsrlError):
    """Unusable input data: shapes, files, degenerate columns or sample
    sizes too small for the requested procedure"""
    exit_code = 3


class NumericalError(MsrlError):
    """A numerical procedure failed (non-finite iterate, SVD failure)

    Attributes:
        iteration: the iteration at which the failure was detected, or
            None when not applicable
    """
    exit_code = 4

    def __init__(self, message, iteration=None):
        MsrlError.__init__(self, message)
        self.iteration = iteration


class RankDeficient(NumericalError):
    """The residual matrix lost rank, so the nuclear norm of residuals is
    no longer differentiable there.

    This is an expected, recoverable event: the hybrid path driver catches
    it and switches to the ADMM solver.

    Attributes:
        last_good: the last coefficient iterate whose residual was full
            rank (p x q array), or None
    """
    def __init__(self, message, iteration=None, last_good=None):
        NumericalError.__init__(self, message, iteration)
        self.last_good = last_good


def make_rng(seed):
    """Builds a numpy Generator from an int seed, a SeedSequence or an
    existing Generator (returned unchanged)"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seeds(seed, count):
    """Derives `count` independent child seed sequences from a master seed

    The children depend only on (seed, index), never on how work is later
    scheduled across workers.

    Args:
        seed: master seed (int or SeedSequence)
        count: number of child streams
    Returns:
        a list of SeedSequence objects
    """
    if isinstance(seed, np.random.SeedSequence):
        # A fresh copy, so spawning twice from one sequence repeats itself
        master = np.random.SeedSequence(seed.entropy,
                                        spawn_key=seed.spawn_key,
                                        pool_size=seed.pool_size)
    else:
        master = np.random.SeedSequence(seed)
    return master.spawn(count)


def resolve_threads(threads=None):
    """Chooses the worker pool size

    Args:
        threads: explicit number of workers, or None to fall back to the
            MSRL_THREADS environment variable and then to the machine's
            CPU count
    Returns:
        a positive int
    Raises:
        ConfigError: if the value is not a positive integer
    """
    if threads is None:
        threads = os.environ.get(THREADS_ENV)
    if threads is None:
        return os.cpu_count() or 1

    try:
        threads = int(threads)
    except (TypeError, ValueError):
        raise ConfigError('thread count must be an integer, got %r'
                          % (threads,))
    if threads < 1:
        raise ConfigError('thread count must be positive, got %d' % threads)
    return threads


def standard_error(values):
    """Standard error of the mean of a 1-D sample (0 for one value)"""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))
