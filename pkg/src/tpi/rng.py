"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by an integer seed plus a small integer path (e.g. ``stream(seed, TAG, i)``).
Philox is counter-based, so streams for different paths are statistically
independent and completely insensitive to scheduling: a batch of seeds run
across any number of threads reproduces the single-threaded results bit for
bit.
"""

import os

import numpy as np


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for an integer seed and path.

    Parameters
    ----------
    seed : int
        Base entropy. Runs with the same seed and path are identical.
    *path : int
        Optional sub-stream coordinates (experiment tag, trial index, ...).
    """
    key = tuple(int(p) for p in path)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def thread_count(explicit=None):
    """Resolve the worker count: explicit argument, else TPI_THREADS, else 1."""
    if explicit is not None:
        n = int(explicit)
    else:
        n = int(os.environ.get("TPI_THREADS", "1"))
    if n < 1:
        raise ValueError("thread count must be >= 1")
    return n
