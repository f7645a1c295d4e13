import logging
import os

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

logger = logging.getLogger(__name__)

THREADS_ENV = "CONTAGION_THREADS"

_show_progress = False


def enable_progress(flag=True):
    """Show a tqdm bar over trial chunks in every following run."""
    global _show_progress
    _show_progress = bool(flag)


def default_threads():
    value = os.getenv(THREADS_ENV)
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning("ignoring %s=%r, expected an integer", THREADS_ENV, value)
        return 1


def trial_chunks(n_trials, threads, chunk_size=None):
    """Contiguous [start, stop) ranges covering 0..n_trials in order."""
    if chunk_size is None:
        chunk_size = max(1, -(-n_trials // max(1, threads * 4)))
    return [(start, min(start + chunk_size, n_trials)) for start in range(0, n_trials, chunk_size)]


def run_chunked(fn, n_trials, threads=None, chunk_size=None):
    """Apply ``fn(start, stop)`` over trial chunks and stitch results in trial order.

    ``fn`` must return a tuple of arrays with the trial axis first. Results do
    not depend on ``threads`` because every trial only reads its own streams.
    """
    threads = threads or default_threads()
    chunks = trial_chunks(n_trials, threads, chunk_size)
    bar = tqdm(chunks, desc="trial chunks", unit="chunk", disable=not _show_progress, leave=False)
    if threads == 1 or len(chunks) == 1:
        parts = [fn(start, stop) for start, stop in bar]
    else:
        parts = Parallel(n_jobs=threads, prefer="threads")(
            delayed(fn)(start, stop) for start, stop in bar
        )
    return tuple(np.concatenate(column, axis=0) for column in zip(*parts))
