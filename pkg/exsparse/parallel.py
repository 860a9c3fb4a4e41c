import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

THREADS_ENV = "EXSPARSE_THREADS"

# Below this many parameters a sweep runs inline
MIN_CHUNK = 2048


def worker_count() -> int:
    default = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring {THREADS_ENV}={raw!r}: not an integer")
        return default
    if value < 1:
        logger.warning(f"Ignoring {THREADS_ENV}={raw!r}: must be positive")
        return default
    return value


def map_columns(
    fn: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    params: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Evaluate `fn` on chunks of `params` and stack the column blocks in order.

    `fn` maps a 1-D parameter array of length m to an (n, m) array. The result
    does not depend on the number of workers.
    """
    params = np.asarray(params, dtype=float)
    workers = min(worker_count(), max(1, params.size // MIN_CHUNK))
    if workers <= 1:
        return fn(params)
    chunks = np.array_split(params, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        blocks = list(pool.map(fn, chunks))
    return np.concatenate(blocks, axis=1)
