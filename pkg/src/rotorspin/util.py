"""Small shared helpers: worker-count policy and deterministic text output."""

import os

TWO_PI = 6.283185307179586476925286766559


def worker_count() -> int:
    """Number of worker threads for chunked linear algebra.

    Capped by the ROTORSPIN_THREADS environment variable when set.
    """
    n = os.cpu_count() or 1
    env = os.environ.get("ROTORSPIN_THREADS")
    if env:
        try:
            n = max(1, min(n, int(env)))
        except ValueError:
            pass
    return n


def format_float(x: float) -> str:
    """Render a float with 17 significant digits, locale independent.

    17 digits guarantee exact float64 round-trips, so exported CSV files
    re-import bitwise equal.
    """
    return format(float(x), ".17g")
