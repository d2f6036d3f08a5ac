"""Numba switch.

Set ``SILVER_SIEVE_NO_JIT=1`` (or run without numba installed) to route the
hot kernels through their pure-numpy implementations instead.
"""
import os

_disabled = os.environ.get("SILVER_SIEVE_NO_JIT", "").strip().lower() in {"1", "true", "yes"}

try:
    if _disabled:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorate(func):
            return func

        return decorate


def set_thread_cap(n: int | None) -> None:
    """Cap numba's worker pool; a no-op on the numpy path."""
    if n is None or not HAS_NUMBA:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
