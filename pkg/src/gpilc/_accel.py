"""Optional numba acceleration.

Hot loops are written as plain scalar Python that numba can compile. Set
``GPILC_DISABLE_NUMBA=1`` (or run without numba installed) to execute the
same functions through the interpreter and use the vectorized numpy paths.
"""
import os

_disabled = os.environ.get("GPILC_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity otherwise."""
    kwargs.setdefault("cache", True)
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs.keys() - {"cache"}:
        return args[0]
    return lambda fn: fn
