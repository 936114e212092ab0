"""Backend selection for the compiled kernels.

Set ``CABINFRONT_NUMBA=0`` to force the pure-numpy paths (useful for
debugging, profiling, or platforms without an LLVM toolchain).
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and os.environ.get("CABINFRONT_NUMBA", "1").lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAS_NUMBA:
        return numba.njit(*args, cache=True, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]):
        return args[0]
    return wrap
