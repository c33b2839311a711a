"""Backend selection for the hot numeric kernels.

Every kernel that has a compiled variant ships a pure-numpy twin. The
compiled path is used when numba imports cleanly and the environment
variable ``IMRKPM_DISABLE_NUMBA`` is unset (or set to ``0``/``false``).
Callers may still force a backend per call with ``backend="numpy"`` or
``backend="numba"``.
"""

import os
import warnings

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("IMRKPM_DISABLE_NUMBA", "0").strip().lower()
DISABLED_BY_ENV = _flag not in ("", "0", "false", "no", "off")

USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching; identity decorator without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def resolve_backend(backend=None):
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend


def set_threads(n):
    """Set the numba thread count when available; silently ignored otherwise."""
    if HAVE_NUMBA and n and n > 1:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # threading-layer availability notices
            try:
                numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
            except (ValueError, AttributeError):
                pass
