"""Kernel backend selection.

The accumulation kernels exist twice with one contract: a numba-compiled
version and a pure-numpy fallback.  XRNPE_BACKEND picks one:

  auto   use numba when importable, else numpy (default)
  numba  require numba, fail loudly if missing
  numpy  force the fallback

Both backends produce bit-identical results; the benchmark under
benchmarks/ compares their throughput.  XRNPE_THREADS caps numba threads
(and is the CLI --threads default); the numpy path is single-threaded.
"""

import os

from xrnpe import _kernels_numpy

_numba_mod = None
_numba_error = None


def _load_numba_kernels():
    global _numba_mod, _numba_error
    if _numba_mod is None and _numba_error is None:
        try:
            from xrnpe import _kernels_numba
            _numba_mod = _kernels_numba
        except ImportError as exc:  # pragma: no cover - depends on env
            _numba_error = exc
    return _numba_mod


def kernels():
    """Return the active kernel module per XRNPE_BACKEND."""
    choice = os.environ.get("XRNPE_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        mod = _load_numba_kernels()
        return mod if mod is not None else _kernels_numpy
    if choice == "numpy":
        return _kernels_numpy
    if choice == "numba":
        mod = _load_numba_kernels()
        if mod is None:
            raise ImportError(
                f"XRNPE_BACKEND=numba but numba is unavailable: {_numba_error}"
            )
        return mod
    raise ValueError(f"unknown XRNPE_BACKEND value: {choice!r}")


def backend_name():
    mod = kernels()
    return "numba" if mod.__name__.endswith("_numba") else "numpy"


def set_thread_count(threads):
    """Cap numba worker threads; no-op on the numpy backend."""
    if threads is None:
        threads = default_thread_count()
    threads = max(int(threads), 1)
    if backend_name() == "numba":
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return threads


def default_thread_count():
    env = os.environ.get("XRNPE_THREADS", "").strip()
    if env:
        return max(int(env), 1)
    return os.cpu_count() or 1
