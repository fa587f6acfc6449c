"""Kernel backend selection.

Hot loops are written once as plain Python over numpy arrays and compiled with
numba when available. Set ``SREQMC_BACKEND=python`` before import to run the
same kernels interpreted (slow, but useful for debugging and parity checks).
"""
import os

BACKEND = os.environ.get("SREQMC_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "python"):
    raise ImportError(f"SREQMC_BACKEND must be 'numba' or 'python', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "python"

if BACKEND == "numba":

    def jit(func):
        return numba.njit(cache=True, nogil=True)(func)

else:

    def jit(func):
        return func


__all__ = ["BACKEND", "jit"]
