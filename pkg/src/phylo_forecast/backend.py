"""Backend selection for the numeric hot kernels.

Two interchangeable kernel paths exist: a numba ``@njit`` path and a pure
numpy/scipy path.  ``PHYLO_FORECAST_BACKEND`` selects one explicitly
(``"numba"`` or ``"numpy"``); unset, numba is used when it imports.  Both
paths accumulate in the same order, so results agree to the last bit for
the integer-based Jaccard kernel and to BLAS rounding for the rest.
"""

import os

ENV_VAR = "PHYLO_FORECAST_BACKEND"

_numba_checked = False
_numba_ok = False


def numba_available() -> bool:
    """True when numba imports cleanly (checked once, cached)."""
    global _numba_checked, _numba_ok
    if not _numba_checked:
        try:
            import numba  # noqa: F401

            _numba_ok = True
        except ImportError:
            _numba_ok = False
        _numba_checked = True
    return _numba_ok


def active_backend() -> str:
    """Resolve the kernel backend for this call: ``"numba"`` or ``"numpy"``.

    Honours ``PHYLO_FORECAST_BACKEND`` when set; rejects unknown values.
    """
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice == "":
        return "numba" if numba_available() else "numpy"
    if choice not in ("numba", "numpy"):
        raise ValueError(
            f"{ENV_VAR} must be 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numba" and not numba_available():
        raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable")
    return choice
