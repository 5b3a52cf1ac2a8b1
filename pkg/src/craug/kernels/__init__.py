"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import from ``CRAUG_BACKEND`` (``numba`` or
``numpy``). When unset, numba is used if it imports. Both modules expose the
same functions; :func:`get_backend` returns either one explicitly, which the
tests and the benchmark use to compare them.
"""

import importlib
import os

_NAMES = (
    "coo_to_csr",
    "csr_matvec",
    "csr_matmat",
    "p1_local_stiffness",
    "pcg",
    "householder_tridiagonalize",
    "apply_householder",
    "tql",
    "tridiag_inverse_iteration",
)


def numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend(name):
    if name == "numba":
        return importlib.import_module("craug.kernels._numba")
    if name == "numpy":
        return importlib.import_module("craug.kernels._numpy")
    raise ValueError(f"unknown kernel backend {name!r}")


def _default_backend():
    requested = os.environ.get("CRAUG_BACKEND", "").strip().lower()
    if requested in ("numba", "numpy"):
        if requested == "numba" and not numba_available():
            raise ImportError("CRAUG_BACKEND=numba but numba is not installed")
        return requested
    if requested:
        raise ValueError(f"CRAUG_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    return "numba" if numba_available() else "numpy"


BACKEND = _default_backend()
_impl = get_backend(BACKEND)

coo_to_csr = _impl.coo_to_csr
csr_matvec = _impl.csr_matvec
csr_matmat = _impl.csr_matmat
p1_local_stiffness = _impl.p1_local_stiffness
pcg = _impl.pcg
householder_tridiagonalize = _impl.householder_tridiagonalize
apply_householder = _impl.apply_householder
tql = _impl.tql
tridiag_inverse_iteration = _impl.tridiag_inverse_iteration

__all__ = ["BACKEND", "get_backend", "numba_available", *_NAMES]
