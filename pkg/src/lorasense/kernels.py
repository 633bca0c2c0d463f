"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over.  ``set_backend`` switches explicitly, which the
tests and the benchmark use to compare the two.
"""
from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

BACKEND = "cython" if _ckernels is not None else "python"


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name):
    global BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    BACKEND = name


def get_backend(name=None):
    return _BACKENDS[name or BACKEND]


def smo_solve(K, y, C, tol, max_passes, seed, max_iter=100_000, backend=None):
    return get_backend(backend).smo_solve(K, y, float(C), float(tol), int(max_passes),
                                          int(seed), int(max_iter))


def lloyd(X, centroids, max_iter, backend=None):
    return get_backend(backend).lloyd(X, centroids, int(max_iter))
