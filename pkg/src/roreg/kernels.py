"""Backend selection for the modal-series kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is used. Setting ``ROREG_PURE_PYTHON=1`` forces the fallback.
Every function normalises its inputs to contiguous complex128/float64 arrays
so both backends see identical data.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("ROREG_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def _prep(lams, eig):
    lams = np.ascontiguousarray(np.atleast_1d(lams), dtype=np.complex128)
    eig = np.ascontiguousarray(eig, dtype=np.float64)
    return lams, eig


def modal_sum(lams, eig, gamma, beta, power=1, backend=None):
    """Sum ``gamma[:, m] beta[m, :] / (lam - eig[m])**power`` over modes for each lam.

    Returns an array of shape ``(len(lams), p, m_in)``.
    """
    lams, eig = _prep(lams, eig)
    gamma = np.ascontiguousarray(gamma, dtype=np.complex128)
    beta = np.ascontiguousarray(beta, dtype=np.complex128)
    return _select(backend).modal_sum(lams, eig, gamma, beta, int(power))


def inverse_distance_sum(lams, eig, backend=None):
    lams, eig = _prep(lams, eig)
    return _select(backend).inverse_distance_sum(lams, eig)


def min_distance(lams, eig, backend=None):
    lams, eig = _prep(lams, eig)
    return _select(backend).min_distance(lams, eig)


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
