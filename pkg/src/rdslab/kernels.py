"""Backend selection for the hot loops and diffeo-table packing.

The compiled ``_ckernels`` module is used when it was built; otherwise the
numpy fallback in ``_pykernels``. Set RDSLAB_PURE=1 to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "numpy"
_impl = _pykernels
if os.environ.get("RDSLAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

NEWTON_MAX_ITER = 64
NEWTON_TOL = 1e-13


class PackedTable:
    """Diffeo table flattened into arrays the kernels understand.

    mats (F, 2, 2), kvec (F, Kmax, 2), amps (F, Kmax, 2), phases (F, Kmax),
    nmodes (F,), minv (F, 2, 2). Unused mode slots are zero.
    """

    def __init__(self, diffeos):
        F = len(diffeos)
        kmax = max([len(f.modes) for f in diffeos] + [1])
        self.mats = np.zeros((F, 2, 2))
        self.minv = np.zeros((F, 2, 2))
        self.kvec = np.zeros((F, kmax, 2))
        self.amps = np.zeros((F, kmax, 2))
        self.phases = np.zeros((F, kmax))
        self.nmodes = np.zeros(F, dtype=np.int64)
        for i, f in enumerate(diffeos):
            self.mats[i] = f.matrix
            self.minv[i] = np.linalg.inv(f.matrix.astype(float)).round()
            live = [m for m in f.modes if m.a != (0.0, 0.0)]
            self.nmodes[i] = len(live)
            for j, m in enumerate(live):
                self.kvec[i, j] = m.k
                self.amps[i, j] = m.a
                self.phases[i, j] = m.phase

    def _args(self):
        return self.mats, self.kvec, self.amps, self.phases, self.nmodes


def pack(diffeos) -> PackedTable:
    return diffeos if isinstance(diffeos, PackedTable) else PackedTable(diffeos)


def word_products(table, words, points, impl=None):
    t = pack(table)
    words = np.asarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[None, :]
    return (impl or _impl).word_products(*t._args(), words, np.atleast_2d(np.asarray(points, dtype=float)))


def paired_products(table, words, points, impl=None):
    """Word s applied to point s; returns lifted images, products, log-Jacobians."""
    t = pack(table)
    words = np.asarray(words, dtype=np.int64)
    return (impl or _impl).paired_products(*t._args(), words, np.asarray(points, dtype=float).reshape(len(words), 2))


def word_log_norm_trace(table, words, points, vecs, impl=None):
    t = pack(table)
    return (impl or _impl).word_log_norm_trace(*t._args(), np.asarray(words, dtype=np.int64), points, vecs)


def word_preimages(table, words, points, impl=None):
    """Lifted preimages; raises ArithmeticError if any Newton solve fails."""
    t = pack(table)
    q, status = (impl or _impl).word_preimages(
        *t._args(), t.minv, np.asarray(words, dtype=np.int64), np.asarray(points, dtype=float), NEWTON_MAX_ITER, NEWTON_TOL
    )
    if np.any(status):
        raise ArithmeticError(f"Newton inverse failed for {int(np.sum(status))} preimages")
    return q


def ball_masses(points, weights, centers, rho, impl=None):
    if not 0.0 < rho < 0.5:
        raise ValueError("ball radius must lie in (0, 1/2)")
    return (impl or _impl).ball_masses(points, weights, centers, float(rho))
