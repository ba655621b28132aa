"""Hot numeric inner loops, JIT-compiled with numba when available.

Everything here exists twice: a pure-numpy version (``*_numpy``) and a
loop version compiled with ``@njit`` (``*_numba``).  The module-level
names (``accumulate_outer``, ``predict_cells``, ``quadform_batch``)
point at the selected backend.  Selection happens once at import time:
numba is used when importable unless the environment variable
``ACTSENSE_DISABLE_NUMBA`` is set to a non-empty value other than "0".
Both backends compute identical math; only speed differs.
"""

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("ACTSENSE_DISABLE_NUMBA", "0") not in ("", "0")


# ---------------------------------------------------------------------------
# numpy backend


def accumulate_outer_numpy(vecs, weights, idx, n_rows, lam):
    """Ridge normal-equation pieces, grouped by target row.

    For each row g: precision[g] = lam*I + sum_{n: idx[n]==g} vecs[n] vecs[n]^T
    and rhs[g] = sum_{n: idx[n]==g} weights[n] * vecs[n].
    """
    r = vecs.shape[1]
    precision = np.tile(lam * np.eye(r), (n_rows, 1, 1))
    rhs = np.zeros((n_rows, r))
    if len(idx):
        np.add.at(precision, idx, vecs[:, :, None] * vecs[:, None, :])
        np.add.at(rhs, idx, weights[:, None] * vecs)
    return precision, rhs


def predict_cells_numpy(H, A, S, ii, jj, kk):
    """Triple products <H[i], A[j], S[k]> for each listed cell."""
    return np.einsum("nr,nr,nr->n", H[ii], A[jj], S[kk])


def quadform_batch_numpy(mats, vecs):
    """vecs[n]^T mats[n] vecs[n] for each n."""
    return np.einsum("nr,nrs,ns->n", vecs, mats, vecs)


# ---------------------------------------------------------------------------
# loop bodies shared with the numba backend


def _accumulate_outer_loops(vecs, weights, idx, n_rows, lam):
    n, r = vecs.shape
    precision = np.zeros((n_rows, r, r))
    rhs = np.zeros((n_rows, r))
    for g in range(n_rows):
        for d in range(r):
            precision[g, d, d] = lam
    for m in range(n):
        g = idx[m]
        w = weights[m]
        for a in range(r):
            va = vecs[m, a]
            rhs[g, a] += w * va
            for b in range(r):
                precision[g, a, b] += va * vecs[m, b]
    return precision, rhs


def _predict_cells_loops(H, A, S, ii, jj, kk):
    n = ii.shape[0]
    r = H.shape[1]
    out = np.empty(n)
    for m in range(n):
        acc = 0.0
        for d in range(r):
            acc += H[ii[m], d] * A[jj[m], d] * S[kk[m], d]
        out[m] = acc
    return out


def _quadform_batch_loops(mats, vecs):
    n, r = vecs.shape
    out = np.empty(n)
    for m in range(n):
        acc = 0.0
        for a in range(r):
            row = 0.0
            for b in range(r):
                row += mats[m, a, b] * vecs[m, b]
            acc += vecs[m, a] * row
        out[m] = acc
    return out


# ---------------------------------------------------------------------------
# backend selection

accumulate_outer_numba = None
predict_cells_numba = None
quadform_batch_numba = None

if not _numba_disabled():
    try:
        from numba import njit
    except ImportError:
        njit = None
    if njit is not None:
        accumulate_outer_numba = njit(cache=True)(_accumulate_outer_loops)
        predict_cells_numba = njit(cache=True)(_predict_cells_loops)
        quadform_batch_numba = njit(cache=True)(_quadform_batch_loops)

if accumulate_outer_numba is not None:
    BACKEND = "numba"
    accumulate_outer = accumulate_outer_numba
    predict_cells = predict_cells_numba
    quadform_batch = quadform_batch_numba
else:
    BACKEND = "numpy"
    accumulate_outer = accumulate_outer_numpy
    predict_cells = predict_cells_numpy
    quadform_batch = quadform_batch_numpy
