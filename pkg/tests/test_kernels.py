import subprocess
import sys

import numpy as np
import pytest

from actsense import _kernels


def _random_inputs(rng, n_obs=200, n_rows=17, r=4):
    vecs = rng.normal(size=(n_obs, r))
    weights = rng.normal(size=n_obs)
    idx = rng.integers(0, n_rows, size=n_obs)
    return vecs, weights, idx.astype(np.int64), n_rows


@pytest.mark.skipif(_kernels.accumulate_outer_numba is None,
                    reason="numba backend not available")
def test_accumulate_backends_agree():
    rng = np.random.default_rng(0)
    vecs, weights, idx, n_rows = _random_inputs(rng)
    p_np, r_np = _kernels.accumulate_outer_numpy(vecs, weights, idx, n_rows, 2.5)
    p_nb, r_nb = _kernels.accumulate_outer_numba(vecs, weights, idx, n_rows, 2.5)
    np.testing.assert_allclose(p_nb, p_np, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(r_nb, r_np, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(_kernels.predict_cells_numba is None,
                    reason="numba backend not available")
def test_predict_backends_agree():
    rng = np.random.default_rng(1)
    H, A, S = rng.random((9, 3)), rng.random((5, 3)), rng.random((7, 3))
    ii = rng.integers(0, 9, size=120).astype(np.int64)
    jj = rng.integers(0, 5, size=120).astype(np.int64)
    kk = rng.integers(0, 7, size=120).astype(np.int64)
    np.testing.assert_allclose(
        _kernels.predict_cells_numba(H, A, S, ii, jj, kk),
        _kernels.predict_cells_numpy(H, A, S, ii, jj, kk),
        rtol=1e-12)


@pytest.mark.skipif(_kernels.quadform_batch_numba is None,
                    reason="numba backend not available")
def test_quadform_backends_agree():
    rng = np.random.default_rng(2)
    mats = rng.normal(size=(40, 4, 4))
    vecs = rng.normal(size=(40, 4))
    np.testing.assert_allclose(
        _kernels.quadform_batch_numba(mats, vecs),
        _kernels.quadform_batch_numpy(mats, vecs),
        rtol=1e-12)


def test_accumulate_empty():
    p, r = _kernels.accumulate_outer_numpy(np.zeros((0, 3)), np.zeros(0),
                                           np.zeros(0, dtype=np.int64), 4, 1.5)
    np.testing.assert_array_equal(p, np.tile(1.5 * np.eye(3), (4, 1, 1)))
    np.testing.assert_array_equal(r, np.zeros((4, 3)))


def test_env_flag_selects_numpy_backend():
    code = "import actsense; print(actsense.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code],
                         env={"PATH": "/usr/bin:/bin",
                              "ACTSENSE_DISABLE_NUMBA": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
