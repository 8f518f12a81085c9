import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from buffgraph import kernels

compiled = pytest.mark.skipif("cython" not in kernels.available_backends(),
                              reason="compiled extension not built")


def random_csr(rng, n_rows, n_cols, density):
    mat = sp.random(n_rows, n_cols, density=density, format="csr", random_state=rng)
    mat.sort_indices()
    return mat


@pytest.mark.parametrize("shape", [(1, 1, 1), (40, 40, 7), (100, 60, 1), (0, 5, 3), (30, 30, 0)])
def test_spmm_matches_dense(backend, rng, shape):
    n_rows, n_cols, width = shape
    mat = random_csr(rng, n_rows, n_cols, 0.2)
    x = rng.standard_normal((n_cols, width))
    out = kernels.spmm(mat.indptr, mat.indices, mat.data, x, n_rows)
    assert out.shape == (n_rows, width)
    np.testing.assert_allclose(out, mat.toarray() @ x, rtol=0, atol=1e-12)


def test_spmm_empty_rows(backend):
    indptr = np.array([0, 0, 2, 2])
    out = kernels.spmm(indptr, [0, 2], [2.0, -1.0], np.arange(6.0).reshape(3, 2), 3)
    np.testing.assert_array_equal(out, [[0, 0], [-4, -3], [0, 0]])


def test_edge_l1(backend, rng):
    z = rng.standard_normal((20, 5))
    src, dst = rng.integers(0, 20, 40), rng.integers(0, 20, 40)
    expected = [np.mean(np.abs(z[u] - z[v])) for u, v in zip(src, dst)]
    np.testing.assert_allclose(kernels.edge_l1(z, src, dst), expected, rtol=0, atol=1e-14)


def test_edge_l1_backward_matches_loop(backend, rng):
    z = np.round(rng.standard_normal((15, 4)), 1)  # rounding creates exact ties
    src, dst = rng.integers(0, 15, 30), rng.integers(0, 15, 30)
    coef = rng.standard_normal(30)
    expected = np.zeros_like(z)
    for k, (u, v) in enumerate(zip(src, dst)):
        step = np.sign(z[u] - z[v]) * coef[k] / 4
        expected[u] += step
        expected[v] -= step
    np.testing.assert_allclose(kernels.edge_l1_backward(z, src, dst, coef), expected,
                               rtol=0, atol=1e-14)


@compiled
def test_backends_agree(rng):
    mat = random_csr(rng, 500, 500, 0.02)
    x = rng.standard_normal((500, 33))
    z = rng.standard_normal((500, 17))
    src, dst = rng.integers(0, 500, 2000), rng.integers(0, 500, 2000)
    coef = rng.standard_normal(2000)
    py, cy = kernels.backend("python"), kernels.backend("cython")
    args = (mat.indptr.astype(np.int64), mat.indices.astype(np.int64), mat.data, x, 500, 0)
    np.testing.assert_allclose(cy.spmm(*args), py.spmm(*args), rtol=0, atol=1e-12)
    np.testing.assert_allclose(cy.edge_l1(z, src, dst, 0), py.edge_l1(z, src, dst, 0), rtol=0, atol=1e-14)
    np.testing.assert_allclose(cy.edge_l1_backward(z, src, dst, coef),
                               py.edge_l1_backward(z, src, dst, coef), rtol=0, atol=1e-12)


@compiled
def test_threaded_spmm_is_bitwise_serial(rng):
    # each output row is owned by one thread, so threading cannot reorder sums
    mat = random_csr(rng, 800, 800, 0.02)
    x = rng.standard_normal((800, 16))
    serial = kernels.backend("cython").spmm(mat.indptr.astype(np.int64), mat.indices.astype(np.int64),
                                            mat.data, x, 800, 0)
    threaded = kernels.backend("cython").spmm(mat.indptr.astype(np.int64), mat.indices.astype(np.int64),
                                              mat.data, x, 800, 4)
    np.testing.assert_array_equal(serial, threaded)


def test_set_backend_round_trip():
    previous = kernels.set_backend("python")
    try:
        assert kernels.get_backend() == "python"
    finally:
        kernels.set_backend(previous)
    with pytest.raises(ValueError, match="unknown backend"):
        kernels.set_backend("fortran")


@pytest.mark.parametrize("raw, expected", [("", 0), ("0", 0), ("3", 3), ("-2", 0)])
def test_num_threads(monkeypatch, raw, expected):
    monkeypatch.setenv("BUFFGRAPH_THREADS", raw)
    assert kernels.num_threads() == expected


def test_num_threads_invalid(monkeypatch):
    monkeypatch.setenv("BUFFGRAPH_THREADS", "many")
    with pytest.raises(ValueError, match="integer"):
        kernels.num_threads()


def _backend_in_subprocess(value):
    env = dict(os.environ, BUFFGRAPH_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "from buffgraph import kernels; print(kernels.get_backend())"],
                          env=env, capture_output=True, text=True)


def test_env_forces_python():
    proc = _backend_in_subprocess("python")
    assert proc.returncode == 0 and proc.stdout.strip() == "python"


def test_env_unknown_backend():
    proc = _backend_in_subprocess("fortran")
    assert proc.returncode != 0 and "not available" in proc.stderr
