"""Hot loops behind a backend switch.

Two interchangeable backends provide ``spmm``, ``edge_l1`` and
``edge_l1_backward``:

``cython``
    The compiled ``buffgraph._kernels`` extension.
``python``
    numpy/scipy vectorised code; always available.

The compiled backend is chosen at import when it was built. Set
``BUFFGRAPH_BACKEND=python`` to force the fallback, and
``BUFFGRAPH_THREADS`` to let the compiled row loops use OpenMP threads
(unset or 0 keeps everything single-threaded).
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp

__all__ = [
    "available_backends",
    "get_backend",
    "set_backend",
    "num_threads",
    "spmm",
    "edge_l1",
    "edge_l1_backward",
]


def num_threads() -> int:
    """Thread cap read from ``BUFFGRAPH_THREADS``; 0 means single-threaded."""
    raw = os.environ.get("BUFFGRAPH_THREADS", "").strip()
    if not raw:
        return 0
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"BUFFGRAPH_THREADS must be an integer, got {raw!r}") from exc
    return max(value, 0)


def _py_spmm(indptr, indices, data, x, n_rows, num_threads=0):
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, x.shape[0]), copy=False)
    return np.ascontiguousarray(mat @ x)


def _py_edge_l1(z, src, dst, num_threads=0):
    if z.shape[1] == 0:
        return np.zeros(len(src))
    return np.abs(z[src] - z[dst]).sum(axis=1) / z.shape[1]


def _py_edge_l1_backward(z, src, dst, coef):
    grad = np.zeros_like(z)
    if z.shape[1] == 0 or len(src) == 0:
        return grad
    step = np.sign(z[src] - z[dst]) * (coef / z.shape[1])[:, None]
    np.add.at(grad, src, step)
    np.add.at(grad, dst, -step)
    return grad


_BACKENDS = {
    "python": SimpleNamespace(
        name="python", spmm=_py_spmm, edge_l1=_py_edge_l1, edge_l1_backward=_py_edge_l1_backward
    )
}

try:
    from buffgraph import _kernels as _ext
except ImportError:  # extension not built
    _ext = None
else:
    _BACKENDS["cython"] = SimpleNamespace(
        name="cython",
        spmm=_ext.spmm,
        edge_l1=_ext.edge_l1,
        edge_l1_backward=_ext.edge_l1_backward,
    )


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _default_backend() -> str:
    requested = os.environ.get("BUFFGRAPH_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(
                f"BUFFGRAPH_BACKEND={requested!r} is not available; have {available_backends()}"
            )
        return requested
    return "cython" if "cython" in _BACKENDS else "python"


_active = _BACKENDS[_default_backend()]


def get_backend() -> str:
    return _active.name


def set_backend(name: str) -> str:
    """Switch the active backend and return the previous one's name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    previous = _active.name
    _active = _BACKENDS[name]
    return previous


def backend(name: str) -> SimpleNamespace:
    """Direct handle on one backend, bypassing the active selection."""
    return _BACKENDS[name]


def _index(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def spmm(indptr, indices, data, x, n_rows: int) -> np.ndarray:
    """Sparse (CSR) times dense product with the active backend."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _active.spmm(
        _index(indptr), _index(indices), np.ascontiguousarray(data, dtype=np.float64),
        x, int(n_rows), num_threads(),
    )


def edge_l1(z, src, dst) -> np.ndarray:
    """Per-edge mean absolute difference of endpoint rows."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    return _active.edge_l1(z, _index(src), _index(dst), num_threads())


def edge_l1_backward(z, src, dst, coef) -> np.ndarray:
    """Gradient of ``sum(coef * edge_l1(z, src, dst))`` with respect to ``z``."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    return _active.edge_l1_backward(
        z, _index(src), _index(dst), np.ascontiguousarray(coef, dtype=np.float64)
    )
