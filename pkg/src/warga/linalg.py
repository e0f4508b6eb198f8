"""Numeric kernels shared by every other module.

Dense matrices are plain 2-D float64 numpy arrays; sparse matrices are
``scipy.sparse.csr_matrix`` in canonical form (sorted indices, no duplicates,
no explicit zeros).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream; identical seed gives an identical stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_dense(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    a = np.array(values, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(rows if rows is not None else 1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if (rows is not None and a.shape[0] != rows) or (cols is not None and a.shape[1] != cols):
        raise ShapeError(f"expected {rows}x{cols}, got {a.shape[0]}x{a.shape[1]}")
    return a


def as_sparse(m) -> sp.csr_matrix:
    s = sp.csr_matrix(m, dtype=np.float64)
    s.sum_duplicates()
    s.eliminate_zeros()
    s.sort_indices()
    return s


def densify(s: sp.spmatrix) -> np.ndarray:
    return np.asarray(s.toarray(), dtype=np.float64)


def spmm(s: sp.csr_matrix, d: np.ndarray) -> np.ndarray:
    """Sparse-dense product; row-wise accumulation in stored index order."""
    if s.shape[1] != d.shape[0]:
        raise ShapeError(f"spmm: {s.shape[0]}x{s.shape[1]} @ {d.shape[0]}x{d.shape[1]}")
    return np.asarray(s @ d, dtype=np.float64)


@numba.njit(cache=True)
def _gemm_kernel(a, b, out):
    n, inner = a.shape
    m = b.shape[1]
    # i-k-j order walks b and out row-wise; each out[i, j] still sums over k in order from 0.0
    for i in range(n):
        for j in range(m):
            out[i, j] = 0.0
        for k in range(inner):
            aik = a[i, k]
            for j in range(m):
                out[i, j] += aik * b[k, j]


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense product with a fixed left-to-right summation order per output cell.

    Each cell is ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)`` exactly, so results
    are bit-identical to a naive triple loop and independent of the BLAS build.
    The kernel is compiled without fast-math, so no reassociation or FMA.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"gemm: {a.shape} @ {b.shape}")
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    _gemm_kernel(np.ascontiguousarray(a, dtype=np.float64),
                 np.ascontiguousarray(b, dtype=np.float64), out)
    return out


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ShapeError("glorot_init needs rows, cols >= 1")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class AdamState:
    shape: tuple[int, ...]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.m is None:
            self.m = np.zeros(self.shape)
        if self.v is None:
            self.v = np.zeros(self.shape)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """Bias-corrected Adam update of ``param`` in place. Returns ``param``."""
    if param.shape != grad.shape or param.shape != state.shape:
        raise ShapeError(f"adam_step: param {param.shape}, grad {grad.shape}, state {state.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericError("adam_step: non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * (grad * grad)
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param


def finite_diff_gradient(loss_fn: Callable[[np.ndarray], float], param: np.ndarray,
                         h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. every entry of ``param``.

    ``param`` is perturbed in place and restored; ``loss_fn`` must read it.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grad = np.zeros_like(param, dtype=np.float64)
    flat = param.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn(param))
        flat[i] = orig - h
        down = float(loss_fn(param))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor * scale), scale = max(max|a|, max|n|).

    Entries far below the gradient's own scale (exact zeros from ReLU gating or
    cancelling biases) are judged against ``floor * scale`` instead of their own
    magnitude, where central-difference round-off would otherwise dominate.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ShapeError(f"{a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(n))), float(np.max(np.abs(a))), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor * scale)
    return float(np.max(np.abs(a - n) / denom))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def check_finite(a, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")
