"""Small dense linear-algebra kernel: validated float64 arrays, tensor-vector
mode products, CP (rank-R sum of outer products) evaluation, numerical rank,
and a deterministic splittable random stream.

Arrays are plain numpy float64 ndarrays.  The `as_*` constructors are the
single place where shape and finiteness get checked; everything downstream
assumes validated inputs.

Axis convention for order-3 tensors: contracting mode m with a vector removes
axis m-1 and keeps the remaining two axes in ascending mode order, i.e. for
``t`` of shape (d1, d2, d3)::

    mode_product(t, v, 1)[j, k] = sum_i t[i, j, k] * v[i]   -> shape (d2, d3)
    mode_product(t, v, 2)[i, k] = sum_j t[i, j, k] * v[j]   -> shape (d1, d3)
    mode_product(t, v, 3)[i, j] = sum_k t[i, j, k] * v[k]   -> shape (d1, d2)

This is the vector-contraction convention (it differs from conventions where
x_n denotes contraction with a matrix); the test suite pins it against a
brute-force triple loop.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when an argument has the wrong shape or dimensions disagree."""


class NonFiniteError(ValueError):
    """Raised when an array contains NaN or infinity."""


def _validated(x, ndim: int, kind: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{kind} must have {ndim} axes, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise NonFiniteError(f"{kind} contains non-finite entries")
    return arr


def as_vector(x) -> np.ndarray:
    return _validated(x, 1, "vector")


def as_matrix(x) -> np.ndarray:
    return _validated(x, 2, "matrix")


def as_tensor3(x) -> np.ndarray:
    return _validated(x, 3, "order-3 tensor")


def mode_product(t: np.ndarray, v: np.ndarray, mode: int) -> np.ndarray:
    """Contract order-3 tensor ``t`` with vector ``v`` along ``mode`` (1, 2 or 3)."""
    t = as_tensor3(t)
    v = as_vector(v)
    if mode not in (1, 2, 3):
        raise ShapeError(f"mode must be 1, 2 or 3, got {mode}")
    if t.shape[mode - 1] != v.shape[0]:
        raise ShapeError(
            f"mode-{mode} product: tensor dims {t.shape} incompatible with "
            f"vector dim {v.shape[0]}"
        )
    return np.tensordot(t, v, axes=([mode - 1], [0]))


def cp_reconstruct(f1: np.ndarray, f2: np.ndarray, f3: np.ndarray) -> np.ndarray:
    """Materialize the full (d1, d2, d3) tensor sum_r f1[:,r] o f2[:,r] o f3[:,r]."""
    f1, f2, f3 = as_matrix(f1), as_matrix(f2), as_matrix(f3)
    _check_cp_ranks(f1, f2, f3)
    return np.einsum("ir,jr,kr->ijk", f1, f2, f3)


def cp_matrix(f1: np.ndarray, f2: np.ndarray, f3: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Mode-1 contraction of the CP tensor with ``v``, arranged as f3 diag(f1^T v) f2^T.

    Shapes: f1 (d1, R), f2 (d2, R), f3 (d3, R), v (d1,); result (d3, d2).
    Equals ``mode_product(cp_reconstruct(f1, f2, f3), v, 1).T`` without
    materializing the full tensor.
    """
    f1, f2, f3 = as_matrix(f1), as_matrix(f2), as_matrix(f3)
    v = as_vector(v)
    _check_cp_ranks(f1, f2, f3)
    if f1.shape[0] != v.shape[0]:
        raise ShapeError(
            f"cp_matrix: mode-1 factor has {f1.shape[0]} rows, vector dim {v.shape[0]}"
        )
    return (f3 * (f1.T @ v)) @ f2.T


def _check_cp_ranks(f1, f2, f3):
    if not (f1.shape[1] == f2.shape[1] == f3.shape[1]):
        raise ShapeError(
            "CP factors must share the column count, got "
            f"{f1.shape[1]}, {f2.shape[1]}, {f3.shape[1]}"
        )


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    m, v = as_matrix(m), as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: {m.shape} @ ({v.shape[0]},)")
    return m @ v


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    return a @ b


def rank(m: np.ndarray, tol: float = 1e-9) -> int:
    """Numerical rank: number of singular values above tol * sigma_max."""
    m = as_matrix(m)
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


class Rng:
    """Deterministic random stream backed by the Philox 4x32-10 counter generator.

    Equal seeds produce byte-identical draw sequences on every platform.
    ``split(*path)`` derives an independent child stream; the integer path is
    folded into the generator key, so stream layouts never depend on draw
    order.  Normal variates come from the generator's ziggurat sampler.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(int(k) for k in path)
        key = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(key))

    def split(self, *path: int) -> "Rng":
        """Child stream keyed by (seed, self.path + path); independent of draws so far."""
        return Rng(self.seed, self.path + tuple(path))

    def normal(self, shape=()) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"
