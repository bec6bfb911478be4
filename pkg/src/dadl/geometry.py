"""Kernels, Gram matrices, neighborhood Laplacians, and the mean-discrepancy
matrix used to align domains.

Data matrices follow the columns-are-samples convention throughout: an
``n x N`` array holds N samples with n features each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateGraphError

KERNEL_KINDS = ("histogram_intersection", "linear", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice plus its parameters.

    ``bandwidth`` is required (and only meaningful) for the gaussian kernel.
    """

    kind: str = "histogram_intersection"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise DataError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and (self.bandwidth is None or not self.bandwidth > 0):
            raise DataError("gaussian kernel needs a bandwidth > 0")


@dataclass(frozen=True)
class GraphLaplacian:
    """Symmetric normalized Laplacian of a kNN graph."""

    values: np.ndarray
    neighbor_count: int


@dataclass(frozen=True)
class MmdMatrix:
    """Coefficient matrix M such that tr(Z M Z^T) sums the squared distances
    between per-domain column means of Z, over all domain pairs."""

    values: np.ndarray
    block_sizes: tuple[int, ...]


def kernel_value(x: np.ndarray, y: np.ndarray, spec: KernelSpec) -> float:
    """Scalar kernel k(x, y) between two feature vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise DataError(f"kernel_value needs two equal-length vectors, got shapes {x.shape} and {y.shape}")
    if spec.kind == "histogram_intersection":
        if (x < 0).any() or (y < 0).any():
            raise DataError("histogram intersection kernel requires nonnegative entries")
        return float(np.minimum(x, y).sum())
    if spec.kind == "linear":
        return float(x @ y)
    d2 = float(((x - y) ** 2).sum())
    return float(np.exp(-d2 / (2.0 * spec.bandwidth ** 2)))


def _as_samples(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError(f"expected a features-by-samples matrix, got ndim={X.ndim}")
    return X


def _hik_gram(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    n, N = X.shape
    M = Y.shape[1]
    out = np.empty((N, M))
    # chunk so the n x chunk x M intermediate stays around 32 MB
    chunk = max(1, int(4_000_000 / max(1, n * M)))
    for start in range(0, N, chunk):
        stop = min(start + chunk, N)
        out[start:stop] = np.minimum(X[:, start:stop, None], Y[:, None, :]).sum(axis=0)
    return out


def gram(X, Y, spec: KernelSpec) -> np.ndarray:
    """Pairwise kernel matrix between the columns of X and the columns of Y.

    Pass ``Y=None`` (or Y identical to X) for the symmetric Gram of X; that
    path symmetrizes the result so factorizations downstream see an exactly
    symmetric matrix. A 1-D argument is treated as a single column.
    """
    X = _as_samples(X)
    symmetric = Y is None or Y is X
    Y = X if symmetric else _as_samples(Y)
    if X.shape[0] != Y.shape[0]:
        raise DataError(f"feature dimensions disagree: {X.shape[0]} vs {Y.shape[0]}")

    if spec.kind == "histogram_intersection":
        if (X < 0).any() or (not symmetric and (Y < 0).any()):
            raise DataError("histogram intersection kernel requires nonnegative features")
        G = _hik_gram(X, Y)
    elif spec.kind == "linear":
        G = X.T @ Y
    else:
        xx = (X * X).sum(axis=0)
        yy = xx if symmetric else (Y * Y).sum(axis=0)
        d2 = np.clip(xx[:, None] + yy[None, :] - 2.0 * (X.T @ Y), 0.0, None)
        G = np.exp(-d2 / (2.0 * spec.bandwidth ** 2))

    if symmetric:
        G = (G + G.T) / 2.0
    return G


def knn_laplacian(X, k: int, spec: KernelSpec) -> GraphLaplacian:
    """Symmetric normalized Laplacian L = I - Deg^{-1/2} W Deg^{-1/2} of the
    kNN graph over the columns of X.

    Neighbors are selected by kernel-induced distance; an edge exists when
    either endpoint selects the other, and carries the kernel similarity as
    its weight. Distance ties resolve toward lower sample indices.
    """
    X = _as_samples(X)
    N = X.shape[1]
    if not 1 <= k < N:
        raise DataError(f"neighbor count k={k} must satisfy 1 <= k < N={N}")
    G = gram(X, None, spec)
    diag = np.diag(G)
    d2 = np.clip(diag[:, None] + diag[None, :] - 2.0 * G, 0.0, None)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=0, kind="stable")
    picked = np.zeros((N, N), dtype=bool)
    cols = np.repeat(np.arange(N)[None, :], k, axis=0)
    picked[order[:k, :], cols] = True
    edges = picked | picked.T

    W = np.where(edges, G, 0.0)
    np.fill_diagonal(W, 0.0)
    if (W[edges & ~np.eye(N, dtype=bool)] < 0).any():
        raise DegenerateGraphError("negative edge weight; use a kernel that is nonnegative on this data")
    deg = W.sum(axis=1)
    if (deg <= 0).any():
        bad = int(np.flatnonzero(deg <= 0)[0])
        raise DegenerateGraphError(f"vertex {bad} has zero degree; the neighborhood graph is degenerate")
    dinv = 1.0 / np.sqrt(deg)
    L = np.eye(N) - (dinv[:, None] * W) * dinv[None, :]
    L = (L + L.T) / 2.0
    return GraphLaplacian(L, k)


def mmd_matrix(block_sizes) -> MmdMatrix:
    """Mean-discrepancy coefficient matrix for domain blocks of the given
    sizes, laid out consecutively.

    For two blocks the entries are 1/N1^2 inside the first block, 1/N2^2
    inside the second, and -1/(N1 N2) across; with more blocks the pairwise
    matrices are summed. The result is positive semidefinite with zero row
    sums and rank at most (number of blocks - 1).
    """
    sizes = [int(s) for s in block_sizes]
    if not sizes:
        raise DataError("mmd_matrix needs at least one block")
    if any(s < 1 for s in sizes):
        raise DataError(f"all block sizes must be >= 1, got {sizes}")
    N = sum(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    M = np.zeros((N, N))
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            v = np.zeros(N)
            v[offsets[a]:offsets[a + 1]] = 1.0 / sizes[a]
            v[offsets[b]:offsets[b + 1]] = -1.0 / sizes[b]
            M += np.outer(v, v)
    return MmdMatrix(M, tuple(sizes))
