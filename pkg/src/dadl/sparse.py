"""Greedy sparse coding over a shared dictionary, class-mask bookkeeping,
and graph-regularized refinement of the in-class code entries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConfigError, DataError, NumericalError

RESIDUAL_STOP = 1e-12
UNIT_NORM_TOL = 1e-6


@dataclass
class SparseCodes:
    """Code matrix with explicit per-column supports.

    ``values`` is K x N with exact zeros off the supports. Supports keep the
    order in which atoms were selected. Class labels (of atoms and samples)
    are optional; the mask operations require them.
    """

    values: np.ndarray
    supports: list = field(default_factory=list)
    class_of_atom: np.ndarray | None = None
    class_of_sample: np.ndarray | None = None

    def in_mask(self) -> np.ndarray:
        """Boolean K x N mask marking entries whose atom class matches the
        sample class."""
        if self.class_of_atom is None or self.class_of_sample is None:
            raise DataError("codes carry no class labels; cannot build the class mask")
        return np.asarray(self.class_of_atom)[:, None] == np.asarray(self.class_of_sample)[None, :]


def _check_dictionary(D: np.ndarray) -> None:
    norms = np.sqrt((D * D).sum(axis=0))
    if np.abs(norms - 1.0).max() > UNIT_NORM_TOL:
        worst = int(np.abs(norms - 1.0).argmax())
        raise DataError(f"dictionary atom {worst} has norm {norms[worst]:.6f}, expected unit norm")


def _omp_column(D: np.ndarray, x: np.ndarray, t0: int):
    """One column of OMP: greedy atom selection with least-squares re-fit on
    the growing support. Correlation ties resolve to the lowest atom index."""
    residual = x
    support: list[int] = []
    coef = np.zeros(0)
    for _ in range(t0):
        if np.linalg.norm(residual) < RESIDUAL_STOP:
            break
        corr = D.T @ residual
        if support:
            corr[support] = 0.0
        pick = int(np.argmax(np.abs(corr)))
        if np.abs(corr[pick]) == 0.0:
            break
        support.append(pick)
        sub = D[:, support]
        coef = np.linalg.lstsq(sub, x, rcond=None)[0]
        residual = x - sub @ coef
    return support, coef


def omp(D: np.ndarray, x: np.ndarray, t0: int) -> np.ndarray:
    """Sparse code of x over unit-norm dictionary D with at most t0 atoms.

    Stops early once the residual norm falls below 1e-12.
    """
    D = np.asarray(D, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if D.ndim != 2:
        raise DataError("dictionary must be a 2-D matrix")
    n, K = D.shape
    if not 1 <= t0 <= min(n, K):
        raise ConfigError(f"sparsity t0={t0} must lie in [1, min(n, K)] = [1, {min(n, K)}]")
    if x.shape != (n,):
        raise DataError(f"signal shape {x.shape} does not match dictionary dimension {n}")
    _check_dictionary(D)
    support, coef = _omp_column(D, x, t0)
    s = np.zeros(K)
    s[support] = coef
    return s


def omp_batch(D: np.ndarray, Z: np.ndarray, t0: int,
              class_of_atom=None, class_of_sample=None) -> SparseCodes:
    """Columnwise OMP over the columns of Z."""
    D = np.asarray(D, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise DataError("Z must be a 2-D matrix of column signals")
    n, K = D.shape
    if Z.shape[0] != n:
        raise DataError(f"signal dimension {Z.shape[0]} does not match dictionary dimension {n}")
    if not 1 <= t0 <= min(n, K):
        raise ConfigError(f"sparsity t0={t0} must lie in [1, min(n, K)] = [1, {min(n, K)}]")
    _check_dictionary(D)
    N = Z.shape[1]
    values = np.zeros((K, N))
    supports = []
    for j in range(N):
        try:
            support, coef = _omp_column(D, Z[:, j], t0)
        except DataError as exc:
            raise DataError(f"column {j}: {exc}") from exc
        values[support, j] = coef
        supports.append(np.array(support, dtype=np.intp))
    atom_cls = None if class_of_atom is None else np.asarray(class_of_atom)
    sample_cls = None if class_of_sample is None else np.asarray(class_of_sample)
    if atom_cls is not None and atom_cls.shape != (K,):
        raise DataError(f"class_of_atom must have length {K}")
    if sample_cls is not None and sample_cls.shape != (N,):
        raise DataError(f"class_of_sample must have length {N}")
    return SparseCodes(values, supports, atom_cls, sample_cls)


def mask_split(codes: SparseCodes):
    """Split codes into (in-class, out-of-class) parts. The two parts sum to
    the original values exactly and have disjoint nonzero patterns."""
    mask = codes.in_mask()
    s_in = np.where(mask, codes.values, 0.0)
    s_out = codes.values - s_in
    return s_in, s_out


def refine_codes(D: np.ndarray, Z: np.ndarray, codes: SparseCodes,
                 laplacian, lam3: float, mu1: float) -> SparseCodes:
    """Re-fit the in-class code entries on their fixed supports.

    Minimizes (1 + mu1) * ||Z - D S||_F^2 + lam3 * tr(S_in L S_in^T) over the
    in-class support entries only; out-of-class entries keep their values,
    entries off support stay zero, and supports never change. The graph term
    couples columns, so all entries are solved as one positive-definite
    sparse linear system.
    """
    if lam3 < 0 or mu1 < 0:
        raise ConfigError("lam3 and mu1 must be nonnegative")
    D = np.asarray(D, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    L = np.asarray(getattr(laplacian, "values", laplacian), dtype=np.float64)
    K, N = codes.values.shape
    if Z.shape != (D.shape[0], N):
        raise DataError(f"Z shape {Z.shape} inconsistent with dictionary {D.shape} and codes {codes.values.shape}")
    if L.shape != (N, N):
        raise DataError(f"laplacian shape {L.shape} does not match the {N} code columns")

    mask = codes.in_mask()
    s_in = np.where(mask, codes.values, 0.0)
    s_out = codes.values - s_in

    atom_idx: list[int] = []
    col_idx: list[int] = []
    by_col: list[list[int]] = [[] for _ in range(N)]
    by_atom: dict[int, list[int]] = {}
    for j, sup in enumerate(codes.supports):
        for i in sup:
            i = int(i)
            if mask[i, j]:
                t = len(atom_idx)
                atom_idx.append(i)
                col_idx.append(j)
                by_col[j].append(t)
                by_atom.setdefault(i, []).append(t)
    n_unknown = len(atom_idx)
    if n_unknown == 0:
        return SparseCodes(codes.values.copy(), [s.copy() for s in codes.supports],
                           codes.class_of_atom, codes.class_of_sample)

    atom_idx_arr = np.array(atom_idx, dtype=np.intp)
    col_idx_arr = np.array(col_idx, dtype=np.intp)
    GD = D.T @ D
    b = (1.0 + mu1) * (D.T @ Z - GD @ s_out)[atom_idx_arr, col_idx_arr]

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for j in range(N):
        ids = np.array(by_col[j], dtype=np.intp)
        if ids.size == 0:
            continue
        ii = atom_idx_arr[ids]
        block = (1.0 + mu1) * GD[np.ix_(ii, ii)]
        r, c = np.meshgrid(ids, ids, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(block.ravel())
    if lam3 > 0:
        for i, ids_list in by_atom.items():
            ids = np.array(ids_list, dtype=np.intp)
            cj = col_idx_arr[ids]
            sub = lam3 * L[np.ix_(cj, cj)]
            nz_r, nz_c = np.nonzero(sub)
            if nz_r.size:
                rows.append(ids[nz_r])
                cols.append(ids[nz_c])
                vals.append(sub[nz_r, nz_c])
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    ).tocsc()

    x = _solve_refinement(A, b)
    new_values = s_out.copy()
    new_values[atom_idx_arr, col_idx_arr] = x
    return SparseCodes(new_values, [s.copy() for s in codes.supports],
                       codes.class_of_atom, codes.class_of_sample)


def _solve_refinement(A, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        x = spsolve(A, b)
    scale = 1.0 + np.abs(b).max()
    if np.isfinite(x).all() and np.abs(A @ x - b).max() <= 1e-8 * scale:
        return x
    warnings.warn("refinement system is singular; adding 1e-8 ridge", RuntimeWarning)
    ridged = (A + 1e-8 * sp.eye(A.shape[0], format="csc")).tocsc()
    x = spsolve(ridged, b)
    if not np.isfinite(x).all():
        raise NumericalError("refinement system unsolvable even with ridge")
    return x
