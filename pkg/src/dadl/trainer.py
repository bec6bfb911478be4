"""Joint training of per-domain kernel projections and one shared,
class-partitioned dictionary.

Each domain i keeps its own projection coefficients A_i constrained by
A_i^T K_i A_i = I, where K_i is the domain's kernel Gram. The stacked
coefficient matrix, the shared dictionary D, and the sparse codes S minimize

    ||A~^T K~ - D S||^2 + mu1 ||A~^T K~ - D S_in||^2 + mu2 ||D S_out||^2
    + lam3 tr(S_in L_p S_in^T) + lam1 tr(A~^T K~ L~ K~ A~)
    + lam2 tr(A~^T K~ M~ K~ A~)

with K~, L~ block-diagonal per domain, M~ the cross-domain mean-discrepancy
matrix, and L_p a neighborhood Laplacian rebuilt from the projected data
after every projection update. Optimization alternates three block updates:
feasible curvilinear search on the projections, greedy coding plus
refinement for S, and a closed-form least-squares step for D.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, DataError, NumericalError
from .geometry import KernelSpec, gram, knn_laplacian, mmd_matrix
from .manifold import CurvilinearOptions, minimize_feasible, whiten_auto
from .sparse import SparseCodes, mask_split, omp_batch, refine_codes

MONOTONE_SLACK = 1e-6


@dataclass(frozen=True)
class Hyperparams:
    """Training settings. ``n_dim`` is the projected dimension, ``t0`` the
    per-sample sparsity, ``k_nn`` the neighborhood size for both graph
    Laplacians."""

    lambda1: float = 1.0
    lambda2: float = 50.0
    lambda3: float = 1.0
    mu1: float = 4.0
    mu2: float = 30.0
    t0: int = 4
    atoms_per_class: int = 4
    n_dim: int = 60
    k_nn: int = 5
    kernel: KernelSpec = field(default_factory=KernelSpec)
    outer_iters: int = 12
    inner_iters: int = 30
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "mu1", "mu2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("t0", "atoms_per_class", "n_dim", "k_nn", "inner_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.outer_iters < 0:
            raise ConfigError("outer_iters must be >= 0")

    def validate_for(self, sizes, n_classes: int) -> None:
        """Check the data-dependent constraints for the given per-domain
        sample counts and class count."""
        smallest = min(sizes)
        if self.n_dim > smallest:
            raise ConfigError(
                f"projected dimension n_dim={self.n_dim} exceeds the smallest domain size {smallest}")
        n_atoms = self.atoms_per_class * n_classes
        if n_atoms < self.t0:
            raise ConfigError(f"dictionary size {n_atoms} is smaller than sparsity t0={self.t0}")
        if self.t0 > min(self.n_dim, n_atoms):
            raise ConfigError(
                f"sparsity t0={self.t0} exceeds min(n_dim, n_atoms)={min(self.n_dim, n_atoms)}")
        if self.k_nn >= smallest:
            raise ConfigError(f"k_nn={self.k_nn} must be smaller than every domain size (min {smallest})")


@dataclass
class Dictionary:
    """Shared dictionary with unit-norm atoms grouped by class: all atoms of
    one class occupy a contiguous column range."""

    atoms: np.ndarray
    class_of_atom: np.ndarray

    def atoms_of_class(self, label) -> np.ndarray:
        return self.atoms[:, self.class_of_atom == label]


@dataclass
class BlockMatrices:
    """Training-set matrices assembled once per fit: block-diagonal Gram and
    Laplacian, the cross-domain mean-discrepancy matrix, plus the cached
    quadratic forms K~ L~ K~ and K~ M~ K~. ``lap_proj`` is the Laplacian of
    the projected data and is refreshed during training."""

    gram: np.ndarray
    laplacian: np.ndarray
    mmd: np.ndarray
    labels: np.ndarray
    sizes: tuple
    lap_quad: np.ndarray
    mmd_quad: np.ndarray
    lap_proj: np.ndarray | None = None

    def domain_slice(self, i: int) -> slice:
        off = int(np.sum(self.sizes[:i]))
        return slice(off, off + self.sizes[i])


@dataclass
class TraceEntry:
    outer_iter: int
    stage: str
    before: float
    after: float


@dataclass
class TrainedModel:
    hyperparams: Hyperparams
    domain_names: list
    features: list          # retained training features per domain (n x N_i)
    coeffs: list            # per-domain projection coefficients (N_i x n_dim)
    dictionary: Dictionary
    classes: np.ndarray
    objective_trace: list = field(default_factory=list)
    fit_warnings: list = field(default_factory=list)
    max_feasibility_error: float = 0.0
    normalize_l1: bool = False

    def domain_index(self, domain) -> int:
        if isinstance(domain, (int, np.integer)):
            if not 0 <= domain < len(self.domain_names):
                raise DataError(f"domain index {domain} out of range (model has {len(self.domain_names)})")
            return int(domain)
        try:
            return self.domain_names.index(domain)
        except ValueError:
            raise DataError(f"unknown domain {domain!r}; model knows {self.domain_names}") from None


def assemble_blocks(domains, h: Hyperparams) -> BlockMatrices:
    """Build the block-diagonal Gram and Laplacian, the mean-discrepancy
    matrix, and the concatenated label vector for the given training domains
    (order preserved, domain-major)."""
    if len(domains) < 2:
        raise ConfigError(f"training needs at least 2 domains, got {len(domains)}")
    label_sets = [set(np.unique(d.labels).tolist()) for d in domains]
    if any(s != label_sets[0] for s in label_sets[1:]):
        raise DataError(f"domains must share one class label set, got {sorted(map(sorted, label_sets))}")
    if not label_sets[0]:
        raise DataError("domains contain no labeled samples")

    sizes = tuple(int(d.features.shape[1]) for d in domains)
    N = sum(sizes)
    big_gram = np.zeros((N, N))
    big_lap = np.zeros((N, N))
    offset = 0
    for d in domains:
        n_i = d.features.shape[1]
        sl = slice(offset, offset + n_i)
        big_gram[sl, sl] = gram(d.features, None, h.kernel)
        if n_i > 1:  # a single-sample block has no neighborhood structure
            big_lap[sl, sl] = knn_laplacian(d.features, h.k_nn, h.kernel).values
        offset += n_i
    big_mmd = mmd_matrix(sizes).values
    labels = np.concatenate([np.asarray(d.labels) for d in domains])
    lap_quad = big_gram @ big_lap @ big_gram
    mmd_quad = big_gram @ big_mmd @ big_gram
    return BlockMatrices(big_gram, big_lap, big_mmd, labels, sizes, lap_quad, mmd_quad)


def total_objective(coeffs: np.ndarray, atoms: np.ndarray, codes: SparseCodes,
                    blocks: BlockMatrices, h: Hyperparams):
    """Full training objective and its gradient with respect to the stacked
    projection coefficients. ``blocks.lap_proj`` of None counts the projected
    graph term as zero."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    Z = coeffs.T @ blocks.gram
    S = codes.values
    s_in, s_out = mask_split(codes)
    err = Z - atoms @ S
    err_in = Z - atoms @ s_in
    out_part = atoms @ s_out

    value = float(np.sum(err * err))
    value += h.mu1 * float(np.sum(err_in * err_in))
    value += h.mu2 * float(np.sum(out_part * out_part))
    if h.lambda3 and blocks.lap_proj is not None:
        value += h.lambda3 * float(np.sum(s_in * (s_in @ blocks.lap_proj)))
    value += h.lambda1 * float(np.sum(coeffs * (blocks.lap_quad @ coeffs)))
    value += h.lambda2 * float(np.sum(coeffs * (blocks.mmd_quad @ coeffs)))

    grad = 2.0 * (blocks.gram @ err.T)
    grad += 2.0 * h.mu1 * (blocks.gram @ err_in.T)
    grad += 2.0 * h.lambda1 * (blocks.lap_quad @ coeffs)
    grad += 2.0 * h.lambda2 * (blocks.mmd_quad @ coeffs)

    if not np.isfinite(value) or not np.isfinite(grad).all():
        raise NumericalError("training objective is not finite")
    return value, grad


def update_dictionary(Z: np.ndarray, codes: SparseCodes, h: Hyperparams,
                      prev_atoms: np.ndarray | None = None):
    """Closed-form dictionary step: least-squares minimizer of the three
    reconstruction terms with a 1e-8 ridge, then unit-normalize each atom and
    scale its code row inversely so every D S product is preserved.

    Atoms that come back numerically zero (unused by the codes) fall back to
    their previous value when available. Returns the new dictionary, the
    rescaled codes, and the raw pre-normalization atoms (the exact
    least-squares minimizer, which is what monotonicity statements about
    this step refer to).
    """
    Z = np.asarray(Z, dtype=np.float64)
    S = codes.values
    s_in, s_out = mask_split(codes)
    K = S.shape[0]
    lhs = S @ S.T + h.mu1 * (s_in @ s_in.T) + h.mu2 * (s_out @ s_out.T) + 1e-8 * np.eye(K)
    rhs = Z @ S.T + h.mu1 * (Z @ s_in.T)
    atoms = np.linalg.solve(lhs, rhs.T).T
    if not np.isfinite(atoms).all():
        raise NumericalError("dictionary update produced non-finite atoms")

    norms = np.sqrt((atoms * atoms).sum(axis=0))
    dead = norms < 1e-10
    if dead.any():
        if prev_atoms is not None:
            atoms[:, dead] = prev_atoms[:, dead]
        else:
            for k in np.flatnonzero(dead):
                e = np.zeros(atoms.shape[0])
                e[k % atoms.shape[0]] = 1.0
                atoms[:, k] = e
        norms[dead] = 1.0
    raw_atoms = atoms
    atoms = atoms / norms
    new_values = codes.values * norms[:, None]
    new_codes = SparseCodes(new_values, [s.copy() for s in codes.supports],
                            codes.class_of_atom, codes.class_of_sample)
    return Dictionary(atoms, np.asarray(codes.class_of_atom).copy()), new_codes, raw_atoms


def _kernel_pca_coeffs(K: np.ndarray, n_dim: int) -> np.ndarray:
    """Top eigenvectors of the centered Gram, rescaled so A^T K A = I."""
    N = K.shape[0]
    H = np.eye(N) - np.full((N, N), 1.0 / N)
    Kc = H @ K @ H
    Kc = (Kc + Kc.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(Kc)
    top = eigvecs[:, np.argsort(eigvals, kind="stable")[::-1][:n_dim]]
    # fix eigenvector signs so initialization does not depend on LAPACK conventions
    flip = top[np.abs(top).argmax(axis=0), np.arange(top.shape[1])] < 0
    top[:, flip] *= -1.0
    small = top.T @ K @ top
    small = (small + small.T) / 2.0
    try:
        r = np.linalg.cholesky(small).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"projected dimension {n_dim} exceeds the usable rank of a domain gram") from exc
    return solve_triangular(r, top.T, trans="T", lower=False).T


def _init_dictionary(Z: np.ndarray, labels: np.ndarray, classes: np.ndarray,
                     h: Hyperparams, rng: np.random.Generator) -> Dictionary:
    """Seed atoms from randomly chosen projected training columns, per class."""
    atoms = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if idx.size < h.atoms_per_class:
            raise DataError(
                f"class {c} has {idx.size} training samples, fewer than atoms_per_class={h.atoms_per_class}")
        chosen = []
        for j in rng.permutation(idx):
            col = Z[:, j]
            nrm = np.linalg.norm(col)
            if nrm > 1e-10:
                chosen.append(col / nrm)
            if len(chosen) == h.atoms_per_class:
                break
        if len(chosen) < h.atoms_per_class:
            raise NumericalError(f"class {c} has too many near-zero projected samples to seed atoms")
        atoms.extend(chosen)
    atom_classes = np.repeat(classes, h.atoms_per_class)
    return Dictionary(np.column_stack(atoms), atom_classes)


def _projected_laplacian(Z: np.ndarray, k: int) -> np.ndarray:
    """Neighborhood Laplacian of the projected columns. Projected coordinates
    are signed, so similarity uses a gaussian kernel with the median pairwise
    distance as bandwidth."""
    sq = (Z * Z).sum(axis=0)
    d2 = np.clip(sq[:, None] + sq[None, :] - 2.0 * (Z.T @ Z), 0.0, None)
    positive = d2[d2 > 0]
    bandwidth = float(np.sqrt(np.median(positive) / 2.0)) if positive.size else 1.0
    if bandwidth <= 0:
        bandwidth = 1.0
    return knn_laplacian(Z, k, KernelSpec("gaussian", bandwidth)).values


def _project(coeff_list, blocks: BlockMatrices) -> np.ndarray:
    parts = [coeff_list[i].T @ blocks.gram[blocks.domain_slice(i), blocks.domain_slice(i)]
             for i in range(len(blocks.sizes))]
    return np.hstack(parts)


def _stack(coeff_list) -> np.ndarray:
    return np.vstack(coeff_list)


def _feasibility_error(coeff_list, blocks: BlockMatrices) -> float:
    worst = 0.0
    for i, a in enumerate(coeff_list):
        sl = blocks.domain_slice(i)
        gap = a.T @ blocks.gram[sl, sl] @ a - np.eye(a.shape[1])
        worst = max(worst, float(np.linalg.norm(gap)))
    return worst


def _projection_update(coeff_list, whiteners, atoms, codes, blocks, h):
    """One feasible curvilinear solve over all projection blocks jointly."""
    sizes = blocks.sizes
    start = [whiteners[i] @ coeff_list[i] for i in range(len(sizes))]

    def objective(bs):
        a_list = [solve_triangular(whiteners[i], bs[i], lower=False) for i in range(len(sizes))]
        value, grad = total_objective(_stack(a_list), atoms, codes, blocks, h)
        grads = []
        offset = 0
        for i, n_i in enumerate(sizes):
            g = grad[offset:offset + n_i]
            grads.append(solve_triangular(whiteners[i], g, trans="T", lower=False))
            offset += n_i
        return value, grads

    result = minimize_feasible(objective, start,
                               CurvilinearOptions(max_iters=h.inner_iters))
    new_coeffs = [solve_triangular(whiteners[i], result.point[i], lower=False)
                  for i in range(len(sizes))]
    return new_coeffs, result.max_orthogonality_error


def fit(domains, h: Hyperparams) -> TrainedModel:
    """Train projections, dictionary, and codes on two or more labeled
    domains (sources first, target last, by convention of the callers).

    The objective trace chains six stages per outer iteration (each entry's
    ``before`` is the previous entry's ``after``): the three descent steps
    ``projection``, ``sparse_codes`` (coefficient refinement on fixed
    supports), and ``dictionary`` (least squares, measured on the raw atoms
    before unit normalization), interleaved with three bookkeeping stages
    ``graph_rebuild``, ``support_refresh``, and ``atom_rescale`` that
    re-derive quantities rather than descend on them, so they may move the
    objective either way. A relative increase beyond 1e-6 on a descent
    stage, or across a whole outer iteration, is kept as a warning on the
    model rather than raised. The whole run is deterministic for fixed
    inputs and seed.
    """
    blocks = assemble_blocks(domains, h)
    classes = np.unique(blocks.labels)
    h.validate_for(blocks.sizes, classes.size)

    whiteners = []
    for i in range(len(domains)):
        sl = blocks.domain_slice(i)
        r, _eps = whiten_auto(blocks.gram[sl, sl])
        whiteners.append(r)

    coeff_list = []
    for i in range(len(domains)):
        sl = blocks.domain_slice(i)
        coeff_list.append(_kernel_pca_coeffs(blocks.gram[sl, sl], h.n_dim))

    rng = np.random.default_rng(h.seed)
    Z = _project(coeff_list, blocks)
    dictionary = _init_dictionary(Z, blocks.labels, classes, h, rng)
    blocks.lap_proj = _projected_laplacian(Z, h.k_nn)
    codes = omp_batch(dictionary.atoms, Z, h.t0, dictionary.class_of_atom, blocks.labels)
    codes = refine_codes(dictionary.atoms, Z, codes, blocks.lap_proj, h.lambda3, h.mu1)

    trace: list[TraceEntry] = []
    warnings_log: list[str] = []
    max_feas = _feasibility_error(coeff_list, blocks)

    def record(outer, stage, before, after, warn=True):
        trace.append(TraceEntry(outer, stage, before, after))
        if warn and after > before + MONOTONE_SLACK * max(1.0, abs(before)):
            warnings_log.append(
                f"outer {outer}: {stage} update increased the objective from {before!r} to {after!r}")

    def current():
        return total_objective(_stack(coeff_list), dictionary.atoms, codes, blocks, h)[0]

    for outer in range(h.outer_iters):
        start = current()
        coeff_list, solve_err = _projection_update(
            coeff_list, whiteners, dictionary.atoms, codes, blocks, h)
        max_feas = max(max_feas, solve_err, _feasibility_error(coeff_list, blocks))
        value = current()
        record(outer, "projection", start, value)

        Z = _project(coeff_list, blocks)
        blocks.lap_proj = _projected_laplacian(Z, h.k_nn)
        before, value = value, current()
        record(outer, "graph_rebuild", before, value, warn=False)

        codes = omp_batch(dictionary.atoms, Z, h.t0, dictionary.class_of_atom, blocks.labels)
        before, value = value, current()
        record(outer, "support_refresh", before, value, warn=False)

        codes = refine_codes(dictionary.atoms, Z, codes, blocks.lap_proj, h.lambda3, h.mu1)
        before, value = value, current()
        record(outer, "sparse_codes", before, value)

        old_codes = codes
        dictionary, codes, raw_atoms = update_dictionary(Z, codes, h, prev_atoms=dictionary.atoms)
        before = value
        value = total_objective(_stack(coeff_list), raw_atoms, old_codes, blocks, h)[0]
        record(outer, "dictionary", before, value)

        before, value = value, current()
        record(outer, "atom_rescale", before, value, warn=False)

        if value > start + MONOTONE_SLACK * max(1.0, abs(start)):
            warnings_log.append(
                f"outer {outer}: objective rose across the iteration from {start!r} to {value!r}")

    return TrainedModel(
        hyperparams=h,
        domain_names=[d.domain_name for d in domains],
        features=[np.array(d.features, dtype=np.float64) for d in domains],
        coeffs=coeff_list,
        dictionary=dictionary,
        classes=classes,
        objective_trace=trace,
        fit_warnings=warnings_log,
        max_feasibility_error=max_feas,
    )
