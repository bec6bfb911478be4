"""Feasible first-order minimization under per-block column orthonormality.

The variable is one tall matrix, or a list of tall matrices each constrained
to orthonormal columns (a product of Stiefel manifolds). Iterates move along
Cayley-transform curves, so every accepted point stays feasible; step sizes
come from Barzilai-Borwein estimates guarded by a nonmonotone backtracking
line search.

Generalized constraints A^T K A = I reduce to this setting by whitening:
with R^T R = K + eps*I, the substitution B = R A turns the constraint into
B^T B = I.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class CurvilinearOptions:
    max_iters: int = 200
    f_tol: float = 1e-6            # stop on relative objective change below this
    grad_tol: float = 1e-12        # stop on tangent gradient norm below this
    initial_step: float = 1e-3
    armijo: float = 1e-4
    memory_decay: float = 0.85     # nonmonotone reference averaging weight
    max_backtracks: int = 30
    feasibility_tol: float = 1e-8  # allowed orthonormality error of the start


@dataclass
class FeasibleResult:
    point: object                  # same structure as the starting point
    value: float
    iterations: int
    converged: bool
    max_orthogonality_error: float
    values: list = field(default_factory=list)


def whiten(K: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Upper-triangular R with R^T R = K + eps*I."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DataError("whiten needs a square matrix")
    if eps < 0:
        raise ConfigError("jitter eps must be nonnegative")
    if np.abs(K - K.T).max() > 1e-8:
        raise DataError("whiten needs a symmetric matrix")
    target = K if eps == 0 else K + eps * np.eye(K.shape[0])
    try:
        lower = np.linalg.cholesky(target)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"cholesky factorization failed at jitter {eps:g}") from exc
    return lower.T.copy()


def whiten_auto(K: np.ndarray):
    """whiten(K, eps) over the jitter ladder 0, 1e-10, 1e-8, 1e-6; returns
    (R, eps) for the first eps that factors. Exhaustion means the data Gram
    is deficient."""
    for eps in JITTER_LADDER:
        try:
            return whiten(K, eps), eps
        except NumericalError:
            continue
    raise NumericalError(
        f"gram matrix is deficient: cholesky failed even at max jitter {JITTER_LADDER[-1]:g}")


def _orth_error(b: np.ndarray) -> float:
    p = b.shape[1]
    return float(np.linalg.norm(b.T @ b - np.eye(p)))


def _reorthonormalize(b: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(b)
    sign = np.sign(np.diag(r))
    sign[sign == 0] = 1.0
    return q * sign


def _curve_factors(b: np.ndarray, g: np.ndarray):
    """Precompute Cayley curve data for one block. Uses the low-rank
    Sherman-Morrison-Woodbury form when 2p < N, else the dense transform."""
    n_, p = b.shape
    if 2 * p < n_:
        u = np.hstack([g, b])
        v = np.hstack([b, -g])
        return ("smw", u, v.T @ u, v.T @ b)
    w = g @ b.T - b @ g.T
    return ("dense", w, None, None)


def _curve_point(factors, b: np.ndarray, tau: float) -> np.ndarray:
    kind, a1, a2, a3 = factors
    if kind == "smw":
        u, vtu, vtb = a1, a2, a3
        small = np.eye(vtu.shape[0]) + (tau / 2.0) * vtu
        return b - tau * (u @ np.linalg.solve(small, vtb))
    w = a1
    lhs = np.eye(b.shape[0]) + (tau / 2.0) * w
    rhs = b - (tau / 2.0) * (w @ b)
    return np.linalg.solve(lhs, rhs)


def _curve_slope(factors, b: np.ndarray, g: np.ndarray) -> float:
    """Directional derivative of the objective along the curve at tau = 0."""
    kind, a1, a2, a3 = factors
    if kind == "smw":
        u, vtb = a1, a3
        return -float(np.sum(g * (u @ vtb)))
    return -float(np.sum(g * (a1 @ b)))


def minimize_feasible(objective, start, options: CurvilinearOptions | None = None) -> FeasibleResult:
    """Minimize ``objective`` keeping orthonormal columns in every block.

    ``objective`` maps the current point (a matrix, or a list of matrices
    matching ``start``) to a pair (value, gradient) with the gradient shaped
    like the point. Returns the best feasible iterate seen, so the final
    value never exceeds the starting one.
    """
    opts = options or CurvilinearOptions()
    single = isinstance(start, np.ndarray)
    blocks = [np.array(start, dtype=np.float64)] if single \
        else [np.array(b, dtype=np.float64) for b in start]
    if not blocks:
        raise DataError("empty starting point")
    for b in blocks:
        if b.ndim != 2 or b.shape[0] < b.shape[1]:
            raise DataError(f"each block must be tall, got shape {b.shape}")
        err = _orth_error(b)
        if err > opts.feasibility_tol:
            raise NumericalError(f"starting point violates orthonormality by {err:.3e}")

    def call(bs):
        value, grad = objective(bs[0] if single else bs)
        grads = [np.asarray(grad, dtype=np.float64)] if single \
            else [np.asarray(g, dtype=np.float64) for g in grad]
        if not np.isfinite(value):
            raise NumericalError("objective value is not finite")
        for g, b in zip(grads, bs):
            if g.shape != b.shape:
                raise DataError(f"gradient shape {g.shape} does not match block shape {b.shape}")
            if not np.isfinite(g).all():
                raise NumericalError("objective gradient is not finite")
        return float(value), grads

    value, grads = call(blocks)
    max_err = max(_orth_error(b) for b in blocks)
    best_value = value
    best_blocks = [b.copy() for b in blocks]
    values = [value]

    tangent_sq = sum(float(np.sum((g - b @ (g.T @ b).T) ** 2)) for b, g in zip(blocks, grads))
    if np.sqrt(tangent_sq) <= opts.grad_tol:
        point = best_blocks[0] if single else best_blocks
        return FeasibleResult(point, best_value, 0, True, max_err, values)

    tau = opts.initial_step
    ref = value
    q_accum = 1.0
    iterations = 0
    converged = False

    for it in range(1, opts.max_iters + 1):
        iterations = it
        factors = [_curve_factors(b, g) for b, g in zip(blocks, grads)]
        d0 = sum(_curve_slope(f, b, g) for f, b, g in zip(factors, blocks, grads))
        if d0 >= 0.0:
            converged = True
            iterations = it - 1
            break

        accepted = False
        for _ in range(opts.max_backtracks):
            try:
                trial = [_curve_point(f, b, tau) for f, b in zip(factors, blocks)]
                t_value, t_grads = call(trial)
            except (np.linalg.LinAlgError, NumericalError):
                tau *= 0.5
                continue
            if t_value <= ref + opts.armijo * tau * d0:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            break

        ss = sum(float(np.sum((tb - b) ** 2)) for tb, b in zip(trial, blocks))
        sy = sum(float(np.sum((tb - b) * (tg - g)))
                 for tb, b, tg, g in zip(trial, blocks, t_grads, grads))
        yy = sum(float(np.sum((tg - g) ** 2)) for tg, g in zip(t_grads, grads))

        prev_value = value
        blocks, grads, value = trial, t_grads, t_value

        step_err = max(_orth_error(b) for b in blocks)
        max_err = max(max_err, step_err)
        if step_err > 1e-11:
            blocks = [_reorthonormalize(b) for b in blocks]
            value, grads = call(blocks)

        if value < best_value:
            best_value = value
            best_blocks = [b.copy() for b in blocks]
        values.append(value)

        if abs(sy) > 0 and yy > 0 and np.isfinite(sy):
            tau = ss / abs(sy) if it % 2 else abs(sy) / yy
            tau = float(np.clip(tau, 1e-20, 1e20))
        else:
            tau = opts.initial_step

        q_next = opts.memory_decay * q_accum + 1.0
        ref = (opts.memory_decay * q_accum * ref + value) / q_next
        q_accum = q_next

        if abs(prev_value - value) <= opts.f_tol * max(1.0, abs(value)):
            converged = True
            break

    point = best_blocks[0] if single else best_blocks
    return FeasibleResult(point, best_value, iterations, converged, max_err, values)
