"""Complex linear-algebra kernels: multi-RHS conjugate gradients, Rademacher
probing for inverse-diagonal estimation, and the matrix-free normal operator
used inside the covariance-free E-step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ConvolutionDictionary


@dataclass
class LinearOperator:
    """Matrix-free linear map with its conjugate transpose.

    `apply` and `adjoint_apply` accept a vector of conforming length or a
    matrix whose columns are treated independently.
    """

    shape: tuple[int, int]
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint_apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)


@dataclass
class CgReport:
    """Per-right-hand-side convergence record of a CG solve."""

    iterations: np.ndarray
    final_residual_norm: np.ndarray
    converged: np.ndarray

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def cg_solve(
    operator: LinearOperator,
    rhs: np.ndarray,
    tol: float = 1e-6,
    max_iter: int | None = None,
    jacobi: np.ndarray | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, CgReport]:
    """Solve `operator @ w = rhs` for a Hermitian positive-definite operator.

    Columns of `rhs` are solved as independent systems sharing the same
    operator; the recursion is vectorized but each column carries its own
    step sizes, so results are identical to solving columns one at a time.

    Parameters
    ----------
    operator : LinearOperator
        Hermitian positive-definite map (precondition; not checked).
    rhs : array, (n,) or (n, j)
        Right-hand sides.
    tol : float
        Relative residual target per column, ||C w - b|| <= tol * ||b||.
    max_iter : int, optional
        Defaults to the operator's column dimension (the exact-arithmetic
        termination bound).
    jacobi : array, optional
        Positive diagonal of the operator; enables the diagonal
        preconditioner when supplied.
    x0 : array, optional
        Warm-start iterate, same shape as `rhs`.
    """
    n_rows, n_cols = operator.shape
    if n_rows != n_cols:
        raise ValueError("cg_solve requires a square operator")
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(rhs)
    single = b.ndim == 1
    if single:
        b = b[:, None]
    if b.shape[0] != n_cols:
        raise ValueError(f"rhs length {b.shape[0]} does not match operator {n_cols}")
    if not np.all(np.isfinite(b)):
        raise ValueError("rhs contains non-finite values")
    if max_iter is None:
        max_iter = n_cols
    inv_diag = None
    if jacobi is not None:
        jacobi = np.asarray(jacobi, dtype=float)
        if jacobi.shape != (n_cols,) or np.any(jacobi <= 0):
            raise ValueError("jacobi preconditioner must be a positive diagonal")
        inv_diag = 1.0 / jacobi

    # Work arrays are kept Fortran-ordered so every reduction runs over a
    # contiguous column; each column's arithmetic is then bit-identical to
    # a standalone single-column solve, whatever the batch width.
    def col_norms(a):
        return np.sqrt(np.sum(np.abs(a) ** 2, axis=0))

    def col_dots(a, c):
        return np.real(np.sum(np.conj(a) * c, axis=0))

    b = np.asfortranarray(b)
    b_norm = col_norms(b)
    targets = tol * b_norm
    n_rhs = b.shape[1]

    if x0 is None:
        x = np.zeros(b.shape, dtype=complex, order="F")
        r = np.asfortranarray(b.astype(complex))
    else:
        x = np.array(x0, dtype=complex)
        if x.ndim == 1:
            x = x[:, None]
        x = np.asfortranarray(x)
        r = np.asfortranarray(b - operator.apply(x))

    z = r * inv_diag[:, None] if inv_diag is not None else r
    p = z.copy(order="F")
    rz = col_dots(r, z)

    res = col_norms(r)
    active = res > targets
    iters = np.zeros(n_rhs, dtype=int)

    for _ in range(max_iter):
        if not np.any(active):
            break
        ap = np.asfortranarray(operator.apply(p))
        pap = col_dots(p, ap)
        alpha = np.where(active & (pap > 0), rz / np.where(pap > 0, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap
        z = r * inv_diag[:, None] if inv_diag is not None else r
        rz_new = col_dots(r, z)
        beta = np.where(active & (rz > 0), rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
        res = col_norms(r)
        iters += active
        active = active & (res > targets)

    report = CgReport(
        iterations=iters,
        final_residual_norm=res,
        converged=res <= targets,
    )
    w = x[:, 0] if single else x
    return w, report


@dataclass(frozen=True)
class ProbeMatrix:
    """Rademacher probing vectors: i.i.d. +/-1 entries, one probe per column."""

    entries: np.ndarray
    seed: int

    @property
    def n_probes(self) -> int:
        return self.entries.shape[1]


def rademacher_probes(dim: int, n_probes: int, seed) -> ProbeMatrix:
    """Draw a `dim x n_probes` matrix of independent +/-1 entries."""
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    rng = np.random.default_rng(seed)
    entries = rng.integers(0, 2, size=(dim, n_probes)).astype(float) * 2.0 - 1.0
    key = seed if isinstance(seed, (int, np.integer)) else -1
    return ProbeMatrix(entries=entries, seed=int(key))


def estimate_diagonal(solve: Callable[[np.ndarray], np.ndarray], probes: ProbeMatrix) -> np.ndarray:
    """Unbiased estimate of diag(C^-1) from probe solves.

    `solve` must map the probe matrix U (columns are right-hand sides) to
    W with C W = U; the estimate is the per-row mean of U .* W.  For a
    Hermitian C the estimator's mean is real; the residual imaginary part
    of a finite-probe estimate is zero-mean sampling noise and is
    discarded.
    """
    u = probes.entries
    if u.ndim != 2 or u.shape[1] < 1:
        raise ValueError("probes must provide at least one column")
    w = np.asarray(solve(u))
    if w.shape != u.shape:
        raise ValueError("solve must return one solution per probe column")
    if not np.all(np.isfinite(w)):
        raise ValueError("solve produced non-finite values")
    return np.mean(u * w, axis=1).real


def normal_operator(
    dictionary: ConvolutionDictionary,
    psi_inv: np.ndarray,
    noise_precision: float,
    rows: np.ndarray | None = None,
) -> LinearOperator:
    """Hermitian PD operator  v -> noise_precision * X~^H (X~ v) + psi_inv * v.

    This is the inverse posterior covariance restricted to the active
    coefficient set `rows` (all coefficients when omitted); the Gram
    matrix is never formed.
    """
    psi_inv = np.asarray(psi_inv, dtype=float)
    if np.any(psi_inv <= 0) or not np.all(np.isfinite(psi_inv)):
        raise ValueError("psi_inv entries must be finite and strictly positive")
    if noise_precision <= 0:
        raise ValueError("noise_precision must be positive")
    total = dictionary.n_coeffs

    if rows is None:
        if psi_inv.shape[0] != total:
            raise ValueError("psi_inv length must match the coefficient count")

        def apply(v: np.ndarray) -> np.ndarray:
            v = np.asarray(v)
            scale = psi_inv if v.ndim == 1 else psi_inv[:, None]
            return noise_precision * dictionary.gram_apply(v) + scale * v

        dim = total
    else:
        rows = np.asarray(rows, dtype=int)
        if psi_inv.shape[0] != rows.shape[0]:
            raise ValueError("psi_inv must align with the active row set")

        def apply(v: np.ndarray) -> np.ndarray:
            v = np.asarray(v)
            single = v.ndim == 1
            cols = 1 if single else v.shape[1]
            full = np.zeros((total, cols), dtype=complex)
            full[rows] = v[:, None] if single else v
            out = dictionary.gram_apply(full)[rows]
            scale = psi_inv[:, None]
            result = noise_precision * out + scale * (v[:, None] if single else v)
            return result[:, 0] if single else result

        dim = rows.shape[0]

    return LinearOperator(shape=(dim, dim), apply=apply, adjoint_apply=apply)


def apply_normal_operator(
    dictionary: ConvolutionDictionary,
    psi_inv: np.ndarray,
    noise_precision: float,
    v: np.ndarray,
) -> np.ndarray:
    """One-shot form of :func:`normal_operator` for a full-length vector."""
    return normal_operator(dictionary, psi_inv, noise_precision).apply(v)
