"""Greedy and reweighted-least-squares baselines for joint-sparse recovery."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .model import ConvolutionDictionary
from .scene import ROW, CcirMatrix, SparsityModel

WEIGHT_FLOOR = 1e-12


def somp(Y: np.ndarray, dictionary: ConvolutionDictionary, target_sparsity: int) -> CcirMatrix:
    """Simultaneous orthogonal matching pursuit.

    Greedily picks the coefficient row whose correlations with the
    residual, summed in magnitude over the measurement columns, are
    largest; after each pick all measurement columns are re-fit by least
    squares on the active columns.  Returns a row-sparse estimate with
    exactly `target_sparsity` active rows.
    """
    Y = np.asarray(Y)
    total = dictionary.n_coeffs
    if not 1 <= target_sparsity <= total:
        raise ValueError("target_sparsity must lie in [1, column count]")

    residual = Y.astype(complex, copy=True)
    chosen: list[int] = []
    n_rows = Y.shape[0]
    # incrementally extended QR of the active columns; one
    # re-orthogonalization pass keeps Q numerically orthonormal
    q_basis = np.zeros((n_rows, target_sparsity), dtype=complex)
    r_factor = np.zeros((target_sparsity, target_sparsity), dtype=complex)
    qty = np.zeros((target_sparsity, Y.shape[1]), dtype=complex)
    coeffs = None
    for k in range(target_sparsity):
        scores = np.abs(dictionary.adjoint_apply(residual)).sum(axis=1)
        scores[chosen] = -np.inf
        pick = int(np.argmax(scores))
        chosen.append(pick)
        atom = dictionary.column(pick)
        head = q_basis[:, :k]
        proj = head.conj().T @ atom
        ortho = atom - head @ proj
        correction = head.conj().T @ ortho
        ortho -= head @ correction
        proj += correction
        norm = np.linalg.norm(ortho)
        if norm <= 1e-10 * max(np.linalg.norm(atom), 1.0):
            raise np.linalg.LinAlgError("active sub-dictionary is rank deficient")
        q_basis[:, k] = ortho / norm
        r_factor[:k, k] = proj
        r_factor[k, k] = norm
        qty[k] = q_basis[:, k].conj() @ Y
        coeffs = scipy.linalg.solve_triangular(
            r_factor[: k + 1, : k + 1], qty[: k + 1], lower=False
        )
        residual = Y - q_basis[:, : k + 1] @ qty[: k + 1]

    values = np.zeros((total, Y.shape[1]), dtype=complex)
    values[chosen] = coeffs
    support = np.array(sorted(chosen), dtype=int)
    model = SparsityModel(kind=ROW, sparsity_level=target_sparsity)
    return CcirMatrix(values=values, support=support, model=model)


def mfocuss(
    Y: np.ndarray,
    dictionary: ConvolutionDictionary,
    p: float = 0.8,
    lam: float = 0.0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> CcirMatrix:
    """Reweighted least squares with row-norm weights w_i = ||H_i.||^(1-p/2).

    Each sweep solves the Tikhonov-regularized weighted system
    H = W (AW)^H ((AW)(AW)^H + lam I)^-1 Y and stops when the iterate
    stalls.  A healthy run shrinks the fixed-point step every sweep; ten
    consecutive step increases flag divergence and the iterate with the
    best regularized objective is returned.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    Y = np.asarray(Y, dtype=complex)
    dense = dictionary.materialize()
    total = dense.shape[1]

    def objective(x):
        fit = np.linalg.norm(Y - dense @ x) ** 2
        return fit + lam * np.sum(np.linalg.norm(x, axis=1) ** p)

    estimate = np.ones((total, Y.shape[1]), dtype=complex)
    best = estimate
    best_objective = np.inf
    previous_step = np.inf
    growth_streak = 0
    diverged = False
    exponent = 1.0 - p / 2.0

    for _ in range(max_iter):
        weights = np.linalg.norm(estimate, axis=1) ** exponent
        alive = weights > WEIGHT_FLOOR * weights.max(initial=0.0)
        if not np.any(alive):
            estimate = np.zeros_like(estimate)
            break
        w_alive = weights[alive]
        aw = dense[:, alive] * w_alive[None, :]
        gram = aw @ aw.conj().T
        if lam > 0.0:
            gram[np.diag_indices_from(gram)] += lam
        solved = np.linalg.solve(gram, Y)
        new_estimate = np.zeros_like(estimate)
        new_estimate[alive] = w_alive[:, None] * (aw.conj().T @ solved)

        current = objective(new_estimate)
        if current < best_objective:
            best = new_estimate
            best_objective = current

        step = np.linalg.norm(new_estimate - estimate)
        scale = np.linalg.norm(estimate)
        growth_streak = growth_streak + 1 if step > previous_step else 0
        previous_step = step
        estimate = new_estimate
        if growth_streak >= 10:
            diverged = True
            break
        if step == 0.0 or (scale > 0 and step / scale < tol):
            break

    if diverged:
        warnings.warn("iterate step grew for 10 consecutive sweeps; returning best iterate")
        estimate = best
    row_energy = np.linalg.norm(estimate, axis=1)
    floor = WEIGHT_FLOOR * row_energy.max(initial=0.0)
    estimate = np.where(row_energy[:, None] > floor, estimate, 0.0)
    support = np.flatnonzero(np.linalg.norm(estimate, axis=1) > 0)
    model = SparsityModel(kind=ROW, sparsity_level=support.size)
    return CcirMatrix(values=estimate, support=support, model=model)
