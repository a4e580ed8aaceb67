"""Sparse Bayesian estimation of the channel matrix by evidence maximization.

Two interchangeable E-steps compute the Gaussian posterior of the channel
given the current per-row prior variances: a dense full-inversion step
(the correctness oracle) and a covariance-free step that obtains the
posterior mean by conjugate gradients and the posterior-variance diagonal
by Rademacher probing.  Four M-step variants share the posterior moments
and differ only in how variances are tied: per row, per aligned row
block, per range bin across antenna pairs, or per range-bin block.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    LinearOperator,
    cg_solve,
    estimate_diagonal,
    normal_operator,
    rademacher_probes,
)
from .model import ConvolutionDictionary
from .scene import (
    GROUP,
    JOINT,
    JOINT_GROUP,
    ROW,
    CcirMatrix,
    SparsityModel,
    canonical_seed,
)

FULL = "full"
COVFREE = "covfree"

DIAG_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelDims:
    """Dimensions needed to map hyperparameters onto coefficient rows."""

    n_tx: int
    n_rx: int
    n_range_bins: int
    group_len: int = 1

    @property
    def n_coeffs(self) -> int:
        return self.n_tx * self.n_rx * self.n_range_bins


def n_hyperparams(kind: str, dims: ModelDims) -> int:
    """Hyperparameter count of each variant: NMR, NMR/d, R, or R/d."""
    total = dims.n_coeffs
    if kind == ROW:
        return total
    if kind == GROUP:
        if total % dims.group_len:
            raise ValueError("group_len must divide the coefficient count")
        return total // dims.group_len
    if kind == JOINT:
        return dims.n_range_bins
    if kind == JOINT_GROUP:
        if dims.n_range_bins % dims.group_len:
            raise ValueError("group_len must divide the range-bin count")
        return dims.n_range_bins // dims.group_len
    raise ValueError(f"unknown sparsity model kind {kind!r}")


def _hyper_rows(kind: str, dims: ModelDims, hyper_indices: np.ndarray) -> np.ndarray:
    """Sorted coefficient rows governed by the given hyperparameter indices."""
    h = np.asarray(hyper_indices, dtype=int)
    if kind == ROW:
        rows = h
    elif kind == GROUP:
        d = dims.group_len
        rows = (h[:, None] * d + np.arange(d)).ravel()
    else:
        n, m, r = dims.n_tx, dims.n_rx, dims.n_range_bins
        offsets = (
            np.arange(m)[:, None] * n * r + np.arange(n)[None, :] * r
        ).ravel()
        if kind == JOINT:
            bins = h
        elif kind == JOINT_GROUP:
            d = dims.group_len
            bins = (h[:, None] * d + np.arange(d)).ravel()
        else:
            raise ValueError(f"unknown sparsity model kind {kind!r}")
        rows = (offsets[:, None] + bins[None, :]).ravel()
    return np.sort(rows)


def _row_hyper(kind: str, dims: ModelDims, rows: np.ndarray) -> np.ndarray:
    """Hyperparameter index governing each coefficient row."""
    rows = np.asarray(rows, dtype=int)
    if kind == ROW:
        return rows
    if kind == GROUP:
        return rows // dims.group_len
    bins = rows % dims.n_range_bins
    if kind == JOINT:
        return bins
    if kind == JOINT_GROUP:
        return bins // dims.group_len
    raise ValueError(f"unknown sparsity model kind {kind!r}")


@dataclass(frozen=True)
class HyperparamState:
    """Prior variances under one of the four tying schemes.

    `psi` holds the values of the hyperparameters listed in `active`
    (indices into the structured hyperparameter space); pruned entries are
    dropped from the active set rather than stored as zeros.
    """

    kind: str
    psi: np.ndarray
    active: np.ndarray
    dims: ModelDims
    iteration: int = 0

    def __post_init__(self):
        if self.psi.shape != self.active.shape:
            raise ValueError("psi and active must align")

    @property
    def n_hyper_total(self) -> int:
        return n_hyperparams(self.kind, self.dims)

    def active_rows(self) -> np.ndarray:
        return _hyper_rows(self.kind, self.dims, self.active)

    def row_variances(self, rows: np.ndarray | None = None) -> np.ndarray:
        """Prior variance of each (active) coefficient row."""
        if rows is None:
            rows = self.active_rows()
        full = np.zeros(self.n_hyper_total)
        full[self.active] = self.psi
        return full[_row_hyper(self.kind, self.dims, rows)]

    def expand(self) -> np.ndarray:
        """Full coefficient-length diagonal of the prior covariance.

        Defined only for fully active states; once pruning has removed
        hyperparameters the prior is supported on a subspace and has no
        positive full-length diagonal.
        """
        if self.active.size != self.n_hyper_total:
            raise ValueError("expand() requires a fully active state")
        order = np.argsort(self.active)
        full = np.empty(self.n_hyper_total)
        full[self.active[order]] = self.psi[order]
        return full[_row_hyper(self.kind, self.dims, np.arange(self.dims.n_coeffs))]


def init_state(kind: str, dims: ModelDims, value: float = 1.0) -> HyperparamState:
    """All-ones (by default) fully active starting state."""
    count = n_hyperparams(kind, dims)
    return HyperparamState(
        kind=kind,
        psi=np.full(count, float(value)),
        active=np.arange(count),
        dims=dims,
    )


@dataclass(frozen=True)
class PosteriorEstimate:
    """Posterior moments of the channel under the current prior.

    `mean` and `diag` are full-length with zeros on pruned rows; `diag`
    is the exact posterior-variance diagonal in full mode and the probe
    estimate (floored at a small epsilon) in covariance-free mode.
    """

    mean: np.ndarray
    diag: np.ndarray
    mode: str
    active_rows: np.ndarray
    cg_iterations: int = 0
    cg_converged: bool = True


def _active_system(
    dictionary: ConvolutionDictionary,
    noise_var: float,
    state: HyperparamState,
) -> tuple[np.ndarray, np.ndarray, float]:
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    rows = state.active_rows()
    psi_rows = state.row_variances(rows)
    if np.any(psi_rows <= 0):
        raise ValueError("prior variances must be strictly positive")
    return rows, psi_rows, 1.0 / noise_var


def estep_full(
    dictionary: ConvolutionDictionary,
    noise_var: float,
    state: HyperparamState,
    Y: np.ndarray,
    back_projection: np.ndarray | None = None,
) -> PosteriorEstimate:
    """Dense posterior: exact covariance diagonal and mean.

    Works on the active coefficient set; raises above the dense
    materialization cap, in which case the covariance-free E-step is the
    intended path.  `back_projection` optionally supplies a precomputed
    X~^H Y (it is constant across EM iterations).
    """
    rows, psi_rows, tau = _active_system(dictionary, noise_var, state)
    gram = dictionary.gram()
    if back_projection is None:
        back_projection = dictionary.adjoint_apply(Y)
    rhs = tau * back_projection[rows]
    system = tau * gram[np.ix_(rows, rows)] + np.diag(1.0 / psi_rows)
    cov = np.linalg.inv(system)
    diag_active = np.diag(cov).real
    if np.any(diag_active <= 0):
        raise ArithmeticError("posterior covariance diagonal must be positive")
    mean_active = cov @ rhs

    total = dictionary.n_coeffs
    mean = np.zeros((total, Y.shape[1]), dtype=complex)
    mean[rows] = mean_active
    diag = np.zeros(total)
    diag[rows] = diag_active
    return PosteriorEstimate(mean=mean, diag=diag, mode=FULL, active_rows=rows)


def estep_covfree(
    dictionary: ConvolutionDictionary,
    noise_var: float,
    state: HyperparamState,
    Y: np.ndarray,
    n_probes: int = 20,
    probe_seed=0,
    cg_tol: float = 1e-6,
    cg_max_iter: int | None = None,
    exact_diag: bool = False,
    jacobi: bool = False,
    mean_warm_start: np.ndarray | None = None,
    back_projection: np.ndarray | None = None,
) -> PosteriorEstimate:
    """Inversion-free posterior via conjugate gradients.

    Solves one block system whose right-hand sides are the probing
    vectors followed by the scaled back-projected measurements; the first
    solutions feed the diagonal estimator, the rest are the posterior
    mean.  `exact_diag` substitutes the dense covariance diagonal (small
    instances only) to separate CG error from probe variance in tests.
    """
    rows, psi_rows, tau = _active_system(dictionary, noise_var, state)
    psi_inv = 1.0 / psi_rows
    op = normal_operator(dictionary, psi_inv, tau, rows=rows)
    if back_projection is None:
        back_projection = dictionary.adjoint_apply(Y)
    rhs_mean = tau * back_projection[rows]

    probes = None
    if not exact_diag:
        probes = rademacher_probes(rows.size, n_probes, probe_seed)
        rhs = np.hstack([probes.entries.astype(complex), rhs_mean])
    else:
        rhs = rhs_mean

    x0 = None
    if mean_warm_start is not None:
        x0 = np.zeros_like(rhs)
        x0[:, -Y.shape[1] :] = mean_warm_start[rows]

    precond = None
    if jacobi:
        col_norms = dictionary.column_norms()[rows]
        precond = tau * col_norms**2 + psi_inv

    solution, report = cg_solve(
        op, rhs, tol=cg_tol, max_iter=cg_max_iter, jacobi=precond, x0=x0
    )

    if exact_diag:
        gram = dictionary.gram()
        system = tau * gram[np.ix_(rows, rows)] + np.diag(psi_inv)
        diag_active = np.diag(np.linalg.inv(system)).real
        mean_active = solution
    else:
        w_probes = solution[:, : probes.n_probes]
        diag_active = estimate_diagonal(lambda _: w_probes, probes)
        diag_active = np.maximum(diag_active, DIAG_FLOOR)
        mean_active = solution[:, probes.n_probes :]

    total = dictionary.n_coeffs
    mean = np.zeros((total, Y.shape[1]), dtype=complex)
    mean[rows] = mean_active
    diag = np.zeros(total)
    diag[rows] = diag_active
    return PosteriorEstimate(
        mean=mean,
        diag=diag,
        mode=COVFREE,
        active_rows=rows,
        cg_iterations=int(report.iterations.max(initial=0)),
        cg_converged=report.all_converged,
    )


# --- M-step updates ---------------------------------------------------------


def _psi_row(post: PosteriorEstimate, n_pulses: int) -> np.ndarray:
    return post.diag + np.mean(np.abs(post.mean) ** 2, axis=1)


def _psi_group(post: PosteriorEstimate, n_pulses: int, group_len: int) -> np.ndarray:
    d = group_len
    total = post.mean.shape[0]
    if total % d:
        raise ValueError("group_len must divide the coefficient count")
    m2 = np.abs(post.mean) ** 2
    mean_term = m2.reshape(total // d, d, -1).sum(axis=(1, 2)) / (d * n_pulses)
    diag_term = post.diag.reshape(total // d, d).sum(axis=1) / d
    return mean_term + diag_term


def _psi_joint(
    post: PosteriorEstimate, n_pulses: int, n_tx: int, n_rx: int, n_range_bins: int
) -> np.ndarray:
    m2 = np.abs(post.mean) ** 2
    pairs = n_tx * n_rx
    mean_term = m2.reshape(pairs, n_range_bins, -1).sum(axis=(0, 2)) / (pairs * n_pulses)
    diag_term = post.diag.reshape(pairs, n_range_bins).sum(axis=0) / pairs
    return mean_term + diag_term


def _psi_jointgroup(
    post: PosteriorEstimate,
    n_pulses: int,
    n_tx: int,
    n_rx: int,
    n_range_bins: int,
    group_len: int,
) -> np.ndarray:
    d = group_len
    if n_range_bins % d:
        raise ValueError("group_len must divide the range-bin count")
    m2 = np.abs(post.mean) ** 2
    pairs = n_tx * n_rx
    blocks = n_range_bins // d
    mean_term = m2.reshape(pairs, blocks, d, -1).sum(axis=(0, 2, 3)) / (
        pairs * d * n_pulses
    )
    diag_term = post.diag.reshape(pairs, blocks, d).sum(axis=(0, 2)) / (pairs * d)
    return mean_term + diag_term


def _psi_update(post: PosteriorEstimate, kind: str, dims: ModelDims, n_pulses: int) -> np.ndarray:
    if kind == ROW:
        return _psi_row(post, n_pulses)
    if kind == GROUP:
        return _psi_group(post, n_pulses, dims.group_len)
    if kind == JOINT:
        return _psi_joint(post, n_pulses, dims.n_tx, dims.n_rx, dims.n_range_bins)
    if kind == JOINT_GROUP:
        return _psi_jointgroup(
            post, n_pulses, dims.n_tx, dims.n_rx, dims.n_range_bins, dims.group_len
        )
    raise ValueError(f"unknown sparsity model kind {kind!r}")


def mstep_row(post: PosteriorEstimate, n_pulses: int) -> HyperparamState:
    """Per-row update: psi_i = Sigma_ii + mean_k |M_ik|^2."""
    psi = _psi_row(post, n_pulses)
    dims = ModelDims(1, 1, psi.size, 1)
    return HyperparamState(kind=ROW, psi=psi, active=np.arange(psi.size), dims=dims)


def mstep_group(post: PosteriorEstimate, n_pulses: int, group_len: int) -> HyperparamState:
    """Aligned-block update averaging moments over each length-d block."""
    psi = _psi_group(post, n_pulses, group_len)
    dims = ModelDims(1, 1, post.mean.shape[0], group_len)
    return HyperparamState(kind=GROUP, psi=psi, active=np.arange(psi.size), dims=dims)


def mstep_joint(
    post: PosteriorEstimate, n_pulses: int, n_tx: int, n_rx: int, n_range_bins: int
) -> HyperparamState:
    """Range-bin update averaging moments over all antenna pairs."""
    psi = _psi_joint(post, n_pulses, n_tx, n_rx, n_range_bins)
    dims = ModelDims(n_tx, n_rx, n_range_bins, 1)
    return HyperparamState(kind=JOINT, psi=psi, active=np.arange(psi.size), dims=dims)


def mstep_jointgroup(
    post: PosteriorEstimate,
    n_pulses: int,
    n_tx: int,
    n_rx: int,
    n_range_bins: int,
    group_len: int,
) -> HyperparamState:
    """Range-bin-block update averaging over antenna pairs and blocks."""
    psi = _psi_jointgroup(post, n_pulses, n_tx, n_rx, n_range_bins, group_len)
    dims = ModelDims(n_tx, n_rx, n_range_bins, group_len)
    return HyperparamState(
        kind=JOINT_GROUP, psi=psi, active=np.arange(psi.size), dims=dims
    )


# --- EM driver ---------------------------------------------------------------


@dataclass
class EmTrace:
    """Per-iteration diagnostics of one EM run."""

    psi_change: list = field(default_factory=list)
    data_fit: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    n_hyper: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    all_pruned: bool = False
    cg_trouble: bool = False
    means: dict = field(default_factory=dict)
    final_state: "HyperparamState | None" = None

    def record(self, change, fit, wall, n_hyper, cg_iters):
        self.psi_change.append(change)
        self.data_fit.append(fit)
        self.wall_time.append(wall)
        self.n_hyper.append(n_hyper)
        self.cg_iterations.append(cg_iters)


def run_em(
    dictionary: ConvolutionDictionary,
    Y: np.ndarray,
    model: SparsityModel,
    mode: str = COVFREE,
    eps: float = 1e-6,
    l_max: int = 200,
    prune_threshold: float = 1e-6,
    seed=0,
    *,
    noise_var: float,
    dims: ModelDims | None = None,
    n_probes: int = 20,
    cg_tol: float = 1e-6,
    cg_max_iter: int | None = None,
    exact_diag: bool = False,
    jacobi: bool = False,
    warm_start: bool = True,
    init_psi: HyperparamState | None = None,
    keep_mean_at: set | None = None,
) -> tuple[CcirMatrix, EmTrace]:
    """Alternate E and M steps until the variance vector settles.

    Starts from unit variances, prunes hyperparameters that fall below
    `prune_threshold` times the current maximum, and stops when the
    relative variance change drops below `eps` or after `l_max`
    iterations.  The returned estimate is the final posterior mean with
    the surviving rows as its support.

    `dims` describes the hyperparameter tying; when omitted it is deduced
    from the dictionary with `model.group_len`.  Probing vectors are
    redrawn every iteration from a seed derived from (`seed`, iteration).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if mode not in (FULL, COVFREE):
        raise ValueError(f"unknown E-step mode {mode!r}")
    if dims is None:
        dims = ModelDims(
            dictionary.n_tx,
            dictionary.n_rx,
            dictionary.n_range_bins,
            model.group_len,
        )
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise ValueError("Y must be a matrix of stacked pulse measurements")

    state = init_state(model.kind, dims) if init_psi is None else init_psi
    trace = EmTrace()
    keep_mean_at = keep_mean_at or set()
    mean = np.zeros((dictionary.n_coeffs, Y.shape[1]), dtype=complex)
    prev_mean = None
    back_projection = dictionary.adjoint_apply(Y)

    for iteration in range(1, l_max + 1):
        tic = time.perf_counter()
        if mode == FULL:
            post = estep_full(dictionary, noise_var, state, Y, back_projection)
        else:
            probe_seed = np.random.SeedSequence([_seed_int(seed), iteration])
            post = estep_covfree(
                dictionary,
                noise_var,
                state,
                Y,
                n_probes=n_probes,
                probe_seed=probe_seed,
                cg_tol=cg_tol,
                cg_max_iter=cg_max_iter,
                exact_diag=exact_diag,
                jacobi=jacobi,
                mean_warm_start=prev_mean if warm_start else None,
                back_projection=back_projection,
            )
            if not post.cg_converged:
                trace.cg_trouble = True
        mean = post.mean
        prev_mean = mean

        psi_full = _psi_update(post, model.kind, dims, Y.shape[1])
        psi_new = psi_full[state.active]
        old_norm = np.linalg.norm(state.psi)
        change = np.linalg.norm(psi_new - state.psi) / old_norm if old_norm > 0 else 0.0

        residual = float(np.linalg.norm(Y - dictionary.apply(mean)))
        trace.record(
            change,
            residual,
            time.perf_counter() - tic,
            state.psi.size,
            post.cg_iterations,
        )
        if iteration in keep_mean_at:
            trace.means[iteration] = mean.copy()
        trace.iterations = iteration

        keep = psi_new > max(prune_threshold * psi_new.max(initial=0.0), 0.0)
        if not np.any(keep):
            trace.all_pruned = True
            mean = np.zeros_like(mean)
            state = HyperparamState(
                kind=model.kind,
                psi=psi_new[:0],
                active=state.active[:0],
                dims=dims,
                iteration=iteration,
            )
            break
        state = HyperparamState(
            kind=model.kind,
            psi=psi_new[keep],
            active=state.active[keep],
            dims=dims,
            iteration=iteration,
        )
        if change < eps:
            trace.converged = True
            break

    support = state.active_rows() if state.active.size else np.array([], dtype=int)
    trace.final_state = state
    estimate = CcirMatrix(values=mean, support=support, model=model)
    return estimate, trace


def _seed_int(seed) -> int:
    return canonical_seed(seed)


def log_evidence(
    dictionary: ConvolutionDictionary,
    noise_var: float,
    state: HyperparamState,
    Y: np.ndarray,
) -> float:
    """Marginal log-likelihood (up to constants) of the measurements.

    Dense evaluation of -K log|S| - sum_k y_k^H S^-1 y_k with
    S = X~ Psi X~^H + noise_var I; oracle-scale instances only.
    """
    rows = state.active_rows()
    psi_rows = state.row_variances(rows)
    dense = dictionary.materialize()[:, rows]
    sigma_y = dense * psi_rows[None, :] @ dense.conj().T
    sigma_y[np.diag_indices_from(sigma_y)] += noise_var
    sign, logdet = np.linalg.slogdet(sigma_y)
    if sign.real <= 0:
        raise ArithmeticError("measurement covariance must be positive definite")
    solved = np.linalg.solve(sigma_y, Y)
    quad = float(np.sum(np.conj(Y) * solved).real)
    return -Y.shape[1] * float(logdet.real) - quad


def classify_support(
    support: np.ndarray, dims: ModelDims
) -> str:
    """Best-fitting structure for a detected support.

    Returns the accepted structure with the fewest hyperparameters; plain
    row sparsity always accepts.
    """
    from .scene import structure_ok

    candidates = []
    for kind in (JOINT_GROUP, JOINT, GROUP, ROW):
        if kind in (GROUP, JOINT_GROUP) and dims.group_len < 2:
            continue
        if structure_ok(
            support, kind, dims.n_tx, dims.n_rx, dims.n_range_bins, dims.group_len
        ):
            candidates.append((n_hyperparams(kind, dims), kind))
    candidates.sort()
    return candidates[0][1]


def auto_select_model(
    dictionary: ConvolutionDictionary,
    Y: np.ndarray,
    *,
    noise_var: float,
    group_len: int = 1,
    burn_in: int = 8,
    support_threshold: float = 0.01,
    seed=0,
    eps: float = 1e-6,
    l_max: int = 200,
    **em_kwargs,
) -> tuple[SparsityModel, CcirMatrix, EmTrace]:
    """Two-phase estimation: detect structure, then exploit it.

    Runs a short untied (row) burn-in, thresholds the emerging variances
    at `support_threshold` times their maximum, classifies that support,
    and reruns the estimator under the selected tying scheme.
    """
    dims = ModelDims(dictionary.n_tx, dictionary.n_rx, dictionary.n_range_bins, group_len)
    burn_model = SparsityModel(kind=ROW, sparsity_level=0)
    burn_est, _ = run_em(
        dictionary,
        Y,
        burn_model,
        eps=1e-12,
        l_max=burn_in,
        seed=seed,
        noise_var=noise_var,
        dims=dims,
        **em_kwargs,
    )
    energy = np.mean(np.abs(burn_est.values) ** 2, axis=1)
    peak = energy.max(initial=0.0)
    support = np.flatnonzero(energy > support_threshold * peak) if peak > 0 else np.array([], int)
    kind = classify_support(support, dims)
    chosen = SparsityModel(
        kind=kind,
        sparsity_level=0,
        group_len=group_len if kind in (GROUP, JOINT_GROUP) else 1,
    )
    estimate, trace = run_em(
        dictionary,
        Y,
        chosen,
        eps=eps,
        l_max=l_max,
        seed=seed,
        noise_var=noise_var,
        dims=dims,
        **em_kwargs,
    )
    return chosen, estimate, trace
