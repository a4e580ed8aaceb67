"""EM engine tests: posterior steps against dense oracles, variance updates
against brute-force loop evaluations, and end-to-end recovery checks."""

import numpy as np
import pytest

from cofbl.model import RadarConfig, build_dictionary
from cofbl.scene import GROUP, JOINT, JOINT_GROUP, ROW, SparsityModel, simulate, synth_ccir
from cofbl.sbl import (
    COVFREE,
    FULL,
    HyperparamState,
    ModelDims,
    PosteriorEstimate,
    auto_select_model,
    classify_support,
    estep_covfree,
    estep_full,
    init_state,
    log_evidence,
    mstep_group,
    mstep_joint,
    mstep_jointgroup,
    mstep_row,
    n_hyperparams,
    run_em,
)


def identity_config(dim, n_pulses=3):
    """Config whose dictionary materializes to the identity."""
    return RadarConfig(
        n_tx=1,
        n_rx=1,
        n_range_bins=dim,
        n_pulses=n_pulses,
        waveform_len=1,
        bandwidths=(0.0,),
        pri=1e-3,
        amplitudes=(1.0,),
    )


def small_config(**overrides):
    base = dict(
        n_tx=2,
        n_rx=1,
        n_range_bins=4,
        n_pulses=3,
        waveform_len=8,
        bandwidths=(100e3, 200e3),
        pri=1e-3,
        amplitudes=(1.0, 1.0),
    )
    base.update(overrides)
    return RadarConfig(**base)


def random_posterior(dims: ModelDims, n_pulses: int, seed=0) -> PosteriorEstimate:
    rng = np.random.default_rng(seed)
    total = dims.n_coeffs
    mean = rng.standard_normal((total, n_pulses)) + 1j * rng.standard_normal(
        (total, n_pulses)
    )
    diag = rng.uniform(0.1, 2.0, total)
    return PosteriorEstimate(
        mean=mean, diag=diag, mode=FULL, active_rows=np.arange(total)
    )


# --- brute-force update oracles (1-based index arithmetic on purpose) -------


def oracle_row(mean, diag, K):
    total = mean.shape[0]
    psi = np.zeros(total)
    for i in range(total):
        psi[i] = diag[i] + sum(abs(mean[i, k]) ** 2 for k in range(K)) / K
    return psi


def oracle_group(mean, diag, K, d):
    total = mean.shape[0]
    psi = np.zeros(total // d)
    for i in range(1, total // d + 1):
        rows = range((i - 1) * d + 1, i * d + 1)
        acc_m = sum(abs(mean[r - 1, k]) ** 2 for r in rows for k in range(K))
        acc_d = sum(diag[r - 1] for r in rows)
        psi[i - 1] = acc_m / (d * K) + acc_d / d
    return psi


def oracle_joint(mean, diag, K, N, M, R):
    psi = np.zeros(R)
    for i in range(1, R + 1):
        acc_m = 0.0
        acc_d = 0.0
        for n in range(1, N + 1):
            for m in range(1, M + 1):
                offset = (m - 1) * N * R + (n - 1) * R
                acc_d += diag[offset + i - 1]
                for k in range(K):
                    acc_m += abs(mean[offset + i - 1, k]) ** 2
        psi[i - 1] = acc_m / (N * M * K) + acc_d / (N * M)
    return psi


def oracle_jointgroup(mean, diag, K, N, M, R, d):
    psi = np.zeros(R // d)
    for i in range(1, R // d + 1):
        acc_m = 0.0
        acc_d = 0.0
        for n in range(1, N + 1):
            for m in range(1, M + 1):
                offset = (m - 1) * N * R + (n - 1) * R
                for j in range((i - 1) * d + 1, i * d + 1):
                    acc_d += diag[offset + j - 1]
                    for k in range(K):
                        acc_m += abs(mean[offset + j - 1, k]) ** 2
        psi[i - 1] = acc_m / (d * N * M * K) + acc_d / (d * N * M)
    return psi


class TestHyperparamState:
    def test_counts_per_variant(self):
        dims = ModelDims(n_tx=2, n_rx=2, n_range_bins=8, group_len=2)
        assert n_hyperparams(ROW, dims) == 32
        assert n_hyperparams(GROUP, dims) == 16
        assert n_hyperparams(JOINT, dims) == 8
        assert n_hyperparams(JOINT_GROUP, dims) == 4

    def test_expand_kronecker_forms(self):
        dims = ModelDims(n_tx=2, n_rx=2, n_range_bins=4, group_len=2)
        rng = np.random.default_rng(0)

        row = init_state(ROW, dims)
        psi_row = rng.uniform(0.5, 2.0, 16)
        row = HyperparamState(kind=ROW, psi=psi_row, active=row.active, dims=dims)
        np.testing.assert_array_equal(row.expand(), psi_row)

        psi_bar = rng.uniform(0.5, 2.0, 8)
        group = HyperparamState(kind=GROUP, psi=psi_bar, active=np.arange(8), dims=dims)
        np.testing.assert_array_equal(group.expand(), np.kron(psi_bar, np.ones(2)))

        psi_tilde = rng.uniform(0.5, 2.0, 4)
        joint = HyperparamState(kind=JOINT, psi=psi_tilde, active=np.arange(4), dims=dims)
        np.testing.assert_array_equal(joint.expand(), np.kron(np.ones(4), psi_tilde))

        psi_under = rng.uniform(0.5, 2.0, 2)
        jg = HyperparamState(
            kind=JOINT_GROUP, psi=psi_under, active=np.arange(2), dims=dims
        )
        expected = np.kron(np.ones(4), np.kron(psi_under, np.ones(2)))
        np.testing.assert_array_equal(jg.expand(), expected)
        assert jg.expand().size == dims.n_coeffs

    def test_expand_requires_fully_active(self):
        dims = ModelDims(n_tx=1, n_rx=1, n_range_bins=4, group_len=1)
        state = HyperparamState(
            kind=ROW, psi=np.ones(2), active=np.array([0, 2]), dims=dims
        )
        with pytest.raises(ValueError):
            state.expand()

    def test_active_rows_joint_mapping(self):
        dims = ModelDims(n_tx=2, n_rx=1, n_range_bins=4, group_len=1)
        state = HyperparamState(
            kind=JOINT, psi=np.ones(2), active=np.array([1, 3]), dims=dims
        )
        np.testing.assert_array_equal(state.active_rows(), [1, 3, 5, 7])

    def test_row_variances_follow_tying(self):
        dims = ModelDims(n_tx=1, n_rx=1, n_range_bins=4, group_len=2)
        state = HyperparamState(
            kind=GROUP, psi=np.array([3.0, 7.0]), active=np.array([0, 1]), dims=dims
        )
        np.testing.assert_array_equal(state.row_variances(), [3.0, 3.0, 7.0, 7.0])


class TestEstepFull:
    def test_identity_dictionary_halves(self):
        cfg = identity_config(4)
        dico = build_dictionary(cfg)
        dims = ModelDims(1, 1, 4, 1)
        rng = np.random.default_rng(1)
        Y = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        post = estep_full(dico, 1.0, init_state(ROW, dims), Y)
        np.testing.assert_allclose(post.mean, Y / 2.0, rtol=1e-12)
        np.testing.assert_allclose(post.diag, 0.5, rtol=1e-12)

    def test_vanishing_prior_precision_limit(self):
        cfg = identity_config(4)
        dico = build_dictionary(cfg)
        dims = ModelDims(1, 1, 4, 1)
        state = HyperparamState(
            kind=ROW, psi=np.full(4, 1e12), active=np.arange(4), dims=dims
        )
        rng = np.random.default_rng(2)
        Y = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        post = estep_full(dico, 1.0, state, Y)
        np.testing.assert_allclose(post.mean, Y, rtol=1e-4)

    def test_matches_independent_dense_formulas(self):
        cfg = small_config()
        dico = build_dictionary(cfg)
        dims = ModelDims(cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 1)
        rng = np.random.default_rng(3)
        psi = rng.uniform(0.5, 2.0, cfg.n_coeffs)
        state = HyperparamState(
            kind=ROW, psi=psi, active=np.arange(cfg.n_coeffs), dims=dims
        )
        Y = rng.standard_normal((cfg.n_samples, cfg.n_pulses)) + 1j * rng.standard_normal(
            (cfg.n_samples, cfg.n_pulses)
        )
        noise_var = 0.3

        post = estep_full(dico, noise_var, state, Y)

        dense = dico.materialize()
        cov = np.linalg.inv(
            dense.conj().T @ dense / noise_var + np.diag(1.0 / psi)
        )
        mean = cov @ dense.conj().T @ Y / noise_var
        np.testing.assert_allclose(post.mean, mean, rtol=1e-9)
        np.testing.assert_allclose(post.diag, np.diag(cov).real, rtol=1e-9)

    def test_active_subset(self):
        cfg = small_config()
        dico = build_dictionary(cfg)
        dims = ModelDims(cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 1)
        rows = np.array([0, 2, 5])
        state = HyperparamState(
            kind=ROW, psi=np.array([1.0, 2.0, 0.5]), active=rows, dims=dims
        )
        rng = np.random.default_rng(4)
        Y = rng.standard_normal((cfg.n_samples, 2)) + 1j * rng.standard_normal(
            (cfg.n_samples, 2)
        )
        post = estep_full(dico, 1.0, state, Y)
        sub = dico.materialize()[:, rows]
        cov = np.linalg.inv(sub.conj().T @ sub + np.diag([1.0, 0.5, 2.0]))
        mean = cov @ sub.conj().T @ Y
        np.testing.assert_allclose(post.mean[rows], mean, rtol=1e-9)
        off = np.setdiff1d(np.arange(cfg.n_coeffs), rows)
        np.testing.assert_array_equal(post.mean[off], 0)
        np.testing.assert_array_equal(post.diag[off], 0)


class TestEstepCovfree:
    def test_identity_case_one_cg_iteration(self):
        cfg = identity_config(4)
        dico = build_dictionary(cfg)
        dims = ModelDims(1, 1, 4, 1)
        rng = np.random.default_rng(5)
        Y = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        post = estep_covfree(
            dico, 1.0, init_state(ROW, dims), Y, cg_tol=1e-12, exact_diag=True
        )
        np.testing.assert_allclose(post.mean, Y / 2.0, rtol=1e-10)
        assert post.cg_iterations == 1

    def test_exact_diag_matches_full(self):
        cfg = small_config()
        dico = build_dictionary(cfg)
        dims = ModelDims(cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 1)
        rng = np.random.default_rng(6)
        psi = rng.uniform(0.5, 2.0, cfg.n_coeffs)
        state = HyperparamState(
            kind=ROW, psi=psi, active=np.arange(cfg.n_coeffs), dims=dims
        )
        Y = rng.standard_normal((cfg.n_samples, cfg.n_pulses)) + 1j * rng.standard_normal(
            (cfg.n_samples, cfg.n_pulses)
        )
        full = estep_full(dico, 0.5, state, Y)
        cf = estep_covfree(dico, 0.5, state, Y, cg_tol=1e-12, exact_diag=True)
        np.testing.assert_allclose(cf.mean, full.mean, rtol=1e-8)
        np.testing.assert_allclose(cf.diag, full.diag, rtol=1e-10)

    def test_probe_diag_within_three_stderr(self):
        cfg = small_config()
        dico = build_dictionary(cfg)
        dims = ModelDims(cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 1)
        rng = np.random.default_rng(7)
        psi = rng.uniform(0.5, 2.0, cfg.n_coeffs)
        state = HyperparamState(
            kind=ROW, psi=psi, active=np.arange(cfg.n_coeffs), dims=dims
        )
        Y = rng.standard_normal((cfg.n_samples, 2)) + 1j * rng.standard_normal(
            (cfg.n_samples, 2)
        )
        exact = estep_full(dico, 1.0, state, Y).diag

        n_probes = 10_000
        post = estep_covfree(
            dico, 1.0, state, Y, n_probes=n_probes, probe_seed=42, cg_tol=1e-10
        )
        # independent stderr from a fresh probe batch on the dense inverse
        dense = dico.materialize()
        cov = np.linalg.inv(dense.conj().T @ dense + np.diag(1.0 / psi))
        probes = np.random.default_rng(43).integers(
            0, 2, size=(cfg.n_coeffs, n_probes)
        ) * 2.0 - 1.0
        samples = (probes * (cov @ probes)).real
        stderr = samples.std(axis=1, ddof=1) / np.sqrt(n_probes)
        assert np.all(np.abs(post.diag - exact) <= 3 * stderr)

    def test_mean_satisfies_normal_equations(self):
        cfg = small_config()
        dico = build_dictionary(cfg)
        dims = ModelDims(cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 1)
        state = init_state(ROW, dims)
        rng = np.random.default_rng(8)
        Y = rng.standard_normal((cfg.n_samples, 3)) + 1j * rng.standard_normal(
            (cfg.n_samples, 3)
        )
        tol = 1e-8
        post = estep_covfree(dico, 0.7, state, Y, cg_tol=tol, n_probes=4, probe_seed=0)
        dense = dico.materialize()
        rhs = dense.conj().T @ Y / 0.7
        lhs = (dense.conj().T @ (dense @ post.mean)) / 0.7 + post.mean / 1.0
        resid = np.linalg.norm(lhs - rhs, axis=0)
        assert np.all(resid <= tol * np.linalg.norm(rhs, axis=0) * 1.01)


class TestMsteps:
    def test_row_trivial_arithmetic(self):
        # K=2, row (1, j), diag 0.5 -> 0.5 + (1+1)/2 = 1.5
        mean = np.array([[1.0 + 0j, 1j]])
        diag = np.array([0.5])
        post = PosteriorEstimate(
            mean=mean, diag=diag, mode=FULL, active_rows=np.array([0])
        )
        state = mstep_row(post, 2)
        np.testing.assert_allclose(state.psi, [1.5], rtol=1e-15)

    def test_zero_posterior_gives_zero_psi(self):
        post = PosteriorEstimate(
            mean=np.zeros((4, 2), dtype=complex),
            diag=np.zeros(4),
            mode=FULL,
            active_rows=np.arange(4),
        )
        np.testing.assert_array_equal(mstep_row(post, 2).psi, np.zeros(4))

    def test_row_matches_oracle(self):
        dims = ModelDims(2, 2, 4, 1)
        post = random_posterior(dims, 3, seed=10)
        state = mstep_row(post, 3)
        np.testing.assert_allclose(
            state.psi, oracle_row(post.mean, post.diag, 3), rtol=1e-12
        )

    def test_group_matches_oracle(self):
        dims = ModelDims(2, 2, 4, 2)
        post = random_posterior(dims, 3, seed=11)
        state = mstep_group(post, 3, 2)
        np.testing.assert_allclose(
            state.psi, oracle_group(post.mean, post.diag, 3, 2), rtol=1e-12
        )

    def test_group_degenerate_d1_equals_row(self):
        dims = ModelDims(2, 2, 4, 1)
        post = random_posterior(dims, 3, seed=12)
        np.testing.assert_array_equal(
            mstep_group(post, 3, 1).psi, mstep_row(post, 3).psi
        )

    def test_group_single_block_is_global_average(self):
        dims = ModelDims(1, 1, 8, 8)
        post = random_posterior(dims, 2, seed=13)
        state = mstep_group(post, 2, 8)
        expected = np.abs(post.mean) ** 2 / 2
        expected = expected.sum() / 8 + post.diag.sum() / 8
        np.testing.assert_allclose(state.psi, [expected], rtol=1e-12)

    def test_joint_matches_oracle(self):
        dims = ModelDims(2, 2, 4, 1)
        post = random_posterior(dims, 3, seed=14)
        state = mstep_joint(post, 3, 2, 2, 4)
        np.testing.assert_allclose(
            state.psi, oracle_joint(post.mean, post.diag, 3, 2, 2, 4), rtol=1e-12
        )

    def test_joint_single_pair_equals_row(self):
        dims = ModelDims(1, 1, 8, 1)
        post = random_posterior(dims, 3, seed=15)
        np.testing.assert_array_equal(
            mstep_joint(post, 3, 1, 1, 8).psi, mstep_row(post, 3).psi
        )

    def test_joint_averaging_idempotence(self):
        # identical moments on every antenna pair: update equals per-pair row update
        dims = ModelDims(2, 2, 4, 1)
        rng = np.random.default_rng(16)
        block_mean = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        block_diag = rng.uniform(0.1, 1.0, 4)
        mean = np.tile(block_mean, (4, 1))
        diag = np.tile(block_diag, 4)
        post = PosteriorEstimate(
            mean=mean, diag=diag, mode=FULL, active_rows=np.arange(16)
        )
        single = PosteriorEstimate(
            mean=block_mean, diag=block_diag, mode=FULL, active_rows=np.arange(4)
        )
        np.testing.assert_allclose(
            mstep_joint(post, 3, 2, 2, 4).psi, mstep_row(single, 3).psi, rtol=1e-13
        )

    def test_jointgroup_matches_oracle(self):
        dims = ModelDims(2, 2, 8, 2)
        post = random_posterior(dims, 3, seed=17)
        state = mstep_jointgroup(post, 3, 2, 2, 8, 2)
        np.testing.assert_allclose(
            state.psi, oracle_jointgroup(post.mean, post.diag, 3, 2, 2, 8, 2), rtol=1e-12
        )

    def test_jointgroup_degeneracies(self):
        dims = ModelDims(2, 2, 8, 1)
        post = random_posterior(dims, 3, seed=18)
        np.testing.assert_array_equal(
            mstep_jointgroup(post, 3, 2, 2, 8, 1).psi,
            mstep_joint(post, 3, 2, 2, 8).psi,
        )
        dims_single = ModelDims(1, 1, 8, 2)
        post_single = random_posterior(dims_single, 3, seed=19)
        np.testing.assert_array_equal(
            mstep_jointgroup(post_single, 3, 1, 1, 8, 2).psi,
            mstep_group(post_single, 3, 2).psi,
        )


class TestRunEm:
    def test_zero_measurements_give_zero_estimate(self):
        cfg = small_config()
        dico = build_dictionary(cfg)
        Y = np.zeros((cfg.n_samples, cfg.n_pulses), dtype=complex)
        est, trace = run_em(
            dico, Y, SparsityModel(kind=ROW, sparsity_level=0), mode=FULL,
            l_max=5, noise_var=1.0,
        )
        np.testing.assert_array_equal(est.values, 0)

    def test_noise_free_single_row_recovery(self):
        cfg = small_config(n_range_bins=8, n_pulses=3)
        dico = build_dictionary(cfg)
        rng = np.random.default_rng(20)
        truth = np.zeros((cfg.n_coeffs, cfg.n_pulses), dtype=complex)
        truth[5] = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        Y = dico.apply(truth)
        est, trace = run_em(
            dico,
            Y,
            SparsityModel(kind=ROW, sparsity_level=1),
            mode=FULL,
            l_max=50,
            noise_var=1e-6,
        )
        assert list(est.support) == [5]
        rel = np.linalg.norm(est.values - truth) / np.linalg.norm(truth)
        assert rel < 1e-3

    def test_hyperparameter_counts_per_variant(self):
        cfg = small_config(n_rx=2, n_range_bins=8, group_len=2)
        dico = build_dictionary(cfg)
        rng = np.random.default_rng(21)
        Y = rng.standard_normal((cfg.n_samples, cfg.n_pulses)) + 1j * rng.standard_normal(
            (cfg.n_samples, cfg.n_pulses)
        )
        expected = {
            ROW: cfg.n_coeffs,
            GROUP: cfg.n_coeffs // 2,
            JOINT: cfg.n_range_bins,
            JOINT_GROUP: cfg.n_range_bins // 2,
        }
        for kind, count in expected.items():
            model = SparsityModel(kind=kind, sparsity_level=0, group_len=2)
            _, trace = run_em(
                dico, Y, model, mode=FULL, l_max=3, prune_threshold=0.0,
                noise_var=1.0,
            )
            assert trace.n_hyper == [count] * 3

    def test_mode_equivalence_small_instance(self):
        cfg = small_config(n_rx=2, n_range_bins=8)
        dico = build_dictionary(cfg)
        model = SparsityModel(kind=ROW, sparsity_level=4)
        scene = synth_ccir(cfg, model, 22)
        ms = simulate(dico, scene, 15.0, seed=22)
        iters = set(range(1, 9))
        full_est, full_trace = run_em(
            dico, ms.Y, model, mode=FULL, l_max=8, eps=1e-12,
            noise_var=ms.noise_variance, keep_mean_at=iters,
        )
        cf_est, cf_trace = run_em(
            dico, ms.Y, model, mode=COVFREE, l_max=8, eps=1e-12,
            noise_var=ms.noise_variance, cg_tol=1e-10, exact_diag=True,
            keep_mean_at=iters,
        )
        for it in sorted(full_trace.means):
            gap = np.linalg.norm(cf_trace.means[it] - full_trace.means[it])
            assert gap <= 1e-6 * np.linalg.norm(full_trace.means[it])
        final_gap = np.linalg.norm(cf_est.values - full_est.values)
        assert final_gap <= 1e-6 * np.linalg.norm(full_est.values)

    def test_evidence_monotone_in_full_mode(self):
        cfg = small_config(n_range_bins=6)
        dico = build_dictionary(cfg)
        model = SparsityModel(kind=ROW, sparsity_level=3)
        scene = synth_ccir(cfg, model, 23)
        ms = simulate(dico, scene, 10.0, seed=23)
        dims = ModelDims(cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 1)
        state = init_state(ROW, dims)
        previous = log_evidence(dico, ms.noise_variance, state, ms.Y)
        for _ in range(15):
            post = estep_full(dico, ms.noise_variance, state, ms.Y)
            psi = mstep_row(post, cfg.n_pulses).psi
            state = HyperparamState(
                kind=ROW, psi=psi, active=np.arange(psi.size), dims=dims
            )
            current = log_evidence(dico, ms.noise_variance, state, ms.Y)
            assert current >= previous - 1e-8 * abs(previous)
            previous = current

    def test_converged_flag_and_stopping(self):
        cfg = small_config()
        dico = build_dictionary(cfg)
        model = SparsityModel(kind=ROW, sparsity_level=2)
        scene = synth_ccir(cfg, model, 24)
        ms = simulate(dico, scene, 20.0, seed=24)
        _, trace = run_em(
            dico, ms.Y, model, mode=FULL, eps=1e-4, l_max=200,
            noise_var=ms.noise_variance,
        )
        assert trace.converged
        assert trace.iterations < 200
        assert trace.psi_change[-1] < 1e-4

    def test_structured_variants_run_covfree(self):
        cfg = small_config(n_rx=2, n_range_bins=8, group_len=2)
        dico = build_dictionary(cfg)
        for kind in (GROUP, JOINT, JOINT_GROUP):
            model = SparsityModel(kind=kind, sparsity_level=4, group_len=2)
            scene = synth_ccir(cfg, model, 25)
            ms = simulate(dico, scene, 15.0, seed=25)
            est, trace = run_em(
                dico, ms.Y, model, mode=COVFREE, l_max=15,
                noise_var=ms.noise_variance, seed=25,
            )
            assert est.values.shape == scene.values.shape
            assert trace.iterations >= 1


class TestAutoSelect:
    def test_classify_clean_supports(self):
        dims = ModelDims(n_tx=2, n_rx=2, n_range_bins=8, group_len=2)
        joint_rows = np.concatenate([[1, 5] + np.array([0]), ])
        # bins {1, 5} on all four pairs
        rows = []
        for m in range(2):
            for n in range(2):
                base = (m * 2 + n) * 8
                rows += [base + 1, base + 5]
        assert classify_support(np.array(sorted(rows)), dims) == JOINT
        # aligned bins {2, 3} on all pairs -> joint-group wins
        rows = []
        for m in range(2):
            for n in range(2):
                base = (m * 2 + n) * 8
                rows += [base + 2, base + 3]
        assert classify_support(np.array(sorted(rows)), dims) == JOINT_GROUP

    def test_two_phase_detects_joint_group(self):
        cfg = small_config(n_rx=2, n_range_bins=8, group_len=2, n_pulses=6)
        dico = build_dictionary(cfg)
        model = SparsityModel(kind=JOINT_GROUP, sparsity_level=2, group_len=2)
        scene = synth_ccir(cfg, model, 26)
        ms = simulate(dico, scene, 25.0, seed=26)
        chosen, est, _ = auto_select_model(
            dico, ms.Y, noise_var=ms.noise_variance, group_len=2,
            burn_in=10, seed=26, mode=FULL, l_max=30,
        )
        assert chosen.kind == JOINT_GROUP
        assert est.values.shape == scene.values.shape
