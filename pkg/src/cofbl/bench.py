"""Seeded experiment harness: configuration, sweeps, metrics, artifacts.

Every run is reproducible from (spec, master_seed): per-task generators
derive from `SeedSequence([master_seed, stream, point, trial, ...])`
where `stream` separates scenes (101), noise (202), estimators (303),
mismatch draws (404), and scene evolution (505).  Result rows are sorted
by (sweep point, algorithm, trial) before writing so thread-pool
scheduling never changes output bytes.
"""

from __future__ import annotations

import configparser
import math
import subprocess
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import mfocuss, somp
from .bounds import bcrb, nmse
from .model import ConvolutionDictionary, RadarConfig, build_dictionary
from .scene import (
    GROUP,
    JOINT,
    JOINT_GROUP,
    ROW,
    CcirMatrix,
    SparsityModel,
    evolve_scene,
    perturb_support,
    simulate,
    synth_ccir,
    synth_gaussian_ccir,
    _bins_to_rows,
)
from .sbl import COVFREE, FULL, run_em
from .svgplot import line_plot

ALGORITHM_NAMES = ("SBL-full", "CoFBL", "CoFGBL", "CoFJBL", "CoFJGBL", "SOMP", "MFOCUSS")
SBL_FAMILY = {
    "SBL-full": (FULL, ROW),
    "CoFBL": (COVFREE, ROW),
    "CoFGBL": (COVFREE, GROUP),
    "CoFJBL": (COVFREE, JOINT),
    "CoFJGBL": (COVFREE, JOINT_GROUP),
}
SWEEP_KINDS = (
    "snr_db",
    "em_iterations",
    "n_pulses",
    "sparsity_level",
    "group_len",
    "n_rx",
    "time_slot",
)
CSV_HEADER = "sweep_name,sweep_value,algorithm,trial,nmse,wall_ms,bcrb"
MVDR_CSV_HEADER = "sweep_name,sweep_value,scenario,trial,scnr_db"
MIN_NOISE_VAR = 1e-12

STREAM_SCENE = 101
STREAM_NOISE = 202
STREAM_ESTIMATOR = 303
STREAM_MISMATCH = 404
STREAM_EVOLVE = 505


def derive_seed(master_seed: int, stream: int, *parts: int) -> np.random.SeedSequence:
    """Documented trial-seed derivation; stable across runs and platforms."""
    return np.random.SeedSequence([int(master_seed), int(stream), *map(int, parts)])


@dataclass(frozen=True)
class EmSettings:
    """Estimator knobs shared by all Bayesian variants in a run."""

    eps: float = 1e-4
    l_max: int = 40
    prune_threshold: float = 1e-6
    n_probes: int = 20
    cg_tol: float = 1e-6
    cg_max_iter: int | None = None
    jacobi: bool = True
    warm_start: bool = True
    slot_l_max: int = 8


@dataclass(frozen=True)
class MvdrSettings:
    """Doppler-target parameters for the beamformer experiment."""

    target_velocity_mps: float = 27.778  # 100 km/h
    carrier_hz: float = 1.0e9
    target_range_bin: int = -1  # -1 -> center bin


@dataclass(frozen=True)
class ExperimentSpec:
    """Complete description of one reproducible experiment."""

    name: str
    scenario: RadarConfig
    scene_model: SparsityModel
    sweep_name: str
    sweep_values: tuple
    algorithms: tuple
    trials: int
    master_seed: int
    output_dir: Path | None = None
    kind: str = "sweep"  # sweep | mvdr | timing
    snr_db: float = 10.0
    em: EmSettings = field(default_factory=EmSettings)
    mvdr: MvdrSettings = field(default_factory=MvdrSettings)
    mismatch_fractions: tuple = ()
    prior_floor: float = 0.0
    schedule: tuple = ()
    record_timing: bool = False
    threads: int = 1

    def validate(self) -> None:
        unknown = [a for a in self.algorithms if a not in ALGORITHM_NAMES]
        if unknown:
            raise ValueError(f"unknown algorithm name(s): {', '.join(unknown)}")
        if self.kind == "sweep" and self.sweep_name not in SWEEP_KINDS:
            raise ValueError(f"unknown sweep {self.sweep_name!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sweep_values:
            raise ValueError("sweep_values must be non-empty")


@dataclass(frozen=True)
class TrialRow:
    sweep_name: str
    sweep_value: float
    algorithm: str
    trial: int
    nmse: float
    wall_ms: float
    bcrb: float | None = None


@dataclass(frozen=True)
class AggregateRow:
    sweep_value: float
    algorithm: str
    mean_nmse: float
    stderr: float
    mean_wall_ms: float
    bcrb: float | None


@dataclass
class ResultTable:
    """Aggregated view over per-trial rows plus the raw rows themselves."""

    sweep_name: str
    rows: list
    trial_rows: list
    errors: list = field(default_factory=list)

    def trial_values(self, sweep_value, algorithm) -> np.ndarray:
        picked = [
            r.nmse
            for r in self.trial_rows
            if r.algorithm == algorithm and r.sweep_value == sweep_value
        ]
        return np.array(picked)

    def mean_nmse(self, sweep_value, algorithm) -> float:
        vals = self.trial_values(sweep_value, algorithm)
        return float(np.nanmean(vals))

    def stderr(self, sweep_value, algorithm) -> float:
        vals = self.trial_values(sweep_value, algorithm)
        if vals.size < 2:
            return float("nan")
        return float(np.nanstd(vals, ddof=1) / math.sqrt(vals.size))


def aggregate(sweep_name: str, trial_rows: list) -> ResultTable:
    keyed: dict = {}
    for row in trial_rows:
        keyed.setdefault((row.sweep_value, row.algorithm), []).append(row)
    rows = []
    for (value, alg), bucket in sorted(keyed.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        vals = np.array([b.nmse for b in bucket])
        walls = np.array([b.wall_ms for b in bucket])
        stderr = float(np.nanstd(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        bound = next((b.bcrb for b in bucket if b.bcrb is not None), None)
        rows.append(
            AggregateRow(
                sweep_value=value,
                algorithm=alg,
                mean_nmse=float(np.nanmean(vals)),
                stderr=stderr,
                mean_wall_ms=float(np.nanmean(walls)),
                bcrb=bound,
            )
        )
    return ResultTable(sweep_name=sweep_name, rows=rows, trial_rows=list(trial_rows))


# --- estimator dispatch ------------------------------------------------------


def estimate_channel(
    name: str,
    dictionary: ConvolutionDictionary,
    Y: np.ndarray,
    noise_var: float,
    config: RadarConfig,
    seed,
    em: EmSettings,
    oracle_sparsity: int | None = None,
    l_max: int | None = None,
    keep_mean_at: set | None = None,
    init_psi=None,
):
    """Run one named algorithm; returns (estimate, trace-or-None, wall seconds).

    Wall time covers the estimator only (scene generation is outside).
    SOMP receives the true support size (a deliberately favorable stopping
    rule); MFOCUSS regularizes with the known noise variance.
    """
    noise_var = max(float(noise_var), MIN_NOISE_VAR)
    tic = time.perf_counter()
    trace = None
    if name == "SOMP":
        if not oracle_sparsity:
            raise ValueError("SOMP needs the benchmark target sparsity")
        est = somp(Y, dictionary, oracle_sparsity)
    elif name == "MFOCUSS":
        est = mfocuss(Y, dictionary, p=0.8, lam=noise_var, max_iter=em.l_max, tol=1e-6)
    elif name in SBL_FAMILY:
        mode, kind = SBL_FAMILY[name]
        d = config.group_len if kind in (GROUP, JOINT_GROUP) else 1
        model = SparsityModel(kind=kind, sparsity_level=0, group_len=d)
        est, trace = run_em(
            dictionary,
            Y,
            model,
            mode=mode,
            eps=em.eps,
            l_max=l_max or em.l_max,
            prune_threshold=em.prune_threshold,
            seed=seed,
            noise_var=noise_var,
            n_probes=em.n_probes,
            cg_tol=em.cg_tol,
            cg_max_iter=em.cg_max_iter,
            jacobi=em.jacobi,
            warm_start=em.warm_start,
            init_psi=init_psi,
            keep_mean_at=keep_mean_at,
        )
    else:
        raise ValueError(f"unknown algorithm name {name!r}")
    return est, trace, time.perf_counter() - tic


# --- sweep execution ---------------------------------------------------------


def _pool_map(task_fn, tasks, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(task_fn, tasks))
    return [task_fn(t) for t in tasks]


def _wall_ms(spec: ExperimentSpec, seconds: float) -> float:
    return seconds * 1e3 if spec.record_timing else 0.0


def _bayes_prior(spec: ExperimentSpec) -> np.ndarray:
    """Fixed full-rank prior for prior-matched runs: unit variance on a
    structured support, `prior_floor` elsewhere."""
    support_scene = synth_ccir(
        spec.scenario, spec.scene_model, derive_seed(spec.master_seed, STREAM_SCENE)
    )
    psi = np.full(spec.scenario.n_coeffs, spec.prior_floor)
    psi[support_scene.support] = 1.0
    return psi


def _expected_signal_power(dictionary: ConvolutionDictionary, psi: np.ndarray, n_pulses: int) -> float:
    return float(n_pulses * np.sum(psi * dictionary.column_norms() ** 2))


def _prewarm(dictionary: ConvolutionDictionary, algorithms) -> None:
    # the dense Gram cache is shared; build it before the pool spins up
    if any(alg == "SBL-full" for alg in algorithms):
        dictionary.gram()


def _run_snr_sweep(spec: ExperimentSpec) -> list:
    dictionary = build_dictionary(spec.scenario)
    _prewarm(dictionary, spec.algorithms)
    bayes = spec.prior_floor > 0.0
    psi_prior = _bayes_prior(spec) if bayes else None
    fractions = (0.0,) + tuple(spec.mismatch_fractions) if spec.mismatch_fractions else (0.0,)
    if bayes and spec.mismatch_fractions:
        raise ValueError("mismatch sweeps and prior-matched mode are exclusive")

    bounds = {}
    if bayes:
        expected_power = _expected_signal_power(dictionary, psi_prior, spec.scenario.n_pulses)
        prior_energy = spec.scenario.n_pulses * float(psi_prior.sum())
        for p, snr in enumerate(spec.sweep_values):
            sigma2 = expected_power / (
                10.0 ** (snr / 10.0) * spec.scenario.n_samples * spec.scenario.n_pulses
            )
            bounds[p] = bcrb(dictionary, psi_prior, sigma2, spec.scenario.n_pulses).total_bound / prior_energy

    def one_trial(trial: int) -> list:
        rows = []
        if bayes:
            base = synth_gaussian_ccir(
                spec.scenario, psi_prior, derive_seed(spec.master_seed, STREAM_SCENE, trial)
            )
        else:
            base = synth_ccir(
                spec.scenario, spec.scene_model, derive_seed(spec.master_seed, STREAM_SCENE, trial)
            )
        truths = [base]
        for f_idx, frac in enumerate(fractions[1:], start=1):
            truths.append(
                perturb_support(
                    base, frac, derive_seed(spec.master_seed, STREAM_MISMATCH, trial, f_idx)
                )
            )
        for p, snr in enumerate(spec.sweep_values):
            for f_idx, truth in enumerate(truths):
                sim_kwargs = {}
                if bayes:
                    sim_kwargs["signal_power"] = _expected_signal_power(
                        dictionary, psi_prior, spec.scenario.n_pulses
                    )
                ms = simulate(
                    dictionary,
                    truth,
                    float(snr),
                    derive_seed(spec.master_seed, STREAM_NOISE, p, trial, f_idx),
                    **sim_kwargs,
                )
                for a_idx, alg in enumerate(spec.algorithms):
                    label = alg if fractions[f_idx] == 0.0 else f"{alg}+mm{round(fractions[f_idx] * 100)}"
                    try:
                        est, _, wall = estimate_channel(
                            alg,
                            dictionary,
                            ms.Y,
                            ms.noise_variance,
                            spec.scenario,
                            derive_seed(spec.master_seed, STREAM_ESTIMATOR, p, trial, f_idx, a_idx),
                            spec.em,
                            oracle_sparsity=truth.support.size,
                        )
                        err = nmse(truth.values, est.values)
                    except Exception as exc:  # mid-run failure: record, continue
                        rows.append(
                            TrialRow(spec.sweep_name, float(snr), label, trial, float("nan"), 0.0, None)
                        )
                        rows.append(("error", f"{label}@{snr}dB trial {trial}: {exc}"))
                        continue
                    rows.append(
                        TrialRow(
                            spec.sweep_name,
                            float(snr),
                            label,
                            trial,
                            err,
                            _wall_ms(spec, wall),
                            bounds.get(p) if fractions[f_idx] == 0.0 else None,
                        )
                    )
        return rows

    return _pool_map(one_trial, range(spec.trials), spec.threads)


def _run_iteration_sweep(spec: ExperimentSpec) -> list:
    dictionary = build_dictionary(spec.scenario)
    checkpoints = sorted(int(v) for v in spec.sweep_values)
    bad = [a for a in spec.algorithms if a not in SBL_FAMILY]
    if bad:
        raise ValueError(f"iteration sweeps need EM algorithms, got: {', '.join(bad)}")

    def one_trial(trial: int) -> list:
        rows = []
        truth = synth_ccir(
            spec.scenario, spec.scene_model, derive_seed(spec.master_seed, STREAM_SCENE, trial)
        )
        ms = simulate(
            dictionary, truth, spec.snr_db, derive_seed(spec.master_seed, STREAM_NOISE, 0, trial)
        )
        for a_idx, alg in enumerate(spec.algorithms):
            est, trace, wall = estimate_channel(
                alg,
                dictionary,
                ms.Y,
                ms.noise_variance,
                spec.scenario,
                derive_seed(spec.master_seed, STREAM_ESTIMATOR, 0, trial, a_idx),
                spec.em,
                l_max=checkpoints[-1],
                keep_mean_at=set(checkpoints),
            )
            cum_wall = np.cumsum(trace.wall_time)
            for cp in checkpoints:
                mean = trace.means.get(cp)
                if mean is None:  # converged before cp: estimate is constant after
                    mean = est.values
                idx = min(cp, trace.iterations) - 1
                rows.append(
                    TrialRow(
                        spec.sweep_name,
                        float(cp),
                        alg,
                        trial,
                        nmse(truth.values, mean),
                        _wall_ms(spec, float(cum_wall[idx])),
                        None,
                    )
                )
        return rows

    return _pool_map(one_trial, range(spec.trials), spec.threads)


def _run_scenario_sweep(spec: ExperimentSpec) -> list:
    """Sweeps that rebuild the scenario per point: n_pulses, sparsity_level,
    group_len, n_rx."""
    points = []
    for value in spec.sweep_values:
        cfg, model = spec.scenario, spec.scene_model
        v = int(value)
        if spec.sweep_name == "n_pulses":
            cfg = replace(cfg, n_pulses=v)
        elif spec.sweep_name == "sparsity_level":
            model = replace(model, sparsity_level=v)
        elif spec.sweep_name == "group_len":
            cfg = replace(cfg, group_len=v)
            model = replace(model, group_len=v, sparsity_level=model.sparsity_level)
        elif spec.sweep_name == "n_rx":
            cfg = replace(cfg, n_rx=v)
        else:
            raise ValueError(f"unsupported scenario sweep {spec.sweep_name!r}")
        points.append((cfg, model, build_dictionary(cfg)))

    def one_task(task) -> list:
        p, trial = task
        cfg, model, dictionary = points[p]
        rows = []
        truth = synth_ccir(
            cfg, model, derive_seed(spec.master_seed, STREAM_SCENE, p, trial)
        )
        ms = simulate(
            dictionary, truth, spec.snr_db, derive_seed(spec.master_seed, STREAM_NOISE, p, trial)
        )
        for a_idx, alg in enumerate(spec.algorithms):
            try:
                est, _, wall = estimate_channel(
                    alg,
                    dictionary,
                    ms.Y,
                    ms.noise_variance,
                    cfg,
                    derive_seed(spec.master_seed, STREAM_ESTIMATOR, p, trial, a_idx),
                    spec.em,
                    oracle_sparsity=truth.support.size,
                )
                err = nmse(truth.values, est.values)
                rows.append(
                    TrialRow(
                        spec.sweep_name,
                        float(spec.sweep_values[p]),
                        alg,
                        trial,
                        err,
                        _wall_ms(spec, wall),
                        None,
                    )
                )
            except Exception as exc:
                rows.append(
                    TrialRow(
                        spec.sweep_name, float(spec.sweep_values[p]), alg, trial,
                        float("nan"), 0.0, None,
                    )
                )
                rows.append(("error", f"{alg}@{spec.sweep_values[p]} trial {trial}: {exc}"))
        return rows

    tasks = [(p, t) for p in range(len(points)) for t in range(spec.trials)]
    return _pool_map(one_task, tasks, spec.threads)


def _run_dynamic(spec: ExperimentSpec) -> list:
    dictionary = build_dictionary(spec.scenario)
    if not spec.schedule:
        raise ValueError("time_slot sweeps need a schedule")
    n_slots = max(end for (_, end), _ in spec.schedule)

    def one_trial(trial: int) -> list:
        rows = []
        base = synth_ccir(
            spec.scenario, spec.scene_model, derive_seed(spec.master_seed, STREAM_SCENE, trial)
        )
        slots = evolve_scene(
            base, list(spec.schedule), derive_seed(spec.master_seed, STREAM_EVOLVE, trial), n_slots
        )
        for a_idx, alg in enumerate(spec.algorithms):
            carried = None
            for slot_idx, truth in enumerate(slots, start=1):
                ms = simulate(
                    dictionary,
                    truth,
                    spec.snr_db,
                    derive_seed(spec.master_seed, STREAM_NOISE, slot_idx, trial),
                )
                l_max = spec.em.l_max if carried is None else spec.em.slot_l_max
                est, trace, wall = estimate_channel(
                    alg,
                    dictionary,
                    ms.Y,
                    ms.noise_variance,
                    spec.scenario,
                    derive_seed(spec.master_seed, STREAM_ESTIMATOR, slot_idx, trial, a_idx),
                    spec.em,
                    l_max=l_max,
                    init_psi=carried,
                )
                if trace is not None and trace.final_state is not None and trace.final_state.active.size:
                    carried = trace.final_state
                else:
                    carried = None
                rows.append(
                    TrialRow(
                        spec.sweep_name,
                        float(slot_idx),
                        alg,
                        trial,
                        nmse(truth.values, est.values),
                        _wall_ms(spec, wall),
                        None,
                    )
                )
        return rows

    return _pool_map(one_trial, range(spec.trials), spec.threads)


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Execute a sweep spec; write CSV/manifest/SVG artifacts when an
    output directory is configured."""
    spec.validate()
    if spec.sweep_name == "snr_db":
        buckets = _run_snr_sweep(spec)
    elif spec.sweep_name == "em_iterations":
        buckets = _run_iteration_sweep(spec)
    elif spec.sweep_name == "time_slot":
        buckets = _run_dynamic(spec)
    else:
        buckets = _run_scenario_sweep(spec)

    trial_rows, errors = [], []
    for bucket in buckets:
        for item in bucket:
            if isinstance(item, TrialRow):
                trial_rows.append(item)
            else:
                errors.append(item[1])
    alg_order = {}
    for row in trial_rows:
        alg_order.setdefault(row.algorithm, len(alg_order))
    trial_rows.sort(key=lambda r: (r.sweep_value, alg_order[r.algorithm], r.trial))

    table = aggregate(spec.sweep_name, trial_rows)
    table.errors = errors
    if spec.output_dir is not None:
        _write_artifacts(spec, table)
    return table


# --- MVDR / SCNR experiment --------------------------------------------------


def slow_time_covariance(signal: np.ndarray) -> np.ndarray:
    """Pulse-domain sample covariance over all spatial/fast-time samples."""
    return signal.conj().T @ signal / signal.shape[0]


def mvdr_weights(cov: np.ndarray, steering: np.ndarray) -> tuple[np.ndarray, bool]:
    """Distortionless minimum-variance weights; falls back to diagonal
    loading on a singular covariance and reports that it did."""
    loaded = False
    try:
        solved = np.linalg.solve(cov, steering)
    except np.linalg.LinAlgError:
        loaded = True
        loading = 1e-8 * float(np.trace(cov).real) / cov.shape[0] + MIN_NOISE_VAR
        solved = np.linalg.solve(cov + loading * np.eye(cov.shape[0]), steering)
    gain = np.vdot(steering, solved)
    return solved / gain, loaded


def output_scnr(
    weights: np.ndarray,
    steering: np.ndarray,
    target_power: float,
    true_cov: np.ndarray,
) -> float:
    """Target power through the beamformer over clutter-plus-noise power."""
    signal = target_power * abs(np.vdot(weights, steering)) ** 2
    interference = float(np.real(weights.conj() @ true_cov @ weights))
    return signal / interference


def doppler_steering(n_pulses: int, pri: float, velocity_mps: float, carrier_hz: float) -> np.ndarray:
    """Slow-time target signature p(k) = exp(j 2 pi f_d k T)."""
    f_d = 2.0 * velocity_mps * carrier_hz / 299_792_458.0
    k = np.arange(n_pulses)
    return np.exp(2j * np.pi * f_d * k * pri)


def run_mvdr_scnr(
    spec: ExperimentSpec,
    mismatch_fractions=None,
    check_ordering: bool = True,
) -> ResultTable:
    """Beamformer impact experiment across the SNR sweep.

    Scenario labels: `clairvoyant` designs the filter from the true
    clutter channel, `estimated` from the structured estimate on the
    clean scene, `mismatch-P` from estimates on scenes with P% extra
    off-structure scatterers (each evaluated in its own environment).
    Asserts the mean SCNR ordering clairvoyant >= estimated >= mismatched
    unless `check_ordering` is disabled.
    """
    spec.validate()
    fractions = tuple(mismatch_fractions if mismatch_fractions is not None else spec.mismatch_fractions)
    cfg = spec.scenario
    dictionary = build_dictionary(cfg)
    r_t = spec.mvdr.target_range_bin if spec.mvdr.target_range_bin >= 0 else cfg.n_range_bins // 2
    target_rows = _bins_to_rows(np.array([r_t]), cfg.n_tx, cfg.n_rx, cfg.n_range_bins)
    h_target = np.zeros(cfg.n_coeffs, dtype=complex)
    h_target[target_rows] = 1.0
    target_gain = dictionary.apply(h_target)
    target_power = float(np.mean(np.abs(target_gain) ** 2))
    steering = doppler_steering(
        cfg.n_pulses, cfg.pri, spec.mvdr.target_velocity_mps, spec.mvdr.carrier_hz
    )
    estimator = next((a for a in spec.algorithms if a in SBL_FAMILY), "CoFGBL")
    scenarios = ["clairvoyant", "estimated"] + [f"mismatch-{round(f * 100)}" for f in fractions]

    def one_trial(task) -> list:
        p, trial = task
        snr = float(spec.sweep_values[p])
        base = synth_ccir(cfg, spec.scene_model, derive_seed(spec.master_seed, STREAM_SCENE, trial))
        rows = []

        def scnr_for(truth: CcirMatrix, estimate: CcirMatrix | None, noise_var: float) -> float:
            true_cov = slow_time_covariance(dictionary.apply(truth.values))
            true_cov = true_cov + noise_var * np.eye(cfg.n_pulses)
            source = truth if estimate is None else estimate
            design = slow_time_covariance(dictionary.apply(source.values))
            design = design + noise_var * np.eye(cfg.n_pulses)
            w, _ = mvdr_weights(design, steering)
            return output_scnr(w, steering, target_power, true_cov)

        ms0 = simulate(dictionary, base, snr, derive_seed(spec.master_seed, STREAM_NOISE, p, trial, 0))
        est0, _, _ = estimate_channel(
            estimator, dictionary, ms0.Y, ms0.noise_variance, cfg,
            derive_seed(spec.master_seed, STREAM_ESTIMATOR, p, trial, 0), spec.em,
            oracle_sparsity=base.support.size,
        )
        values = {
            "clairvoyant": scnr_for(base, None, ms0.noise_variance),
            "estimated": scnr_for(base, est0, ms0.noise_variance),
        }
        for f_idx, frac in enumerate(fractions, start=1):
            truth_f = perturb_support(
                base, frac, derive_seed(spec.master_seed, STREAM_MISMATCH, trial, f_idx)
            )
            ms_f = simulate(
                dictionary, truth_f, snr, derive_seed(spec.master_seed, STREAM_NOISE, p, trial, f_idx)
            )
            est_f, _, _ = estimate_channel(
                estimator, dictionary, ms_f.Y, ms_f.noise_variance, cfg,
                derive_seed(spec.master_seed, STREAM_ESTIMATOR, p, trial, f_idx), spec.em,
                oracle_sparsity=base.support.size,
            )
            values[f"mismatch-{round(frac * 100)}"] = scnr_for(truth_f, est_f, ms_f.noise_variance)
        for scenario in scenarios:
            rows.append(
                TrialRow(
                    "snr_db",
                    snr,
                    scenario,
                    trial,
                    10.0 * math.log10(values[scenario]),
                    0.0,
                    None,
                )
            )
        return rows

    tasks = [(p, t) for p in range(len(spec.sweep_values)) for t in range(spec.trials)]
    buckets = _pool_map(one_trial, tasks, spec.threads)
    trial_rows = [row for bucket in buckets for row in bucket]
    order = {name: i for i, name in enumerate(scenarios)}
    trial_rows.sort(key=lambda r: (r.sweep_value, order[r.algorithm], r.trial))
    table = aggregate("snr_db", trial_rows)

    if check_ordering:
        for snr in spec.sweep_values:
            means = [table.mean_nmse(float(snr), s) for s in scenarios]
            if not all(a >= b - 1e-12 for a, b in zip(means, means[1:])):
                raise RuntimeError(
                    f"SCNR ordering violated at {snr} dB: "
                    + ", ".join(f"{s}={m:.2f}" for s, m in zip(scenarios, means))
                )

    if spec.output_dir is not None:
        out = Path(spec.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "mvdr_scnr.csv", MVDR_CSV_HEADER, table.trial_rows)
        series = [
            (
                scenario,
                [float(v) for v in spec.sweep_values],
                [table.mean_nmse(float(v), scenario) for v in spec.sweep_values],
            )
            for scenario in scenarios
        ]
        line_plot(
            out / "mvdr_scnr.svg",
            f"{spec.name}: beamformer output",
            "SNR (dB)",
            "output SCNR (dB)",
            series,
        )
        _write_manifest(out, spec)
    return table


# --- timing experiment -------------------------------------------------------


def run_timing(spec: ExperimentSpec, checkpoints=(10, 20, 30, 40, 50)) -> ResultTable:
    """Accuracy/runtime trade-off of the dense and covariance-free E-steps.

    Reports NMSE (as a percentage when multiplied by 100) and cumulative
    wall time at the given EM iteration checkpoints for `SBL-full` and
    `CoFBL` on identical measurements.
    """
    spec.validate()
    for required in ("SBL-full", "CoFBL"):
        if required not in spec.algorithms:
            raise ValueError("timing runs need both SBL-full and CoFBL")
    dictionary = build_dictionary(spec.scenario)
    checkpoints = sorted(int(c) for c in checkpoints)
    rows = []
    for trial in range(spec.trials):
        truth = synth_ccir(
            spec.scenario, spec.scene_model, derive_seed(spec.master_seed, STREAM_SCENE, trial)
        )
        ms = simulate(
            dictionary, truth, spec.snr_db, derive_seed(spec.master_seed, STREAM_NOISE, 0, trial)
        )
        for a_idx, alg in enumerate(("SBL-full", "CoFBL")):
            est, trace, _ = estimate_channel(
                alg,
                dictionary,
                ms.Y,
                ms.noise_variance,
                spec.scenario,
                derive_seed(spec.master_seed, STREAM_ESTIMATOR, 0, trial, a_idx),
                spec.em,
                l_max=checkpoints[-1],
                keep_mean_at=set(checkpoints),
            )
            cum_wall = np.cumsum(trace.wall_time)
            for cp in checkpoints:
                mean = trace.means.get(cp)
                if mean is None:
                    mean = est.values
                idx = min(cp, trace.iterations) - 1
                rows.append(
                    TrialRow(
                        "em_iteration",
                        float(cp),
                        alg,
                        trial,
                        nmse(truth.values, mean),
                        float(cum_wall[idx]) * 1e3,
                        None,
                    )
                )
    table = aggregate("em_iteration", rows)
    if spec.output_dir is not None:
        out = Path(spec.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "results.csv", CSV_HEADER, rows)
        _write_manifest(out, spec)
    return table


# --- artifacts ---------------------------------------------------------------


def _format_float(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return repr(float(value))


def _write_rows(path, header: str, rows) -> None:
    lines = [header]
    for r in rows:
        fields = [r.sweep_name, _format_float(r.sweep_value), r.algorithm, str(r.trial),
                  _format_float(r.nmse)]
        if header == CSV_HEADER:
            fields.append(_format_float(r.wall_ms))
            fields.append("" if r.bcrb is None else _format_float(r.bcrb))
        lines.append(",".join(fields))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_results_csv(path, trial_rows) -> None:
    _write_rows(path, CSV_HEADER, trial_rows)


def read_results_csv(path) -> list:
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0] not in (CSV_HEADER, MVDR_CSV_HEADER):
        raise ValueError("unrecognized results file")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        bound = None
        wall = 0.0
        if lines[0] == CSV_HEADER:
            wall = float(parts[5])
            if len(parts) >= 7 and parts[6] != "":
                bound = float(parts[6])
        rows.append(
            TrialRow(
                sweep_name=parts[0],
                sweep_value=float(parts[1]),
                algorithm=parts[2],
                trial=int(parts[3]),
                nmse=float(parts[4]),
                wall_ms=wall,
                bcrb=bound,
            )
        )
    return rows


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_manifest(out_dir: Path, spec: ExperimentSpec) -> None:
    from . import __version__

    lines = [
        f"experiment {spec.name}",
        f"kind {spec.kind}",
        f"sweep {spec.sweep_name} = {', '.join(str(v) for v in spec.sweep_values)}",
        f"algorithms {', '.join(spec.algorithms)}",
        f"trials {spec.trials}",
        f"master_seed {spec.master_seed}",
        f"snr_db {spec.snr_db}",
        f"scenario n_tx={spec.scenario.n_tx} n_rx={spec.scenario.n_rx} "
        f"n_range_bins={spec.scenario.n_range_bins} n_pulses={spec.scenario.n_pulses} "
        f"waveform_len={spec.scenario.waveform_len} group_len={spec.scenario.group_len}",
        f"scene model={spec.scene_model.kind} sparsity_level={spec.scene_model.sparsity_level} "
        f"group_len={spec.scene_model.group_len}",
        f"estimator eps={spec.em.eps} l_max={spec.em.l_max} prune={spec.em.prune_threshold} "
        f"probes={spec.em.n_probes} cg_tol={spec.em.cg_tol} jacobi={spec.em.jacobi}",
        f"record_timing {spec.record_timing}",
        f"package cofbl {__version__}",
        f"build {_git_describe()}",
    ]
    with open(out_dir / "manifest.txt", "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _plot_table(out_dir: Path, name: str, sweep_name: str, trial_rows: list) -> None:
    table = aggregate(sweep_name, trial_rows)
    algorithms = []
    for row in table.rows:
        if row.algorithm not in algorithms:
            algorithms.append(row.algorithm)
    values = sorted({row.sweep_value for row in table.rows})

    series = []
    for alg in algorithms:
        ys = []
        for v in values:
            try:
                m = table.mean_nmse(v, alg)
            except Exception:
                m = float("nan")
            ys.append(10.0 * math.log10(m) if m and m > 0 else float("nan"))
        series.append((alg, values, ys))
    dashed = set()
    bound_curve = [
        (v, next((r.bcrb for r in table.rows if r.sweep_value == v and r.bcrb is not None), None))
        for v in values
    ]
    if any(b is not None for _, b in bound_curve):
        xs = [v for v, b in bound_curve if b is not None]
        ys = [10.0 * math.log10(b) for _, b in bound_curve if b is not None and b > 0]
        series.append(("BCRB", xs, ys))
        dashed.add("BCRB")
    line_plot(
        out_dir / f"{name}_nmse.svg",
        f"{name}: estimation error",
        sweep_name,
        "NMSE (dB)",
        series,
        dashed=dashed,
    )

    if any(r.wall_ms > 0 for r in trial_rows):
        series_t = []
        for alg in algorithms:
            ys = []
            for v in values:
                walls = [r.wall_ms for r in trial_rows if r.algorithm == alg and r.sweep_value == v]
                ys.append(float(np.nanmean(walls)) if walls else float("nan"))
            series_t.append((alg, values, ys))
        line_plot(
            out_dir / f"{name}_wall_ms.svg",
            f"{name}: runtime",
            sweep_name,
            "wall time (ms)",
            series_t,
        )


def _write_artifacts(spec: ExperimentSpec, table: ResultTable) -> None:
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "results.csv", CSV_HEADER, table.trial_rows)
    _write_manifest(out, spec)
    _plot_table(out, spec.name, table.sweep_name, table.trial_rows)
    if table.errors:
        with open(out / "errors.txt", "w", encoding="ascii") as fh:
            fh.write("\n".join(table.errors) + "\n")


def replot(csv_path, out_dir) -> None:
    """Regenerate plots purely from a results CSV."""
    rows = read_results_csv(csv_path)
    if not rows:
        raise ValueError("results file holds no rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _plot_table(out, Path(csv_path).stem, rows[0].sweep_name, rows)


# --- configuration files -----------------------------------------------------


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_schedule(text: str) -> tuple:
    phases = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        span, _, change = token.partition(":")
        lo, _, hi = span.partition("-")
        phases.append(((int(lo), int(hi)), float(change)))
    return tuple(phases)


def parse_config(path, overrides: dict | None = None) -> ExperimentSpec:
    """Read an experiment spec from a key/value sections file.

    `overrides` (from CLI flags) replace file values after parsing:
    recognized keys are master_seed, output_dir, algorithms, trials, and
    threads.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file {path}")
    try:
        exp = parser["experiment"]
        scn = parser["scenario"]
        scene = parser["scene"]
    except KeyError as exc:
        raise ValueError(f"config is missing section {exc}") from exc

    scenario = RadarConfig(
        n_tx=scn.getint("n_tx"),
        n_rx=scn.getint("n_rx"),
        n_range_bins=scn.getint("n_range_bins"),
        n_pulses=scn.getint("n_pulses"),
        waveform_len=scn.getint("waveform_len"),
        bandwidths=_parse_floats(scn.get("bandwidths")),
        pri=scn.getfloat("pri"),
        amplitudes=_parse_floats(scn.get("amplitudes")),
        noise_variance=scn.getfloat("noise_variance", fallback=1.0),
        group_len=scn.getint("group_len", fallback=1),
    )
    scene_model = SparsityModel(
        kind=scene.get("model"),
        sparsity_level=scene.getint("sparsity_level"),
        group_len=scene.getint("group_len", fallback=scenario.group_len),
    )
    em = EmSettings(
        eps=parser.getfloat("estimator", "eps", fallback=1e-4),
        l_max=parser.getint("estimator", "l_max", fallback=40),
        prune_threshold=parser.getfloat("estimator", "prune_threshold", fallback=1e-6),
        n_probes=parser.getint("estimator", "n_probes", fallback=20),
        cg_tol=parser.getfloat("estimator", "cg_tol", fallback=1e-6),
        jacobi=parser.getboolean("estimator", "jacobi", fallback=True),
        warm_start=parser.getboolean("estimator", "warm_start", fallback=True),
        slot_l_max=parser.getint("estimator", "slot_l_max", fallback=8),
    )
    mvdr = MvdrSettings(
        target_velocity_mps=parser.getfloat("mvdr", "target_velocity_mps", fallback=27.778),
        carrier_hz=parser.getfloat("mvdr", "carrier_hz", fallback=1.0e9),
        target_range_bin=parser.getint("mvdr", "target_range_bin", fallback=-1),
    )
    spec = ExperimentSpec(
        name=exp.get("name", fallback=Path(path).stem),
        scenario=scenario,
        scene_model=scene_model,
        sweep_name=exp.get("sweep", fallback="snr_db"),
        sweep_values=_parse_floats(exp.get("values", fallback="10")),
        algorithms=tuple(a.strip() for a in exp.get("algorithms", fallback="CoFBL").split(",")),
        trials=exp.getint("trials", fallback=1),
        master_seed=exp.getint("master_seed", fallback=0),
        kind=exp.get("kind", fallback="sweep"),
        snr_db=scene.getfloat("snr_db", fallback=10.0),
        em=em,
        mvdr=mvdr,
        mismatch_fractions=_parse_floats(scene.get("mismatch_fractions", fallback="")),
        prior_floor=scene.getfloat("prior_floor", fallback=0.0),
        schedule=_parse_schedule(exp.get("schedule", fallback="")),
        record_timing=exp.getboolean("record_timing", fallback=False),
        threads=exp.getint("threads", fallback=1),
    )
    if overrides:
        clean = {}
        if "master_seed" in overrides and overrides["master_seed"] is not None:
            clean["master_seed"] = int(overrides["master_seed"])
        if "output_dir" in overrides and overrides["output_dir"] is not None:
            clean["output_dir"] = Path(overrides["output_dir"])
        if "algorithms" in overrides and overrides["algorithms"] is not None:
            clean["algorithms"] = tuple(a.strip() for a in overrides["algorithms"].split(","))
        if "trials" in overrides and overrides["trials"] is not None:
            clean["trials"] = int(overrides["trials"])
        if "threads" in overrides and overrides["threads"] is not None:
            clean["threads"] = int(overrides["threads"])
        spec = replace(spec, **clean)
    spec.validate()
    return spec
