"""Synthetic sparse clutter-channel scenes and noisy measurement simulation.

Scenes stand in for recorded clutter data: supports are drawn uniformly at
random subject to the selected sparsity structure, the nonzero rows carry
i.i.d. unit-variance complex Gaussian entries, and everything is
reproducible from an integer seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ConvolutionDictionary, RadarConfig

ROW = "row"
GROUP = "group"
JOINT = "joint"
JOINT_GROUP = "joint-group"
MODEL_KINDS = (ROW, GROUP, JOINT, JOINT_GROUP)


@dataclass(frozen=True)
class SparsityModel:
    """Support structure of a scene.

    `sparsity_level` counts active coefficient rows for row/group models
    and active range bins for joint/joint-group models.  Grouped kinds
    require the level to be a multiple of `group_len`.
    """

    kind: str
    sparsity_level: int
    group_len: int = 1

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown sparsity model kind {self.kind!r}")
        if self.sparsity_level < 0:
            raise ValueError("sparsity_level must be non-negative")
        if self.group_len < 1:
            raise ValueError("group_len must be >= 1")
        if self.kind in (GROUP, JOINT_GROUP) and self.sparsity_level % self.group_len:
            raise ValueError("sparsity_level must be divisible by group_len")

    @property
    def grouped(self) -> bool:
        return self.kind in (GROUP, JOINT_GROUP)


@dataclass(frozen=True)
class CcirMatrix:
    """Channel matrix with row-support metadata."""

    values: np.ndarray
    support: np.ndarray
    model: SparsityModel

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_pulses(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MeasurementSet:
    """Noisy pulse block Y = X~ H + V, replayable from `noise_seed`."""

    Y: np.ndarray
    snr_db: float
    noise_seed: int
    noise_variance: float
    truth: CcirMatrix

    def noise(self) -> np.ndarray:
        """Regenerate the exact noise realization added to the signal."""
        return _complex_noise(self.Y.shape, self.noise_variance, self.noise_seed)


def canonical_seed(seed) -> int:
    """Stable integer key for any accepted seed form (int or SeedSequence)."""
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return int(ss.generate_state(1, np.uint64)[0])


def _complex_noise(shape, variance: float, seed) -> np.ndarray:
    if variance == 0.0:
        return np.zeros(shape, dtype=complex)
    rng = np.random.default_rng(seed)
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _draw_support(config: RadarConfig, model: SparsityModel, rng: np.random.Generator) -> np.ndarray:
    """Uniform structured support as sorted coefficient-row indices."""
    n, m, r = config.n_tx, config.n_rx, config.n_range_bins
    total = config.n_coeffs
    d = model.group_len
    s = model.sparsity_level
    if model.kind == ROW:
        if s > total:
            raise ValueError("sparsity_level exceeds coefficient count")
        rows = rng.choice(total, size=s, replace=False)
    elif model.kind == GROUP:
        if total % d:
            raise ValueError("group_len must divide the coefficient count")
        if s > total:
            raise ValueError("sparsity_level exceeds coefficient count")
        blocks = rng.choice(total // d, size=s // d, replace=False)
        rows = (blocks[:, None] * d + np.arange(d)).ravel()
    elif model.kind == JOINT:
        if s > r:
            raise ValueError("sparsity_level exceeds range-bin count")
        bins = rng.choice(r, size=s, replace=False)
        rows = _bins_to_rows(bins, n, m, r)
    else:  # JOINT_GROUP
        if r % d:
            raise ValueError("group_len must divide the range-bin count")
        if s > r:
            raise ValueError("sparsity_level exceeds range-bin count")
        blocks = rng.choice(r // d, size=s // d, replace=False)
        bins = (blocks[:, None] * d + np.arange(d)).ravel()
        rows = _bins_to_rows(bins, n, m, r)
    return np.sort(rows)


def _bins_to_rows(bins: np.ndarray, n_tx: int, n_rx: int, n_range_bins: int) -> np.ndarray:
    offsets = (
        np.arange(n_rx)[:, None] * n_tx * n_range_bins
        + np.arange(n_tx)[None, :] * n_range_bins
    ).ravel()
    return (offsets[:, None] + np.asarray(bins)[None, :]).ravel()


def synth_ccir(config: RadarConfig, model: SparsityModel, seed) -> CcirMatrix:
    """Draw a structured row-sparse channel matrix.

    Nonzero rows are filled with i.i.d. unit-variance complex Gaussian
    entries across all pulses, so the simultaneous-sparsity invariant
    holds by construction.
    """
    rng = np.random.default_rng(seed)
    support = _draw_support(config, model, rng)
    values = np.zeros((config.n_coeffs, config.n_pulses), dtype=complex)
    if support.size:
        values[support] = _complex_gaussian(rng, (support.size, config.n_pulses))
    return CcirMatrix(values=values, support=support, model=model)


def synth_gaussian_ccir(config: RadarConfig, row_variances: np.ndarray, seed) -> CcirMatrix:
    """Draw every row from a zero-mean complex Gaussian with the given variance.

    Used for prior-matched benchmarking: the resulting matrix is dense
    (full support), and its generating prior is exactly the diagonal
    variance vector handed in.
    """
    row_variances = np.asarray(row_variances, dtype=float)
    if row_variances.shape != (config.n_coeffs,):
        raise ValueError("row_variances must have one entry per coefficient")
    if np.any(row_variances <= 0):
        raise ValueError("row_variances must be strictly positive")
    rng = np.random.default_rng(seed)
    values = _complex_gaussian(rng, (config.n_coeffs, config.n_pulses))
    values *= np.sqrt(row_variances)[:, None]
    model = SparsityModel(kind=ROW, sparsity_level=config.n_coeffs)
    return CcirMatrix(values=values, support=np.arange(config.n_coeffs), model=model)


def structure_ok(
    support: np.ndarray,
    kind: str,
    n_tx: int,
    n_rx: int,
    n_range_bins: int,
    group_len: int = 1,
) -> bool:
    """Independent scanner: does `support` satisfy the declared structure?

    Deliberately avoids the generator's bookkeeping; it inspects the raw
    index set only.
    """
    support = np.asarray(sorted(set(int(i) for i in support)))
    total = n_tx * n_rx * n_range_bins
    if support.size and (support.min() < 0 or support.max() >= total):
        return False
    if kind == ROW:
        return True
    if kind == GROUP:
        active = np.zeros(total, dtype=bool)
        active[support] = True
        blocks = active.reshape(-1, group_len)
        return bool(np.all(blocks.all(axis=1) | ~blocks.any(axis=1)))
    # joint kinds: compare per-(m, n) bin sets
    bin_sets = []
    for m in range(n_rx):
        for n in range(n_tx):
            lo = (m * n_tx + n) * n_range_bins
            bins = support[(support >= lo) & (support < lo + n_range_bins)] - lo
            bin_sets.append(frozenset(int(b) for b in bins))
    if len(set(bin_sets)) != 1:
        return False
    if kind == JOINT:
        return True
    if kind == JOINT_GROUP:
        active = np.zeros(n_range_bins, dtype=bool)
        active[list(bin_sets[0])] = True
        blocks = active.reshape(-1, group_len)
        return bool(np.all(blocks.all(axis=1) | ~blocks.any(axis=1)))
    raise ValueError(f"unknown sparsity model kind {kind!r}")


def simulate(
    dictionary: ConvolutionDictionary,
    ccir: CcirMatrix,
    snr_db: float,
    seed,
    signal_power: float | None = None,
) -> MeasurementSet:
    """Add complex white Gaussian noise at the requested block SNR.

    SNR is defined over the whole measurement block:
    10*log10(||X~ H||_F^2 / E||V||_F^2) = snr_db.  Pass `signal_power` to
    pin the noise variance from an ensemble-average signal power instead
    of this realization's.  `snr_db = inf` disables noise entirely.
    """
    if ccir.n_rows != dictionary.n_coeffs:
        raise ValueError("channel matrix does not conform to the dictionary")
    key = canonical_seed(seed)
    signal = dictionary.apply(ccir.values)
    if math.isinf(snr_db) and snr_db > 0:
        return MeasurementSet(
            Y=signal, snr_db=snr_db, noise_seed=key, noise_variance=0.0, truth=ccir
        )
    power = float(np.linalg.norm(signal) ** 2) if signal_power is None else float(signal_power)
    if power == 0.0:
        raise ValueError("zero-signal scene has no defined SNR; use snr_db=inf")
    variance = power / (10.0 ** (snr_db / 10.0) * signal.size)
    noise = _complex_noise(signal.shape, variance, key)
    return MeasurementSet(
        Y=signal + noise,
        snr_db=snr_db,
        noise_seed=key,
        noise_variance=variance,
        truth=ccir,
    )


def perturb_support(ccir: CcirMatrix, mismatch_fraction: float, seed) -> CcirMatrix:
    """Activate extra rows at random off-structure locations.

    Adds ceil(fraction * |support|) rows outside the current support with
    fresh unit-variance Gaussian entries; existing rows are untouched.
    """
    if not 0.0 <= mismatch_fraction <= 1.0:
        raise ValueError("mismatch_fraction must lie in [0, 1]")
    n_add = math.ceil(mismatch_fraction * ccir.support.size)
    if n_add == 0:
        return ccir
    candidates = np.setdiff1d(np.arange(ccir.n_rows), ccir.support)
    if n_add > candidates.size:
        raise ValueError("not enough inactive rows to add the requested mismatch")
    rng = np.random.default_rng(seed)
    extra = np.sort(rng.choice(candidates, size=n_add, replace=False))
    values = ccir.values.copy()
    values[extra] = _complex_gaussian(rng, (n_add, ccir.n_pulses))
    support = np.sort(np.concatenate([ccir.support, extra]))
    return CcirMatrix(values=values, support=support, model=ccir.model)


def evolve_scene(
    ccir: CcirMatrix,
    schedule: list[tuple[tuple[int, int], float]],
    seed=0,
    n_slots: int | None = None,
) -> list[CcirMatrix]:
    """Per-slot scene sequence with scheduled support changes.

    `schedule` lists (slot_range, fractional_change) phases with 1-based
    inclusive slot ranges; a change of -0.10 at a phase start keeps
    ceil(0.9 * current) support rows.  Entries of persisting rows are
    redrawn each slot (fresh realization, fixed support within a phase).
    """
    rng = np.random.default_rng(seed)
    if n_slots is None:
        n_slots = max((rng_end for (_, rng_end), _ in schedule), default=0)
    phases = sorted(schedule, key=lambda item: item[0][0])
    change_at = {start: change for (start, _), change in phases}

    support = ccir.support.copy()
    slots: list[CcirMatrix] = []
    for slot in range(1, n_slots + 1):
        if slot in change_at:
            change = change_at[slot]
            new_size = math.ceil((1.0 + change) * support.size)
            if new_size < 0:
                raise ValueError("schedule removes more rows than exist")
            if new_size < support.size:
                keep = rng.choice(support.size, size=new_size, replace=False)
                support = np.sort(support[keep])
            elif new_size > support.size:
                pool = np.setdiff1d(np.arange(ccir.n_rows), support)
                if new_size - support.size > pool.size:
                    raise ValueError("schedule adds more rows than available")
                extra = rng.choice(pool, size=new_size - support.size, replace=False)
                support = np.sort(np.concatenate([support, extra]))
        values = np.zeros_like(ccir.values)
        if support.size:
            values[support] = _complex_gaussian(rng, (support.size, ccir.n_pulses))
        slots.append(CcirMatrix(values=values, support=support.copy(), model=ccir.model))
    return slots


# --- textual scene fixtures ------------------------------------------------

SCENE_FORMAT_TAG = "cofbl-scene 1"


def save_scene(path, ccir: CcirMatrix, config: RadarConfig, seed: int | None = None) -> None:
    """Write a scene as a plain-text fixture (header + row-indexed entries)."""
    lines = [SCENE_FORMAT_TAG]
    lines.append(f"n_tx {config.n_tx}")
    lines.append(f"n_rx {config.n_rx}")
    lines.append(f"n_range_bins {config.n_range_bins}")
    lines.append(f"n_pulses {config.n_pulses}")
    lines.append(f"model {ccir.model.kind}")
    lines.append(f"sparsity_level {ccir.model.sparsity_level}")
    lines.append(f"group_len {ccir.model.group_len}")
    lines.append(f"seed {-1 if seed is None else seed}")
    for i in ccir.support:
        entries = " ".join(
            f"{float(z.real)!r},{float(z.imag)!r}" for z in ccir.values[i]
        )
        lines.append(f"row {int(i)} {entries}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scene(path) -> tuple[CcirMatrix, dict]:
    """Read a scene fixture written by :func:`save_scene`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != SCENE_FORMAT_TAG:
        raise ValueError("unrecognized scene file format")
    header: dict = {}
    rows: list[tuple[int, np.ndarray]] = []
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        if key == "row":
            idx_str, _, entries = rest.partition(" ")
            vals = np.array(
                [complex(*map(float, token.split(","))) for token in entries.split()]
            )
            rows.append((int(idx_str), vals))
        elif key == "model":
            header[key] = rest
        else:
            header[key] = int(rest)
    n_rows = header["n_tx"] * header["n_rx"] * header["n_range_bins"]
    values = np.zeros((n_rows, header["n_pulses"]), dtype=complex)
    support = np.array(sorted(idx for idx, _ in rows), dtype=int)
    for idx, vals in rows:
        values[idx] = vals
    model = SparsityModel(
        kind=header["model"],
        sparsity_level=header["sparsity_level"],
        group_len=header["group_len"],
    )
    return CcirMatrix(values=values, support=support, model=model), header
