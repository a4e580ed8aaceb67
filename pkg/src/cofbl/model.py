"""Transmit waveforms and the structured convolution dictionary.

The measurement operator maps a stacked channel matrix onto noiseless
receive samples.  Per transmit antenna n the waveform x_n generates a
banded Toeplitz block X_n of shape (L+R-1) x R; the receive antennas all
see the horizontal concatenation X = [X_1 ... X_N], so the full operator
is the block-diagonal I_M (x) X with shape M(L+R-1) x NMR.

Coefficient layout (0-based): index = m*N*R + n*R + r, i.e. channels are
stacked transmit-major inside each receive-antenna block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

# Materialization guard: dense forms are for oracles/tests only.
DENSE_COLUMN_CAP = 4096


@dataclass(frozen=True)
class RadarConfig:
    """Scenario dimensions and physical parameters.

    Attributes
    ----------
    n_tx, n_rx : int
        Transmit (N) and receive (M) antenna counts.
    n_range_bins : int
        Range bins R per transmit-receive channel.
    n_pulses : int
        Pulses K collected per measurement block.
    waveform_len : int
        Samples L per transmitted pulse.
    bandwidths : tuple of float
        Sweep bandwidth per transmitter, Hz.
    pri : float
        Pulse repetition interval, seconds.
    amplitudes : tuple of float
        Constant modulus per transmitter.
    noise_variance : float
        Receiver noise variance (linear scale), used when no SNR target
        overrides it.
    group_len : int
        Cluster length d for grouped sparsity models; must divide R
        whenever it exceeds 1.
    bandwidths_non_overlapping : bool
        Recorded scenario metadata; the baseband model does not place
        carriers, so this is informational only.
    """

    n_tx: int
    n_rx: int
    n_range_bins: int
    n_pulses: int
    waveform_len: int
    bandwidths: tuple[float, ...]
    pri: float
    amplitudes: tuple[float, ...]
    noise_variance: float = 1.0
    group_len: int = 1
    bandwidths_non_overlapping: bool = True

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_range_bins", "n_pulses", "waveform_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        object.__setattr__(self, "bandwidths", tuple(float(b) for b in self.bandwidths))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if len(self.bandwidths) != self.n_tx:
            raise ValueError("bandwidths must have one entry per transmitter")
        if len(self.amplitudes) != self.n_tx:
            raise ValueError("amplitudes must have one entry per transmitter")
        if any(b < 0 for b in self.bandwidths):
            raise ValueError("bandwidths must be non-negative")
        if self.pri <= 0:
            raise ValueError("pri must be positive")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive")
        if self.group_len < 1:
            raise ValueError("group_len must be >= 1")
        if self.group_len > 1 and self.n_range_bins % self.group_len != 0:
            raise ValueError("group_len must divide n_range_bins")

    @property
    def n_coeffs(self) -> int:
        """Total channel coefficients NMR."""
        return self.n_tx * self.n_rx * self.n_range_bins

    @property
    def block_rows(self) -> int:
        """Rows of one Toeplitz block, L+R-1."""
        return self.waveform_len + self.n_range_bins - 1

    @property
    def n_samples(self) -> int:
        """Rows of the stacked operator, M(L+R-1)."""
        return self.n_rx * self.block_rows

    def coeff_index(self, m: int, n: int, r: int) -> int:
        """Flat coefficient index for receive m, transmit n, range bin r."""
        return (m * self.n_tx + n) * self.n_range_bins + r


@dataclass(frozen=True)
class Waveform:
    """Sampled baseband pulse of one transmitter."""

    samples: np.ndarray
    tx_index: int


def gen_lfm(config: RadarConfig, tx_index: int) -> Waveform:
    """Generate the chirp pulse of transmitter `tx_index`.

    The pulse is sampled on the common grid t = 0, T/L, ..., (L-1)T/L and
    has quadratic phase with ramp rate B_n/(2T):

        samples[t] = A_n * exp(j*2*pi * (B_n/(2T)) * (t*T/L)**2)

    Zero bandwidth degenerates to the constant vector A_n * ones(L).
    """
    if not 0 <= tx_index < config.n_tx:
        raise ValueError("tx_index out of range")
    amp = config.amplitudes[tx_index]
    ramp = config.bandwidths[tx_index] / (2.0 * config.pri)
    t = np.arange(config.waveform_len) * (config.pri / config.waveform_len)
    samples = amp * np.exp(2j * np.pi * ramp * t * t)
    return Waveform(samples=samples, tx_index=tx_index)


def build_block(waveform: Waveform, n_range_bins: int) -> np.ndarray:
    """Dense banded Toeplitz block of shape (L+R-1) x R.

    Entry (i, j) is x[i-j] for 0 <= i-j < L and zero elsewhere, so the
    product with a channel vector is the full linear convolution.
    """
    x = np.asarray(waveform.samples)
    length = x.shape[0]
    rows = length + n_range_bins - 1
    block = np.zeros((rows, n_range_bins), dtype=complex)
    for j in range(n_range_bins):
        block[j : j + length, j] = x
    return block


class ConvolutionDictionary:
    """Stacked convolution operator with FFT-accelerated apply/adjoint.

    Holds the N waveforms and pre-computed spectra; never materializes the
    dense matrix except through :meth:`materialize`, which is capped for
    oracle-sized problems.
    """

    def __init__(self, waveforms: list[Waveform], n_rx: int, n_range_bins: int):
        if not waveforms:
            raise ValueError("at least one waveform required")
        lengths = {w.samples.shape[0] for w in waveforms}
        if len(lengths) != 1:
            raise ValueError("waveforms must share a common sample grid")
        self.waveforms = list(waveforms)
        self.n_tx = len(waveforms)
        self.n_rx = n_rx
        self.n_range_bins = n_range_bins
        self.waveform_len = lengths.pop()
        self.block_rows = self.waveform_len + n_range_bins - 1
        self._samples = np.stack([w.samples for w in waveforms])  # (N, L)
        self._nfft = sfft.next_fast_len(self.block_rows)
        # (N, nfft) spectra shared by every receive antenna
        self._spectra = sfft.fft(self._samples, n=self._nfft, axis=1)
        # (nfft, N, N) cross spectra conj(X_n) X_n' for the fused
        # correlate-after-convolve path used by the normal operator
        self._cross_spectra = np.ascontiguousarray(
            (np.conj(self._spectra)[:, None, :] * self._spectra[None, :, :]).transpose(2, 0, 1)
        )
        self._dense: np.ndarray | None = None
        self._gram: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rx * self.block_rows, self.n_tx * self.n_rx * self.n_range_bins)

    @property
    def n_coeffs(self) -> int:
        return self.shape[1]

    def _as_matrix(self, v: np.ndarray, length: int) -> tuple[np.ndarray, bool]:
        v = np.asarray(v)
        single = v.ndim == 1
        if single:
            v = v[:, None]
        if v.shape[0] != length:
            raise ValueError(f"expected leading dimension {length}, got {v.shape[0]}")
        return v, single

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Forward map: channel coefficients -> noiseless receive samples."""
        v, single = self._as_matrix(v, self.n_coeffs)
        cols = v.shape[1]
        blocks = v.reshape(self.n_rx, self.n_tx, self.n_range_bins, cols)
        spec = sfft.fft(blocks, n=self._nfft, axis=2)
        spec *= self._spectra[None, :, :, None]
        mixed = sfft.ifft(spec.sum(axis=1), axis=1)[:, : self.block_rows, :]
        out = mixed.reshape(self.n_rx * self.block_rows, cols)
        return out[:, 0] if single else out

    def adjoint_apply(self, y: np.ndarray) -> np.ndarray:
        """Adjoint map: receive samples -> channel-coefficient domain."""
        y, single = self._as_matrix(y, self.shape[0])
        cols = y.shape[1]
        per_rx = y.reshape(self.n_rx, self.block_rows, cols)
        spec = sfft.fft(per_rx, n=self._nfft, axis=1)
        prod = np.conj(self._spectra)[None, :, :, None] * spec[:, None, :, :]
        corr = sfft.ifft(prod, axis=2)[:, :, : self.n_range_bins, :]
        out = corr.reshape(self.n_coeffs, cols)
        return out[:, 0] if single else out

    def gram_apply(self, v: np.ndarray) -> np.ndarray:
        """Fused adjoint_apply(apply(v)) in a single spectral pass.

        Equal to the two-step composition up to rounding; never forms the
        Gram matrix (per-block circular convolution then correlation, both
        exact because nfft >= L+R-1).
        """
        v, single = self._as_matrix(v, self.n_coeffs)
        cols = v.shape[1]
        blocks = v.reshape(self.n_rx, self.n_tx, self.n_range_bins, cols)
        spec = sfft.fft(blocks, n=self._nfft, axis=2)
        # batched (nfft) matmul: out[f, n, (m c)] = cross[f, n, p] @ spec[f, p, (m c)]
        stacked = spec.transpose(2, 1, 0, 3).reshape(self._nfft, self.n_tx, -1)
        mixed = self._cross_spectra @ stacked
        mixed = mixed.reshape(self._nfft, self.n_tx, self.n_rx, cols).transpose(2, 1, 0, 3)
        corr = sfft.ifft(mixed, axis=2)[:, :, : self.n_range_bins, :]
        out = corr.reshape(self.n_coeffs, cols)
        return out[:, 0] if single else out

    def block(self, tx_index: int) -> np.ndarray:
        """Dense Toeplitz block X_n."""
        return build_block(self.waveforms[tx_index], self.n_range_bins)

    def column(self, index: int) -> np.ndarray:
        """Dense column of the stacked operator (cheap, no materialization)."""
        if not 0 <= index < self.n_coeffs:
            raise IndexError("column index out of range")
        m, rem = divmod(index, self.n_tx * self.n_range_bins)
        n, r = divmod(rem, self.n_range_bins)
        col = np.zeros(self.shape[0], dtype=complex)
        start = m * self.block_rows + r
        col[start : start + self.waveform_len] = self._samples[n]
        return col

    def column_norms(self) -> np.ndarray:
        """Per-column 2-norms; constant within each transmit block."""
        per_tx = np.linalg.norm(self._samples, axis=1)
        return np.tile(np.repeat(per_tx, self.n_range_bins), self.n_rx)

    def materialize(self) -> np.ndarray:
        """Dense stacked matrix; guarded so it is only used at oracle scale."""
        if self.n_coeffs > DENSE_COLUMN_CAP:
            raise ValueError(
                f"dense materialization capped at {DENSE_COLUMN_CAP} columns; "
                f"operator has {self.n_coeffs}"
            )
        if self._dense is None:
            x_cat = np.hstack([self.block(n) for n in range(self.n_tx)])
            self._dense = np.kron(np.eye(self.n_rx), x_cat)
        return self._dense

    def gram(self) -> np.ndarray:
        """Dense Gram matrix X~^H X~, cached (oracle scale only)."""
        if self._gram is None:
            dense = self.materialize()
            self._gram = dense.conj().T @ dense
        return self._gram

    def as_operator(self):
        from .linalg import LinearOperator

        return LinearOperator(
            shape=self.shape, apply=self.apply, adjoint_apply=self.adjoint_apply
        )


def build_dictionary(config: RadarConfig) -> ConvolutionDictionary:
    """Construct the stacked operator for every transmitter of `config`."""
    waveforms = [gen_lfm(config, n) for n in range(config.n_tx)]
    return ConvolutionDictionary(waveforms, config.n_rx, config.n_range_bins)
