"""OFDM modulation, multipath transmission, noise and one-tap equalisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qam import QamConstellation
from .rng import as_generator

ERASURE_THRESHOLD = 1e-12


@dataclass(frozen=True)
class OfdmConfig:
    num_subcarriers: int = 64
    cp_fraction: float = 0.25
    bandwidth: float = 20e6

    def __post_init__(self):
        n = self.num_subcarriers
        if n < 1 or n & (n - 1):
            raise ValueError(f"num_subcarriers must be a power of two, got {n}")
        if not 0.0 <= self.cp_fraction < 1.0:
            raise ValueError(f"cp_fraction must lie in [0, 1), got {self.cp_fraction}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @property
    def cp_length(self) -> int:
        return int(round(self.cp_fraction * self.num_subcarriers))

    @property
    def symbol_length(self) -> int:
        return self.num_subcarriers + self.cp_length

    @property
    def symbol_duration(self) -> float:
        return self.symbol_length / self.bandwidth

    @property
    def overhead(self) -> float:
        """Energy overhead factor (N + CP) / N spent on the prefix."""
        return self.symbol_length / self.num_subcarriers


@dataclass
class OfdmFrame:
    freq_symbols: np.ndarray
    time_samples: np.ndarray


def ofdm_modulate(freq_symbols, cfg: OfdmConfig) -> np.ndarray:
    """Unitary IDFT along the last axis followed by the cyclic prefix."""
    x = np.asarray(freq_symbols)
    if x.shape[-1] != cfg.num_subcarriers:
        raise ValueError(f"expected {cfg.num_subcarriers} subcarriers, got {x.shape[-1]}")
    body = np.fft.ifft(x, axis=-1, norm="ortho")
    cp = cfg.cp_length
    return np.concatenate([body[..., body.shape[-1] - cp:], body], axis=-1)


def ofdm_demodulate(time_samples, cfg: OfdmConfig) -> np.ndarray:
    """Drop the cyclic prefix and apply the unitary DFT along the last axis."""
    r = np.asarray(time_samples)
    if r.shape[-1] != cfg.symbol_length:
        raise ValueError(f"expected {cfg.symbol_length} samples, got {r.shape[-1]}")
    return np.fft.fft(r[..., cfg.cp_length:], axis=-1, norm="ortho")


def make_frame(freq_symbols, cfg: OfdmConfig) -> OfdmFrame:
    return OfdmFrame(np.asarray(freq_symbols), ofdm_modulate(freq_symbols, cfg))


def noise_variance(ebn0_db: float, const: QamConstellation, rate_overhead: float = 1.0) -> float:
    """Complex noise variance per sample for the requested Eb/N0.

    ``sigma^2 = E_s / (log2(M) * 10^(EbN0/10)) * rate_overhead``, where
    ``rate_overhead`` is ``(N + CP) / N`` so that prefix energy counts
    against the information bits.
    """
    if math.isinf(ebn0_db) and ebn0_db > 0:
        return 0.0
    return const.average_energy / (const.bits_per_symbol * 10.0 ** (ebn0_db / 10.0)) * rate_overhead


def awgn_inject(samples, ebn0_db: float, const: QamConstellation, rate_overhead: float, seed) -> np.ndarray:
    """Add circular complex Gaussian noise calibrated to Eb/N0."""
    samples = np.asarray(samples)
    var = noise_variance(ebn0_db, const, rate_overhead)
    if var == 0.0:
        return samples.copy()
    rng = as_generator(seed)
    noise = rng.standard_normal(samples.shape + (2,)) @ np.array([1.0, 1j])
    return samples + math.sqrt(var / 2.0) * noise


def transmit_multipath(tx: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Pass consecutive OFDM symbols through per-symbol multipath taps.

    Parameters
    ----------
    tx : ndarray, shape (S, Nt, N+CP)
        Time-domain symbols (with prefix) from each transmit antenna.
    taps : ndarray, shape (S, L, Nr, Nt)
        Channel impulse response in force during each symbol.

    Returns
    -------
    ndarray, shape (S, Nr, N+CP)
        Received samples per symbol window.  The delay tail of symbol s
        spills into window s+1, which is how insufficient prefixes produce
        inter-symbol interference.
    """
    s_count, nt, slen = tx.shape
    n_taps = taps.shape[1]
    nr = taps.shape[2]
    total = s_count * slen + n_taps - 1
    nfft = 1 << (slen + n_taps - 1 - 1).bit_length()
    tx_f = np.fft.fft(tx, nfft, axis=-1)  # (S, Nt, F)
    h_f = np.fft.fft(taps, nfft, axis=1)  # (S, F, Nr, Nt)
    y_f = np.einsum("sfrt,stf->srf", h_f, tx_f)
    y = np.fft.ifft(y_f, axis=-1)[..., : slen + n_taps - 1]
    out = np.zeros((nr, total), dtype=complex)
    for s in range(s_count):
        out[:, s * slen: s * slen + slen + n_taps - 1] += y[s]
    return out[:, : s_count * slen].reshape(nr, s_count, slen).transpose(1, 0, 2)


def equalize_siso(received, h):
    """Per-bin division ``Y[n] / H[n]``.

    Returns ``(estimates, erased)``; bins whose channel magnitude falls below
    1e-12 are marked erased and their estimate is set to zero.
    """
    received = np.asarray(received)
    h = np.asarray(h)
    erased = np.abs(h) < ERASURE_THRESHOLD
    safe = np.where(erased, 1.0, h)
    est = np.where(erased, 0.0, received / safe)
    return est, erased
