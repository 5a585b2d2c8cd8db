"""Time-domain fading channels and spatial antenna correlation.

Rayleigh multipath taps are produced by the Walsh-Hadamard weighted
sum-of-cosines (modified Jakes) generator, shaped by an exponential power
delay profile, turned into per-subcarrier matrices by a DFT along the tap
axis, and correlated across antennas with the Kronecker model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .rng import as_generator

ARRAY_KINDS = ("ula", "ura")


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def walsh_hadamard_matrix(order: int) -> np.ndarray:
    """Sylvester-construction Walsh-Hadamard matrix of the given order.

    >>> walsh_hadamard_matrix(2)
    array([[ 1,  1],
           [ 1, -1]])
    """
    if not isinstance(order, (int, np.integer)) or not _is_power_of_two(int(order)):
        raise ValueError(f"Walsh-Hadamard order must be a power of two, got {order!r}")
    h = np.ones((1, 1), dtype=int)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


@dataclass(frozen=True)
class JakesConfig:
    """Parameters of the modified Jakes generator.

    Attributes
    ----------
    num_oscillators : int
        Number of cosine oscillators per waveform (N_d).
    max_doppler : float
        Maximum Doppler shift in Hz.
    sample_period : float
        Time between consecutive samples in seconds.
    num_waveforms : int
        Number of mutually uncorrelated waveforms to produce.
    """

    num_oscillators: int
    max_doppler: float
    sample_period: float
    num_waveforms: int = 1

    def __post_init__(self):
        if self.num_oscillators < 1:
            raise ValueError("num_oscillators must be >= 1")
        if self.max_doppler < 0:
            raise ValueError("max_doppler must be >= 0")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be > 0")
        if self.num_waveforms < 1:
            raise ValueError("num_waveforms must be >= 1")
        if self.num_waveforms > self.wh_order:
            raise ValueError(
                f"{self.num_waveforms} waveforms requested but the Walsh-Hadamard "
                f"matrix for {self.num_oscillators} oscillators only has {self.wh_order} rows"
            )

    @property
    def wh_order(self) -> int:
        """Order of the smallest Walsh-Hadamard matrix covering every oscillator."""
        return 1 << max(0, (self.num_oscillators - 1).bit_length())

    @property
    def omega_max(self) -> float:
        return 2.0 * math.pi * self.max_doppler

    def oscillator_angles(self):
        """Return (phi_n, omega_n) for n = 1..N_d."""
        nd = self.num_oscillators
        n = np.arange(1, nd + 1)
        phi = np.pi * n / nd
        alpha = 2.0 * np.pi * (n - 0.5) / (4 * nd)
        omega = self.omega_max * np.cos(alpha)
        return phi, omega


@dataclass
class FadingWaveform:
    samples: np.ndarray
    waveform_index: int
    sample_period: float

    @property
    def num_samples(self) -> int:
        return len(self.samples)

    def times(self) -> np.ndarray:
        return np.arange(self.num_samples) * self.sample_period


def jakes_gains(cfg: JakesConfig, times: np.ndarray, rng, rows=None) -> np.ndarray:
    """Complex gains of several Jakes waveforms evaluated at ``times``.

    ``rows`` selects the Walsh-Hadamard rows (default: the first
    ``cfg.num_waveforms``).  Random phases are drawn independently per
    oscillator and per waveform.  Returns an array of shape
    ``(len(rows), len(times))``.
    """
    rng = as_generator(rng)
    times = np.asarray(times, dtype=float)
    if rows is None:
        rows = np.arange(cfg.num_waveforms)
    rows = np.asarray(rows)
    nd = cfg.num_oscillators
    wh = walsh_hadamard_matrix(cfg.wh_order)[rows, :nd]
    phi, omega = cfg.oscillator_angles()
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(len(rows), nd))
    weights = math.sqrt(2.0 / nd) * wh * np.exp(1j * phi)

    out = np.empty((len(rows), len(times)), dtype=complex)
    # chunk over time to keep the (waveform, oscillator, time) block small
    chunk = max(1, 4_000_000 // max(1, nd * len(rows)))
    for start in range(0, len(times), chunk):
        t = times[start:start + chunk]
        arg = omega[None, :, None] * t[None, None, :] + theta[:, :, None]
        out[:, start:start + chunk] = np.einsum("kn,knt->kt", weights, np.cos(arg))
    return out


def generate_jakes_waveforms(cfg: JakesConfig, num_samples: int, seed) -> list[FadingWaveform]:
    """Generate ``cfg.num_waveforms`` uncorrelated Rayleigh fading waveforms."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    times = np.arange(num_samples) * cfg.sample_period
    gains = jakes_gains(cfg, times, seed)
    return [FadingWaveform(g, k, cfg.sample_period) for k, g in enumerate(gains)]


def autocorrelation_empirical(w: FadingWaveform, max_lag: int) -> np.ndarray:
    """Normalised autocorrelation for lags 0..max_lag.

    Real part of the unbiased complex estimate ``mean(conj(C[t]) C[t+l])``,
    divided by its lag-0 value.  The mean is not removed, so a constant
    (zero-Doppler) waveform gives exactly 1 at every lag.
    """
    x = np.asarray(w.samples, dtype=complex)
    n = len(x)
    if not 0 <= max_lag < n:
        raise ValueError(f"max_lag must be in [0, {n - 1}], got {max_lag}")
    # linear (non-circular) correlation through a zero-padded FFT
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.fft(x, nfft)
    acf = np.fft.ifft(np.abs(spec) ** 2)[: max_lag + 1].real
    acf = acf / (n - np.arange(max_lag + 1))
    if acf[0] == 0:
        return np.ones(max_lag + 1)
    return acf / acf[0]


def psd_empirical(w: FadingWaveform):
    """Two-sided periodogram of the complex waveform.

    Returns ``(freqs_hz, psd)`` with frequencies sorted ascending.
    """
    from scipy.signal import periodogram

    x = np.asarray(w.samples)
    if len(x) < 256:
        raise ValueError("psd_empirical needs at least 256 samples")
    freqs, psd = periodogram(
        x, fs=1.0 / w.sample_period, detrend=False, return_onesided=False, scaling="density"
    )
    order = np.argsort(freqs)
    return freqs[order], psd[order]


def psd_peak_frequencies(freqs: np.ndarray, psd: np.ndarray):
    """Frequencies of the largest periodogram bin on each side of DC."""
    neg = freqs < 0
    pos = freqs > 0
    f_neg = freqs[neg][np.argmax(psd[neg])] if neg.any() else 0.0
    f_pos = freqs[pos][np.argmax(psd[pos])] if pos.any() else 0.0
    return float(f_neg), float(f_pos)


@dataclass
class PowerDelayProfile:
    tap_delays: np.ndarray
    tap_powers: np.ndarray
    rms_delay_spread: float
    flat: bool = False

    @property
    def num_taps(self) -> int:
        return len(self.tap_powers)

    @property
    def memory(self) -> int:
        """Channel memory in samples (number of taps minus one)."""
        return self.num_taps - 1

    def computed_rms_delay_spread(self) -> float:
        p = self.tap_powers / self.tap_powers.sum()
        mean = np.sum(p * self.tap_delays)
        return float(np.sqrt(np.sum(p * self.tap_delays**2) - mean**2))


def pdp_exponential(tau_rms: float, sample_rate: float, power_floor_db: float = -30.0) -> PowerDelayProfile:
    """Exponentially decaying tap powers at spacing ``1/sample_rate``.

    Taps are kept while their power relative to the first tap is at least
    ``power_floor_db``; the kept powers are normalised to sum to one.
    """
    if tau_rms < 0:
        raise ValueError("tau_rms must be >= 0")
    if not sample_rate > 0:
        raise ValueError("sample_rate must be > 0")
    if power_floor_db >= 0:
        raise ValueError("power_floor_db must be negative")
    ts = 1.0 / sample_rate
    if tau_rms == 0:
        last = 0
    else:
        # power(k) = exp(-k ts / tau) >= 10^(floor/10)
        last = int(math.floor(-power_floor_db / 10.0 * math.log(10.0) * tau_rms / ts + 1e-9))
    k = np.arange(last + 1)
    if last == 0:
        powers = np.ones(1)
    else:
        powers = np.exp(-k * ts / tau_rms)
        powers = powers / powers.sum()
    return PowerDelayProfile(k * ts, powers, tau_rms, flat=(last == 0))


def coherence_params(max_doppler: float, tau_rms: float):
    """Coherence time ``1/f_D`` and coherence bandwidth ``1/(2 pi tau_rms)``.

    A zero input gives an infinite output (static or flat channel).
    """
    if max_doppler < 0 or tau_rms < 0:
        raise ValueError("Doppler frequency and delay spread must be non-negative")
    coherence_time = math.inf if max_doppler == 0 else 1.0 / max_doppler
    coherence_bw = math.inf if tau_rms == 0 else 1.0 / (2.0 * math.pi * tau_rms)
    return coherence_time, coherence_bw


def min_subcarriers_flat(bandwidth: float, tau_rms: float, flatness_factor: float = 0.2) -> int:
    """Smallest N for which W/N <= flatness_factor * coherence bandwidth."""
    if bandwidth <= 0 or tau_rms < 0 or flatness_factor <= 0:
        raise ValueError("bandwidth and flatness_factor must be positive, tau_rms non-negative")
    return max(1, math.ceil(bandwidth * 2.0 * math.pi * tau_rms / flatness_factor))


@dataclass(frozen=True)
class CorrelationSpec:
    array_kind: str = "ula"
    rho: float = 0.0
    nx: int | None = None
    ny: int | None = None

    def __post_init__(self):
        if self.array_kind not in ARRAY_KINDS:
            raise ValueError(f"array_kind must be one of {ARRAY_KINDS}, got {self.array_kind!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.array_kind == "ura" and (self.nx is None or self.ny is None):
            raise ValueError("URA correlation needs nx and ny")

    def matrix(self, n: int) -> np.ndarray:
        """Correlation matrix for a side with ``n`` antennas."""
        if self.array_kind == "ula":
            return ula_correlation(self.rho, n)
        if self.nx * self.ny != n:
            raise ValueError(f"URA geometry {self.nx}x{self.ny} does not match {n} antennas")
        return ura_correlation(self)


def ula_correlation(rho: float, n: int) -> np.ndarray:
    """Toeplitz matrix with entries ``rho**((i-j)**2)``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if n < 1:
        raise ValueError("n must be >= 1")
    d = np.arange(n)
    return float(rho) ** ((d[:, None] - d[None, :]) ** 2).astype(float)


def ura_correlation(spec: CorrelationSpec) -> np.ndarray:
    if spec.array_kind != "ura":
        raise ValueError("ura_correlation needs a URA spec")
    return np.kron(ula_correlation(spec.rho, spec.nx), ula_correlation(spec.rho, spec.ny))


def matrix_sqrt_psd(r: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Hermitian square root of a positive semidefinite matrix."""
    r = np.asarray(r)
    if not np.allclose(r, r.conj().T, atol=1e-12):
        raise ValueError("correlation matrix is not Hermitian")
    vals, vecs = np.linalg.eigh(r)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals.min() < -tol * scale:
        raise ValueError(f"correlation matrix is not PSD: smallest eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


@dataclass
class MimoChannelRealization:
    per_subcarrier: np.ndarray  # (..., N, Nr, Nt)
    correlated: bool = False

    @property
    def num_subcarriers(self) -> int:
        return self.per_subcarrier.shape[-3]


def _sqrt_or_none(r):
    r = np.asarray(r)
    if np.array_equal(r, np.eye(r.shape[0])):
        return None
    return matrix_sqrt_psd(r)


def apply_spatial_correlation(g, r_t, r_r) -> MimoChannelRealization:
    """Kronecker correlation ``sqrt(R_r) G sqrt(R_t)^H`` for each matrix in ``g``.

    ``g`` has shape ``(..., Nr, Nt)``; identity correlation matrices leave it
    untouched.
    """
    g = np.asarray(g)
    for name, r in (("R_t", r_t), ("R_r", r_r)):
        r = np.asarray(r)
        if not np.allclose(np.diag(r), 1.0):
            raise ValueError(f"{name} must have a unit diagonal")
    if np.shape(r_r)[0] != g.shape[-2] or np.shape(r_t)[0] != g.shape[-1]:
        raise ValueError("correlation matrix sizes do not match the channel dimensions")
    a = _sqrt_or_none(r_r)
    b = _sqrt_or_none(r_t)
    h = g
    if a is not None:
        h = a @ h
    if b is not None:
        h = h @ b.conj().T
    return MimoChannelRealization(h, correlated=(a is not None or b is not None))


def channel_frequency_response(taps, num_subcarriers: int) -> MimoChannelRealization:
    """Per-subcarrier channel matrices from time-domain taps.

    ``taps`` has shape ``(..., L, Nr, Nt)`` (a 1-D tap vector is treated as
    a single-antenna link).  The result holds the length-N DFT of every
    antenna pair's tap sequence, shape ``(..., N, Nr, Nt)``.
    """
    taps = np.asarray(taps)
    if taps.ndim == 1:
        taps = taps[:, None, None]
    if taps.ndim < 3:
        raise ValueError("taps must have shape (..., L, Nr, Nt)")
    if taps.shape[-3] > num_subcarriers:
        raise ValueError(
            f"{taps.shape[-3]} taps exceed {num_subcarriers} subcarriers; the cyclic model does not hold"
        )
    return MimoChannelRealization(np.fft.fft(taps, n=num_subcarriers, axis=-3))


def rayleigh_taps(pdp: PowerDelayProfile, nr: int, nt: int, rng) -> np.ndarray:
    """i.i.d. CN(0, p_l) taps, shape ``(L, Nr, Nt)``."""
    rng = as_generator(rng)
    shape = (pdp.num_taps, nr, nt)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return g * np.sqrt(pdp.tap_powers)[:, None, None]


def jakes_taps(pdp: PowerDelayProfile, cfg: JakesConfig, nr: int, nt: int, times, rng) -> np.ndarray:
    """Independent Jakes waveform per (tap, Rx, Tx), shape ``(T, L, Nr, Nt)``.

    Each waveform uses its own Walsh-Hadamard row; when more waveforms are
    needed than rows exist, further groups draw from spawned child streams.
    """
    rng = as_generator(rng)
    times = np.asarray(times, dtype=float)
    total = pdp.num_taps * nr * nt
    rows_per_group = cfg.wh_order
    gains = np.empty((total, len(times)), dtype=complex)
    children = rng.spawn(-(-total // rows_per_group)) if total > rows_per_group else [rng]
    for gi, child in enumerate(children):
        lo = gi * rows_per_group
        hi = min(total, lo + rows_per_group)
        gains[lo:hi] = jakes_gains(cfg, times, child, rows=np.arange(hi - lo))
    gains = gains.reshape(pdp.num_taps, nr, nt, len(times))
    gains = gains * np.sqrt(pdp.tap_powers)[:, None, None, None]
    return np.moveaxis(gains, -1, 0)


def write_waveform_csv(path, w: FadingWaveform) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["sample_index", "re", "im"])
        for i, c in enumerate(w.samples):
            out.writerow([i, repr(float(c.real)), repr(float(c.imag))])


def write_matrix_csv(path, r: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        for row in np.real(r):
            out.writerow([repr(float(v)) for v in row])
