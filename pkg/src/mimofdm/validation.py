"""Statistical checks of generated fading waveforms."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special, stats

from .fading import (
    FadingWaveform,
    JakesConfig,
    autocorrelation_empirical,
    generate_jakes_waveforms,
    psd_empirical,
    psd_peak_frequencies,
)


@dataclass
class JakesReport:
    num_samples: int
    max_doppler: float
    ks_amplitude: list  # Rayleigh with scale fitted to the waveform power
    ks_amplitude_unit: list  # Rayleigh with unit mean power
    ks_phase: list
    autocorr_rms_error: list
    max_cross_correlation: float
    psd_peaks_hz: list  # (negative, positive) per waveform
    psd_bin_hz: float
    mean_power: list
    runtime_s: float = 0.0

    def worst(self) -> dict:
        peak_err = max(max(abs(n + self.max_doppler), abs(p - self.max_doppler)) for n, p in self.psd_peaks_hz)
        return dict(
            ks_amplitude=max(self.ks_amplitude),
            ks_amplitude_unit=max(self.ks_amplitude_unit),
            ks_phase=max(self.ks_phase),
            autocorr_rms_error=max(self.autocorr_rms_error),
            max_cross_correlation=self.max_cross_correlation,
            psd_peak_error_bins=peak_err / self.psd_bin_hz,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst"] = self.worst()
        return d


def ks_rayleigh(w: FadingWaveform, fit_scale: bool = True) -> float:
    a = np.abs(w.samples)
    scale = math.sqrt(np.mean(a**2) / 2.0) if fit_scale else math.sqrt(0.5)
    return float(stats.kstest(a, stats.rayleigh(scale=scale).cdf).statistic)


def ks_uniform_phase(w: FadingWaveform) -> float:
    ph = np.angle(w.samples)
    return float(stats.kstest(ph, stats.uniform(loc=-np.pi, scale=2 * np.pi).cdf).statistic)


def autocorr_error(w: FadingWaveform, max_doppler: float) -> float:
    """RMS gap between the empirical autocorrelation and ``J0(2 pi f_D tau)``
    over lags up to one coherence time."""
    max_lag = max(1, int(math.floor(1.0 / (max_doppler * w.sample_period))))
    acf = autocorrelation_empirical(w, max_lag)
    tau = np.arange(max_lag + 1) * w.sample_period
    ref = special.j0(2 * np.pi * max_doppler * tau)
    return float(np.sqrt(np.mean((acf - ref) ** 2)))


def cross_correlation(a: FadingWaveform, b: FadingWaveform) -> float:
    """Magnitude of the normalised zero-lag cross-correlation."""
    x, y = a.samples, b.samples
    return float(abs(np.vdot(y, x)) / math.sqrt(np.vdot(x, x).real * np.vdot(y, y).real))


def jakes_statistics(cfg: JakesConfig, num_samples: int, seed) -> JakesReport:
    import time

    t0 = time.perf_counter()
    ws = generate_jakes_waveforms(cfg, num_samples, seed)
    peaks = []
    for w in ws:
        f, p = psd_empirical(w)
        peaks.append(psd_peak_frequencies(f, p))
    xc = max((cross_correlation(a, b) for a, b in itertools.combinations(ws, 2)), default=0.0)
    return JakesReport(
        num_samples=num_samples,
        max_doppler=cfg.max_doppler,
        ks_amplitude=[ks_rayleigh(w) for w in ws],
        ks_amplitude_unit=[ks_rayleigh(w, fit_scale=False) for w in ws],
        ks_phase=[ks_uniform_phase(w) for w in ws],
        autocorr_rms_error=[autocorr_error(w, cfg.max_doppler) for w in ws],
        max_cross_correlation=xc,
        psd_peaks_hz=peaks,
        psd_bin_hz=1.0 / (num_samples * cfg.sample_period),
        mean_power=[float(np.mean(np.abs(w.samples) ** 2)) for w in ws],
        runtime_s=time.perf_counter() - t0,
    )
