"""Monte-Carlo BER experiments and analytic references.

One trial draws a fresh channel, random bits and noise, pushes one counted
OFDM symbol (preceded by a guard symbol when the prefix is shorter than the
channel memory) through the time-domain chain and counts bit errors after
per-subcarrier detection.  Every random draw comes from a substream keyed by
``(seed, point, trial, purpose)``, so detectors run under the same master
seed see identical channels, bits and noise.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from . import rng as streams
from .detectors import MimoObservation, detect_ml, detect_mmse, detect_zf, real_decompose
from .fading import (
    CorrelationSpec,
    JakesConfig,
    apply_spatial_correlation,
    jakes_taps,
    pdp_exponential,
    rayleigh_taps,
)
from .heuristics import DeParams, PsoParams, StabilityWarning, de_detect, pso_detect
from .ofdm import OfdmConfig, noise_variance, ofdm_demodulate, ofdm_modulate, transmit_multipath
from .qam import qam_constellation, qam_modulate

DETECTORS = ("ml", "zf", "mmse", "pso", "de")
CHANNEL_MODES = ("block", "jakes")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one BER curve."""

    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    order: int = 4
    nt: int = 1
    nr: int = 1
    array_kind: str = "ula"
    rho: float = 0.0
    detector: str = "zf"
    detector_params: dict = field(default_factory=dict)
    channel_mode: str = "block"
    tau_rms: float = 0.0
    pdp_floor_db: float = -30.0
    max_doppler: float = 0.0
    num_oscillators: int = 1024
    ebn0_db: tuple = (0.0, 10.0, 20.0)
    min_errors: int = 200
    min_trials: int = 20
    max_trials: int = 2000
    seed: int = 0
    scenario_id: str = ""

    def __post_init__(self):
        qam_constellation(self.order)
        if self.nt < 1 or self.nr < 1:
            raise ValueError("antenna counts must be positive")
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}; choose from {DETECTORS}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.channel_mode!r}; choose from {CHANNEL_MODES}")
        if self.channel_mode == "jakes" and not self.max_doppler > 0:
            raise ValueError("jakes channel mode needs a positive max_doppler")
        if len(self.ebn0_db) == 0:
            raise ValueError("ebn0 grid must be nonempty")
        if self.min_errors < 1 or self.max_trials < 1 or self.min_trials < 0:
            raise ValueError("stopping rule must be positive")
        object.__setattr__(self, "ebn0_db", tuple(float(e) for e in self.ebn0_db))
        object.__setattr__(self, "detector_params", dict(self.detector_params))
        self.correlation_spec(self.nt)
        self.correlation_spec(self.nr)
        self.detector_settings()

    @property
    def constellation(self):
        return qam_constellation(self.order)

    def pdp(self):
        return pdp_exponential(self.tau_rms, self.ofdm.bandwidth, self.pdp_floor_db)

    def correlation_spec(self, n: int) -> CorrelationSpec:
        if self.array_kind == "ura":
            nx = max(d for d in range(1, int(math.isqrt(n)) + 1) if n % d == 0)
            return CorrelationSpec("ura", self.rho, nx, n // nx)
        return CorrelationSpec(self.array_kind, self.rho)

    def detector_settings(self):
        if self.detector == "pso":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", StabilityWarning)
                return PsoParams(**self.detector_params)
        if self.detector == "de":
            return DeParams(**self.detector_params)
        if self.detector_params:
            raise ValueError(f"detector {self.detector!r} takes no parameters")
        return None

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ebn0_db"] = list(self.ebn0_db)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["ofdm"] = OfdmConfig(**d.get("ofdm", {}))
        d["ebn0_db"] = tuple(d.get("ebn0_db", ()))
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class BerPoint:
    ebn0_db: float
    errors: int
    bits: int
    trials: int
    trial_std: float = 0.0  # std of per-trial BER

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def sigma_binomial(self) -> float:
        p = self.ber
        return math.sqrt(max(p * (1 - p), 0.0) / self.bits) if self.bits else float("nan")

    @property
    def sigma_trials(self) -> float:
        return self.trial_std / math.sqrt(self.trials) if self.trials > 1 else float("nan")

    @property
    def sigma(self) -> float:
        """Standard error of the BER estimate.

        Errors cluster within a trial (one channel draw per trial), so the
        spread of per-trial BER is used; the binomial figure is a floor.
        """
        st = self.sigma_trials
        sb = self.sigma_binomial
        return sb if math.isnan(st) else max(st, sb)

    @property
    def ci(self):
        half = Z95 * self.sigma
        return max(0.0, self.ber - half), min(1.0, self.ber + half)


@dataclass
class BerCurve:
    points: list
    fingerprint: str
    config: ScenarioConfig | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def ebn0_db(self) -> np.ndarray:
        return np.array([p.ebn0_db for p in self.points])

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([p.sigma for p in self.points])

    def point(self, ebn0_db: float) -> BerPoint:
        for p in self.points:
            if math.isclose(p.ebn0_db, ebn0_db):
                return p
        raise KeyError(ebn0_db)


def _detect(cfg: ScenarioConfig, obs: MimoObservation, seed):
    kind = cfg.detector
    if kind == "ml":
        return detect_ml(obs)
    if kind == "zf":
        return detect_zf(obs, seed)
    if kind == "mmse":
        return detect_mmse(obs, seed)
    params = cfg.detector_settings()
    rd = real_decompose(obs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        if kind == "pso":
            return pso_detect(rd, params, seed, obs.constellation)[0]
        return de_detect(rd, params, seed, obs.constellation)[0]


def draw_taps(cfg: ScenarioConfig, num_symbols: int, rng) -> np.ndarray:
    """Spatially correlated taps for ``num_symbols`` consecutive symbols.

    Returns shape ``(S, L, Nr, Nt)``.  Block mode holds one draw for the
    whole trial; Jakes mode samples fresh waveforms at each symbol start.
    """
    pdp = cfg.pdp()
    if cfg.channel_mode == "block":
        g = np.broadcast_to(rayleigh_taps(pdp, cfg.nr, cfg.nt, rng), (num_symbols, pdp.num_taps, cfg.nr, cfg.nt))
    else:
        jc = JakesConfig(cfg.num_oscillators, cfg.max_doppler, cfg.ofdm.symbol_duration)
        times = np.arange(num_symbols) * cfg.ofdm.symbol_duration
        g = jakes_taps(pdp, jc, cfg.nr, cfg.nt, times, rng)
    r_t = cfg.correlation_spec(cfg.nt).matrix(cfg.nt)
    r_r = cfg.correlation_spec(cfg.nr).matrix(cfg.nr)
    return apply_spatial_correlation(g, r_t, r_r).per_subcarrier


def subcarrier_response(taps, n: int) -> np.ndarray:
    """Channel frequency response at the ``n`` subcarrier centres.

    Unlike a length-``n`` FFT this keeps taps beyond ``n`` (they fold onto
    the same bins), so it also holds for channels longer than the symbol.
    """
    L = taps.shape[0]
    if L <= n:
        return np.fft.fft(taps, n=n, axis=0)
    folded = np.zeros((n,) + taps.shape[1:], dtype=complex)
    np.add.at(folded, np.arange(L) % n, taps)
    return np.fft.fft(folded, axis=0)


def run_trial(cfg: ScenarioConfig, point: int, trial: int):
    """Bit errors and bit count for one trial at grid index ``point``."""
    const = cfg.constellation
    ofdm = cfg.ofdm
    n = ofdm.num_subcarriers
    pdp = cfg.pdp()
    # enough leading symbols for every delay tail that reaches the counted one
    guard = -(-pdp.memory // ofdm.symbol_length) if ofdm.cp_length < pdp.memory else 0
    s = guard + 1
    key = (point, trial)
    taps = draw_taps(cfg, s, streams.substream(cfg.seed, *key, streams.CHANNEL))
    bits = streams.substream(cfg.seed, *key, streams.BITS).integers(
        0, 2, size=(s, cfg.nt, n * const.bits_per_symbol), dtype=np.uint8)
    sym = qam_modulate(bits, const)  # (S, Nt, N)
    tx = ofdm_modulate(sym, ofdm) / math.sqrt(cfg.nt)
    rx = transmit_multipath(tx, taps)[-1]  # (Nr, N+CP)
    var = noise_variance(cfg.ebn0_db[point], const, ofdm.overhead)
    if var > 0:
        noise = streams.substream(cfg.seed, *key, streams.NOISE).standard_normal(rx.shape + (2,)) @ np.array([1.0, 1j])
        rx = rx + math.sqrt(var / 2.0) * noise
    y = ofdm_demodulate(rx, ofdm).T  # (N, Nr)
    H = subcarrier_response(taps[-1], n) / math.sqrt(cfg.nt)  # (N, Nr, Nt)
    obs = MimoObservation(y, H, var / const.average_energy, const)
    res = _detect(cfg, obs, streams.substream(cfg.seed, *key, streams.DETECTOR))
    sent = bits[-1].reshape(cfg.nt, n, const.bits_per_symbol).transpose(1, 0, 2).reshape(n, -1)
    errors = int(np.count_nonzero(res.hard_bits != sent))
    return errors, sent.size


def _trial_job(args):
    return run_trial(*args)


def _stop(cfg, errors, trials):
    return (errors >= cfg.min_errors and trials >= cfg.min_trials) or trials >= cfg.max_trials


def _run_point(cfg: ScenarioConfig, point: int, pool=None, workers: int = 1) -> BerPoint:
    errors = bits = trials = 0
    per_trial = []
    while not _stop(cfg, errors, trials):
        batch = 1 if pool is None else workers
        jobs = [(cfg, point, trials + i) for i in range(batch)]
        results = map(_trial_job, jobs) if pool is None else pool.map(_trial_job, jobs)
        # consume in order so the stopping point does not depend on workers
        for e, b in results:
            if _stop(cfg, errors, trials):
                break
            errors += e
            bits += b
            trials += 1
            per_trial.append(e / b)
    std = float(np.std(per_trial, ddof=1)) if len(per_trial) > 1 else 0.0
    return BerPoint(cfg.ebn0_db[point], errors, bits, trials, std)


def run_monte_carlo(cfg: ScenarioConfig, workers: int = 1) -> BerCurve:
    """BER curve over ``cfg.ebn0_db``; bit-identical for a fixed seed and any
    worker count."""
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            pts = [_run_point(cfg, i, pool, workers) for i in range(len(cfg.ebn0_db))]
    else:
        pts = [_run_point(cfg, i) for i in range(len(cfg.ebn0_db))]
    meta = dict(stopping=dict(min_errors=cfg.min_errors, min_trials=cfg.min_trials, max_trials=cfg.max_trials))
    return BerCurve(pts, cfg.fingerprint(), cfg, meta)


def analytic_ber_rayleigh(order: int, ebn0_db, overhead: float = 1.0):
    """Exact Gray-coded square M-QAM bit error probability over flat Rayleigh
    fading, averaged in closed form.

    ``overhead`` (>= 1) is the prefix energy factor; it lowers the effective
    Eb/N0 by ``10 log10(overhead)`` dB.
    """
    if order not in (4, 16, 64, 256):
        raise ValueError(f"unsupported QAM order {order}")
    g = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0) / overhead
    sq = int(math.isqrt(order))
    k_max = int(math.log2(sq))
    scale = 3.0 * math.log2(order) / (2.0 * (order - 1))
    total = np.zeros_like(g)
    for k in range(1, k_max + 1):
        step = 2 ** (k - 1)
        for i in range(int((1 - 2.0 ** -k) * sq)):
            w = (-1) ** ((i * step) // sq) * (step - math.floor(i * step / sq + 0.5))
            c = (2 * i + 1) ** 2 * scale * g
            with np.errstate(invalid="ignore"):
                avg = np.where(np.isinf(c), 0.0, 1.0 - np.sqrt(c / (1.0 + c)))
            total = total + w * avg
    out = total / (sq * k_max)
    return float(out) if out.ndim == 0 else out


def analytic_ber_awgn(order: int, ebn0_db):
    """Same series without fading (``erfc`` terms); used as a sanity check."""
    g = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)
    sq = int(math.isqrt(order))
    k_max = int(math.log2(sq))
    scale = 3.0 * math.log2(order) / (2.0 * (order - 1))
    total = np.zeros_like(g)
    for k in range(1, k_max + 1):
        step = 2 ** (k - 1)
        for i in range(int((1 - 2.0 ** -k) * sq)):
            w = (-1) ** ((i * step) // sq) * (step - math.floor(i * step / sq + 0.5))
            total = total + w * erfc(np.sqrt((2 * i + 1) ** 2 * scale * g))
    return total / (sq * k_max)


def has_floor(curve: BerCurve, ratio: float = 0.5) -> bool:
    """BER(highest Eb/N0) / BER(middle Eb/N0) above ``ratio``."""
    order = np.argsort(curve.ebn0_db)
    hi = curve.points[order[-1]].ber
    mid = curve.points[order[len(order) // 2]].ber if len(order) > 2 else curve.points[order[0]].ber
    if mid == 0:
        return False
    return hi / mid > ratio


def cp_study(base: ScenarioConfig, cp_fractions, workers: int = 1) -> dict:
    """One curve per prefix fraction, all under the base seed."""
    out = {}
    for frac in cp_fractions:
        if not 0 <= frac < 1:
            raise ValueError(f"cp fraction {frac} outside [0, 1)")
        ofdm = dataclasses.replace(base.ofdm, cp_fraction=float(frac))
        curve = run_monte_carlo(base.replace(ofdm=ofdm), workers)
        curve.metadata["floor"] = has_floor(curve)
        out[float(frac)] = curve
    return out


def sensibility_kappa(ber_scn: float, ber_ref: float) -> float:
    """``log10(ber_scn) - log10(ber_ref)``."""
    for name, v in (("ber_scn", ber_scn), ("ber_ref", ber_ref)):
        if not 0 < v <= 1:
            raise ValueError(f"{name} must lie in (0, 1], got {v}")
    return math.log10(ber_scn) - math.log10(ber_ref)


@dataclass
class Kappa:
    value: float
    bound: str = ""  # "<" or ">" when a zero-error point was replaced by 1/bits
    errors_scn: int = 0
    errors_ref: int = 0

    def __str__(self):
        return f"{self.bound}{self.value:.4g}"


def kappa_between(scn: BerPoint, ref: BerPoint) -> Kappa:
    """Sensibility between two measured points.

    A zero-error point is replaced by ``1/bits`` and the result is marked as
    a bound rather than reported as a number.
    """
    bound = ""
    p_scn, p_ref = scn.ber, ref.ber
    if scn.errors == 0 and ref.errors == 0:
        return Kappa(float("nan"), "?", 0, 0)
    if scn.errors == 0:
        p_scn, bound = 1.0 / scn.bits, "<"
    elif ref.errors == 0:
        p_ref, bound = 1.0 / ref.bits, ">"
    return Kappa(sensibility_kappa(p_scn, p_ref), bound, scn.errors, ref.errors)


CSV_COLUMNS = ("scenario_id", "detector", "array", "rho", "ebn0_db", "ber", "ci_low", "ci_high", "bits", "errors")


def curve_rows(curve: BerCurve):
    cfg = curve.config
    sid = cfg.scenario_id or curve.fingerprint
    for p in curve.points:
        lo, hi = p.ci
        yield (sid, cfg.detector, cfg.array_kind, repr(cfg.rho), repr(p.ebn0_db), repr(p.ber),
               repr(lo), repr(hi), p.bits, p.errors)


def write_curves_csv(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_COLUMNS)
        for c in curves:
            out.writerows(curve_rows(c))
