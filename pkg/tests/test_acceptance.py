"""End-to-end acceptance checks.

Each check returns ``(passed, detail)`` and records one ``PASS``/``FAIL``
line. Under pytest the lines are printed in the terminal summary; running
this file directly prints them as they complete. Seeds, grids and stopping
rules below were fixed before any check was evaluated.
"""
import math
import sys
import time

import numpy as np
import pytest

from mimofdm.complexity import flop_count, relative_complexity
from mimofdm.config import parse_config
from mimofdm.detectors import MimoObservation, detect_ml, fitness, real_decompose, stack_real
from mimofdm.fading import JakesConfig, min_subcarriers_flat
from mimofdm.harness import (
    ScenarioConfig,
    analytic_ber_rayleigh,
    cp_study,
    kappa_between,
    run_monte_carlo,
    sensibility_kappa,
)
from mimofdm.heuristics import convergence_profile, de_detect, pso_detect, tuned_de_params, tuned_pso_params
from mimofdm.ofdm import OfdmConfig
from mimofdm.qam import qam_constellation
from mimofdm.validation import jakes_statistics

RESULTS: list = []
_CURVES: dict = {}

MIMO_SEED = parse_config("mimo-detectors").seed
MIMO_OFDM = OfdmConfig(64, 0.25, 20e6)


def record(name, ok, detail):
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    if __name__ == "__main__":
        print(line, flush=True)
    return ok


def curve(cfg: ScenarioConfig):
    key = cfg.fingerprint()
    if key not in _CURVES:
        _CURVES[key] = run_monte_carlo(cfg)
    return _CURVES[key]


def mimo(detector, rho=0.0, array="ula", ebn0=(15.0, 24.0), n=4, **kw):
    params = {}
    if detector == "pso":
        params = vars(tuned_pso_params(rho)).copy()
    elif detector == "de":
        params = vars(tuned_de_params(rho)).copy()
    params.pop("search_bound", None)
    return ScenarioConfig(MIMO_OFDM, order=4, nt=n, nr=n, array_kind=array, rho=rho, detector=detector,
                          detector_params=params, tau_rms=51e-9, ebn0_db=tuple(ebn0), max_trials=1000,
                          seed=MIMO_SEED, **kw)


def within(a, b, sa, sb, k=3.0):
    """True when ``a <= b`` holds up to ``k`` combined standard errors."""
    return a <= b + k * math.hypot(sa, sb)


def crossing_db(c, target):
    """Eb/N0 where the log-BER curve, linearly interpolated, crosses ``target``."""
    x, y = c.ebn0_db, np.log10(np.maximum(c.ber, 1e-12))
    idx = np.flatnonzero((y[:-1] >= math.log10(target)) & (y[1:] < math.log10(target)))
    if idx.size == 0:
        return math.nan
    i = idx[0]
    return float(x[i] + (math.log10(target) - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i]))


# ---------------------------------------------------------------- checks

def check_jakes():
    cfg = parse_config("jakes-validation")
    j = cfg.jakes()
    t0 = time.perf_counter()
    rep = jakes_statistics(JakesConfig(j.num_oscillators, j.max_doppler, j.sample_period, j.num_waveforms),
                           j.num_samples, cfg.seed)
    runtime = time.perf_counter() - t0
    w = rep.worst()
    parts = dict(
        ks_amplitude=w["ks_amplitude"] < 0.02,
        ks_phase=w["ks_phase"] < 0.02,
        autocorr=w["autocorr_rms_error"] < 0.05,
        cross_corr=w["max_cross_correlation"] < 0.05,
        psd_peak=w["psd_peak_error_bins"] <= 1.0,
        runtime=runtime <= 10.0,
    )
    detail = (f"KS amp {w['ks_amplitude']:.4f} (unit scale {w['ks_amplitude_unit']:.4f}), "
              f"KS phase {w['ks_phase']:.4f}, acf rms {w['autocorr_rms_error']:.4f}, "
              f"xcorr {w['max_cross_correlation']:.4f}, psd peak off {w['psd_peak_error_bins']:.1f} bins, "
              f"{runtime:.1f} s; failing: {[k for k, v in parts.items() if not v] or 'none'}")
    return all(parts.values()), detail


def check_flatness():
    n_min = min_subcarriers_flat(5e6, 2.5e-6, 0.2)
    pre = parse_config("ofdm-subcarriers")
    grid = (10.0, 15.0, 20.0)
    t0 = time.perf_counter()
    base = [s for s in pre.scenarios() if s.ofdm.num_subcarriers == 512][0].replace(ebn0_db=grid)
    c512 = run_monte_carlo(base)
    c64 = run_monte_carlo(base.replace(ofdm=OfdmConfig(64, 0.2, 5e6)))
    runtime = time.perf_counter() - t0
    ok = n_min == 393
    notes = [f"min N {n_min}"]
    for p in c512.points:
        ref = analytic_ber_rayleigh(16, p.ebn0_db, base.ofdm.overhead)
        z = (p.ber - ref) / p.sigma
        ok &= abs(z) <= 3
        notes.append(f"N512@{p.ebn0_db:g}dB {p.ber:.3g} vs {ref:.3g} ({z:+.1f} sigma)")
    p64, p512 = c64.point(20.0), c512.point(20.0)
    gap = (p64.ber - p512.ber) / math.hypot(p64.sigma, p512.sigma)
    ok &= gap >= 3
    notes.append(f"N64@20dB {p64.ber:.3g} ({gap:.1f} sigma worse)")
    ok &= runtime <= 300
    notes.append(f"{runtime:.0f} s")
    return bool(ok), "; ".join(notes)


def check_cp_floor():
    base = ScenarioConfig(OfdmConfig(512, 0.1, 5e6), order=16, channel_mode="jakes", tau_rms=2.5e-6,
                          max_doppler=23.0, num_oscillators=256, ebn0_db=(20.0, 30.0), seed=2024)
    t0 = time.perf_counter()
    out = cp_study(base, [0.1, 0.2])
    runtime = time.perf_counter() - t0
    r = {f: c.point(30.0).ber / c.point(20.0).ber for f, c in out.items()}
    ok = out[0.1].metadata["floor"] and not out[0.2].metadata["floor"] and runtime <= 300
    return bool(ok), (f"BER30/BER20 at CP 10% {r[0.1]:.2f} (floor {out[0.1].metadata['floor']}), "
                      f"CP 20% {r[0.2]:.2f} (floor {out[0.2].metadata['floor']}), {runtime:.0f} s")


def check_ordering():
    t0 = time.perf_counter()
    coarse = tuple(float(v) for v in range(0, 31, 3))
    c = {d: curve(mimo(d, ebn0=coarse)) for d in ("ml", "mmse", "zf")}
    ok = True
    bad = []
    for i, e in enumerate(coarse):
        ml, mm, zf = (c[d].points[i] for d in ("ml", "mmse", "zf"))
        good = within(ml.ber, mm.ber, ml.sigma, mm.sigma) and within(mm.ber, zf.ber, mm.sigma, zf.sigma)
        ok &= good
        if not good:
            bad.append(e)
    fine_mmse = run_monte_carlo(mimo("mmse", ebn0=np.arange(12.0, 21.0), min_errors=2000, min_trials=200))
    fine_zf = run_monte_carlo(mimo("zf", ebn0=np.arange(16.0, 25.0), min_errors=2000, min_trials=200))
    gap = crossing_db(fine_zf, 1e-2) - crossing_db(fine_mmse, 1e-2)
    ok &= abs(gap - 3.0) <= 1.5
    runtime = time.perf_counter() - t0
    ok &= runtime <= 600
    return bool(ok), (f"ordering violated at {bad or 'no'} grid points; MMSE-ZF gap at 1e-2 = {gap:.2f} dB; "
                      f"{runtime:.0f} s")


def check_correlation():
    ok = True
    notes = []
    for d in ("zf", "mmse", "ml", "pso"):
        lo = curve(mimo(d, 0.0)).point(24.0)
        hi = curve(mimo(d, 0.9)).point(24.0)
        ok &= within(lo.ber, hi.ber, lo.sigma, hi.sigma)
        ratio = hi.ber / lo.ber if lo.errors else math.inf
        if d == "zf":
            ok &= ratio >= 10
        notes.append(f"{d} {lo.ber:.2g}->{hi.ber:.2g} (x{ratio:.3g})")
    return bool(ok), "BER at 24 dB rho 0 -> 0.9: " + ", ".join(notes)


def heuristic_vs_ml(ebn0_db, runs=1000, seed=0):
    rng = np.random.default_rng(seed)
    c = qam_constellation(4)
    nt = 2
    H = (rng.standard_normal((runs, nt, nt)) + 1j * rng.standard_normal((runs, nt, nt))) / math.sqrt(2 * nt)
    x = c.points[rng.integers(0, 4, (runs, nt))]
    y = np.einsum("bij,bj->bi", H, x)
    ratio = 0.0
    if math.isfinite(ebn0_db):
        var = c.average_energy / (c.bits_per_symbol * 10 ** (ebn0_db / 10))
        y = y + math.sqrt(var / 2) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        ratio = var / c.average_energy
    obs = MimoObservation(y, H, ratio, c)
    rd = real_decompose(obs)
    ml = detect_ml(obs).metadata["metric"]
    out = {}
    for name, det, params in (("pso", pso_detect, tuned_pso_params(0.0)), ("de", de_detect, tuned_de_params(0.0))):
        res, _ = det(rd, params, seed + 1)
        out[name] = float(np.mean(np.isclose(fitness(stack_real(res.x_hat), rd), ml, rtol=0, atol=1e-9)))
    return out


def check_heuristic_oracle():
    t0 = time.perf_counter()
    clean = heuristic_vs_ml(math.inf, seed=10)
    noisy = heuristic_vs_ml(12.0, seed=20)
    runtime = time.perf_counter() - t0
    ok = min(clean.values()) >= 0.99 and min(noisy.values()) >= 0.95 and runtime <= 120
    return ok, (f"noiseless PSO {clean['pso']:.1%} DE {clean['de']:.1%}; 12 dB PSO {noisy['pso']:.1%} "
                f"DE {noisy['de']:.1%}; {runtime:.1f} s")


def check_plateau():
    c = qam_constellation(4)
    nt = 4
    var = c.average_energy / (c.bits_per_symbol * 10 ** 1.5)
    plateaus = {"pso": [], "de": []}
    for s in range(100):
        rng = np.random.default_rng(1000 + s)
        H = (rng.standard_normal((1, nt, nt)) + 1j * rng.standard_normal((1, nt, nt))) / math.sqrt(2 * nt)
        x = c.points[rng.integers(0, 4, (1, nt))]
        y = np.einsum("bij,bj->bi", H, x)
        y = y + math.sqrt(var / 2) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        rd = real_decompose(MimoObservation(y, H, var / c.average_energy, c))
        _, tp = pso_detect(rd, tuned_pso_params(0.0), s)
        _, td = de_detect(rd, tuned_de_params(0.0), s)
        plateaus["pso"].append(int(convergence_profile(tp)[0]))
        plateaus["de"].append(int(convergence_profile(td)[0]))
    med = {k: float(np.median(v)) for k, v in plateaus.items()}
    ok = all(25 <= m <= 60 for m in med.values())
    return ok, f"median plateau iteration PSO {med['pso']:g}, DE {med['de']:g} (tolerance 1%)"


def check_flops():
    import sympy as sp

    t0 = time.perf_counter()
    Nt, Nr, P, I, M = sp.symbols("Nt Nr P I M")
    zf = sp.Rational(16, 3) * Nt**3 + 4 * Nt**2 + 32 * Nt**2 * Nr + 4 * Nt * Nr - 2 * Nt
    sym = dict(zf=zf, mmse=zf + 4 * Nt**2 + 2 * Nt,
               pso=P * I * (8 * Nt * Nr + 20 * Nt + 4 * Nr + 7),
               de=P * I * (16 * Nt * Nr + 12 * Nt + 8 * Nr + 14),
               ml=M ** (2 * Nt) * (8 * Nr * Nt + 4 * Nr + 7))
    rng = np.random.default_rng(15)
    exact = True
    for _ in range(10):
        nt, nr, p, it = (int(v) for v in rng.integers(1, 10, 4))
        m = int(rng.choice([4, 16, 64]))
        subs = {Nt: nt, Nr: nr, P: p, I: it, M: m}
        got = dict(zf=flop_count("zf", nt, nr), mmse=flop_count("mmse", nt, nr),
                   pso=flop_count("pso", nt, nr, p, it), de=flop_count("de", nt, nr, p, it),
                   ml=flop_count("ml", nt, nr, order=m))
        exact &= all(math.isclose(got[k], float(v.subs(subs)), rel_tol=1e-12) for k, v in sym.items())
    ml22 = flop_count("ml", 2, 2, order=4)
    rep = relative_complexity([2, 4, 8])
    order_ok = all(rep.flops("pso", n) < rep.flops("de", n) for n in (2, 4, 8))
    bad = [(d, n, round(rep.ratio(d, n), 3)) for n in (2, 4, 8) for d in ("zf", "mmse", "pso", "de")
           if not rep.ratio(d, n) < 1]
    runtime = time.perf_counter() - t0
    ok = exact and ml22 == 12032 and order_ok and not bad and runtime < 1.0
    return ok, (f"symbolic match {exact}, ML(2,2,4) = {ml22:g}, PSO<DE {order_ok}, "
                f"ratio vs ML >= 1 for {bad or 'none'}, {runtime:.2f} s")


def check_sensibility():
    unit = sensibility_kappa(1e-3, 1e-2)
    ok = unit == -1.0
    notes = [f"kappa(1e-3,1e-2) = {unit:g}"]
    for rho in (0.5, 0.9):
        k = {}
        for d in ("ml", "zf", "mmse", "pso"):
            ref = curve(mimo(d, 0.0)).point(15.0)
            scn = curve(mimo(d, rho)).point(15.0)
            k[d] = kappa_between(scn, ref)
        vals = {d: v.value for d, v in k.items()}
        ok &= max(vals, key=vals.get) == "ml" and min(vals, key=vals.get) == "zf"
        notes.append(f"rho {rho}: " + ", ".join(f"{d} {v.bound}{v.value:.3f}" for d, v in k.items()))
    return bool(ok), "; ".join(notes) + " (15 dB)"


def check_ura():
    ok = True
    notes = []
    for d in ("zf", "mmse", "pso"):
        ula = curve(mimo(d, 0.5)).point(24.0)
        ura = curve(mimo(d, 0.5, array="ura")).point(24.0)
        diff = abs(math.log10(ura.ber) - math.log10(ula.ber))
        ok &= diff <= 0.3
        notes.append(f"{d} ULA {ula.ber:.3g} URA {ura.ber:.3g} (|dlog| {diff:.3f})")
    return ok, ", ".join(notes)


CHECKS = [
    ("AC1 fading statistics", check_jakes),
    ("AC2 subcarrier flatness", check_flatness),
    ("AC3 cyclic-prefix floor", check_cp_floor),
    ("AC4 detector ordering", check_ordering),
    ("AC5 correlation degradation", check_correlation),
    ("AC6 heuristics vs ML", check_heuristic_oracle),
    ("AC7 convergence plateau", check_plateau),
    ("AC8 FLOP model", check_flops),
    ("AC9 sensibility", check_sensibility),
    ("AC10 URA vs ULA", check_ura),
]


@pytest.mark.parametrize("name,check", CHECKS, ids=[n.split()[0] for n, _ in CHECKS])
def test_acceptance(name, check):
    ok, detail = check()
    record(name, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for name, check in CHECKS:
        ok, detail = check()
        failed += not record(name, ok, detail)
    sys.exit(1 if failed else 0)
