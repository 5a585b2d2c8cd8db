import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import erfc

from mimofdm.calibration import calibrate, expand_grid
from mimofdm.harness import (
    BerPoint,
    ScenarioConfig,
    analytic_ber_awgn,
    analytic_ber_rayleigh,
    cp_study,
    has_floor,
    kappa_between,
    run_monte_carlo,
    run_trial,
    sensibility_kappa,
    subcarrier_response,
    write_curves_csv,
)
from mimofdm.ofdm import OfdmConfig


def pam_gray_ber_awgn(order, ebn0_db):
    """Independent oracle: exact Gray square-QAM BER by integrating the
    Gaussian over every decision interval of one axis."""
    side = int(math.isqrt(order))
    k = int(math.log2(side))
    levels = 2 * np.arange(side) - (side - 1)
    gray = [i ^ (i >> 1) for i in range(side)]
    es = 2 / 3 * (order - 1)
    n0 = es / (math.log2(order) * 10 ** (ebn0_db / 10))
    sd = math.sqrt(n0 / 2)
    edges = np.concatenate([[-np.inf], (levels[:-1] + levels[1:]) / 2, [np.inf]])
    sf = lambda z: 0.5 * erfc(z / math.sqrt(2))
    errs = 0.0
    for i, a in enumerate(levels):
        for j in range(side):
            lo, hi = (edges[j] - a) / sd, (edges[j + 1] - a) / sd
            # evaluate on the tail side to avoid cancellation
            p = sf(lo) - sf(hi) if lo >= 0 else sf(-hi) - sf(-lo)
            errs += p * bin(gray[i] ^ gray[j]).count("1")
    return errs / (side * k)


def rayleigh_average(f_awgn, ebn0_db):
    g = 10 ** (ebn0_db / 10)
    val, _ = integrate.quad(lambda s: f_awgn(10 * math.log10(s)) * math.exp(-s / g) / g, 1e-12, 60 * g, limit=400)
    return val


def test_analytic_four_qam_frozen():
    # closed form 0.5 (1 - sqrt(g / (1 + g))) at g = 10
    assert analytic_ber_rayleigh(4, 10.0) == pytest.approx(0.023268705377203824, rel=1e-12)
    assert analytic_ber_rayleigh(4, 10.0) == pytest.approx(0.5 * (1 - math.sqrt(10 / 11)), rel=1e-12)


@pytest.mark.parametrize("order", [4, 16, 64, 256])
@pytest.mark.parametrize("ebn0", [0.0, 10.0, 20.0])
def test_analytic_matches_numeric_integration(order, ebn0):
    assert analytic_ber_awgn(order, ebn0) == pytest.approx(pam_gray_ber_awgn(order, ebn0), rel=1e-9, abs=1e-300)
    ref = rayleigh_average(lambda d: pam_gray_ber_awgn(order, d), ebn0)
    assert analytic_ber_rayleigh(order, ebn0) == pytest.approx(ref, rel=1e-5)


def test_analytic_limits_and_overhead():
    assert analytic_ber_rayleigh(16, 200.0) < 1e-15
    assert analytic_ber_rayleigh(16, -200.0) == pytest.approx(0.5, abs=1e-9)
    assert analytic_ber_rayleigh(4, 13.0, overhead=2.0) == pytest.approx(
        analytic_ber_rayleigh(4, 13.0 - 10 * math.log10(2.0)))
    with pytest.raises(ValueError):
        analytic_ber_rayleigh(8, 10.0)


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(detector="sphere")
    with pytest.raises(ValueError):
        ScenarioConfig(channel_mode="jakes")
    with pytest.raises(ValueError):
        ScenarioConfig(ebn0_db=())
    with pytest.raises(ValueError):
        ScenarioConfig(detector="zf", detector_params=dict(n_pop=3))
    with pytest.raises(ValueError):
        ScenarioConfig(detector="de", detector_params=dict(n_ind=2))


def test_scenario_roundtrip_and_fingerprint():
    cfg = ScenarioConfig(nt=2, nr=2, detector="pso", detector_params=dict(n_pop=10), rho=0.5)
    again = ScenarioConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.fingerprint() == cfg.fingerprint()
    assert cfg.replace(seed=1).fingerprint() != cfg.fingerprint()


def test_noiseless_zf_is_error_free():
    cfg = ScenarioConfig(OfdmConfig(64, 0.25, 20e6), nt=4, nr=4, tau_rms=51e-9, detector="zf",
                         ebn0_db=(math.inf,), max_trials=5)
    (p,) = run_monte_carlo(cfg).points
    assert p.errors == 0 and p.bits == 5 * 64 * 8


def test_siso_flat_matches_analytic():
    cfg = ScenarioConfig(OfdmConfig(64, 0.0, 1e6), order=4, ebn0_db=(0.0, 5.0, 10.0, 15.0),
                         min_errors=400, min_trials=200, seed=3)
    curve = run_monte_carlo(cfg)
    for p in curve.points:
        ref = analytic_ber_rayleigh(4, p.ebn0_db)
        assert abs(p.ber - ref) <= 3 * p.sigma, (p.ebn0_db, p.ber, ref, p.sigma)


def test_binomial_accounting_and_determinism():
    cfg = ScenarioConfig(OfdmConfig(64, 0.25, 20e6), nt=2, nr=2, tau_rms=51e-9, detector="mmse",
                         ebn0_db=(5.0, 10.0), min_errors=50, min_trials=3, seed=11)
    a = run_monte_carlo(cfg)
    b = run_monte_carlo(cfg)
    for p, q in zip(a.points, b.points):
        assert (p.errors, p.bits, p.trials) == (q.errors, q.bits, q.trials)
        assert p.ber * p.bits == pytest.approx(p.errors)
        assert p.errors <= p.bits and 0 <= p.ber <= 0.5 + 0.05
        lo, hi = p.ci
        assert lo <= p.ber <= hi


def test_workers_do_not_change_results():
    cfg = ScenarioConfig(OfdmConfig(64, 0.25, 20e6), nt=2, nr=2, tau_rms=51e-9, detector="zf",
                         ebn0_db=(8.0,), min_errors=30, min_trials=2, seed=2)
    a = run_monte_carlo(cfg, workers=1).points[0]
    b = run_monte_carlo(cfg, workers=2).points[0]
    assert (a.errors, a.bits, a.trials) == (b.errors, b.bits, b.trials)


def test_common_random_numbers_across_detectors():
    base = ScenarioConfig(OfdmConfig(64, 0.25, 20e6), nt=2, nr=2, tau_rms=51e-9, ebn0_db=(math.inf,), seed=4)
    # same seed, same trial: both detectors see the same bits and channel, so
    # noiseless full-rank detection gives zero errors for both
    assert run_trial(base.replace(detector="zf"), 0, 0)[0] == 0
    assert run_trial(base.replace(detector="ml"), 0, 0)[0] == 0


def test_subcarrier_response_folds_long_channels():
    rng = np.random.default_rng(0)
    taps = rng.standard_normal((20, 1, 1)) + 1j * rng.standard_normal((20, 1, 1))
    n = 8
    direct = np.array([np.sum(taps[:, 0, 0] * np.exp(-2j * np.pi * k * np.arange(20) / n)) for k in range(n)])
    np.testing.assert_allclose(subcarrier_response(taps, n)[:, 0, 0], direct, atol=1e-12)
    np.testing.assert_allclose(subcarrier_response(taps[:5], n), np.fft.fft(taps[:5], n, axis=0))


def test_cp_study_flags_and_single_tap():
    base = ScenarioConfig(OfdmConfig(64, 0.0, 1e6), order=4, ebn0_db=(10.0, 20.0, 30.0), seed=1,
                          min_errors=100, min_trials=20)
    out = cp_study(base, [0.0])
    assert out[0.0].metadata["floor"] is False
    with pytest.raises(ValueError):
        cp_study(base, [1.2])


def test_has_floor_rule():
    from mimofdm.harness import BerCurve
    pts = [BerPoint(10, 100, 1000, 1), BerPoint(20, 60, 1000, 1), BerPoint(30, 40, 1000, 1)]
    assert has_floor(BerCurve(pts, "x"))
    pts[-1] = BerPoint(30, 5, 1000, 1)
    assert not has_floor(BerCurve(pts, "x"))


def test_kappa():
    assert sensibility_kappa(1e-3, 1e-2) == pytest.approx(-1.0, abs=1e-15)
    assert sensibility_kappa(0.2, 0.2) == 0.0
    with pytest.raises(ValueError):
        sensibility_kappa(0.0, 0.1)
    k = kappa_between(BerPoint(15, 0, 1000, 10), BerPoint(15, 10, 1000, 10))
    assert k.bound == "<" and k.value == pytest.approx(-1.0)
    k = kappa_between(BerPoint(15, 10, 1000, 10), BerPoint(15, 0, 1000, 10))
    assert k.bound == ">" and k.value == pytest.approx(1.0)
    assert math.isnan(kappa_between(BerPoint(15, 0, 10, 1), BerPoint(15, 0, 10, 1)).value)


@given(st.floats(1e-9, 1.0), st.floats(1e-9, 1.0))
@settings(max_examples=60, deadline=None)
def test_kappa_antisymmetric(a, b):
    assert sensibility_kappa(a, b) == pytest.approx(-sensibility_kappa(b, a), abs=1e-12)


def test_curve_csv(tmp_path):
    cfg = ScenarioConfig(OfdmConfig(64, 0.0, 1e6), ebn0_db=(10.0,), min_errors=5, min_trials=1, scenario_id="s1")
    c = run_monte_carlo(cfg)
    write_curves_csv(tmp_path / "b.csv", [c])
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "scenario_id,detector,array,rho,ebn0_db,ber,ci_low,ci_high,bits,errors"
    assert lines[1].startswith("s1,zf,ula,0.0,10.0,")


def test_calibration_grid_and_ties():
    assert expand_grid(dict(a=[1, 2], b=[3])) == [dict(a=1, b=3), dict(a=2, b=3)]
    with pytest.raises(ValueError):
        expand_grid({})
    scen = ScenarioConfig(OfdmConfig(64, 0.25, 20e6), nt=2, nr=2, tau_rms=51e-9, detector="pso",
                          detector_params=dict(c1=2.0, c2=2.0), ebn0_db=(math.inf,), seed=0)
    res = calibrate(dict(n_pop=[40, 20], n_iter=[60]), scen, trials=2)
    # noiseless: every point reaches BER 0, the smaller swarm wins the tie
    assert all(b == 0 for _, b in res.surface)
    assert res.best == dict(n_pop=20, n_iter=60)
    one = calibrate(dict(n_pop=[30]), scen, trials=1)
    assert one.best == dict(n_pop=30)
