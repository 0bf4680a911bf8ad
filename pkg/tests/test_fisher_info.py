"""Fisher-information functionals, optimal thresholds, and the trade space."""

import math

import numpy as np
import pytest

from photonthresh.detector_models import TabulatedResponse, ThresholdResponse
from photonthresh.fisher_info import (
    ParamSpec,
    efficiency_curve,
    fisher_report,
    optimal_threshold,
    pd_fisher,
    pnrd_fisher,
    shot_noise_fisher,
    threshold_equiv_noise,
    threshold_scan,
)
from photonthresh.photon_stats import (
    CoherentDist,
    DisplacedThermalDist,
    DolpJointDist,
    FockDist,
    ThermalDist,
)


# --------------------------------------------------------------- shot noise
def test_shot_noise_closed_forms():
    assert shot_noise_fisher(ThermalDist(1.0), "N") == pytest.approx(0.5, rel=1e-8)
    assert shot_noise_fisher(CoherentDist(2.0), "N") == pytest.approx(0.5, rel=1e-8)
    assert shot_noise_fisher(ThermalDist(1.0), "gamma") == 0.0


def test_pd_fisher_values():
    e = math.exp(-1.0)
    assert pd_fisher(CoherentDist(1.0), 1, "N") == pytest.approx(
        e * e / ((1 - e) * e), rel=1e-10)
    assert pd_fisher(ThermalDist(1.0), 1, "N") == pytest.approx(0.25, rel=1e-10)
    assert pd_fisher(FockDist(3), 2, "N") == 0.0


def test_pnrd_equals_pd_at_unit_resolution():
    for dist, param in [(ThermalDist(0.7), "N"), (DolpJointDist(1.2, 0.6), "gamma"),
                        (DisplacedThermalDist(2.0, 0.3), "g")]:
        assert pnrd_fisher(dist, 1, param) == pytest.approx(
            pd_fisher(dist, 1, param), abs=1e-12)


def test_pnrd_reaches_shot_noise():
    dist = DisplacedThermalDist(2.0, 0.3)
    M = dist.support().size + 3
    assert pnrd_fisher(dist, M, "g") == pytest.approx(
        shot_noise_fisher(dist, "g"), abs=1e-12)


def test_pnrd_monotone_in_resolution():
    dist = DisplacedThermalDist(3.0, 0.01)
    for param in ("N", "g"):
        Js = [pnrd_fisher(dist, M, param) for M in range(1, 40)]
        assert all(b >= a - 1e-15 for a, b in zip(Js, Js[1:]))


def test_data_processing_bounds():
    for dist, param in [(ThermalDist(2.0), "N"), (DolpJointDist(0.5, 0.5), "gamma"),
                        (DisplacedThermalDist(3.0, 0.2), "g")]:
        J0 = shot_noise_fisher(dist, param)
        ts, J = threshold_scan(dist, param)
        assert np.all(J <= J0 * (1 + 1e-9))
        for M in (1, 3, 8):
            assert pnrd_fisher(dist, M, param) <= J0 * (1 + 1e-9)


def test_adaptivity_dominates_single_photon_threshold():
    for dist, param in [(ThermalDist(3.0), "N"), (CoherentDist(5.0), "N"),
                        (DolpJointDist(0.1, 0.5), "gamma")]:
        _, J_max = optimal_threshold(dist, param)
        assert J_max >= pd_fisher(dist, 1, param) - 1e-15


# --------------------------------------------------------- optimal threshold
def test_thermal_fixed_point():
    for N in (50.0, 100.0, 200.0):
        rep = fisher_report(ThermalDist(N), "N")
        assert 1.55 <= rep.t_opt / N <= 1.63
        assert 0.64 <= rep.efficiency <= 0.66


def test_coherent_fixed_point():
    rep = fisher_report(CoherentDist(100.0), "N")
    assert abs(rep.t_opt / 100.0 - 1.0) <= 0.02
    assert abs(rep.efficiency - 2 / math.pi) <= 0.01


def test_unpolarized_fixed_point():
    rep = fisher_report(DolpJointDist(100.0, 0.0), "N")
    assert 1.25 <= rep.t_opt / 100.0 <= 1.33
    assert 0.63 <= rep.efficiency <= 0.66


def test_weak_signal_dolp_threshold_is_two():
    t, _ = optimal_threshold(DolpJointDist(0.1, 0.5), "gamma")
    assert t == 2


def test_ties_break_toward_smaller_threshold():
    ts, J = threshold_scan(ThermalDist(1.0), "N", t_max=8)
    i = int(np.argmax(J))
    # verify the scan's argmax convention against a manual tie-aware scan
    best = min(t for t, j in zip(ts, J) if j >= J[i] - 0.0)
    t_opt, _ = optimal_threshold(ThermalDist(1.0), "N", t_max=8)
    assert t_opt == best


def test_asymptotic_scaling_matches_limit_formulas():
    # thermal: J(t)/J0 ~ x^2/(e^x - 1) with x = t/N
    N = 400.0
    J0 = shot_noise_fisher(ThermalDist(N), "N")
    for x in (1.0, 1.6, 2.5):
        t = int(round(x * N))
        y = pd_fisher(ThermalDist(N), t, "N") / J0
        assert y == pytest.approx(x**2 / math.expm1(x), rel=2e-2)
    # unpolarized: 8x^4 / ((2x+1)(e^{2x} - 2x - 1))
    J0u = shot_noise_fisher(DolpJointDist(N, 0.0), "N")
    for x in (1.0, 1.3):
        t = int(round(x * N))
        y = pd_fisher(DolpJointDist(N, 0.0), t, "N") / J0u
        ref = 8 * x**4 / ((2 * x + 1) * (math.exp(2 * x) - 2 * x - 1))
        assert y == pytest.approx(ref, rel=2e-2)


# ------------------------------------------------------- derivative plumbing
def test_fd_mode_agrees_with_analytic():
    for dist, param in [(ThermalDist(1.3), "N"), (DolpJointDist(0.7, 0.4), "gamma"),
                        (DisplacedThermalDist(2.0, 0.2), "g")]:
        Ja = shot_noise_fisher(dist, ParamSpec(param))
        Jf = shot_noise_fisher(dist, ParamSpec(param, mode="fd"))
        assert Jf == pytest.approx(Ja, rel=1e-5)
        t_a = optimal_threshold(dist, ParamSpec(param))[0]
        t_f = optimal_threshold(dist, ParamSpec(param, mode="fd"))[0]
        assert t_a == t_f


def test_gamma_fisher_vanishes_at_zero_by_symmetry():
    assert shot_noise_fisher(DolpJointDist(1.0, 0.0), "gamma") == 0.0


# -------------------------------------------------------------- trade space
def test_threshold_equiv_noise_limit():
    dist = CoherentDist(1000.0)
    ge = threshold_equiv_noise(dist, 1000.0, math.inf, "N")
    assert abs(ge - (math.pi / 2 - 1)) <= 0.02


def test_threshold_equiv_noise_decreasing_in_sharpness():
    dist = CoherentDist(1000.0)
    vals = [threshold_equiv_noise(dist, 1000.0, float(S), "N")
            for S in (1, 3, 10, 30, 100)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_threshold_equiv_noise_uninformative_channel():
    # Fock source carries no parametric information: J = 0 -> +inf sentinel
    assert threshold_equiv_noise(FockDist(2), 2.5, 10.0, "N") == math.inf


def test_pd_fisher_accepts_response_objects():
    dist = ThermalDist(1.0)
    flux = ThresholdResponse(1.5, sharpness=50.0, mode="flux")
    assert pd_fisher(dist, flux, "N") > 0
    tab = TabulatedResponse((0.0, 0.9, 0.99, 1.0))
    assert pd_fisher(dist, tab, "N") > 0


# --------------------------------------------------------- efficiency curve
def test_efficiency_curve_rows():
    rows, spd = efficiency_curve("thermal", "N", [0.01, 1.0, 50.0])
    assert len(rows) == len(spd) == 3
    assert rows[0]["efficiency"] == pytest.approx(spd[0]["efficiency"], abs=5e-3)
    assert all(r["efficiency"] <= 1 + 1e-9 for r in rows)
    assert all(r["J"] >= s["J"] * (1 - 1e-12) for r, s in zip(rows, spd))
    # weak thermal light: a single-photon threshold is already near optimal
    assert spd[0]["efficiency"] > 0.95
