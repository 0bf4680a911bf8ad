"""Two-threshold inversion, likelihood estimation, CRLB helpers, and the
adaptive measurement loop."""

import json
import math

import numpy as np
import pytest

from photonthresh.adaptive_estimation import (
    AdaptiveConfig,
    adaptive_loop,
    crlb_std,
    dolp_rate,
    dolp_rate_grads,
    forward_q12,
    invert_q12,
    invert_q12_arrays,
    likelihood_estimate,
)
from photonthresh.detector_models import ClickRecord
from photonthresh.errors import DomainError
from photonthresh.fisher_info import pd_fisher
from photonthresh.photon_stats import DisplacedThermalDist, DolpJointDist


# ------------------------------------------------------------------ forward
def test_forward_q12_values():
    q1, q2 = forward_q12(1.0, 0.5)
    assert q1 == pytest.approx(0.5428571428571, abs=1e-10)
    assert q2 == pytest.approx(0.2555102040816, abs=1e-10)
    assert forward_q12(0.0, 0.3) == (0.0, 0.0)
    assert forward_q12(1.0, 1.0) == pytest.approx((0.5, 0.25), abs=1e-12)


def test_forward_matches_distribution_rates():
    for N, g in [(0.3, 0.2), (1.5, 0.8), (4.0, 0.0)]:
        d = DolpJointDist(N, g)
        q1, q2 = forward_q12(N, g)
        assert q1 == pytest.approx(d.sf(1), abs=1e-12)
        assert q2 == pytest.approx(d.sf(2), abs=1e-12)


# ------------------------------------------------------------------ inverse
def test_invert_round_trip_examples():
    inv = invert_q12(*forward_q12(1.0, 0.5))
    assert inv.N == pytest.approx(1.0, abs=1e-4)
    assert inv.gamma == pytest.approx(0.5, abs=1e-4)
    inv = invert_q12(0.5, 0.25)
    assert inv.N == pytest.approx(1.0, abs=1e-10)
    assert inv.gamma == pytest.approx(1.0, abs=1e-10)


def test_invert_vacuum_flagged():
    inv = invert_q12(0.0, 0.0)
    assert inv.N == 0.0
    assert "gamma_indeterminate" in inv.flags


def test_invert_noise_clamps():
    # q2 pushed low: discriminant goes negative -> gamma, flagged
    inv = invert_q12(0.3, 0.0)
    assert inv.gamma == 0.0
    assert "discriminant_negative" in inv.flags
    with pytest.raises(DomainError):
        invert_q12(0.3, 0.4)
    with pytest.raises(DomainError):
        invert_q12(1.0, 0.2)


def test_round_trip_grid():
    worst = 0.0
    for N in np.geomspace(0.01, 10.0, 30):
        for g in np.linspace(0.05, 0.99, 25):
            inv = invert_q12(*forward_q12(N, g))
            worst = max(worst, abs(inv.N - N) / N, abs(inv.gamma - g) / g)
    assert worst < 1e-8


def test_vectorized_inversion_matches_scalar():
    qs = [forward_q12(N, g) for N, g in [(0.5, 0.3), (2.0, 0.9), (0.05, 0.6)]]
    q1 = np.array([q[0] for q in qs])
    q2 = np.array([q[1] for q in qs])
    N, g, flagged = invert_q12_arrays(q1, q2)
    for i, (Nt, gt) in enumerate([(0.5, 0.3), (2.0, 0.9), (0.05, 0.6)]):
        assert N[i] == pytest.approx(Nt, rel=1e-8)
        assert g[i] == pytest.approx(gt, rel=1e-7)
    assert not flagged.any()


# ------------------------------------------------------- vectorized rates
def test_dolp_rate_matches_distribution():
    rng = np.random.default_rng(0)
    for _ in range(30):
        N = float(rng.uniform(0.01, 6.0))
        g = float(rng.uniform(0.0, 1.0))
        t = int(rng.integers(1, 10))
        assert float(dolp_rate(N, g, t)) == pytest.approx(
            DolpJointDist(N, g).sf(t), abs=1e-12)


def test_dolp_rate_grads_match_finite_differences():
    h = 1e-6
    for N, g, t in [(1.3, 0.55, 3), (0.4, 0.2, 1), (2.5, 0.9, 5)]:
        q, dN, dg = (float(v) for v in dolp_rate_grads(N, g, t))
        fd_N = (float(dolp_rate(N + h, g, t)) - float(dolp_rate(N - h, g, t))) / (2 * h)
        fd_g = (float(dolp_rate(N, g + h, t)) - float(dolp_rate(N, g - h, t))) / (2 * h)
        assert dN == pytest.approx(fd_N, rel=1e-5, abs=1e-9)
        assert dg == pytest.approx(fd_g, rel=1e-5, abs=1e-9)


# --------------------------------------------------------------- likelihood
def test_likelihood_matches_inversion_at_exact_rates():
    q1, q2 = forward_q12(0.8, 0.6)
    w = 10**6
    recs = [ClickRecord(1, w, int(round(q1 * w))), ClickRecord(2, w, int(round(q2 * w)))]
    est = likelihood_estimate(recs, "dolp")
    ref = invert_q12(recs[0].rate, recs[1].rate)
    assert est.params["N"] == pytest.approx(ref.N, abs=1e-6)
    assert est.params["gamma"] == pytest.approx(ref.gamma, abs=1e-6)
    assert not est.boundary


def test_likelihood_consistency_monte_carlo():
    N_true, g_true = 0.5, 0.7
    w = 10**5
    q = {t: float(dolp_rate(N_true, g_true, t)) for t in (2, 3)}
    rng = np.random.default_rng(5)
    ests = []
    for _ in range(100):
        recs = [ClickRecord(t, w, int(rng.binomial(w, q[t]))) for t in (2, 3)]
        e = likelihood_estimate(recs, "dolp")
        ests.append((e.params["N"], e.params["gamma"]))
    ests = np.asarray(ests)
    # consistency at the estimator's own precision scale: the boundary at
    # gamma = 1 and the likelihood curvature leave an O(se^2) finite-sample
    # bias, so the mean is compared against the per-estimate spread
    for k, truth in enumerate((N_true, g_true)):
        spread = ests[:, k].std(ddof=1)
        assert abs(ests[:, k].mean() - truth) < 3 * spread


def test_likelihood_boundary_flag_on_degenerate_data():
    recs = [ClickRecord(1, 1, 1), ClickRecord(2, 1, 0)]
    est = likelihood_estimate(recs, "dolp")
    assert est.boundary
    # all-zero clicks pin the intensity to the lower search boundary
    recs = [ClickRecord(1, 50, 0), ClickRecord(2, 50, 0)]
    est = likelihood_estimate(recs, "dolp")
    assert est.boundary
    assert est.params["N"] == pytest.approx(1e-4, rel=1e-3)


def test_likelihood_requires_two_thresholds():
    with pytest.raises(DomainError):
        likelihood_estimate([ClickRecord(2, 100, 10)], "dolp")


def test_likelihood_displaced_family():
    d = DisplacedThermalDist(2.0, 0.3)
    w = 10**6
    recs = [ClickRecord(t, w, int(round(d.sf(t) * w))) for t in (2, 5)]
    est = likelihood_estimate(recs, "displaced", grid=48)
    assert est.params["N"] == pytest.approx(2.0, rel=2e-3)
    assert est.params["g"] == pytest.approx(0.3, abs=5e-3)


# --------------------------------------------------------------------- CRLB
def test_crlb_std_values():
    assert crlb_std(1.0, 10**4) == pytest.approx(0.01)
    assert crlb_std(0.25, 1000) == pytest.approx(0.0632456, abs=1e-6)
    assert crlb_std(0.0, 100) == math.inf
    with pytest.raises(DomainError):
        crlb_std(1.0, 0)


def test_empirical_spread_respects_crlb():
    # closed-form inversion at thresholds {1, 2}: the gamma spread cannot
    # beat the joint two-channel Cramer-Rao floor
    N_true, g_true, w = 1.0, 0.5, 10**4
    q1, q2 = forward_q12(N_true, g_true)
    rng = np.random.default_rng(11)
    ghat = []
    for _ in range(500):
        r1 = rng.binomial(w, q1) / w
        r2 = min(rng.binomial(w, q2) / w, r1)
        ghat.append(invert_q12(r1, r2).gamma)
    spread = np.std(ghat, ddof=1)
    A = B = C = 0.0
    for t in (1, 2):
        q, dN, dg = (float(v) for v in dolp_rate_grads(N_true, g_true, t))
        v = w / (q * (1 - q))
        A += v * dN * dN
        B += v * dN * dg
        C += v * dg * dg
    floor = math.sqrt(A / (A * C - B * B))
    assert spread >= floor


# ------------------------------------------------------------ adaptive loop
def test_adaptive_loop_reproducible():
    cfg = AdaptiveConfig(windows_per_threshold=500, max_iterations=4)
    src = DolpJointDist(0.5, 0.6)
    t1 = adaptive_loop(src, cfg, np.random.default_rng(42))
    t2 = adaptive_loop(src, cfg, np.random.default_rng(42))
    assert t1.to_json() == t2.to_json()


def test_adaptive_loop_weak_source_contains_two_photon_threshold():
    cfg = AdaptiveConfig(windows_per_threshold=1000, max_iterations=5)
    for seed in (1, 2, 3):
        trace = adaptive_loop(DolpJointDist(0.08, 0.6), cfg, np.random.default_rng(seed))
        assert 2 in trace.iterations[-1].next_pair


def test_adaptive_loop_accumulated_information_dominates_fixed_schedule():
    # at N >= 0.5 the per-parameter optimal thresholds move off the initial
    # assignment (1 for intensity, 2 for polarization), so each parameter's
    # dedicated channel accumulates at least as much information as the
    # frozen schedule's dedicated channel over the adapted iterations
    src = DolpJointDist(2.0, 0.5)
    cfg = AdaptiveConfig(windows_per_threshold=2000, max_iterations=4)
    trace = adaptive_loop(src, cfg, np.random.default_rng(8))
    w = cfg.windows_per_threshold
    adapted = trace.iterations[1:]
    for param, member, frozen_t in (("N", 0, 1), ("gamma", 1, 2)):
        adaptive_info = sum(w * pd_fisher(src, int(it.pair[member]), param)
                            for it in adapted)
        fixed_info = len(adapted) * w * pd_fisher(src, frozen_t, param)
        assert adaptive_info >= fixed_info * (1 - 1e-12)


def test_adaptive_loop_stops_at_target():
    src = DolpJointDist(1.0, 0.5)
    cfg = AdaptiveConfig(windows_per_threshold=4000, max_iterations=10, target_se=0.25)
    trace = adaptive_loop(src, cfg, np.random.default_rng(3))
    assert len(trace.iterations) < 10
    last = trace.iterations[-1]
    assert last.predicted_se["gamma"] <= 0.25
    # once met, no further iterations were emitted
    assert trace.iterations[-1].index == len(trace.iterations) - 1


def test_adaptive_loop_displaced_source():
    cfg = AdaptiveConfig(windows_per_threshold=2000, max_iterations=3)
    trace = adaptive_loop(DisplacedThermalDist(1.0, 0.5), cfg, np.random.default_rng(4))
    assert set(trace.estimates) == {"N", "g"}


def test_trace_serialization_round_trip():
    cfg = AdaptiveConfig(windows_per_threshold=200, max_iterations=2)
    trace = adaptive_loop(DolpJointDist(0.5, 0.5), cfg, np.random.default_rng(0))
    payload = json.loads(trace.to_json())
    assert payload["family"] == "dolp"
    assert len(payload["iterations"]) == 2
    rows = trace.to_csv_rows()
    assert len(rows) == 2 and len(rows[0]) == len(trace.CSV_HEADER)


def test_adaptive_config_validation():
    with pytest.raises(DomainError):
        AdaptiveConfig(windows_per_threshold=0)
    with pytest.raises(DomainError):
        AdaptiveConfig(initial_pair=(2, 2))
    with pytest.raises(DomainError):
        AdaptiveConfig(estimator="bayes")
