"""Nanowire hotspot evolution, vortex barrier, click probabilities, and the
bias staircase.  A coarse 64 x 64 grid keeps the suite fast; the shipped
defaults use 128 x 128."""

import math

import numpy as np
import pytest

from photonthresh.errors import ConfigError, DomainError
from photonthresh.nanowire import (
    NanowireParams,
    bias_for_threshold,
    click_probability,
    current_profile,
    evolve_hotspot,
    exported_response,
    final_state,
    stable_dt,
    switching_current,
    vortex_barrier,
)


@pytest.fixture(scope="module")
def params():
    return NanowireParams(grid_nx=64, grid_ny=64, snapshot_stride=16)


@pytest.fixture(scope="module")
def trajectories(params):
    return {n: evolve_hotspot(params, n) for n in range(6)}


# ---------------------------------------------------------------- evolution
def test_zero_photons_stay_quiet(params, trajectories):
    tr = trajectories[0]
    assert np.all(tr.n_se_rows == params.n_se0)
    assert np.all(tr.electron_totals == 0.0)


def test_hot_electron_conservation(params, trajectories):
    tr = trajectories[3]
    drift = np.max(np.abs(tr.electron_totals - tr.electron_totals[0]))
    assert drift <= 1e-6 * tr.electron_totals[0]
    assert tr.electron_totals[0] == pytest.approx(3.0, rel=1e-9)


def test_zero_conversion_decouples_quasiparticles(params):
    quiet = NanowireParams(**{**params.to_dict(), "qp_conversion": 1e-300})
    tr = evolve_hotspot(quiet, 3)
    assert np.all(np.abs(tr.n_se_rows - quiet.n_se0) < 1e-6 * quiet.n_se0)


def test_suppression_grows_with_photons(params, trajectories):
    dips = [1.0 - trajectories[n].n_se_rows.min() / params.n_se0 for n in range(6)]
    assert dips[0] == 0.0
    assert all(b > a for a, b in zip(dips, dips[1:]))


def test_stability_guard(params):
    with pytest.raises(ConfigError):
        evolve_hotspot(params, 1, dt=10 * stable_dt(params))
    with pytest.raises(DomainError):
        evolve_hotspot(params, -1)


# ------------------------------------------------------------------ barrier
def test_uniform_barrier_matches_antiderivative():
    p = NanowireParams(grid_nx=512, grid_ny=16)
    row = np.full(512, p.n_se0)
    xs, U, _ = vortex_barrier(row, np.zeros(512), p)
    oracle = (np.log(np.abs(np.cos(np.pi * xs / p.width)))
              - math.log(math.sin(math.pi * p.coherence_length / (2 * p.width))))
    scale = np.max(np.abs(oracle))
    assert np.max(np.abs(U - oracle)) <= 1e-4 * scale


def test_current_lowers_barrier(params):
    row = np.full(params.grid_nx, params.n_se0)
    _, U0, _ = vortex_barrier(row, np.zeros_like(row), params)
    K = current_profile(row, 1e-6, params)
    _, U1, _ = vortex_barrier(row, K, params)
    assert np.all(U1[1:] < U0[1:])


def test_current_profile_conserves_transport_current(params, trajectories):
    row = trajectories[4].n_se_rows[-1]
    K = current_profile(row, 3.3e-6, params)
    hx = params.width / row.size
    assert float(np.sum(K) * hx) == pytest.approx(3.3e-6, rel=1e-12)
    # current crowds away from the hotspot
    assert K[row.argmin()] < K[0]


def test_barrier_max_nonincreasing_in_photons(params, trajectories):
    i_b = 3.0e-6
    maxima = []
    for n in range(6):
        state = final_state(trajectories[n], i_b)
        maxima.append(state.barrier_max)
    assert all(b <= a + 1e-12 for a, b in zip(maxima, maxima[1:]))


# ------------------------------------------------------------------- clicks
def test_click_probability_bounds_and_zero_bias(params, trajectories):
    assert click_probability(params, 2, 0.0, trajectories[2]) == 0.0
    for n in (0, 3):
        for ib in (1e-6, 5e-6, 1e-5):
            P = click_probability(params, n, ib, trajectories[n])
            assert 0.0 <= P <= 1.0


def test_click_probability_double_monotonicity(params, trajectories):
    sws0 = switching_current(params, 0, traj=trajectories[0]).current
    biases = np.linspace(0.4, 1.05, 10) * sws0
    P = np.array([[click_probability(params, n, ib, trajectories[n]) for ib in biases]
                  for n in range(6)])
    assert np.all((P >= 0.0) & (P <= 1.0))
    assert np.all(np.diff(P, axis=1) >= -1e-9)
    assert np.all(np.diff(P, axis=0) >= -1e-9)


def test_switching_currents_strictly_decreasing(params, trajectories):
    sws = [switching_current(params, n, traj=trajectories[n]) for n in range(6)]
    assert all(s.converged for s in sws)
    assert all(abs(s.probability - 0.999) <= 1e-3 for s in sws)
    assert all(a.current > b.current for a, b in zip(sws, sws[1:]))


def test_threshold_plateaus(params, trajectories):
    point = bias_for_threshold(params, 1, trajectories=trajectories)
    assert point.contrast_ok
    assert point.response[1] >= 0.999
    assert point.response[0] <= 0.001
    point2 = bias_for_threshold(params, 2, trajectories=trajectories)
    assert point2.response[2] >= 0.999
    assert point2.response[1] <= 0.5
    assert point2.bias_current < point.bias_current


def test_exported_response_feeds_fisher_machinery(params, trajectories):
    from photonthresh.fisher_info import pd_fisher, shot_noise_fisher
    from photonthresh.photon_stats import CoherentDist

    point = bias_for_threshold(params, 2, trajectories=trajectories)
    resp = exported_response(point)
    dist = CoherentDist(2.0)
    J = pd_fisher(dist, resp, "N")
    J0 = shot_noise_fisher(dist, "N")
    gamma_e = J0 / J - 1.0
    assert math.isfinite(gamma_e) and gamma_e > 0.0


# ----------------------------------------------------------------- plumbing
def test_params_round_trip_and_validation():
    p = NanowireParams()
    again = NanowireParams.from_dict(p.to_dict())
    assert again == p
    with pytest.raises(ConfigError):
        NanowireParams.from_dict({"weird_knob": 1})
    with pytest.raises(ConfigError):
        NanowireParams(width=-1e-9)
    with pytest.raises(ConfigError):
        NanowireParams(coherence_length=1e-6)  # core larger than the wire


def test_shipped_config_loads():
    import json
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "configs" / "nanowire_demo.json"
    params = NanowireParams.from_dict(json.loads(path.read_text()))
    assert params.grid_nx == 128
