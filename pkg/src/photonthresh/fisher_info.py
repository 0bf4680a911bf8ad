"""Fisher information of photon-counting measurements and optimal thresholds.

For one counting window and an unknown parameter mu of the photon
statistics p(n):

* shot-noise limit (ideal photon-number resolution):
      J0 = sum_n (d_mu p(n))^2 / p(n)
* threshold detector with click rate q(t):
      J(t) = (d_mu q)^2 / (q (1 - q))
* PNRD saturating at M photons:
      J(M) = sum_{n<M} (d_mu p)^2 / p + (sum_{n>=M} d_mu p)^2 / sum_{n>=M} p

J0 >= J always (data processing); an adaptive threshold detector operated
at t* = argmax_t J(t) recovers most of J0.  The trade space against plain
intensity detection is summarized by the threshold-equivalent noise
gamma_e = J0/J - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector_models import TabulatedResponse, ThresholdResponse, counting_rate
from .errors import DomainError
from .photon_stats import FAMILIES, FAMILY_PARAMS, PhotonDistribution

DEGENERATE_Q = 1e-15   # q this close to {0, 1} carries no local information
TINY_P = 1e-300


@dataclass(frozen=True)
class ParamSpec:
    """Which parameter to differentiate and how.

    mode "analytic" uses the family's closed-form pmf derivatives; mode
    "fd" uses Richardson-extrapolated central differences with relative
    step ``rel_step`` (the evaluation point must then be interior to the
    parameter domain).
    """

    name: str
    mode: str = "analytic"
    rel_step: float = 1e-5

    def __post_init__(self):
        if self.mode not in ("analytic", "fd"):
            raise DomainError(f"derivative mode must be 'analytic' or 'fd', got {self.mode!r}")


def _as_spec(param) -> ParamSpec:
    return param if isinstance(param, ParamSpec) else ParamSpec(str(param))


def _fd_dpmf(dist: PhotonDistribution, name: str, ns: np.ndarray, rel_step: float) -> np.ndarray:
    if name not in dist.param_names():
        return np.zeros(ns.shape, dtype=float)
    mu = getattr(dist, name)
    h = rel_step * max(1.0, abs(mu))

    def central(step):
        hi = dist.replace(**{name: mu + step}).pmf(ns)
        lo = dist.replace(**{name: mu - step}).pmf(ns)
        return (hi - lo) / (2.0 * step)

    try:
        return (4.0 * central(h / 2.0) - central(h)) / 3.0
    except DomainError as exc:
        raise DomainError(
            f"finite differences need an interior evaluation point for {name!r} "
            f"(mu = {mu}, step = {h})"
        ) from exc


def pmf_and_derivative(dist: PhotonDistribution, param) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(support, pmf, d pmf / d mu) over the truncated support."""
    spec = _as_spec(param)
    ns = dist.support()
    p = dist.pmf(ns)
    if spec.mode == "analytic":
        dp = np.asarray(dist.dpmf(spec.name, ns), dtype=float)
    else:
        dp = _fd_dpmf(dist, spec.name, ns, spec.rel_step)
    return ns, p, dp


# =============================================================================
def shot_noise_fisher(dist: PhotonDistribution, param) -> float:
    """Fisher information of ideal photon-number-resolving detection."""
    _, p, dp = pmf_and_derivative(dist, param)
    mask = p > TINY_P
    return float(np.sum(dp[mask] ** 2 / p[mask]))


def _binary_fisher(q: float, dq: float) -> float:
    if q < DEGENERATE_Q or 1.0 - q < DEGENERATE_Q:
        return 0.0
    return dq * dq / (q * (1.0 - q))


def pd_fisher(dist: PhotonDistribution, threshold, param) -> float:
    """Fisher information of one click/no-click window at the given
    threshold (an integer for the ideal step, or any response object)."""
    if isinstance(threshold, (int, np.integer)):
        resp = ThresholdResponse(int(threshold))
    elif isinstance(threshold, (ThresholdResponse, TabulatedResponse)):
        resp = threshold
    else:
        raise DomainError(f"threshold must be an integer or a response object, got {threshold!r}")
    _, p, dp = pmf_and_derivative(dist, param)
    if isinstance(resp, ThresholdResponse) and resp.is_ideal:
        t = int(resp.threshold)
        if t < 1:
            raise DomainError("ideal threshold must be >= 1")
        q = float(dist.sf(t))
        dq = -float(np.sum(dp[: min(t, dp.size)]))
    else:
        q = counting_rate(dist, resp)
        ns = np.arange(p.size)
        a = np.asarray(resp.click_prob(ns), dtype=float)
        a_tail = float(resp.click_prob(np.asarray(p.size)))
        dq = float(np.sum(a * dp)) - a_tail * float(np.sum(dp))
    return _binary_fisher(q, dq)


def pnrd_fisher(dist: PhotonDistribution, M: int, param) -> float:
    """Fisher information of a PNRD with resolution M (outcome min(n, M))."""
    if M < 1 or int(M) != M:
        raise DomainError(f"resolution M must be an integer >= 1, got {M}")
    M = int(M)
    _, p, dp = pmf_and_derivative(dist, param)
    head = min(M, p.size)
    ph, dph = p[:head], dp[:head]
    mask = ph > TINY_P
    total = float(np.sum(dph[mask] ** 2 / ph[mask]))
    tail_p = max(0.0, 1.0 - float(np.sum(ph)))
    tail_dp = -float(np.sum(dph))
    # a truncation-level tail carries no reliable derivative signal
    if tail_p > 64.0 * 1e-12:
        total += tail_dp**2 / tail_p
    return total


def threshold_scan(dist: PhotonDistribution, param, t_max: int | None = None):
    """J(t) for every integer threshold t = 1..t_max (vectorized scan)."""
    _, p, dp = pmf_and_derivative(dist, param)
    n_max = p.size - 1
    top = n_max + 1 if t_max is None else int(t_max)
    ts = np.arange(1, top + 1)
    cp = np.cumsum(p)
    cdp = np.cumsum(dp)
    idx = np.minimum(ts - 1, n_max)
    q = 1.0 - cp[idx]
    dq = -cdp[idx]
    q = np.where(ts - 1 > n_max, 0.0, q)
    dq = np.where(ts - 1 > n_max, 0.0, dq)
    ok = (q > DEGENERATE_Q) & (1.0 - q > DEGENERATE_Q)
    J = np.zeros_like(q)
    J[ok] = dq[ok] ** 2 / (q[ok] * (1.0 - q[ok]))
    return ts, J


def optimal_threshold(dist: PhotonDistribution, param, t_max: int | None = None) -> tuple[int, float]:
    """Exhaustive integer scan for argmax_t J(t); ties break toward smaller t."""
    ts, J = threshold_scan(dist, param, t_max)
    i = int(np.argmax(J))
    return int(ts[i]), float(J[i])


@dataclass(frozen=True)
class FisherReport:
    """Information budget for one parameter of one source."""

    parameter: str
    J: float
    J0: float
    t_opt: int
    efficiency: float

    def __post_init__(self):
        if self.J < -1e-12 or self.J > self.J0 * (1.0 + 1e-9) + 1e-12:
            raise DomainError(
                f"data-processing violation: J = {self.J} outside [0, J0 = {self.J0}]"
            )


def fisher_report(dist: PhotonDistribution, param, t_max: int | None = None) -> FisherReport:
    spec = _as_spec(param)
    J0 = shot_noise_fisher(dist, spec)
    t_opt, J = optimal_threshold(dist, spec, t_max)
    eff = J / J0 if J0 > 0 else 0.0
    return FisherReport(parameter=spec.name, J=J, J0=J0, t_opt=t_opt, efficiency=eff)


# =============================================================================
def threshold_equiv_noise(dist: PhotonDistribution, threshold: float, sharpness: float, param) -> float:
    """Threshold-equivalent electronic noise gamma_e = J0/J - 1 for a
    flux-threshold detector of the given sharpness.

    This is the noise-equivalent power (relative to photonic shot noise) an
    intensity detector would need to match the thresholded detector's
    information; +inf when the threshold channel carries none.
    """
    resp = ThresholdResponse(threshold, sharpness=sharpness, mode="flux")
    J = pd_fisher(dist, resp, param)
    J0 = shot_noise_fisher(dist, param)
    if J <= 0.0:
        return math.inf
    return max(0.0, J0 / J - 1.0)


def efficiency_curve(family: str, param, N_values, fixed: dict | None = None):
    """FisherReport rows over a grid of mean photon numbers, plus the
    single-photon-detector baseline J(1)/J0 for each point.

    Returns (rows, spd_rows); each row is a dict matching the CSV schema
    (family, param, N, gamma_or_g, t_opt, J, J0, efficiency).
    """
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}")
    spec = _as_spec(param)
    fixed = dict(fixed or {})
    extra = [k for k in FAMILY_PARAMS[family] if k != "N"]
    gamma_or_g = fixed.get(extra[0]) if extra else ""
    rows, spd_rows = [], []
    for N in N_values:
        dist = FAMILIES[family](N=float(N), **fixed)
        rep = fisher_report(dist, spec)
        base = dict(family=family, param=spec.name, N=float(N), gamma_or_g=gamma_or_g,
                    J0=rep.J0)
        rows.append(dict(base, t_opt=rep.t_opt, J=rep.J, efficiency=rep.efficiency))
        J1 = pd_fisher(dist, 1, spec)
        spd_rows.append(dict(base, t_opt=1, J=J1,
                             efficiency=J1 / rep.J0 if rep.J0 > 0 else 0.0))
    return rows, spd_rows
