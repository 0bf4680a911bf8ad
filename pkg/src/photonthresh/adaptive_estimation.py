"""Parameter estimation from click records and the adaptive threshold loop.

The two-threshold workhorse: with an ideal threshold detector read out at
t = 1 and t = 2, the click rates of the two-polarization-mode source are

    q1 = 1 - p(0),   q2 = 1 - p(0) - p(1),

and (N, gamma) invert in closed form.  At arbitrary threshold sets the
estimates come from the product-binomial likelihood instead.  The adaptive
loop alternates measurement, estimation, and re-optimization of the
threshold pair, stopping when the predicted (CRLB) standard error meets the
target or the iteration cap is reached.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .detector_models import ClickRecord, ThresholdResponse, simulate_clicks
from .errors import DomainError
from .fisher_info import optimal_threshold
from .photon_stats import (
    GAMMA_DEGENERATE,
    DisplacedThermalDist,
    DolpJointDist,
    PhotonDistribution,
)

__all__ = [
    "AdaptiveConfig", "AdaptiveIteration", "AdaptiveTrace", "Q12Inversion",
    "LikelihoodEstimate", "forward_q12", "invert_q12", "invert_q12_arrays",
    "likelihood_estimate", "adaptive_loop", "crlb_std",
    "dolp_rate", "dolp_rate_grads", "pooled_records",
]


# =============================================================================
# Closed-form two-threshold inversion
# =============================================================================
def forward_q12(N: float, gamma: float) -> tuple[float, float]:
    """Exact click rates at thresholds 1 and 2 for the DoLP source."""
    if N < 0 or not 0.0 <= gamma <= 1.0:
        raise DomainError(f"need N >= 0 and gamma in [0, 1], got N={N}, gamma={gamma}")
    base = (0.5 * N + 1.0) ** 2 - 0.25 * (N * gamma) ** 2
    p0 = 1.0 / base
    p1 = (N * (0.5 * N + 1.0) - 0.5 * (N * gamma) ** 2) / base**2
    return 1.0 - p0, 1.0 - p0 - p1


@dataclass(frozen=True)
class Q12Inversion:
    N: float
    gamma: float
    flags: tuple = ()

    @property
    def flagged(self):
        return bool(self.flags)


def invert_q12(q1: float, q2: float) -> Q12Inversion:
    """Closed-form (N, gamma) from click rates at thresholds {1, 2}.

        N     = (q1 + q2 - 2 q1^2) / (1 - q1)^2
        gamma = sqrt((q2 + 2 - 3 q1)^2 - 4 (1 - q1)^3) / (q1 + q2 - 2 q1^2)

    Sampling noise can push the discriminant negative (gamma -> 0, flagged)
    or the estimates out of their domains (clamped, flagged).
    """
    if not 0.0 <= q2 <= q1:
        raise DomainError(f"need 0 <= q2 <= q1, got q1={q1}, q2={q2}")
    if q1 >= 1.0:
        raise DomainError("q1 must be < 1")
    flags = []
    denom = q1 + q2 - 2.0 * q1 * q1
    N = denom / (1.0 - q1) ** 2
    if N < 0.0:
        N = 0.0
        flags.append("N_clamped")
    disc = (q2 + 2.0 - 3.0 * q1) ** 2 - 4.0 * (1.0 - q1) ** 3
    if denom <= 1e-300:
        gamma = 0.0
        flags.append("gamma_indeterminate")
    elif disc < 0.0:
        gamma = 0.0
        flags.append("discriminant_negative")
    else:
        gamma = math.sqrt(disc) / denom
        if gamma > 1.0:
            gamma = 1.0
            flags.append("gamma_clamped")
    return Q12Inversion(N=N, gamma=gamma, flags=tuple(flags))


def invert_q12_arrays(q1, q2):
    """Vectorized inversion for per-pixel rate maps.

    Returns (N, gamma, flagged) with out-of-domain values clamped and
    ``flagged`` marking any pixel that needed a clamp or had an
    indeterminate polarization.
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    denom = q1 + q2 - 2.0 * q1 * q1
    one_m = np.maximum(1.0 - q1, 1e-300)
    N = denom / one_m**2
    flagged = N < 0.0
    N = np.maximum(N, 0.0)
    disc = (q2 + 2.0 - 3.0 * q1) ** 2 - 4.0 * (1.0 - q1) ** 3
    bad = (disc < 0.0) | (denom <= 1e-300)
    gamma = np.zeros_like(q1)
    good = ~bad
    gamma[good] = np.sqrt(disc[good]) / denom[good]
    flagged |= bad
    flagged |= gamma > 1.0
    gamma = np.clip(gamma, 0.0, 1.0)
    return N, gamma, flagged


# =============================================================================
# Vectorized DoLP counting rates (shared with the imaging pipeline)
# =============================================================================
def dolp_rate(N, gamma, t):
    """q(t) = P(n >= t) for the DoLP joint source, elementwise over arrays."""
    N = np.asarray(N, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    t = np.asarray(t, dtype=float)
    N, gamma, t = np.broadcast_arrays(N, gamma, t)
    a = 0.5 * N * (1.0 + gamma)
    b = 0.5 * N * (1.0 - gamma)
    degen = gamma < GAMMA_DEGENERATE
    with np.errstate(divide="ignore", invalid="ignore"):
        ra = a / (1.0 + a)
        rb = b / (1.0 + b)
        q_main = ((a + 1.0) * ra ** (t + 1) - (b + 1.0) * rb ** (t + 1)) / (a - b)
        m = 0.5 * N
        u = m / (m + 1.0)
        q_deg = u**t * (t + m + 1.0) / (m + 1.0)
    q = np.where(degen, q_deg, q_main)
    return np.where(N <= 0.0, 0.0, np.clip(q, 0.0, 1.0))


def dolp_rate_grads(N, gamma, t):
    """(q, dq/dN, dq/dgamma) elementwise; gamma gradient is 0 on the
    degenerate branch (pmf even in gamma)."""
    N = np.asarray(N, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    t = np.asarray(t, dtype=float)
    N, gamma, t = np.broadcast_arrays(N, gamma, t)
    a = 0.5 * N * (1.0 + gamma)
    b = 0.5 * N * (1.0 - gamma)
    degen = gamma < GAMMA_DEGENERATE
    with np.errstate(divide="ignore", invalid="ignore"):
        ra = a / (1.0 + a)
        rb = b / (1.0 + b)
        Fa = (a + 1.0) * ra ** (t + 1)
        Fb = (b + 1.0) * rb ** (t + 1)
        q_main = (Fa - Fb) / (a - b)
        dFa = ra**t * (a + t + 1.0) / (1.0 + a)
        dFb = rb**t * (b + t + 1.0) / (1.0 + b)
        dq_da = (dFa - q_main) / (a - b)
        dq_db = (q_main - dFb) / (a - b)
        dN_main = 0.5 * (1.0 + gamma) * dq_da + 0.5 * (1.0 - gamma) * dq_db
        dg_main = 0.5 * N * (dq_da - dq_db)

        m = 0.5 * N
        u = m / (m + 1.0)
        q_deg = u**t * (t + m + 1.0) / (m + 1.0)
        dm = q_deg * (t / np.maximum(m * (m + 1.0), 1e-300)
                      + 1.0 / (t + m + 1.0) - 1.0 / (m + 1.0))
        dN_deg = 0.5 * dm

    q = np.where(degen, q_deg, q_main)
    dN = np.where(degen, dN_deg, dN_main)
    dg = np.where(degen, 0.0, dg_main)
    zero = N <= 0.0
    return (np.where(zero, 0.0, np.clip(q, 0.0, 1.0)),
            np.where(zero, 0.0, dN),
            np.where(zero, 0.0, dg))


# =============================================================================
# Binomial likelihood over click records
# =============================================================================
_TWO_PARAM_FAMILIES = {
    "dolp": (DolpJointDist, ("N", "gamma")),
    "displaced": (DisplacedThermalDist, ("N", "g")),
}


def pooled_records(records) -> dict[int, tuple[int, float]]:
    """threshold -> (total windows, total clicks)."""
    pool: dict[int, list[float]] = {}
    for rec in records:
        t = int(rec.threshold)
        w, c = pool.setdefault(t, [0, 0.0])
        pool[t] = [w + rec.windows, c + rec.clicks]
    return {t: (int(w), float(c)) for t, (w, c) in pool.items()}


def _record_loglik(pool, rate_fn, theta1, theta2):
    ll = 0.0
    for t, (w, c) in pool.items():
        q = float(np.clip(rate_fn(theta1, theta2, t), 1e-12, 1.0 - 1e-12))
        ll += c * math.log(q) + (w - c) * math.log1p(-q)
    return ll


@dataclass(frozen=True)
class LikelihoodEstimate:
    params: dict
    loglik: float
    boundary: bool


def likelihood_estimate(records, family: str = "dolp", bounds=None,
                        grid: int = 64) -> LikelihoodEstimate:
    """Maximize the product-binomial likelihood of click records over the
    two-parameter family.

    A coarse ``grid`` x ``grid`` scan (log-spaced in N) seeds a
    derivative-free Nelder-Mead refinement; a ``boundary`` flag marks
    maximizers pinned to the edge of the search box (e.g. all-zero clicks).
    """
    if family not in _TWO_PARAM_FAMILIES:
        raise DomainError(f"unknown two-parameter family {family!r}")
    cls, names = _TWO_PARAM_FAMILIES[family]
    pool = pooled_records(records)
    if len(pool) < 2:
        raise DomainError("need click records at two or more distinct thresholds")
    (n_lo, n_hi), (x_lo, x_hi) = bounds if bounds is not None else ((1e-4, 30.0), (0.0, 1.0))

    if family == "dolp":
        def rate_fn(n, x, t):
            return dolp_rate(n, x, t)
    else:
        def rate_fn(n, x, t):
            return cls(N=float(n), g=float(x)).sf(int(t))

    n_grid = np.geomspace(n_lo, n_hi, grid)
    x_grid = np.linspace(x_lo, x_hi, grid)
    if family == "dolp":
        NN, XX = np.meshgrid(n_grid, x_grid, indexing="ij")
        ll = np.zeros_like(NN)
        for t, (w, c) in pool.items():
            q = np.clip(dolp_rate(NN, XX, float(t)), 1e-12, 1.0 - 1e-12)
            ll += c * np.log(q) + (w - c) * np.log1p(-q)
        i, j = np.unravel_index(int(np.argmax(ll)), ll.shape)
        x0 = (n_grid[i], x_grid[j])
    else:
        best, x0 = -np.inf, (n_grid[0], x_grid[0])
        for nv in n_grid:
            for xv in x_grid:
                v = _record_loglik(pool, rate_fn, nv, xv)
                if v > best:
                    best, x0 = v, (nv, xv)

    res = optimize.minimize(
        lambda th: -_record_loglik(pool, rate_fn, th[0], th[1]),
        x0=np.asarray(x0),
        method="Nelder-Mead",
        bounds=[(n_lo, n_hi), (x_lo, x_hi)],
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
    )
    n_hat, x_hat = float(res.x[0]), float(res.x[1])
    # flag maximizers pinned near the search box (the likelihood is flat
    # there for degenerate data, so use a tolerant proximity scale)
    span = x_hi - x_lo
    edge = (
        n_hat <= n_lo * 1.05 or n_hat >= n_hi / 1.05
        or x_hat <= x_lo + 1e-4 * span or x_hat >= x_hi - 1e-4 * span
    )
    return LikelihoodEstimate(params={names[0]: n_hat, names[1]: x_hat},
                              loglik=-float(res.fun), boundary=bool(edge))


# =============================================================================
# CRLB prediction
# =============================================================================
def crlb_std(J: float, windows: int) -> float:
    """Cramer-Rao floor 1/sqrt(windows * J); +inf for an uninformative channel."""
    if windows < 1:
        raise DomainError("windows must be >= 1")
    if J <= 0.0 or not math.isfinite(J):
        return math.inf
    return 1.0 / math.sqrt(windows * J)


def _observed_fisher_matrix(dist, names, pool):
    """2x2 Fisher information of the pooled binomial channels at ``dist``."""
    M = np.zeros((2, 2))
    ns = dist.support()
    p = dist.pmf(ns)
    dps = [np.cumsum(dist.dpmf(name, ns)) for name in names]
    cp = np.cumsum(p)
    n_max = p.size - 1
    for t, (w, c) in pool.items():
        idx = min(t - 1, n_max)
        q = 1.0 - cp[idx] if t - 1 <= n_max else 0.0
        if q < 1e-15 or 1.0 - q < 1e-15:
            continue
        g = np.array([-dps[0][idx], -dps[1][idx]])
        M += w * np.outer(g, g) / (q * (1.0 - q))
    return M


def _predicted_se(dist, names, pool):
    M = _observed_fisher_matrix(dist, names, pool)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if det <= 0:
        return {names[0]: math.inf, names[1]: math.inf}
    return {
        names[0]: math.sqrt(M[1, 1] / det),
        names[1]: math.sqrt(M[0, 0] / det),
    }


# =============================================================================
# Adaptive loop
# =============================================================================
@dataclass(frozen=True)
class AdaptiveConfig:
    """Knobs of the adaptive measurement loop."""

    windows_per_threshold: int = 1000
    initial_pair: tuple = (1, 2)
    max_iterations: int = 5
    target_se: float | None = None   # stop when the signal parameter's
                                     # predicted standard error drops below
    estimator: str = "likelihood"    # "closed-form" | "likelihood"
    threshold_cap: int = 64

    def __post_init__(self):
        if self.windows_per_threshold < 1:
            raise DomainError("windows_per_threshold must be >= 1")
        ta, tb = self.initial_pair
        if ta == tb or ta < 1 or tb < 1:
            raise DomainError("initial thresholds must be distinct positive integers")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if self.estimator not in ("closed-form", "likelihood"):
            raise DomainError(f"unknown estimator mode {self.estimator!r}")


@dataclass(frozen=True)
class AdaptiveIteration:
    index: int
    pair: tuple
    records: tuple
    estimates: dict
    flags: tuple
    predicted_se: dict
    next_pair: tuple


@dataclass
class AdaptiveTrace:
    family: str
    config: AdaptiveConfig
    iterations: list = field(default_factory=list)

    @property
    def estimates(self) -> dict:
        return self.iterations[-1].estimates if self.iterations else {}

    @property
    def total_windows(self) -> int:
        return sum(r.windows for it in self.iterations for r in it.records)

    def to_json(self) -> str:
        payload = {
            "family": self.family,
            "config": {
                "windows_per_threshold": self.config.windows_per_threshold,
                "initial_pair": list(self.config.initial_pair),
                "max_iterations": self.config.max_iterations,
                "target_se": self.config.target_se,
                "estimator": self.config.estimator,
            },
            "iterations": [
                {
                    "index": it.index,
                    "pair": list(it.pair),
                    "records": [
                        {"threshold": r.threshold, "windows": r.windows, "clicks": r.clicks}
                        for r in it.records
                    ],
                    "estimates": it.estimates,
                    "flags": list(it.flags),
                    "predicted_se": it.predicted_se,
                    "next_pair": list(it.next_pair),
                }
                for it in self.iterations
            ],
        }
        return json.dumps(payload, indent=2)

    CSV_HEADER = ("iteration", "t_a", "t_b", "clicks_a", "clicks_b", "windows",
                  "estimate_1", "estimate_2", "se_1", "se_2")

    def to_csv_rows(self):
        rows = []
        for it in self.iterations:
            names = list(it.estimates)
            rows.append((
                it.index, it.pair[0], it.pair[1],
                it.records[0].clicks, it.records[1].clicks,
                it.records[0].windows,
                it.estimates[names[0]], it.estimates[names[1]],
                it.predicted_se[names[0]], it.predicted_se[names[1]],
            ))
        return rows


def _family_of(source: PhotonDistribution) -> str:
    if isinstance(source, DolpJointDist):
        return "dolp"
    if isinstance(source, DisplacedThermalDist):
        return "displaced"
    raise DomainError("adaptive_loop supports two-parameter sources (DoLP or displaced-thermal)")


def adaptive_loop(source: PhotonDistribution, config: AdaptiveConfig,
                  rng: np.random.Generator) -> AdaptiveTrace:
    """Run the measure / estimate / re-threshold loop against a hidden source.

    Each iteration spends ``windows_per_threshold`` fresh windows on each of
    the two thresholds (disjoint windows); estimates use all records
    accumulated so far; the next pair is (argmax_t J_t for N, argmax_t J_t
    for the signal parameter), the second bumped by one on collision.
    """
    family = _family_of(source)
    cls, names = _TWO_PARAM_FAMILIES[family]
    trace = AdaptiveTrace(family=family, config=config)
    pair = tuple(config.initial_pair)
    records: list[ClickRecord] = []

    for k in range(config.max_iterations):
        new_recs = tuple(
            simulate_clicks(source, ThresholdResponse(int(t)), config.windows_per_threshold, rng)
            for t in pair
        )
        records.extend(new_recs)
        pool = pooled_records(records)
        flags: list[str] = []

        closed_ok = config.estimator == "closed-form" and set(pool) == {1, 2}
        if closed_ok and family == "dolp":
            q1 = pool[1][1] / pool[1][0]
            q2 = pool[2][1] / pool[2][0]
            q1, q2 = max(q1, q2), min(q1, q2)
            inv = invert_q12(min(q1, 1.0 - 1e-12), q2)
            estimates = {names[0]: inv.N, names[1]: inv.gamma}
            flags.extend(inv.flags)
        else:
            if config.estimator == "closed-form":
                flags.append("estimator_switched_to_likelihood")
            est = likelihood_estimate(records, family=family)
            estimates = dict(est.params)
            if est.boundary:
                flags.append("boundary_estimate")

        # clamp into the resolvable interior for threshold selection and CRLB
        # work; the signal parameter is floored at 0.05 so an unresolved
        # (clamped-to-zero) estimate selects the weak-signal plateau optimum
        n_hat = min(max(estimates[names[0]], 1e-4), 1e4)
        x_hat = min(max(estimates[names[1]], 0.05), 0.95)
        model = cls(**{names[0]: n_hat, names[1]: x_hat})
        t_n, _ = optimal_threshold(model, names[0], t_max=config.threshold_cap)
        t_x, _ = optimal_threshold(model, names[1], t_max=config.threshold_cap)
        if t_x == t_n:
            t_x += 1
        next_pair = (t_n, t_x)

        se = _predicted_se(model, names, pool)
        trace.iterations.append(AdaptiveIteration(
            index=k, pair=pair, records=new_recs, estimates=estimates,
            flags=tuple(flags), predicted_se=se, next_pair=next_pair,
        ))
        if config.target_se is not None and se[names[1]] <= config.target_se:
            break
        pair = next_pair
    return trace
