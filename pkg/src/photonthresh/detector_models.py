"""Detector response models, counting rates, click simulation, and
reconstruction of photon statistics from threshold scans.

A threshold detector clicks when the photon number in a counting window
reaches its threshold.  Two response shapes are supported:

* ideal mode: a(n, t) = 1 for n >= t (integer t >= 1),
* flux mode:  a(n, t) = 1 / (1 + exp(-S (n - t) / sqrt(t))), a sigmoid of
  sharpness S around a real-valued flux threshold t.  S = inf is the sharp
  limit, which equals the ideal step except at n = t exactly, where the
  sigmoid limit is 1/2 (the two conventions genuinely differ at that single
  point; trade-space sweeps use half-integer flux thresholds to avoid it).

A realistic photon-number-resolving detector (PNRD) reports min(n, M) for a
maximum resolvable number M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError
from .photon_stats import PhotonDistribution, sample_photon_number


@dataclass(frozen=True)
class ThresholdResponse:
    """Click probability a(n) of a threshold detector.

    mode = "ideal": step at integer threshold >= 1 with a(t, t) = 1.
    mode = "flux":  sigmoid around a real threshold > 0; sharpness = inf
    gives the sharp-sigmoid limit (1/2 exactly at n = t).
    """

    threshold: float
    sharpness: float = math.inf
    mode: str = "ideal"

    def __post_init__(self):
        if self.mode not in ("ideal", "flux"):
            raise DomainError(f"unknown response mode {self.mode!r}")
        if self.mode == "ideal":
            if self.threshold < 1 or int(self.threshold) != self.threshold:
                raise DomainError(f"ideal mode needs an integer threshold >= 1, got {self.threshold}")
        else:
            if self.threshold <= 0:
                raise DomainError(f"flux threshold must be > 0, got {self.threshold}")
        if self.sharpness < 0:
            raise DomainError(f"sharpness must be >= 0, got {self.sharpness}")

    @property
    def is_ideal(self) -> bool:
        return self.mode == "ideal"

    def click_prob(self, n):
        """a(n): probability that an n-photon window produces a click."""
        n = np.asarray(n, dtype=float)
        t = float(self.threshold)
        if self.mode == "ideal":
            return (n >= t).astype(float)
        if math.isinf(self.sharpness):
            return np.where(n > t, 1.0, np.where(n == t, 0.5, 0.0))
        return special.expit(self.sharpness * (n - t) / math.sqrt(t))


@dataclass(frozen=True)
class TabulatedResponse:
    """Click probabilities given per photon number, extended by the final
    value; used to plug device-level response curves into the counting-rate
    and Fisher-information machinery."""

    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or np.any(p > 1):
            raise DomainError("tabulated click probabilities must be a 1-D array in [0, 1]")

    def click_prob(self, n):
        n = np.asarray(n)
        p = np.asarray(self.probs, dtype=float)
        idx = np.minimum(n, p.size - 1).astype(int)
        return p[idx]


@dataclass(frozen=True)
class PnrdResponse:
    """Realistic photon-number-resolving detector reporting min(n, M)."""

    M: int

    def __post_init__(self):
        if self.M < 1 or int(self.M) != self.M:
            raise DomainError(f"resolution M must be an integer >= 1, got {self.M}")

    def outcome(self, n):
        return np.minimum(np.asarray(n), self.M)


@dataclass(frozen=True)
class ClickRecord:
    """Outcome of one counting experiment at a fixed threshold."""

    threshold: float
    windows: int
    clicks: int
    seed: int | None = None

    def __post_init__(self):
        if self.windows < 1:
            raise DomainError("windows must be >= 1")
        if not 0 <= self.clicks <= self.windows:
            raise DomainError("clicks must lie in [0, windows]")

    @property
    def rate(self) -> float:
        return self.clicks / self.windows

    CSV_HEADER = ("threshold", "windows", "clicks", "seed")

    def to_csv_row(self):
        return (self.threshold, self.windows, self.clicks, "" if self.seed is None else self.seed)


# =============================================================================
def counting_rate(dist: PhotonDistribution, resp) -> float:
    """Click probability per counting window, sum_n a(n) p(n).

    Ideal mode uses the closed-form tail 1 - sum_{n<t} p(n); other response
    shapes are summed over the truncated support (tail mass <= 1e-12).
    """
    if isinstance(resp, ThresholdResponse) and resp.is_ideal:
        return float(dist.sf(int(resp.threshold)))
    ns = dist.support()
    p = dist.pmf(ns)
    q = float(np.sum(resp.click_prob(ns) * p))
    # photons beyond the support almost surely exceed any finite threshold
    tail = max(0.0, 1.0 - float(np.sum(p)))
    q += tail * float(resp.click_prob(np.asarray(ns[-1] + 1)))
    return min(1.0, max(0.0, q))


def simulate_clicks(
    dist: PhotonDistribution,
    resp,
    windows: int,
    rng: np.random.Generator,
    efficiency: float = 1.0,
    dark_rate: float = 0.0,
    seed: int | None = None,
) -> ClickRecord:
    """Draw photon numbers per window and apply the detector response.

    ``efficiency`` (Bernoulli thinning) and ``dark_rate`` (additive Poisson
    counts per window) model non-ideal detection; both default to ideal.
    Flux-mode responses click with probability a(n) per window.
    """
    if windows < 1:
        raise DomainError("windows must be >= 1")
    n = sample_photon_number(dist, rng, size=windows)
    if efficiency < 1.0:
        if not 0.0 <= efficiency <= 1.0:
            raise DomainError("efficiency must lie in [0, 1]")
        n = rng.binomial(n, efficiency)
    if dark_rate > 0.0:
        n = n + rng.poisson(dark_rate, size=windows)
    a = np.asarray(resp.click_prob(n))
    if isinstance(resp, ThresholdResponse) and resp.is_ideal:
        clicks = int(np.sum(a > 0.5))
    else:
        clicks = int(np.sum(rng.random(windows) < a))
    thr = float(resp.threshold) if hasattr(resp, "threshold") else math.nan
    return ClickRecord(threshold=thr, windows=windows, clicks=clicks, seed=seed)


def pnrd_outcome_distribution(dist: PhotonDistribution, M: int) -> np.ndarray:
    """Outcome pmf over {0..M} for a PNRD of resolution M: outcomes below M
    keep their photon-number probability, outcome M absorbs the tail."""
    PnrdResponse(M)
    out = np.empty(M + 1)
    out[:M] = dist.pmf(np.arange(M))
    out[M] = max(0.0, 1.0 - float(np.sum(out[:M])))
    return out


@dataclass(frozen=True)
class PmfReconstruction:
    """Photon statistics recovered from a threshold scan."""

    pmf: np.ndarray
    clamped: tuple          # indices where a negative difference was zeroed
    monotone_violations: tuple  # threshold indices t where q(t) < q(t+1)

    @property
    def flagged(self) -> bool:
        return bool(self.clamped or self.monotone_violations)


def reconstruct_pmf_from_rates(rates) -> PmfReconstruction:
    """Recover p(0..T-1) from counting rates q(1..T) via p(n) = q(n) - q(n+1).

    p(0) = 1 - q(1).  Statistical noise can make the rate sequence
    non-monotone; negative differences are clamped to zero and flagged
    rather than renormalized, preserving traceability.
    """
    q = np.asarray(rates, dtype=float)
    if q.ndim != 1 or q.size < 1:
        raise DomainError("rates must be a 1-D sequence q(1..T)")
    if np.any(q < 0) or np.any(q > 1):
        raise DomainError("rates must lie in [0, 1]")
    diffs = np.empty(q.size)
    diffs[0] = 1.0 - q[0]
    diffs[1:] = q[:-1] - q[1:]
    violations = tuple(int(i) + 1 for i in np.nonzero(diffs[1:] < 0)[0])
    clamped = tuple(int(i) for i in np.nonzero(diffs < 0)[0])
    return PmfReconstruction(pmf=np.maximum(diffs, 0.0), clamped=clamped,
                             monotone_violations=violations)
