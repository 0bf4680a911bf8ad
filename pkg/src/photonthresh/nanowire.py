"""Superconducting-nanowire model of a tunable photon-threshold detector.

Photon absorption deposits hot electrons at the wire center; they diffuse
and break Cooper pairs into quasiparticles, locally depleting the
superconducting electron density n_se.  The transport current crowds into
the undepleted regions, suppressing the free-energy barrier for a magnetic
vortex to cross the wire; the thermally activated crossing rate integrates
into a click probability P_n for an n-photon event.  Sweeping the bias
current maps out switching currents I_SW,n; biasing between I_SW,t and
I_SW,t-1 realizes an ideal-ish photon threshold t.

Model pieces (all deterministic):

* hot electrons:    dC_e/dt  = D_e lap C_e
* quasiparticles:   dC_qp/dt = D_qp lap C_qp - C_qp/tau_r
                    + (vs hv / (gap tau_qp)) ((n_se0 - C_qp)/n_se0) e^(-t/tau_qp) C_e
* n_se = n_se0 - C_qp (clamped at 0), on the row through the deposit
* current:          quasi-1D ansatz, sheet density K(x) = I_b n_se(x)/int n_se dx
                    (conserves the transport current exactly)
* barrier (units of eps0), for vortex positions x_v across the width:
      U(x_v) = -(pi/W) int_{(xi-W)/2}^{x_v} (n_se/n_se0) tan(pi x'/W) dx'
             - (2 W / (I_cv e^1 xi)) int_{-W/2}^{x_v} (n_se/n_se0) K(x') dx'
  With uniform n_se and no current this integrates to
  ln|cos(pi x_v / W)| - ln|sin(pi xi / (2 W))|: the classic image-force
  self-energy hill, zero at the entry point half a core radius inside the
  near edge and maximal toward the center.  (Integrating +tan instead
  yields the upside-down profile, whose maximum sits on the far-edge pole
  and *rises* when a hotspot forms; that ordering contradicts the click
  monotonicity in photon number, so the self-energy sign used here is the
  physical one.)  The tan pole at the far edge is excluded by half a grid
  cell; only orderings in n and I_b are physically meaningful, not
  absolute barrier values.
* rate and click:   Gamma(t) = alpha_v I_b exp(-U_max(t) eps0 / kB T),
                    P_n = 1 - exp(-int Gamma dt)

Material constants are configuration inputs; the shipped defaults are a
demonstration set tuned to produce a clean threshold staircase, not fitted
material data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .detector_models import TabulatedResponse
from .errors import ConfigError, DomainError

EV = constants.elementary_charge


@dataclass(frozen=True)
class NanowireParams:
    """Geometry, operating point, and material coefficients (SI units)."""

    width: float = 500e-9
    length: float = 500e-9
    thickness: float = 50e-9
    temperature: float = 0.3            # K
    photon_energy_ev: float = 0.3       # eV
    diffusivity_e: float = 5e-5         # m^2/s, hot electrons
    diffusivity_qp: float = 1e-5        # m^2/s, quasiparticles
    qp_conversion: float = 0.5          # dimensionless yield factor
    tau_recombination: float = 1.0e-9   # s
    tau_qp: float = 2.0e-11             # s
    n_se0: float = 8.0e23               # 1/m^3 superconducting electron density
    gap_ev: float = 5.3e-4              # eV superconducting gap
    vortex_energy: float = 2.5e-21      # J, characteristic scale eps0
    coherence_length: float = 1.0e-8    # m, vortex core radius xi
    vortex_critical_current: float = 2.0e-5   # A
    vortex_attempt_rate: float = 1.0e21       # 1/(A s), alpha_v
    bias_ceiling: float = 1.0e-4        # A, upper limit for bias searches
    grid_nx: int = 128
    grid_ny: int = 128
    t_end: float = 1.0e-9               # s
    snapshot_stride: int = 24

    def __post_init__(self):
        positive = (
            "width length thickness temperature photon_energy_ev diffusivity_e "
            "diffusivity_qp tau_recombination tau_qp n_se0 gap_ev "
            "vortex_energy coherence_length vortex_critical_current "
            "vortex_attempt_rate bias_ceiling t_end"
        ).split()
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"nanowire parameter {name} must be positive")
        if self.qp_conversion < 0:  # zero decouples the quasiparticle source
            raise ConfigError("nanowire parameter qp_conversion must be >= 0")
        if self.coherence_length >= self.width:
            raise ConfigError("vortex core radius must be smaller than the wire width")
        if self.grid_nx < 16 or self.grid_ny < 16:
            raise ConfigError("grid must be at least 16 x 16")

    @classmethod
    def from_dict(cls, data: dict) -> "NanowireParams":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown nanowire parameters: {sorted(extra)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class HotspotTrajectory:
    """Row profiles of the superconducting electron density over time."""

    params: NanowireParams
    photons: int
    times: np.ndarray            # (S,)
    n_se_rows: np.ndarray        # (S, nx), density on the row through the deposit
    electron_totals: np.ndarray  # (S,) integrated hot-electron number
    x: np.ndarray                # (nx,) cell centers across the width

    @property
    def initial_electrons(self) -> float:
        return float(self.electron_totals[0])


@dataclass
class HotspotState:
    """Full fields at the final step, for inspection and tests."""

    time: float
    C_e: np.ndarray
    C_qp: np.ndarray
    n_se_row: np.ndarray
    current_row: np.ndarray
    barrier: np.ndarray
    barrier_positions: np.ndarray
    barrier_max: float


def _laplacian(C, hx, hy):
    # 5-point stencil with reflecting (Neumann) boundaries; axis 0 is x
    p = np.pad(C, 1, mode="edge")
    d2x = (p[:-2, 1:-1] - 2.0 * C + p[2:, 1:-1]) / hx**2
    d2y = (p[1:-1, :-2] - 2.0 * C + p[1:-1, 2:]) / hy**2
    return d2x + d2y


def stable_dt(params: NanowireParams) -> float:
    h = min(params.width / params.grid_nx, params.length / params.grid_ny)
    return 0.25 * h**2 / max(params.diffusivity_e, params.diffusivity_qp)


def evolve_hotspot(params: NanowireParams, photons: int, bias_current: float | None = None,
                   t_end: float | None = None, dt: float | None = None) -> HotspotTrajectory:
    """Integrate the hot-electron and quasiparticle diffusion on the wire
    cross-section for an n-photon deposit.

    ``bias_current`` does not influence the field evolution (the current
    profile is diagnostic); it is accepted for interface symmetry.  The
    explicit scheme requires dt <= 0.25 h^2 / max(D_e, D_qp).
    """
    if photons < 0 or int(photons) != photons:
        raise DomainError("photon number must be a nonnegative integer")
    t_end = params.t_end if t_end is None else float(t_end)
    dt_max = stable_dt(params)
    if dt is None:
        dt = dt_max
    elif dt > dt_max * (1.0 + 1e-12):
        raise ConfigError(f"dt = {dt} violates diffusion stability (max {dt_max:.3e})")

    nx, ny = params.grid_nx, params.grid_ny
    hx = params.width / nx
    hy = params.length / ny
    x = (np.arange(nx) + 0.5) * hx - params.width / 2.0
    y = (np.arange(ny) + 0.5) * hy - params.length / 2.0
    X, Y = np.meshgrid(x, y, indexing="ij")

    # n hot electrons in a Gaussian of width xi at the wire center,
    # uniform through the thickness
    sigma = params.coherence_length
    gauss = np.exp(-(X**2 + Y**2) / (2.0 * sigma**2))
    gauss /= gauss.sum() * hx * hy
    C_e = photons * gauss / params.thickness
    C_qp = np.zeros_like(C_e)

    source_rate = (params.qp_conversion * params.photon_energy_ev
                   / (params.gap_ev * params.tau_qp))
    n_steps = max(1, int(math.ceil(t_end / dt)))
    dt = t_end / n_steps
    row = nx // 2  # y index of the row through the deposit center
    cell_volume = hx * hy * params.thickness

    times = [0.0]
    rows = [np.clip(params.n_se0 - C_qp[:, row], 0.0, None).copy()]
    totals = [float(C_e.sum()) * cell_volume]

    t = 0.0
    for step in range(1, n_steps + 1):
        sat = np.clip((params.n_se0 - C_qp) / params.n_se0, 0.0, 1.0)
        dC_qp = (params.diffusivity_qp * _laplacian(C_qp, hx, hy)
                 - C_qp / params.tau_recombination
                 + source_rate * sat * math.exp(-t / params.tau_qp) * C_e)
        C_e = C_e + dt * params.diffusivity_e * _laplacian(C_e, hx, hy)
        C_qp = np.clip(C_qp + dt * dC_qp, 0.0, None)
        t = step * dt
        if step % params.snapshot_stride == 0 or step == n_steps:
            times.append(t)
            rows.append(np.clip(params.n_se0 - C_qp[:, row], 0.0, None).copy())
            totals.append(float(C_e.sum()) * cell_volume)

    return HotspotTrajectory(params=params, photons=photons,
                             times=np.asarray(times), n_se_rows=np.asarray(rows),
                             electron_totals=np.asarray(totals), x=x)


# =============================================================================
def current_profile(n_se_row: np.ndarray, bias_current: float, params: NanowireParams) -> np.ndarray:
    """Sheet current density K(x) with int K dx = I_b, crowding into the
    undepleted superconductor."""
    hx = params.width / n_se_row.size
    total = np.sum(n_se_row) * hx
    if total <= 0:
        return np.zeros_like(n_se_row)
    return bias_current * n_se_row / total


def vortex_barrier(n_se_row: np.ndarray, current_row: np.ndarray,
                   params: NanowireParams) -> tuple[np.ndarray, np.ndarray, float]:
    """Barrier profile over vortex positions and its maximum (units eps0).

    Composite trapezoid on the cross-wire grid; entry positions start half
    a core radius inside the near edge, and the last half cell before the
    far edge is excluded (tan pole).
    """
    nx = n_se_row.size
    hx = params.width / nx
    x = (np.arange(nx) + 0.5) * hx - params.width / 2.0
    W = params.width
    weight = n_se_row / params.n_se0

    a = 0.5 * (params.coherence_length - W)  # entry point, xi/2 inside the edge

    # self-energy ascent (see module docstring for the sign), sampled on the
    # exact entry point plus the cell centers beyond it.  The density weight
    # is trapezoidal per cell while the steep tan moment is integrated
    # exactly, so a uniform state reproduces the analytic antiderivative to
    # rounding:  (pi/W) int -tan(pi x'/W) dx' = d ln|cos(pi x'/W)|.
    sel = x > a
    xs1 = np.concatenate(([a], x[sel]))
    w1 = np.concatenate(([np.interp(a, x, weight)], weight[sel]))
    log_cos = np.log(np.abs(np.cos(math.pi * xs1 / W)))
    w_mid = 0.5 * (w1[:-1] + w1[1:])
    I1 = np.zeros_like(xs1)
    I1[1:] = np.cumsum(w_mid * np.diff(log_cos))

    # Lorentz work of the transport current, accumulated from the near edge
    # by composite trapezoid (the integrand is smooth)
    edge = -0.5 * W
    xs2 = np.concatenate(([edge], x))
    f2 = weight * current_row
    f2 = np.concatenate(([f2[0]], f2))
    I2 = np.zeros_like(xs2)
    I2[1:] = np.cumsum(0.5 * (f2[:-1] + f2[1:]) * np.diff(xs2))

    coeff2 = 2.0 * W / (params.vortex_critical_current * math.e * params.coherence_length)
    I2_on_1 = np.interp(xs1, xs2, I2)
    U = I1 - coeff2 * I2_on_1
    return xs1, U, float(np.max(U))


def _barrier_max_series(traj: HotspotTrajectory, bias_current: float) -> np.ndarray:
    out = np.empty(traj.times.size)
    for i, row in enumerate(traj.n_se_rows):
        K = current_profile(row, bias_current, traj.params)
        _, _, U_max = vortex_barrier(row, K, traj.params)
        out[i] = U_max
    return out


def final_state(traj: HotspotTrajectory, bias_current: float) -> HotspotState:
    row = traj.n_se_rows[-1]
    K = current_profile(row, bias_current, traj.params)
    xs, U, U_max = vortex_barrier(row, K, traj.params)
    return HotspotState(time=float(traj.times[-1]), C_e=np.empty(0), C_qp=np.empty(0),
                        n_se_row=row, current_row=K, barrier=U,
                        barrier_positions=xs, barrier_max=U_max)


def click_probability(params: NanowireParams, photons: int, bias_current: float,
                      traj: HotspotTrajectory | None = None) -> float:
    """P_n = 1 - exp(-int Gamma dt) with the thermally activated crossing
    rate Gamma(t) = alpha_v I_b exp(-U_max(t) eps0 / kB T)."""
    if bias_current < 0:
        raise DomainError("bias current must be >= 0")
    if bias_current == 0.0:
        return 0.0
    if traj is None:
        traj = evolve_hotspot(params, photons)
    U_max = _barrier_max_series(traj, bias_current)
    beta = params.vortex_energy / (constants.k * params.temperature)
    log_rate = math.log(params.vortex_attempt_rate * bias_current) - beta * U_max
    rate = np.exp(np.clip(log_rate, -745.0, 700.0))
    integral = min(float(np.trapezoid(rate, traj.times)), 700.0)
    return 1.0 - math.exp(-integral)


@dataclass(frozen=True)
class SwitchingCurrent:
    photons: int
    current: float
    probability: float
    converged: bool


def switching_current(params: NanowireParams, photons: int, p_target: float = 0.999,
                      traj: HotspotTrajectory | None = None,
                      rel_tol: float = 1e-4) -> SwitchingCurrent:
    """Minimum bias current with click probability >= p_target (bisection).

    Click probability is monotone in the bias, so bisection on
    [0, bias_ceiling] converges; an unreachable target is flagged rather
    than raised.
    """
    if traj is None:
        traj = evolve_hotspot(params, photons)
    lo, hi = 0.0, params.bias_ceiling
    if click_probability(params, photons, hi, traj) < p_target:
        return SwitchingCurrent(photons=photons, current=hi,
                                probability=click_probability(params, photons, hi, traj),
                                converged=False)
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if click_probability(params, photons, mid, traj) >= p_target:
            hi = mid
        else:
            lo = mid
    return SwitchingCurrent(photons=photons, current=hi,
                            probability=click_probability(params, photons, hi, traj),
                            converged=True)


@dataclass(frozen=True)
class BiasPoint:
    threshold: int
    bias_current: float
    normalized_bias: float
    response: tuple           # P_0 .. P_{t+2}
    contrast_ok: bool         # P_t >= target and P_{t-1} <= 1 - target


def bias_for_threshold(params: NanowireParams, t: int, p_target: float = 0.999,
                       trajectories: dict | None = None) -> BiasPoint:
    """Bias current realizing photon threshold t, with the achieved
    response P_0..P_{t+2} exported for the counting-rate machinery.

    The bias sits midway between I_SW,t and I_SW,t-1; an empty interval
    (non-ideal staircase) is flagged via ``contrast_ok`` with the best
    achievable response reported.
    """
    if t < 1:
        raise DomainError("threshold must be >= 1")
    trajectories = trajectories if trajectories is not None else {}

    def get_traj(n):
        if n not in trajectories:
            trajectories[n] = evolve_hotspot(params, n)
        return trajectories[n]

    sw_hi = switching_current(params, t - 1, p_target, get_traj(t - 1)) if t >= 1 else None
    sw_lo = switching_current(params, t, p_target, get_traj(t))
    i_sw0 = switching_current(params, 0, p_target, get_traj(0)).current
    if sw_lo.current < sw_hi.current:
        bias = 0.5 * (sw_lo.current + sw_hi.current)
    else:
        bias = sw_lo.current  # degenerate staircase: best effort at the lower edge
    probs = tuple(click_probability(params, n, bias, get_traj(n)) for n in range(t + 3))
    ok = probs[t] >= p_target and (t == 0 or probs[t - 1] <= 1.0 - p_target)
    return BiasPoint(threshold=t, bias_current=bias, normalized_bias=bias / i_sw0,
                     response=probs, contrast_ok=bool(ok) and sw_lo.current < sw_hi.current)


def exported_response(point: BiasPoint) -> TabulatedResponse:
    """The achieved P_n curve as a detector response (extended by its last
    value beyond the computed range)."""
    return TabulatedResponse(probs=point.response)
