"""Polarized thermal-scene rendering and the polarizer-free DoLP camera.

A surface at temperature T_s sits in a uniform blackbody environment at
T_e behind a dielectric interface (interior index n_i, exterior n_o).  Per
pixel, the one-bounce transfer is

    S = R . S_env + flip(T . E),

with R and T the interface's reflection/transmission Mueller matrices built
from the Fresnel power coefficients at the local incidence angle, S_env the
unpolarized environment radiance, and E = E0 (1, cos th, sin th) the
interior emission at a uniform random polarization angle th.  The
transmitted beam is preferentially p-polarized while the reflected beam is
preferentially s-polarized; ``flip`` = diag(1, -1, -1) moves the
transmission matrix's native axis convention into the shared s-p frame, and
makes the isothermal case (T_s = T_e) exactly unpolarized, as it must be.

The theta average is available in closed form:

    S0 = (Rs+Rp)/2 E_env + (1 - (Rs+Rp)/2) E0
    S1 = (Rs-Rp)/2 (E_env - E0),   S2 = 0        (local s-p frame)

which serves as the oracle for the Monte Carlo path and as the exact
renderer for ground-truth maps.

The camera interprets the rendered maps (min-max normalized intensity as
mean photon number, DoLP as gamma) as per-pixel two-mode photon sources and
estimates them back from threshold clicks, either non-adaptively at
thresholds {1, 2} or with the per-pixel adaptive loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .adaptive_estimation import (
    AdaptiveConfig,
    dolp_rate,
    dolp_rate_grads,
    forward_q12,
    invert_q12_arrays,
)
from .errors import ConfigError, DomainError

BUILTIN_GEOMETRIES = ("sphere", "plane", "cylinder")


# =============================================================================
# Optics primitives
# =============================================================================
def fresnel_power(n1: float, n2: float, theta_i):
    """Fresnel power reflectances (R_s, R_p) for incidence from medium n1.

    Total internal reflection returns (1, 1).
    """
    theta = np.asarray(theta_i, dtype=float)
    if np.any(theta < 0) or np.any(theta >= 0.5 * math.pi):
        raise DomainError("incidence angle must lie in [0, pi/2)")
    if n1 < 1 or n2 < 1:
        raise DomainError("refractive indices must be >= 1")
    cos_i = np.cos(theta)
    sin_t = n1 * np.sin(theta) / n2
    tir = sin_t >= 1.0
    cos_t = np.sqrt(np.clip(1.0 - sin_t**2, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t)
        rp = (n2 * cos_i - n1 * cos_t) / (n2 * cos_i + n1 * cos_t)
    R_s = np.where(tir, 1.0, rs**2)
    R_p = np.where(tir, 1.0, rp**2)
    if np.ndim(theta_i) == 0:
        return float(R_s), float(R_p)
    return R_s, R_p


def mueller_matrices(R_s: float, R_p: float):
    """Reflection and transmission Mueller matrices of the interface.

    Each matrix is expressed along its own favored polarization axis
    (s for reflection, p for transmission); the renderer reconciles the two
    frames.  Energy bookkeeping: R[0,0] + T[0,0] = 1.
    """
    if not (0.0 <= R_s <= 1.0 and 0.0 <= R_p <= 1.0):
        raise DomainError("power reflectances must lie in [0, 1]")
    half_sum = 0.5 * (R_s + R_p)
    half_diff = 0.5 * (R_s - R_p)
    refl = np.array([
        [half_sum, half_diff, 0.0],
        [half_diff, half_sum, 0.0],
        [0.0, 0.0, math.sqrt(R_s * R_p)],
    ])
    trans = np.array([
        [1.0 - half_sum, half_diff, 0.0],
        [half_diff, 1.0 - half_sum, 0.0],
        [0.0, 0.0, math.sqrt((1.0 - R_s) * (1.0 - R_p))],
    ])
    return refl, trans


_FRAME_FLIP = np.diag([1.0, -1.0, -1.0])  # transmission axis -> s-p frame


def planck_radiance(T: float, lam: float) -> float:
    """Blackbody spectral radiance (W sr^-1 m^-3); used only in ratios."""
    if T <= 0 or lam <= 0:
        raise DomainError("temperature and wavelength must be positive")
    h, c, kB = constants.h, constants.c, constants.k
    x = h * c / (lam * kB * T)
    if x > 700.0:  # deep Wien tail; expm1 would overflow
        return 2.0 * h * c**2 / lam**5 * math.exp(-x)
    return 2.0 * h * c**2 / lam**5 / math.expm1(x)


# =============================================================================
# Scene description and geometry
# =============================================================================
@dataclass(frozen=True)
class SceneSpec:
    """Analytic scene (or user normal map) viewed head-on by the camera."""

    geometry: str = "sphere"         # builtin name or a normal-map path
    width: int = 64
    height: int = 64
    surface_temp: float = 310.15     # K
    env_temp: float = 273.15         # K
    n_inside: float = 1.1
    n_outside: float = 1.0
    wavelength: float = 10e-6        # m
    plane_tilt: float = 0.0          # rad, tilt of the plane geometry
    disk_fraction: float = 0.95      # sphere/cylinder radius in half-widths

    def __post_init__(self):
        if self.surface_temp <= 0 or self.env_temp <= 0:
            raise DomainError("temperatures must be positive")
        if self.n_inside < 1 or self.n_outside < 1:
            raise DomainError("refractive indices must be >= 1")
        if self.width < 1 or self.height < 1:
            raise DomainError("image dimensions must be positive")
        if not 0 < self.disk_fraction <= 1:
            raise DomainError("disk_fraction must lie in (0, 1]")


def scene_normals(scene: SceneSpec):
    """(H, W, 3) unit normals plus validity mask for the scene geometry."""
    H, W = scene.height, scene.width
    if scene.geometry == "plane":
        n = np.zeros((H, W, 3))
        n[..., 1] = math.sin(scene.plane_tilt)
        n[..., 2] = math.cos(scene.plane_tilt)
        return n, np.ones((H, W), dtype=bool)
    xs = (np.arange(W) + 0.5) / W * 2.0 - 1.0
    ys = (np.arange(H) + 0.5) / H * 2.0 - 1.0
    X, Y = np.meshgrid(xs, ys)
    R = scene.disk_fraction
    if scene.geometry == "sphere":
        rho2 = X**2 + Y**2
        valid = rho2 < R**2
        nz = np.sqrt(np.clip(R**2 - rho2, 0.0, None))
        n = np.stack([X, Y, nz], axis=-1) / R
        n[~valid] = 0.0
        return n, valid
    if scene.geometry == "cylinder":
        valid = np.abs(X) < R
        nz = np.sqrt(np.clip(R**2 - X**2, 0.0, None))
        n = np.stack([X, np.zeros_like(X), nz], axis=-1) / R
        n[~valid] = 0.0
        return np.broadcast_to(n, (H, W, 3)).copy(), np.broadcast_to(valid, (H, W)).copy()
    # anything else is a normal-map file
    normals = load_normal_map(scene.geometry)
    if normals.shape[:2] != (H, W):
        raise ConfigError(
            f"normal map is {normals.shape[1]}x{normals.shape[0]}, scene wants {W}x{H}"
        )
    norms = np.linalg.norm(normals, axis=-1)
    valid = np.abs(norms - 1.0) < 1e-6
    return normals, valid


def load_normal_map(path) -> np.ndarray:
    """Read a plain-text normal map: a 'width height' header line followed by
    one 'nx ny nz' line per pixel in row-major order."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigError(f"{path}: expected 'width height' header")
        W, H = int(header[0]), int(header[1])
        data = np.loadtxt(fh)
    if data.shape != (H * W, 3):
        raise ConfigError(f"{path}: expected {H * W} normal rows, got {data.shape}")
    return data.reshape(H, W, 3)


def save_normal_map(path, normals: np.ndarray) -> None:
    H, W, _ = normals.shape
    with open(path, "w") as fh:
        fh.write(f"{W} {H}\n")
        np.savetxt(fh, normals.reshape(-1, 3), fmt="%.9g")


# =============================================================================
# Stokes containers
# =============================================================================
@dataclass(frozen=True)
class StokesVector:
    s0: float
    s1: float
    s2: float

    def __post_init__(self):
        if self.s0 < 0 or math.hypot(self.s1, self.s2) > self.s0 + 1e-12:
            raise DomainError("unphysical Stokes vector")

    @property
    def dolp(self) -> float:
        return math.hypot(self.s1, self.s2) / self.s0 if self.s0 > 0 else 0.0


@dataclass
class StokesImage:
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    valid: np.ndarray
    flags: tuple = ()

    @property
    def shape(self):
        return self.s0.shape

    def dolp(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.hypot(self.s1, self.s2) / self.s0
        g = np.where(self.s0 > 0, g, 0.0)
        return np.where(self.valid, np.clip(g, 0.0, 1.0), 0.0)

    def _minmax(self, arr, tag):
        vals = arr[self.valid]
        if vals.size == 0:
            return np.zeros_like(arr), ("no_valid_pixels",)
        lo, hi = float(vals.min()), float(vals.max())
        if hi <= lo:
            return np.zeros_like(arr), (f"constant_{tag}",)
        return np.where(self.valid, (arr - lo) / (hi - lo), 0.0), ()

    def normalized_intensity(self) -> tuple[np.ndarray, tuple]:
        """S0 min-max normalized to [0, 1] over valid pixels."""
        return self._minmax(self.s0, "intensity")

    def normalized_dolp(self) -> tuple[np.ndarray, tuple]:
        """DoLP min-max normalized to [0, 1] over valid pixels (the camera
        pipeline, like the headline imaging demo, works on normalized maps)."""
        return self._minmax(self.dolp(), "dolp")


# =============================================================================
# Rendering
# =============================================================================
def _local_stokes_analytic(R_s, R_p, e_env, e_self):
    half_sum = 0.5 * (R_s + R_p)
    half_diff = 0.5 * (R_s - R_p)
    s0 = half_sum * e_env + (1.0 - half_sum) * e_self
    s1 = half_diff * (e_env - e_self)
    return s0, s1


def _frame_angle(normals):
    """Angle of the local s axis (view x normal) in the camera image plane."""
    nx, ny = normals[..., 0], normals[..., 1]
    return np.arctan2(nx, -ny)


def _rotate_to_camera(s1, s2, phi):
    c, s = np.cos(2.0 * phi), np.sin(2.0 * phi)
    return c * s1 - s * s2, s * s1 + c * s2


def render_pixel(normal, view, scene: SceneSpec, samples: int,
                 rng: np.random.Generator) -> StokesVector:
    """Monte Carlo one-bounce Stokes vector of a single surface element."""
    if samples < 1:
        raise DomainError("samples must be >= 1")
    stokes = _render_core(np.asarray(normal, float), np.asarray(view, float),
                          scene, samples, rng)
    return StokesVector(*stokes)


def render_pixel_analytic(normal, view, scene: SceneSpec) -> StokesVector:
    """Exact polarization-angle average of :func:`render_pixel`."""
    stokes = _render_core(np.asarray(normal, float), np.asarray(view, float),
                          scene, 0, None)
    return StokesVector(*stokes)


def _render_core(normal, view, scene, samples, rng):
    view = view / np.linalg.norm(view)
    normal = normal / np.linalg.norm(normal)
    cos_i = float(np.dot(normal, view))
    if cos_i <= 0:
        raise DomainError("surface element faces away from the camera")
    e_env = planck_radiance(scene.env_temp, scene.wavelength)
    e_self = planck_radiance(scene.surface_temp, scene.wavelength)
    degenerate = abs(cos_i) > 1.0 - 1e-9
    theta_i = math.acos(min(cos_i, 1.0))
    R_s, R_p = fresnel_power(scene.n_outside, scene.n_inside, theta_i)
    if samples == 0:
        s0, s1 = _local_stokes_analytic(R_s, R_p, e_env, e_self)
        s2 = 0.0
    else:
        refl, trans = mueller_matrices(R_s, R_p)
        th = rng.uniform(0.0, 2.0 * math.pi, size=samples)
        emission = np.stack([np.ones_like(th), np.cos(th), np.sin(th)]) * e_self
        per_sample = (refl @ np.array([e_env, 0.0, 0.0]))[:, None] \
            + _FRAME_FLIP @ (trans @ emission)
        s0, s1, s2 = per_sample.mean(axis=1)
    if degenerate:
        return s0, 0.0, 0.0
    # rotate the local s-p frame into the camera frame
    phi = math.atan2(normal[0], -normal[1])
    c2, s2r = math.cos(2 * phi), math.sin(2 * phi)
    return s0, c2 * s1 - s2r * s2, s2r * s1 + c2 * s2


def render_scene(scene: SceneSpec, samples: int, rng: np.random.Generator | None = None,
                 row_seed: int = 0) -> StokesImage:
    """Render every pixel of the scene.

    ``samples`` = 0 uses the exact polarization-angle average (noise-free
    ground truth); otherwise each pixel is Monte Carlo averaged with an
    independent per-row substream of ``rng`` so the result is reproducible
    regardless of chunking.
    """
    from .streams import substream

    normals, valid = scene_normals(scene)
    H, W = valid.shape
    cos_i = np.clip(normals[..., 2], -1.0, 1.0)
    valid = valid & (cos_i > 1e-9)
    theta = np.arccos(np.where(valid, cos_i, 1.0))
    R_s, R_p = fresnel_power(scene.n_outside, scene.n_inside, theta)
    e_env = planck_radiance(scene.env_temp, scene.wavelength)
    e_self = planck_radiance(scene.surface_temp, scene.wavelength)
    half_sum = 0.5 * (R_s + R_p)
    half_diff = 0.5 * (R_s - R_p)

    if samples == 0:
        s0 = half_sum * e_env + (1.0 - half_sum) * e_self
        s1_loc = half_diff * (e_env - e_self)
        s2_loc = np.zeros_like(s1_loc)
    else:
        if rng is None:
            raise DomainError("Monte Carlo rendering needs an rng")
        seed = int(rng.integers(0, 2**63 - 1))
        s0 = np.empty((H, W))
        s1_loc = np.empty((H, W))
        s2_loc = np.empty((H, W))
        for i in range(H):
            row_rng = substream(seed, row_seed, i)
            th = row_rng.uniform(0.0, 2.0 * math.pi, size=(W, samples))
            cos_th = np.cos(th)
            sin_th = np.sin(th)
            hs = half_sum[i][:, None]
            hd = half_diff[i][:, None]
            s0_smp = hs * e_env + (1.0 - hs) * e_self + hd * e_self * cos_th
            s1_smp = hd * e_env - hd * e_self - (1.0 - hs) * e_self * cos_th
            s2_smp = -np.sqrt((1.0 - R_s[i]) * (1.0 - R_p[i]))[:, None] * e_self * sin_th
            s0[i] = s0_smp.mean(axis=1)
            s1_loc[i] = s1_smp.mean(axis=1)
            s2_loc[i] = s2_smp.mean(axis=1)

    degenerate = np.abs(cos_i) > 1.0 - 1e-9
    s1_loc = np.where(degenerate, 0.0, s1_loc)
    s2_loc = np.where(degenerate, 0.0, s2_loc)
    phi = _frame_angle(normals)
    s1, s2 = _rotate_to_camera(s1_loc, s2_loc, np.where(degenerate, 0.0, phi))
    s0 = np.where(valid, s0, 0.0)
    s1 = np.where(valid, s1, 0.0)
    s2 = np.where(valid, s2, 0.0)
    flags = () if bool(np.all(valid)) else ("invalid_pixels",)
    return StokesImage(s0=s0, s1=s1, s2=s2, valid=valid, flags=flags)


# =============================================================================
# Pinhole camera design rules
# =============================================================================
@dataclass(frozen=True)
class PinholeDesign:
    """Single-mode pinhole camera constraints.

    The optimal pinhole d = sqrt(2 lambda f) balances diffraction against
    geometric blur; the coherence radius lambda f / d must bracket the pixel
    size b from above and the pixel pitch B from below; the counting window
    must fit inside the coherence time lambda^2 / (c dlambda).
    """

    wavelength: float
    bandwidth: float
    focal_distance: float
    pinhole_diameter: float
    coherence_radius: float
    max_window: float
    pixel_size: float | None = None
    pixel_pitch: float | None = None
    window: float | None = None
    constraints: dict = field(default_factory=dict)


def pinhole_design(lam: float, dlambda: float, f: float, d: float | None = None,
                   b: float | None = None, B: float | None = None,
                   tau: float | None = None) -> PinholeDesign:
    if lam <= 0 or dlambda <= 0 or f <= 0:
        raise DomainError("wavelength, bandwidth, and focal distance must be positive")
    d_opt = math.sqrt(2.0 * lam * f)
    d_used = d_opt if d is None else float(d)
    b_coh = lam * f / d_used
    tau_max = lam**2 / (constants.c * dlambda)
    checks = {"pinhole_near_optimal": abs(d_used - d_opt) <= 0.05 * d_opt}
    if tau is not None:
        checks["window_within_coherence_time"] = tau <= tau_max
    if b is not None:
        checks["pixel_within_coherence_radius"] = b <= b_coh
    if B is not None:
        checks["pitch_beyond_coherence_radius"] = b_coh <= B
    return PinholeDesign(
        wavelength=lam, bandwidth=dlambda, focal_distance=f,
        pinhole_diameter=d_used, coherence_radius=b_coh, max_window=tau_max,
        pixel_size=b, pixel_pitch=B, window=tau, constraints=checks,
    )


# =============================================================================
# Camera pipelines
# =============================================================================
@dataclass
class CameraResult:
    N_hat: np.ndarray
    gamma_hat: np.ndarray
    valid: np.ndarray
    flagged: np.ndarray
    windows_total: int
    report: dict


def _truth_maps(truth: StokesImage):
    N_map, flags_n = truth.normalized_intensity()
    g_map, flags_g = truth.normalized_dolp()
    if flags_n or flags_g:
        raise DomainError(f"truth image unusable: {flags_n + flags_g}")
    return N_map, g_map


def _mean_abs_error(gamma_hat, gamma_true, mask):
    if not np.any(mask):
        return math.nan
    return float(np.mean(np.abs(gamma_hat[mask] - gamma_true[mask])))


def camera_pipeline(truth: StokesImage, mode: str, config: AdaptiveConfig,
                    rng: np.random.Generator, exact_rates: bool = False) -> CameraResult:
    """Estimate per-pixel (N, gamma) maps from threshold clicks.

    mode "non-adaptive": thresholds {1, 2}, ``max_iterations`` x
    ``windows_per_threshold`` windows per threshold per pixel, closed-form
    inversion of the pooled rates.  mode "adaptive": per-pixel adaptive loop
    (threshold re-optimization and early stopping at ``target_se``).

    ``exact_rates`` replaces simulated clicks by exact counting rates
    (the windows -> infinity limit) in the non-adaptive pipeline.

    The DoLP error metric skips pixels whose true mean photon number is
    zero (no photons, polarization undefined); their count is reported.
    """
    if mode not in ("non-adaptive", "adaptive"):
        raise DomainError(f"unknown camera mode {mode!r}")
    N_map, g_map = _truth_maps(truth)
    valid = truth.valid
    err_mask = valid & (N_map > 1e-12)
    excluded = int(np.count_nonzero(valid) - np.count_nonzero(err_mask))

    if mode == "non-adaptive":
        t1, t2 = 1, 2
        w = config.windows_per_threshold * config.max_iterations
        if exact_rates:
            q1 = dolp_rate(N_map, g_map, t1)
            q2 = dolp_rate(N_map, g_map, t2)
            windows_total = 0
        else:
            q1 = dolp_rate(N_map, g_map, t1)
            q2 = dolp_rate(N_map, g_map, t2)
            q1 = rng.binomial(w, np.where(valid, q1, 0.0)) / w
            q2 = rng.binomial(w, np.where(valid, q2, 0.0)) / w
            windows_total = 2 * w * int(np.count_nonzero(valid))
        N_hat, g_hat, flagged = invert_q12_arrays(np.clip(q1, 0, 1 - 1e-12),
                                                  np.minimum(q2, q1))
        N_hat = np.where(valid, N_hat, 0.0)
        g_hat = np.where(valid, g_hat, 0.0)
        err = _mean_abs_error(g_hat, g_map, err_mask)
        report = {
            "mode": mode, "windows_total": windows_total,
            "windows_per_pixel": 0 if exact_rates else 2 * w,
            "mean_abs_dolp_error": err, "excluded_zero_photon_pixels": excluded,
            "iterations": config.max_iterations,
            "flagged_pixels": int(np.count_nonzero(flagged & valid)),
        }
        return CameraResult(N_hat=N_hat, gamma_hat=g_hat, valid=valid,
                            flagged=flagged & valid, windows_total=windows_total,
                            report=report)

    return _adaptive_camera(N_map, g_map, valid, err_mask, excluded, config, rng)


# ---- batched per-pixel adaptive pipeline ------------------------------------
_T_CAP = 16  # imaging sources have N <= 1; optimal thresholds stay small


def _batch_estimates(W, C, n_bounds=(1e-4, 4.0)):
    """Per-pixel (N, gamma) estimates from pooled windows W and clicks C.

    Pixels measured only at thresholds {1, 2} invert in closed form (the
    exact joint-likelihood stationary point for that data).  Pixels whose
    thresholds moved elsewhere go through a vectorized grid-plus-zoom
    likelihood maximization seeded at the {1, 2} inversion when available.
    """
    n_px, n_thr = W.shape
    N_est = np.zeros(n_px)
    x_est = np.zeros(n_px)
    has = W[:, 1:] > 0
    only12 = has[:, 0] & has[:, 1] & ~np.any(has[:, 2:], axis=1)
    if np.any(only12):
        sel = np.nonzero(only12)[0]
        q1 = np.clip(C[sel, 1] / W[sel, 1], 0.0, 1.0 - 1e-12)
        q2 = np.minimum(C[sel, 2] / W[sel, 2], q1)
        Ni, gi, _ = invert_q12_arrays(q1, q2)
        N_est[sel] = np.clip(Ni, n_bounds[0], n_bounds[1])
        x_est[sel] = gi
    rest = np.nonzero(~only12)[0]
    if rest.size:
        N_est[rest], x_est[rest] = _batch_mle(W[rest], C[rest], n_bounds)
    return N_est, x_est


def _batch_mle(W, C, n_bounds=(1e-4, 4.0)):
    """Joint-likelihood (N, gamma) estimates via a coarse grid plus widening
    zoom refinements, vectorized across pixels."""
    n_px, n_thr = W.shape
    lo, hi = n_bounds
    ln_lo, ln_hi = math.log(lo), math.log(hi)
    n_grid = np.exp(np.linspace(ln_lo, ln_hi, 48))
    x_grid = np.linspace(0.0, 1.0, 41)
    NN, XX = np.meshgrid(n_grid, x_grid, indexing="ij")
    flatN, flatX = NN.ravel(), XX.ravel()
    used = [t for t in range(1, n_thr) if np.any(W[:, t] > 0)]

    ll = np.zeros((n_px, flatN.size))
    for t in used:
        q = np.clip(dolp_rate(flatN, flatX, float(t)), 1e-12, 1 - 1e-12)
        ll += np.outer(C[:, t], np.log(q)) + np.outer(W[:, t] - C[:, t], np.log1p(-q))
    # seed a second candidate from the {1, 2} closed-form inversion
    if 1 in used and 2 in used:
        q1 = np.clip(C[:, 1] / np.maximum(W[:, 1], 1), 0.0, 1.0 - 1e-12)
        q2 = np.minimum(C[:, 2] / np.maximum(W[:, 2], 1), q1)
        Ni, gi, _ = invert_q12_arrays(q1, q2)
        Ni = np.clip(Ni, lo, hi)
        ll_inv = np.zeros(n_px)
        for t in used:
            q = np.clip(dolp_rate(Ni, gi, float(t)), 1e-12, 1 - 1e-12)
            ll_inv += C[:, t] * np.log(q) + (W[:, t] - C[:, t]) * np.log1p(-q)
        grid_best = np.argmax(ll, axis=1)
        take_inv = ll_inv >= ll[np.arange(n_px), grid_best]
        est_lnN = np.where(take_inv, np.log(Ni), np.log(flatN[grid_best]))
        est_x = np.where(take_inv, gi, flatX[grid_best])
    else:
        grid_best = np.argmax(ll, axis=1)
        est_lnN = np.log(flatN[grid_best])
        est_x = flatX[grid_best]

    h_lnN = 2.0 * (ln_hi - ln_lo) / 47.0
    h_x = 2.0 / 40.0
    take = np.arange(n_px)
    for _ in range(6):
        offs = np.linspace(-1.0, 1.0, 13)
        dn, dx = np.meshgrid(offs * h_lnN, offs * h_x, indexing="ij")
        cand_lnN = np.clip(est_lnN[:, None] + dn.ravel()[None, :], ln_lo, ln_hi)
        cand_x = np.clip(est_x[:, None] + dx.ravel()[None, :], 0.0, 1.0)
        ll = np.zeros_like(cand_lnN)
        candN = np.exp(cand_lnN)
        for t in used:
            q = np.clip(dolp_rate(candN, cand_x, float(t)), 1e-12, 1 - 1e-12)
            ll += C[:, t, None] * np.log(q) + (W[:, t, None] - C[:, t, None]) * np.log1p(-q)
        best = np.argmax(ll, axis=1)
        est_lnN = cand_lnN[take, best]
        est_x = cand_x[take, best]
        # shrink slowly; the (N, gamma) likelihood ridge is curved and the
        # zoom must stay wide enough to slide along it
        h_lnN /= 2.2
        h_x /= 2.2
    return np.exp(est_lnN), est_x


def _batch_threshold_pairs(N_hat, g_hat, se_g=None):
    """Per-pixel (argmax_t J_N, argmax_t J_gamma) with collision bumping.

    While the polarization is unresolved (predicted standard error above
    half the estimate) the gamma threshold is chosen at the weak-but-
    resolvable polarization floor gamma = 0.05 rather than at the noisy
    point estimate; the optimum there sits on the broad small-gamma plateau
    (t = 2 for N <= 0.1, growing with N) and is stable against estimate
    fluctuations that would otherwise make the selection ping-pong.
    """
    N = np.maximum(N_hat, 1e-4)
    g = np.clip(g_hat, 0.05, 0.95)
    if se_g is not None:
        g = np.where(se_g >= 0.5 * g, 0.05, g)
    JN = np.zeros((N.size, _T_CAP + 1))
    Jg = np.zeros_like(JN)
    for t in range(1, _T_CAP + 1):
        q, dN, dg = dolp_rate_grads(N, g, float(t))
        denom = np.clip(q * (1.0 - q), 1e-300, None)
        ok = (q > 1e-15) & (1.0 - q > 1e-15)
        JN[:, t] = np.where(ok, dN**2 / denom, 0.0)
        Jg[:, t] = np.where(ok, dg**2 / denom, 0.0)
    t_n = np.argmax(JN[:, 1:], axis=1) + 1
    t_g = np.argmax(Jg[:, 1:], axis=1) + 1
    t_g = np.where(t_g == t_n, np.minimum(t_g + 1, _T_CAP), t_g)
    t_g = np.where(t_g == t_n, t_n - 1, t_g)  # only hits when t_n == cap
    return t_n, t_g


def _batch_predicted_se_gamma(W, N_hat, g_hat):
    """Predicted gamma standard error from the pooled 2x2 Fisher matrix."""
    N = np.maximum(N_hat, 1e-4)
    g = np.clip(g_hat, 1e-3, 1.0 - 1e-3)
    A = np.zeros(N.size)
    Bm = np.zeros(N.size)
    Cm = np.zeros(N.size)
    for t in range(1, W.shape[1]):
        w = W[:, t]
        if not np.any(w > 0):
            continue
        q, dN, dg = dolp_rate_grads(N, g, float(t))
        v = np.where((q > 1e-15) & (1 - q > 1e-15), 1.0 / np.clip(q * (1 - q), 1e-300, None), 0.0)
        A += w * v * dN * dN
        Bm += w * v * dN * dg
        Cm += w * v * dg * dg
    det = A * Cm - Bm * Bm
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(A / det)
    return np.where(det > 0, se, np.inf)


def _adaptive_camera(N_map, g_map, valid, err_mask, excluded, config, rng):
    idx = np.nonzero(valid.ravel())[0]
    n_px = idx.size
    N_true = N_map.ravel()[idx]
    g_true = g_map.ravel()[idx]

    W = np.zeros((n_px, _T_CAP + 1), dtype=np.int64)
    C = np.zeros((n_px, _T_CAP + 1), dtype=np.int64)
    active = np.ones(n_px, dtype=bool)
    t_a = np.full(n_px, int(config.initial_pair[0]))
    t_b = np.full(n_px, int(config.initial_pair[1]))
    N_hat = np.zeros(n_px)
    g_hat = np.zeros(n_px)
    per_iteration = []

    for k in range(config.max_iterations):
        if not np.any(active):
            break
        act = np.nonzero(active)[0]
        for ts in (t_a, t_b):
            tv = ts[act]
            q = dolp_rate(N_true[act], g_true[act], tv.astype(float))
            clicks = rng.binomial(config.windows_per_threshold, q)
            np.add.at(W, (act, tv), config.windows_per_threshold)
            np.add.at(C, (act, tv), clicks)
        N_hat[act], g_hat[act] = _batch_estimates(W[act], C[act])

        se_g = _batch_predicted_se_gamma(W[act], N_hat[act], g_hat[act])
        t_n, t_g = _batch_threshold_pairs(N_hat[act], g_hat[act], se_g)
        t_a[act] = t_n
        t_b[act] = t_g
        if config.target_se is not None:
            done = act[se_g <= config.target_se]
            active[done] = False
        err = float(np.mean(np.abs(g_hat[err_mask.ravel()[idx]] - g_true[err_mask.ravel()[idx]])))
        per_iteration.append({
            "iteration": k,
            "windows_total": int(W.sum()),
            "mean_abs_dolp_error": err,
            "active_pixels": int(np.count_nonzero(active)),
        })

    H, Wd = N_map.shape
    N_out = np.zeros(H * Wd)
    g_out = np.zeros(H * Wd)
    N_out[idx] = N_hat
    g_out[idx] = g_hat
    windows_total = int(W.sum())
    report = {
        "mode": "adaptive", "windows_total": windows_total,
        "mean_abs_dolp_error": per_iteration[-1]["mean_abs_dolp_error"],
        "excluded_zero_photon_pixels": excluded,
        "iterations": len(per_iteration),
        "per_iteration": per_iteration,
    }
    return CameraResult(
        N_hat=N_out.reshape(H, Wd), gamma_hat=g_out.reshape(H, Wd),
        valid=valid, flagged=np.zeros_like(valid), windows_total=windows_total,
        report=report,
    )
