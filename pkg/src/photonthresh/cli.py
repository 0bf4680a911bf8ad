"""Command-line front end.

Every subcommand resolves its configuration (defaults < --config JSON <
explicit flags), runs the experiment, writes CSV/JSON/PGM artifacts plus a
manifest into --out-dir, and renders matplotlib figures next to the data
unless --no-plots is given.

Exit codes: 0 success, 1 configuration error, 2 numerical-failure flags or
failed reproduction checks, 64 unknown subcommand.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, artifacts
from .adaptive_estimation import AdaptiveConfig, adaptive_loop, crlb_std
from .detector_models import ThresholdResponse, counting_rate, simulate_clicks
from .dolp_imaging import SceneSpec, camera_pipeline, pinhole_design, render_scene
from .errors import ConfigError, DomainError, NumericalError, PhotonThreshError
from .fisher_info import (
    ParamSpec,
    efficiency_curve,
    fisher_report,
    optimal_threshold,
    pd_fisher,
    shot_noise_fisher,
    threshold_equiv_noise,
)
from .lidar import (
    ClassificationConfig,
    lidar_optimal_thresholds,
    pnrd_vs_pd,
    run_classification,
    two_proportion_z,
)
from .nanowire import (
    NanowireParams,
    bias_for_threshold,
    evolve_hotspot,
    switching_current,
)
from .photon_stats import FAMILIES, FAMILY_PARAMS, mandel_q

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64


# =============================================================================
# argument plumbing
# =============================================================================
def _build_parser():
    p = argparse.ArgumentParser(
        prog="photonthresh",
        description="Adaptive photon-threshold sensing toolkit",
    )
    p.add_argument("--version", action="version", version=f"photonthresh {__version__}")
    sub = p.add_subparsers(dest="command")

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out-dir", type=str, default=f"artifacts/{name}")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--config", type=str, default=None,
                        help="JSON file whose entries override flag defaults")
        sp.add_argument("--no-plots", action="store_true")
        return sp

    sp = add("stats", "photon-number statistics of a source")
    _family_args(sp)
    sp.add_argument("--n-max", type=int, default=None)

    sp = add("rates", "counting rates over a threshold range")
    _family_args(sp)
    sp.add_argument("--t-max", type=int, default=12)

    sp = add("fisher", "Fisher information at one threshold")
    _family_args(sp)
    sp.add_argument("--param", required=True)
    sp.add_argument("--t", type=int, default=1)

    sp = add("optimal-threshold", "optimal threshold for a parameter")
    _family_args(sp)
    sp.add_argument("--param", required=True)
    sp.add_argument("--t-cap", type=int, default=None)

    sp = add("tradespace", "threshold-equivalent noise versus sharpness")
    sp.add_argument("--N", type=float, default=1000.0)
    sp.add_argument("--t", type=float, default=None, help="flux threshold (defaults to N)")
    sp.add_argument("--sharpness-grid", type=float, nargs="+",
                    default=[1, 2, 3, 5, 8, 13, 22, 36, 60, 100])

    sp = add("dolp-render", "render the polarized thermal scene")
    _scene_args(sp)
    sp.add_argument("--samples", type=int, default=0,
                    help="Monte Carlo samples per pixel (0 = exact average)")

    sp = add("dolp-camera", "estimate (N, DoLP) maps from threshold clicks")
    _scene_args(sp)
    sp.add_argument("--mode", choices=["non-adaptive", "adaptive"], default="non-adaptive")
    sp.add_argument("--windows", type=int, default=1000)
    sp.add_argument("--iterations", type=int, default=5)
    sp.add_argument("--target-se", type=float, default=None)

    sp = add("adaptive", "run the adaptive estimation loop on one source")
    _family_args(sp)
    sp.add_argument("--windows", type=int, default=1000)
    sp.add_argument("--iterations", type=int, default=5)
    sp.add_argument("--target-se", type=float, default=None)

    sp = add("lidar-classify", "coherent-vs-thermal classification accuracy")
    sp.add_argument("--N", type=float, default=0.1)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--windows-grid", type=int, nargs="+", default=None)

    sp = add("lidar-thresholds", "optimal thresholds of the displaced-thermal source")
    sp.add_argument("--N", type=float, required=True)
    sp.add_argument("--g", type=float, required=True)

    sp = add("pnrd-compare", "PNRD versus threshold-detector Fisher ratio")
    sp.add_argument("--N", type=float, default=3.0)
    sp.add_argument("--g", type=float, default=0.01)
    sp.add_argument("--M-max", type=int, default=64)

    sp = add("nanowire-sweep", "click probabilities over a bias sweep")
    sp.add_argument("--params", type=str, default=None, help="nanowire parameter JSON")
    sp.add_argument("--n-max", type=int, default=5)
    sp.add_argument("--bias-points", type=int, default=25)

    sp = add("nanowire-bias", "bias current realizing a photon threshold")
    sp.add_argument("--params", type=str, default=None)
    sp.add_argument("--t", type=int, required=True)

    sp = add("reproduce", "rerun a headline result at desk scale")
    sp.add_argument("figure", choices=["fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"])
    return p


def _family_args(sp):
    sp.add_argument("--family", choices=sorted(FAMILIES), default="thermal")
    sp.add_argument("--N", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--g", type=float, default=None)
    sp.add_argument("--m", type=int, default=None)


def _scene_args(sp):
    sp.add_argument("--geometry", type=str, default="sphere")
    sp.add_argument("--width", type=int, default=64)
    sp.add_argument("--height", type=int, default=64)
    sp.add_argument("--surface-temp", type=float, default=310.15)
    sp.add_argument("--env-temp", type=float, default=273.15)
    sp.add_argument("--wavelength", type=float, default=10e-6)


def _apply_config_file(parser, argv):
    """Pre-scan for --config and fold the JSON into the defaults, so explicit
    flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    cfg_path = argv[idx + 1]
    with open(cfg_path) as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise ConfigError(f"{cfg_path}: config must be a JSON object")
    for action in parser._subparsers._group_actions[0].choices.values():
        known = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in overrides.items() if k in known})
    return argv


def _make_dist(args):
    family = args.family
    kwargs = {}
    if family in ("thermal", "coherent", "dolp", "displaced"):
        kwargs["N"] = args.N
    if family == "dolp":
        kwargs["gamma"] = args.gamma if args.gamma is not None else 0.5
    if family == "displaced":
        kwargs["g"] = args.g if args.g is not None else 0.5
    if family == "fock":
        kwargs["m"] = args.m if args.m is not None else 1
    return FAMILIES[family](**kwargs)


def _dist_config(args):
    return {k: getattr(args, k) for k in ("family", "N", "gamma", "g", "m")
            if hasattr(args, k) and getattr(args, k) is not None}


# =============================================================================
# subcommand handlers (each returns an exit code)
# =============================================================================
def _cmd_stats(args, out):
    dist = _make_dist(args)
    ns = dist.support() if args.n_max is None else np.arange(args.n_max + 1)
    p = dist.pmf(ns)
    artifacts.write_csv(out / "pmf.csv", ("n", "pmf", "cdf"),
                        zip(ns, p, np.cumsum(p)))
    summary = {"mean": dist.mean(), "variance": dist.variance(),
               "mandel_q": mandel_q(dist), "support_size": int(ns.size)}
    artifacts.write_json(out / "summary.json", summary)
    print(f"mean = {summary['mean']:.6g}  variance = {summary['variance']:.6g}  "
          f"Mandel Q = {summary['mandel_q']:.6g}")
    if not args.no_plots:
        from . import plots
        plots.plot_pmf(ns, {args.family: p}, out / "pmf.png")
    return EXIT_OK


def _cmd_rates(args, out):
    dist = _make_dist(args)
    rows = []
    for t in range(1, args.t_max + 1):
        rows.append((t, counting_rate(dist, ThresholdResponse(t))))
    artifacts.write_csv(out / "rates.csv", ("threshold", "rate"), rows)
    for t, q in rows[: min(5, len(rows))]:
        print(f"q({t}) = {q:.6f}")
    return EXIT_OK


def _cmd_fisher(args, out):
    dist = _make_dist(args)
    J = pd_fisher(dist, args.t, args.param)
    J0 = shot_noise_fisher(dist, args.param)
    artifacts.write_json(out / "fisher.json",
                         {"param": args.param, "t": args.t, "J": J, "J0": J0,
                          "efficiency": J / J0 if J0 > 0 else 0.0})
    print(f"J = {J:.6g}")
    print(f"J0 = {J0:.6g}")
    return EXIT_OK


def _cmd_optimal_threshold(args, out):
    dist = _make_dist(args)
    rep = fisher_report(dist, args.param, t_max=args.t_cap)
    artifacts.write_json(out / "optimal_threshold.json", {
        "param": rep.parameter, "t_opt": rep.t_opt, "J_max": rep.J,
        "J0": rep.J0, "efficiency": rep.efficiency,
    })
    print(f"t_opt = {rep.t_opt}")
    print(f"J_max = {rep.J:.6g}  J0 = {rep.J0:.6g}  efficiency = {rep.efficiency:.4f}")
    return EXIT_OK


def _cmd_tradespace(args, out):
    from .photon_stats import CoherentDist

    dist = CoherentDist(args.N)
    t = args.t if args.t is not None else args.N
    grid = list(args.sharpness_grid)

    def point(S):
        return threshold_equiv_noise(dist, t, float(S), "N")

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            noise = list(pool.map(point, grid))
    else:
        noise = [point(S) for S in grid]
    limit = threshold_equiv_noise(dist, t, math.inf, "N")
    artifacts.write_csv(out / "tradespace.csv",
                        ("sharpness", "equivalent_noise"),
                        list(zip(grid, noise)) + [("inf", limit)])
    print(f"gamma_e(S -> inf) = {limit:.6f}  (pi/2 - 1 = {math.pi / 2 - 1:.6f})")
    if not args.no_plots:
        from . import plots
        plots.plot_tradespace(grid, noise, limit, out / "tradespace.png")
    return EXIT_OK


def _scene_from_args(args):
    return SceneSpec(geometry=args.geometry, width=args.width, height=args.height,
                     surface_temp=args.surface_temp, env_temp=args.env_temp,
                     wavelength=args.wavelength)


def _cmd_dolp_render(args, out, rng):
    scene = _scene_from_args(args)
    img = render_scene(scene, samples=args.samples, rng=rng)
    N_map, flags_n = img.normalized_intensity()
    g_map = img.dolp()
    artifacts.write_pgm(out / "intensity_8bit.pgm", N_map, bits=8)
    artifacts.write_pgm(out / "intensity_16bit.pgm", N_map, bits=16)
    artifacts.write_pgm(out / "dolp_8bit.pgm", np.clip(g_map, 0, 1), bits=8)
    artifacts.write_pgm(out / "dolp_16bit.pgm", np.clip(g_map, 0, 1), bits=16)
    header = ("row", "col", "s0", "s1", "s2", "valid")
    rows = [(i, j, img.s0[i, j], img.s1[i, j], img.s2[i, j], int(img.valid[i, j]))
            for i in range(img.shape[0]) for j in range(img.shape[1])]
    artifacts.write_csv(out / "stokes.csv", header, rows)
    artifacts.write_json(out / "render_report.json", {
        "flags": list(img.flags + flags_n),
        "valid_pixels": int(np.count_nonzero(img.valid)),
        "dolp_max": float(g_map[img.valid].max()) if img.valid.any() else None,
    })
    print(f"rendered {scene.width}x{scene.height} {scene.geometry}; "
          f"max DoLP = {g_map[img.valid].max():.4f}")
    if not args.no_plots:
        from . import plots
        plots.plot_maps({"normalized intensity": N_map, "DoLP": g_map},
                        out / "maps.png")
    return EXIT_OK


def _cmd_dolp_camera(args, out, rng):
    scene = _scene_from_args(args)
    truth = render_scene(scene, samples=0)
    cfg = AdaptiveConfig(windows_per_threshold=args.windows,
                         max_iterations=args.iterations,
                         target_se=args.target_se)
    res = camera_pipeline(truth, args.mode, cfg, rng)
    artifacts.write_pgm(out / "dolp_estimate.pgm", np.clip(res.gamma_hat, 0, 1), bits=8)
    artifacts.write_pgm(out / "intensity_estimate.pgm",
                        np.clip(res.N_hat, 0, 1), bits=8)
    artifacts.write_json(out / "error_report.json", res.report)
    print(f"{args.mode}: mean |DoLP error| = {res.report['mean_abs_dolp_error']:.4f} "
          f"using {res.windows_total} windows")
    if not args.no_plots:
        from . import plots
        g_map, _ = truth.normalized_dolp()
        plots.plot_maps({"true DoLP": g_map, "estimated DoLP": res.gamma_hat},
                        out / "camera_maps.png")
    # per-pixel statistical clamps are routine and reported in the JSON;
    # they are not a numerical failure
    return EXIT_OK


def _cmd_adaptive(args, out, rng):
    dist = _make_dist(args)
    cfg = AdaptiveConfig(windows_per_threshold=args.windows,
                         max_iterations=args.iterations,
                         target_se=args.target_se)
    trace = adaptive_loop(dist, cfg, rng)
    (out / "trace.json").write_text(trace.to_json())
    artifacts.write_csv(out / "trace.csv", trace.CSV_HEADER, trace.to_csv_rows())
    last = trace.iterations[-1]
    names = list(last.estimates)
    print(f"{len(trace.iterations)} iterations, {trace.total_windows} windows")
    for name in names:
        print(f"{name} = {last.estimates[name]:.5g} "
              f"(predicted se {last.predicted_se[name]:.3g})")
    if not args.no_plots:
        from . import plots
        plots.plot_adaptive_trace(trace, out / "trace.png")
    return EXIT_OK


def _cmd_lidar_classify(args, out, rng):
    kwargs = {"N": args.N, "trials": args.trials, "seed": args.seed}
    if args.windows_grid:
        kwargs["window_grid"] = tuple(args.windows_grid)
    cfg = ClassificationConfig(**kwargs)
    result = run_classification(cfg, rng)
    artifacts.write_csv(out / "accuracy.csv", result.CSV_HEADER, result.to_csv_rows())
    artifacts.write_json(out / "experiment_manifest.json", cfg.manifest())
    for w, a1, a2 in result.rows:
        print(f"windows {w:>8}: accuracy(t=1) = {a1:.3f}  accuracy(t=2) = {a2:.3f}")
    if not args.no_plots:
        from . import plots
        plots.plot_classification(result.rows, out / "accuracy.png")
    return EXIT_OK


def _cmd_lidar_thresholds(args, out):
    t_n, t_g = lidar_optimal_thresholds(args.N, args.g)
    artifacts.write_json(out / "thresholds.json", {"N": args.N, "g": args.g,
                                                   "t_opt_N": t_n, "t_opt_g": t_g})
    print(f"(t_opt for N, t_opt for g) = ({t_n}, {t_g})")
    return EXIT_OK


def _cmd_pnrd_compare(args, out):
    curves = pnrd_vs_pd(args.N, args.g, range(1, args.M_max + 1))
    rows = []
    for curve in curves.values():
        rows.extend(curve.to_csv_rows())
    artifacts.write_csv(out / "comparison.csv", curves["N"].CSV_HEADER, rows)
    report = {p: {"crossover_M": c.crossover_M, "pd_t_opt": c.pd_t_opt,
                  "pd_J_max": c.pd_J_max, "J0": c.shot_noise}
              for p, c in curves.items()}
    artifacts.write_json(out / "crossover.json", report)
    for p, info in report.items():
        print(f"parameter {p}: t_opt = {info['pd_t_opt']}, "
              f"PNRD overtakes at M = {info['crossover_M']}")
    if not args.no_plots:
        from . import plots
        plots.plot_pnrd_comparison(curves, out / "comparison.png")
    return EXIT_OK


def _load_nanowire_params(path) -> NanowireParams:
    if path is None:
        return NanowireParams()
    with open(path) as fh:
        return NanowireParams.from_dict(json.load(fh))


def _cmd_nanowire_sweep(args, out):
    params = _load_nanowire_params(args.params)
    ns = list(range(args.n_max + 1))

    def traj_for(n):
        return n, evolve_hotspot(params, n)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            trajs = dict(pool.map(traj_for, ns))
    else:
        trajs = dict(traj_for(n) for n in ns)

    sws = {n: switching_current(params, n, traj=trajs[n]) for n in ns}
    i_sw = sws[0].current
    from .nanowire import click_probability

    bias_grid = np.linspace(0.5, 1.05, args.bias_points) * i_sw
    rows = []
    P_rows = {}
    for n in ns:
        Ps = [click_probability(params, n, ib, trajs[n]) for ib in bias_grid]
        P_rows[n] = Ps
        rows.extend((n, ib / i_sw, P) for ib, P in zip(bias_grid, Ps))
    artifacts.write_csv(out / "click_probability.csv",
                        ("photons", "bias_over_isw", "click_probability"), rows)
    staircase = [(n, sws[n].current / i_sw) for n in ns]
    artifacts.write_csv(out / "switching_staircase.csv",
                        ("photons", "bias_over_isw"), staircase)
    artifacts.write_json(out / "nanowire_params.json", params.to_dict())
    for n, frac in staircase:
        print(f"I_SW,{n} / I_SW = {frac:.4f} (converged: {sws[n].converged})")
    if not args.no_plots:
        from . import plots
        plots.plot_nanowire(bias_grid / i_sw, P_rows, staircase, out / "nanowire.png")
    return EXIT_OK if all(s.converged for s in sws.values()) else EXIT_NUMERICAL


def _cmd_nanowire_bias(args, out):
    params = _load_nanowire_params(args.params)
    point = bias_for_threshold(params, args.t)
    artifacts.write_json(out / "bias_point.json", {
        "threshold": point.threshold, "bias_current": point.bias_current,
        "normalized_bias": point.normalized_bias,
        "response": list(point.response), "contrast_ok": point.contrast_ok,
    })
    artifacts.write_csv(out / "response.csv", ("photons", "click_probability"),
                        list(enumerate(point.response)))
    print(f"threshold {args.t}: I_b/I_SW = {point.normalized_bias:.4f}, "
          f"P = {[round(p, 4) for p in point.response]}")
    return EXIT_OK if point.contrast_ok else EXIT_NUMERICAL


# =============================================================================
# figure reproduction
# =============================================================================
def _check_file(out, checks: dict) -> int:
    artifacts.write_json(out / "checks.json", checks)
    failed = [k for k, v in checks.items() if not v]
    for name, ok in checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _reproduce_fig3(args, out, rng):
    grid = np.geomspace(0.01, 200, 25)
    rows_th, spd_th = efficiency_curve("thermal", "N", grid)
    rows_u, spd_u = efficiency_curve("dolp", "N", grid, fixed={"gamma": 0.0})
    header = ("family", "param", "N", "gamma_or_g", "t_opt", "J", "J0", "efficiency")
    artifacts.write_csv(out / "efficiency_thermal.csv", header,
                        [tuple(r[k] for k in header) for r in rows_th])
    artifacts.write_csv(out / "efficiency_unpolarized.csv", header,
                        [tuple(r[k] for k in header) for r in rows_u])
    rep_L = fisher_report(FAMILIES["thermal"](N=100.0), "N")
    rep_U = fisher_report(FAMILIES["dolp"](N=100.0, gamma=0.0), "N")
    t2 = all(optimal_threshold(FAMILIES["dolp"](N=n, gamma=0.5), "gamma")[0] == 2
             for n in (0.01, 0.05, 0.1))
    checks = {
        "L_threshold_ratio_in_[1.55,1.63]": 1.55 <= rep_L.t_opt / 100.0 <= 1.63,
        "L_efficiency_in_[0.64,0.66]": 0.64 <= rep_L.efficiency <= 0.66,
        "U_threshold_ratio_in_[1.25,1.33]": 1.25 <= rep_U.t_opt / 100.0 <= 1.33,
        "U_efficiency_in_[0.63,0.66]": 0.63 <= rep_U.efficiency <= 0.66,
        "weak_signal_dolp_threshold_is_2": t2,
    }
    if not args.no_plots:
        from . import plots
        plots.plot_efficiency_curves(rows_th, spd_th, out / "fig3_thermal.png",
                                     "thermal source, intensity parameter")
        plots.plot_efficiency_curves(rows_u, spd_u, out / "fig3_unpolarized.png",
                                     "unpolarized two-mode source, intensity parameter")
    return _check_file(out, checks)


def _reproduce_fig4(args, out, rng):
    scene = SceneSpec(geometry="sphere", width=48, height=48)
    truth = render_scene(scene, samples=0)
    base_cfg = AdaptiveConfig(windows_per_threshold=1000, max_iterations=5)
    na = camera_pipeline(truth, "non-adaptive", base_cfg, np.random.default_rng(args.seed + 1))
    ad = camera_pipeline(truth, "adaptive",
                         AdaptiveConfig(windows_per_threshold=500, max_iterations=16),
                         np.random.default_rng(args.seed + 2))
    E_na, W_na = na.report["mean_abs_dolp_error"], na.windows_total
    series = [(r["windows_total"], r["mean_abs_dolp_error"])
              for r in ad.report["per_iteration"]]
    cross = next((w for w, e in series if e <= E_na), None)
    artifacts.write_csv(out / "fig4_series.csv",
                        ("windows_total", "mean_abs_dolp_error"), series)
    artifacts.write_json(out / "fig4_report.json", {
        "non_adaptive_error": E_na, "non_adaptive_windows": W_na,
        "adaptive_crossing_windows": cross,
        "window_ratio": None if cross is None else cross / W_na,
    })
    if not args.no_plots:
        from . import plots
        plots.plot_error_series(
            {"adaptive": ([w for w, _ in series], [e for _, e in series])},
            out / "fig4.png", baseline=E_na)
    checks = {"adaptive_matches_error_within_0.6x_windows":
              cross is not None and cross <= 0.6 * W_na}
    return _check_file(out, checks)


def _reproduce_fig5(args, out, rng):
    grid = np.geomspace(0.01, 200, 25)
    rows_c, spd_c = efficiency_curve("coherent", "N", grid)
    header = ("family", "param", "N", "gamma_or_g", "t_opt", "J", "J0", "efficiency")
    artifacts.write_csv(out / "efficiency_coherent.csv", header,
                        [tuple(r[k] for k in header) for r in rows_c])
    rep_C = fisher_report(FAMILIES["coherent"](N=100.0), "N")
    rep_T = fisher_report(FAMILIES["displaced"](N=100.0, g=0.0), "N")
    t2 = all(optimal_threshold(FAMILIES["displaced"](N=n, g=0.5), "g")[0] == 2
             for n in (0.01, 0.05, 0.1))
    checks = {
        "C_threshold_ratio_within_2pct_of_1": abs(rep_C.t_opt / 100.0 - 1.0) <= 0.02,
        "C_efficiency_within_0.01_of_2/pi": abs(rep_C.efficiency - 2 / math.pi) <= 0.01,
        "T_thermal_asymptote_ratio_in_[1.55,1.63]": 1.55 <= rep_T.t_opt / 100.0 <= 1.63,
        "weak_signal_fraction_threshold_is_2": t2,
    }
    if not args.no_plots:
        from . import plots
        plots.plot_efficiency_curves(rows_c, spd_c, out / "fig5_coherent.png",
                                     "coherent source, intensity parameter")
    return _check_file(out, checks)


def _reproduce_fig6(args, out, rng):
    cfg = ClassificationConfig(N=0.1, trials=1000, seed=args.seed)
    result = run_classification(cfg, rng)
    artifacts.write_csv(out / "fig6_accuracy.csv", result.CSV_HEADER, result.to_csv_rows())
    artifacts.write_json(out / "experiment_manifest.json", cfg.manifest())
    big = [(w, a1, a2) for w, a1, a2 in result.rows if w >= 10_000]
    dominance = all(a2 >= a1 for _, a1, a2 in big)
    n = cfg.trials
    z_first = two_proportion_z(big[0][2] * n, big[0][1] * n, n)
    pooled_n = n * len(big)
    z_pool = two_proportion_z(sum(a2 for _, _, a2 in big) * n,
                              sum(a1 for _, a1, _ in big) * n, pooled_n)
    checks = {
        "t2_beats_t1": dominance and z_first > 3.0 and z_pool > 3.0,
        "t2_accuracy_nondecreasing": all(
            b2 >= a2 - 2.0 * math.sqrt(max(a2 * (1 - a2), 1e-9) / n) * 2
            for (_, _, a2), (_, _, b2) in zip(result.rows, result.rows[1:])),
    }
    if not args.no_plots:
        from . import plots
        plots.plot_classification(result.rows, out / "fig6.png")
    return _check_file(out, checks)


def _reproduce_fig7(args, out, rng):
    params = NanowireParams(grid_nx=64, grid_ny=64, snapshot_stride=12)
    ns = range(4)
    trajs = {n: evolve_hotspot(params, n) for n in ns}
    sws = {n: switching_current(params, n, traj=trajs[n]) for n in ns}
    i_sw = sws[0].current
    from .nanowire import click_probability

    bias_grid = np.linspace(0.6, 1.05, 14) * i_sw
    P = {n: [click_probability(params, n, ib, trajs[n]) for ib in bias_grid] for n in ns}
    rows = [(n, ib / i_sw, p) for n in ns for ib, p in zip(bias_grid, P[n])]
    artifacts.write_csv(out / "fig7_click_probability.csv",
                        ("photons", "bias_over_isw", "click_probability"), rows)
    stair = [(n, sws[n].current / i_sw) for n in ns]
    artifacts.write_csv(out / "fig7_staircase.csv", ("photons", "bias_over_isw"), stair)
    Pm = np.array([P[n] for n in ns])
    checks = {
        "click_probabilities_in_unit_interval": bool((Pm >= 0).all() and (Pm <= 1).all()),
        "click_probability_nondecreasing_in_bias": bool(np.all(np.diff(Pm, axis=1) >= -1e-9)),
        "click_probability_nondecreasing_in_photons": bool(np.all(np.diff(Pm, axis=0) >= -1e-9)),
        "switching_current_strictly_decreasing": all(
            sws[n].current > sws[n + 1].current for n in range(len(ns) - 1)),
    }
    if not args.no_plots:
        from . import plots
        plots.plot_nanowire(bias_grid / i_sw, P, stair, out / "fig7.png")
    return _check_file(out, checks)


def _reproduce_fig8(args, out, rng):
    curves = pnrd_vs_pd(3.0, 0.01)
    rows = []
    for curve in curves.values():
        rows.extend(curve.to_csv_rows())
    artifacts.write_csv(out / "fig8_comparison.csv", curves["N"].CSV_HEADER, rows)
    artifacts.write_json(out / "fig8_crossover.json",
                         {p: c.crossover_M for p, c in curves.items()})
    checks = {}
    for p, c in curves.items():
        r = np.asarray(c.ratios)
        checks[f"{p}_low_M_region_below_1"] = bool(r[0] < 1.0)
        checks[f"{p}_single_crossing"] = int(np.sum((r[:-1] < 1) & (r[1:] >= 1))) == 1
        checks[f"{p}_limit_ratio_above_1"] = bool(r[-1] >= 1.0)
        checks[f"{p}_crossover_at_or_below_t_opt"] = (
            c.crossover_M is not None and c.crossover_M <= c.pd_t_opt)
    if not args.no_plots:
        from . import plots
        plots.plot_pnrd_comparison(curves, out / "fig8.png")
    return _check_file(out, checks)


def _reproduce_fig9(args, out, rng):
    from .photon_stats import CoherentDist

    dist = CoherentDist(1000.0)
    grid = [1, 2, 3, 5, 8, 13, 22, 36, 60, 100]
    noise = [threshold_equiv_noise(dist, 1000.0, float(S), "N") for S in grid]
    limit = threshold_equiv_noise(dist, 1000.0, math.inf, "N")
    artifacts.write_csv(out / "fig9_tradespace.csv", ("sharpness", "equivalent_noise"),
                        list(zip(grid, noise)) + [("inf", limit)])
    checks = {
        "sharp_limit_matches_pi_over_2_minus_1": abs(limit - (math.pi / 2 - 1)) <= 0.02,
        "equivalent_noise_strictly_decreasing_in_sharpness": all(
            a > b for a, b in zip(noise, noise[1:])),
    }
    if not args.no_plots:
        from . import plots
        plots.plot_tradespace(grid, noise, limit, out / "fig9.png")
    return _check_file(out, checks)


_REPRODUCERS = {
    "fig3": _reproduce_fig3, "fig4": _reproduce_fig4, "fig5": _reproduce_fig5,
    "fig6": _reproduce_fig6, "fig7": _reproduce_fig7, "fig8": _reproduce_fig8,
    "fig9": _reproduce_fig9,
}


# =============================================================================
def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    if not argv or argv[0] in ("-h", "--help", "--version"):
        parser.parse_args(argv)  # prints and exits for help/version
        return EXIT_OK
    known = set(_REPRODUCERS) | {
        "stats", "rates", "fisher", "optimal-threshold", "tradespace",
        "dolp-render", "dolp-camera", "adaptive", "lidar-classify",
        "lidar-thresholds", "pnrd-compare", "nanowire-sweep", "nanowire-bias",
        "reproduce",
    }
    if argv[0] not in known:
        parser.print_usage(sys.stderr)
        print(f"unknown subcommand: {argv[0]}", file=sys.stderr)
        return EXIT_USAGE
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(args.seed)
        config = {k: v for k, v in vars(args).items() if k not in ("command",)}
        artifacts.write_manifest(out / "run_manifest.json", config, args.seed)

        cmd = args.command
        if cmd == "stats":
            return _cmd_stats(args, out)
        if cmd == "rates":
            return _cmd_rates(args, out)
        if cmd == "fisher":
            return _cmd_fisher(args, out)
        if cmd == "optimal-threshold":
            return _cmd_optimal_threshold(args, out)
        if cmd == "tradespace":
            return _cmd_tradespace(args, out)
        if cmd == "dolp-render":
            return _cmd_dolp_render(args, out, rng)
        if cmd == "dolp-camera":
            return _cmd_dolp_camera(args, out, rng)
        if cmd == "adaptive":
            return _cmd_adaptive(args, out, rng)
        if cmd == "lidar-classify":
            return _cmd_lidar_classify(args, out, rng)
        if cmd == "lidar-thresholds":
            return _cmd_lidar_thresholds(args, out)
        if cmd == "pnrd-compare":
            return _cmd_pnrd_compare(args, out)
        if cmd == "nanowire-sweep":
            return _cmd_nanowire_sweep(args, out)
        if cmd == "nanowire-bias":
            return _cmd_nanowire_bias(args, out)
        if cmd == "reproduce":
            return _REPRODUCERS[args.figure](args, out, rng)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhotonThreshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
