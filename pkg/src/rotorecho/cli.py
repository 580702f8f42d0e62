"""Command-line experiment runner.

    rotorecho <experiment> --config FILE [--seed S] [--out DIR] [--set key=value ...]

Each experiment reads the INI section named after it (plus an optional
``[run]`` section with ``seed`` and ``out``).  Unknown keys are rejected.
Exit codes: 0 success, 1 a built-in check failed or the run errored,
2 configuration error (nothing is written).
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import __version__, kernels
from . import core_map as cm
from . import manifold as mf
from . import phase_density as pd
from . import quantum as qm
from . import semiclassical as sc
from . import textio

logger = logging.getLogger("rotorecho")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


PARSERS = {"float": float, "int": lambda s: int(float(s)) if "e" in s.lower() else int(s), "str": str, "ints": _int_list, "bool": _bool}


# name -> (type, default); a default of None means required
SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "poincare": {
        "K": ("float", 8.0), "n_seeds": ("int", 1), "t": ("int", 20000),
        "lyapunov_K": ("float", 10.0), "lyapunov_samples": ("int", 1000), "lyapunov_t": ("int", 1000),
    },
    "mixing": {
        "K": ("float", 10.0), "area": ("float", 1e-3), "x0": ("float", 0.5), "p0": ("float", 0.0),
        "grid_n": ("int", 32), "M": ("int", 1_000_000), "times": ("ints", "3,5"), "support": ("str", "contour"),
        "dump_points": ("int", 20000),
    },
    "classical-echo": {
        "K": ("float", 10.0), "deltaK": ("float", 1e-4), "area": ("float", 1e-3), "x0": ("float", 0.5),
        "p0": ("float", 0.0), "M": ("int", 1_000_000), "times": ("ints", "0..12"), "alpha": ("float", 1.0),
    },
    "qpropagate": {
        "N": ("int", 1000), "K": ("float", 10.0), "x0": ("float", 0.5), "p0": ("float", 0.0), "T": ("int", 5),
        "threshold": ("float", 0.05), "classical_M": ("int", 200_000),
    },
    "quantum-echo": {
        "N": ("int", 1000), "K": ("float", 10.0), "deltaK": ("float", 1e-4), "x0": ("float", 0.5),
        "p0": ("float", 0.0), "T": ("int", 500), "target": ("float", 0.77), "tolerance": ("float", 0.05),
        "g": ("int", 4),
    },
    "manifold-stability": {
        "K": ("float", 6.0), "deltaK": ("float", 0.02), "t": ("int", 5), "ds_max": ("float", mf.DS_MAX),
        "theta_max": ("float", mf.THETA_MAX), "local_length": ("float", mf.LOCAL_LENGTH),
        "traj_x0": ("float", 0.3), "traj_p0": ("float", 0.2), "traj_t": ("int", 5),
    },
    "action-diff": {
        "K": ("float", 6.0), "deltaK": ("float", 0.02), "t": ("int", 4), "n_points": ("int", 4000),
        "hist_t": ("int", 8), "hist_points": ("int", 20000), "sweep": ("ints", "4..12"), "bins": ("int", 60),
        "ds_max": ("float", mf.DS_MAX), "theta_max": ("float", mf.THETA_MAX),
    },
    "timescales": {
        "K": ("float", 10.0), "N": ("int", 1000), "epsilon": ("float", 1e-5), "alpha": ("float", 1.0),
        "N_cells": ("float", 1000.0), "deltaK": ("float", float("nan")), "g": ("int", 4),
    },
    "semiclassical": {
        "N": ("int", 1000), "K": ("float", 10.0), "alpha_x": ("float", 0.5), "alpha_p": ("float", 0.0),
        "beta_x": ("float", 0.5), "beta_p": ("float", 0.0), "T": ("int", 8), "radius": ("float", sc.DEFAULT_RADIUS),
        "tolerance": ("float", 0.05),
    },
}
RUN_KEYS = {"seed": "int", "out": "str"}


@dataclass
class RunConfig:
    experiment: str
    values: dict
    seed: int
    out: str


def load_config(experiment: str, path: str, overrides: list[str], seed: int | None, out: str | None) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not cp.sections():
        raise ConfigError(f"{path} is empty")
    schema = SCHEMAS[experiment]
    for sec in cp.sections():
        if sec not in (experiment, "run"):
            raise ConfigError(f"unexpected section [{sec}] for experiment {experiment}")
    if experiment not in cp:
        raise ConfigError(f"{path} has no [{experiment}] section")
    raw = dict(cp[experiment])
    run_raw = dict(cp["run"]) if "run" in cp else {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        if k.startswith("run."):
            run_raw[k[4:]] = v.strip()
        else:
            raw[k] = v.strip()
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys for {experiment}: {', '.join(sorted(unknown))}")
    unknown = set(run_raw) - set(RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys in [run]: {', '.join(sorted(unknown))}")
    values = {}
    for key, (typ, default) in schema.items():
        if key in raw:
            try:
                values[key] = PARSERS[typ](raw[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        else:
            values[key] = _int_list(default) if typ == "ints" and isinstance(default, str) else default
    try:
        run_seed = int(run_raw.get("seed", 0))
    except ValueError as exc:
        raise ConfigError(f"seed: {exc}") from exc
    return RunConfig(
        experiment,
        values,
        seed if seed is not None else run_seed,
        out if out is not None else run_raw.get("out", os.path.join("out", experiment)),
    )


# ----------------------------------------------------------------- experiments


class Result:
    def __init__(self, out: str):
        self.out = out
        self.derived: dict = {}
        self.checks: dict[str, bool] = {}
        self.files: list[str] = []
        self.timings: dict[str, float] = {}

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def table(self, name: str, kind: str, cols, comments=(), plot: tuple | None = None):
        self.files.append(textio.write_table(self.path(name), kind, cols, comments))
        if plot:
            using, title, xl, yl, *style = plot
            gp = os.path.splitext(name)[0] + ".gp"
            self.files.append(textio.write_gnuplot(self.path(gp), name, using, title, xl, yl, *(style or ["lines"])))


def run_poincare(c: dict, seed: int, r: Result):
    params = cm.MapParams(c["K"])
    rng = np.random.default_rng(seed)
    seeds = [cm.PhasePoint(float(x), float(p)) for x, p in rng.random((c["n_seeds"], 2))]
    sec = cm.poincare_section(params, seeds, c["t"])
    t = np.tile(np.arange(c["t"] + 1), c["n_seeds"])
    r.table("section.dat", "section", [t, sec[:, 0], sec[:, 1]], [f"K={c['K']}"], ("2:3", "surface of section", "x", "p", "dots"))
    lp = cm.MapParams(c["lyapunov_K"])
    mu = cm.lyapunov_numeric(lp, c["lyapunov_samples"], c["lyapunov_t"], seed)
    mu_a = cm.lyapunov_analytic(lp.K)
    r.derived.update(lyapunov_numeric=mu, lyapunov_analytic=mu_a, lyapunov_rel_err=abs(mu - mu_a) / mu_a)
    r.checks["lyapunov_within_2pct"] = abs(mu - mu_a) / mu_a < 0.02


def run_mixing(c: dict, seed: int, r: Result):
    params = cm.MapParams(c["K"])
    dens = pd.GaussianDensity.circular(c["x0"], c["p0"], c["area"])
    cov = []
    for t in c["times"]:
        cov.append(pd.mixing_coverage(params, dens, t, c["grid_n"], c["M"], seed, c["support"]))
        cloud = pd.sample_contour(dens, c["dump_points"], seed) if c["support"] == "contour" else pd.sample(dens, c["dump_points"], seed)
        x, p = cloud.x.copy(), cloud.p.copy()
        kernels.iterate_cloud(x, p, params.K, t)
        r.table(f"cloud_t{t}.dat", "section", [np.full(len(x), t), cm.wrap(x), cm.wrap(p)], [f"K={c['K']} t={t}"],
                ("2:3", f"density at t={t}", "x", "p", "dots"))
    times = np.array(c["times"])
    r.table("coverage.dat", "series", [times, np.array(cov), np.full(len(cov), np.nan)], [f"grid {c['grid_n']}^2, M={c['M']}"],
            ("1:2", "cell coverage", "t", "fraction", "linespoints"))
    tau_m = pd.mixing_time(1.0 / c["area"], cm.lyapunov_analytic(params.K))
    r.derived.update(coverage=dict(zip(map(str, times.tolist()), cov)), tau_m=tau_m)
    lo, hi = int(times.min()), int(times.max())
    r.checks["coverage_low_t_le_0.7"] = cov[0] <= 0.7
    r.checks["coverage_high_t_ge_0.9"] = cov[-1] >= 0.9
    r.checks["tau_m_between_probes"] = lo < tau_m < hi


def run_classical_echo(c: dict, seed: int, r: Result):
    params = cm.MapParams(c["K"])
    dens = pd.GaussianDensity.circular(c["x0"], c["p0"], c["area"])
    ts = np.array(c["times"])
    est = pd.classical_fidelity_series(params, c["deltaK"], dens, ts, c["M"], seed)
    vals = np.array([e.value for e in est])
    errs = np.array([e.stderr for e in est])
    r.table("echo.dat", "series", [ts, vals, errs], [f"K={c['K']} dK={c['deltaK']} M={c['M']}"],
            ("1:2", "classical echo overlap", "t", "overlap", "linespoints"))
    eps = c["deltaK"] / c["K"]
    mu = cm.lyapunov_analytic(params.K)
    fit = pd.fit_echo_decay(ts[ts > 0], vals[ts > 0], eps, mu=mu)
    tau_pred = pd.predictability_time(eps, mu, c["alpha"])
    at = dict(zip(ts.tolist(), vals.tolist()))
    r.derived.update(epsilon=eps, overlap=at, fit_alpha=fit.alpha, fit_tau_r=fit.tau_r, tau_r_predicted=tau_pred)
    if 3 in at:
        r.checks["overlap_t3_gt_0.8"] = at[3] > 0.8
    if 6 in at:
        r.checks["overlap_t6_in_(0.05,0.8)"] = 0.05 < at[6] < 0.8
    if 12 in at:
        r.checks["overlap_t12_lt_0.05"] = at[12] < 0.05
    r.checks["fitted_tau_r_within_1.5"] = abs(fit.tau_r - tau_pred) <= 1.5


def run_qpropagate(c: dict, seed: int, r: Result):
    params = cm.MapParams(c["K"], N=c["N"])
    psi = qm.wave_packet(params, c["x0"], c["p0"])
    x = qm.positions(params)
    onset = None
    means = []
    for t, st in enumerate(qm.evolve_series(psi, params, c["T"])):
        a = st.amplitudes
        r.table(f"state_t{t}.dat", "state", [np.arange(params.N), x, np.abs(a) ** 2, a.real, a.imag], [f"N={params.N} K={params.K} t={t}"],
                ("2:3", f"|psi|^2 at t={t}", "x", "density"))
        n_int = qm.support_intervals(st.position_density(), c["threshold"])
        if onset is None and n_int > 1:
            onset = t
        mq = st.mean_position(c["x0"])
        mcl = qm.classical_mean_position(params, c["x0"], c["p0"], psi.sigma_x, t, c["classical_M"], seed)
        means.append((t, mq, mcl))
    m = np.array(means)
    r.table("means.dat", "series", [m[:, 0], m[:, 1], m[:, 2]], ["columns: t quantum_mean classical_mean"])
    sx = psi.sigma_x
    ok = [abs(q - cl) <= 3 * sx for t, q, cl in means if t <= 2]
    r.derived.update(tau_E=qm.ehrenfest_time(params), interference_onset=onset, sigma_x=sx)
    r.checks["onset_at_t2"] = onset == 2
    r.checks["means_agree_t_le_2"] = all(ok)


def run_quantum_echo(c: dict, seed: int, r: Result):
    params = cm.MapParams(c["K"], N=c["N"])
    psi = qm.wave_packet(params, c["x0"], c["p0"])
    curve = qm.fidelity_curve(params, c["deltaK"], psi, c["T"])
    r.table("fidelity.dat", "fidelity", [curve.t, curve.F], [f"N={params.N} K={params.K} dK={c['deltaK']}"],
            ("1:2", "quantum echo fidelity", "t", "F"))
    fwd = qm.propagate(psi, params, c["T"])
    back = qm.propagate(fwd, params.with_K(params.K + c["deltaK"]), -c["T"])
    r.table("densities.dat", "state", [np.arange(params.N), qm.positions(params), back.position_density(), back.amplitudes.real, back.amplitudes.imag],
            ["forward-reversed state"], ("2:3", "forward-reversed density", "x", "density"))
    rep = qm.gamma_parameter(params, c["deltaK"], c["g"])
    F_T = curve.at(c["T"])
    r.derived.update(
        F_at_T=F_T, **{f"F_at_{c['T']}": F_T}, F_min=float(curve.F.min()), gamma_sq=rep.gamma_sq, regime=rep.regime,
        tau_r_quantum=rep.tau_r_predicted, echo_overlap_direct=abs(psi.overlap(back)) ** 2,
    )
    r.checks["F_at_T_near_target"] = abs(F_T - c["target"]) <= c["tolerance"]
    r.checks["F_above_half_throughout"] = bool(np.all(curve.F > 0.5))


def run_manifold_stability(c: dict, seed: int, r: Result):
    p0 = cm.MapParams(c["K"])
    p1 = p0.with_K(c["K"] + c["deltaK"])
    a0, a1 = cm.fixed_point(p0), cm.fixed_point(p1)
    kw = dict(ds_max=c["ds_max"], theta_max=c["theta_max"], local_length=c["local_length"])
    c0 = mf.manifold_at(p0, a0, "unstable", c["t"], **kw)
    c1 = mf.manifold_at(p1, a1, "unstable", c["t"], **kw)
    for name, cv in (("manifold_K.dat", c0), ("manifold_KdK.dat", c1)):
        r.table(name, "curve", [cv.ell, cv.X, cv.P], [f"K={cv.params.K} t={c['t']} unstable (0.5,0)"], ("2:3", "unstable manifold", "x", "p"))
    k0, k1 = mf.caustic_count(c0), mf.caustic_count(c1)
    r.table("caustics_K.dat", "curve", [k0.ell, k0.x, np.zeros(k0.count)], ["folds: ell x (p column unused)"])
    r.table("caustics_KdK.dat", "curve", [k1.ell, k1.x, np.zeros(k1.count)], ["folds: ell x (p column unused)"])
    dist = mf.manifold_distance(c0, c1)
    seed_pt = cm.PhasePoint(c["traj_x0"], c["traj_p0"])
    o0, o1 = cm.iterate(seed_pt, p0, c["traj_t"]), cm.iterate(seed_pt, p1, c["traj_t"])
    t_ = np.arange(c["traj_t"] + 1)
    for name, o in (("orbit_K.dat", o0), ("orbit_KdK.dat", o1)):
        r.table(name, "orbit", [t_, cm.wrap(o.X), cm.wrap(o.P), o.X, o.P], [f"K={o.params.K}"])
    sep = np.hypot(cm.torus_delta(o0.X - o1.X), cm.torus_delta(o0.P - o1.P))
    shift = float(np.max(np.abs(k0.x - k1.x))) if k0.count == k1.count and k0.count else (0.0 if k0.count == k1.count else float("nan"))
    r.derived.update(
        hausdorff=dist, caustics=[k0.count, k1.count], caustic_max_shift=shift, arclength=[c0.arclength, c1.arclength],
        trajectory_separation=sep.tolist(), points=[len(c0), len(c1)],
    )
    r.checks["hausdorff_lt_1e-2"] = dist < 1e-2
    r.checks["trajectory_sep_t3_gt_0.1"] = bool(len(sep) > 3 and sep[3] > 0.1)
    r.checks["caustic_counts_equal"] = k0.count == k1.count
    r.checks["caustic_shift_lt_1e-2"] = bool(shift < 1e-2)


def run_action_diff(c: dict, seed: int, r: Result):
    params = cm.MapParams(c["K"])
    anchor = cm.fixed_point(params)
    s = mf.action_difference_series(params, c["deltaK"], anchor, c["t"], c["n_points"], c["ds_max"], c["theta_max"])
    r.table("action_series.dat", "action", [s.ell, s.dS_exact, s.dS_pert], [f"K={c['K']} dK={c['deltaK']} t={c['t']}"],
            ("1:2", "action difference", "ell", "dS"))
    rep = mf.action_diffusion_report(params, c["deltaK"], anchor, c["hist_t"], c["hist_points"], c["sweep"], bins=c["bins"], seed=seed)
    h = rep.histogram
    r.table("histogram.dat", "histogram", [h.bin_centers, h.counts, h.gaussian_fit], [f"t={h.t} mean={h.mean:.6g} var={h.variance:.6g}"],
            ("1:2", "action changes", "dS", "count", "boxes"))
    r.table("variance.dat", "series", [rep.ts, rep.variances, np.full(len(rep.ts), np.nan)], ["variance of dS versus t"])
    r.derived.update(
        relative_deviation=s.relative_deviation, n_excluded=s.n_excluded, excluded_fraction=s.n_excluded / s.n_requested,
        normality_pvalue=h.normality_pvalue, variance_slope=rep.slope, r_squared=rep.r_squared,
        predicted_slope=rep.predicted_slope, convention_factor=rep.convention_factor,
    )
    r.checks["perturbation_theory_within_1pct"] = s.relative_deviation < 0.01
    r.checks["histogram_normal_at_1pct"] = h.normality_pvalue > 0.01
    r.checks["variance_linear_r2_gt_0.98"] = rep.r_squared > 0.98
    r.checks["slope_within_factor_2"] = 0.5 <= rep.convention_factor <= 2.0


def run_timescales(c: dict, seed: int, r: Result):
    K, N = c["K"], c["N"]
    ts = pd.time_scales(K, c["epsilon"], c["alpha"], c["N_cells"], N)
    dK = c["deltaK"] if math.isfinite(c["deltaK"]) else c["epsilon"] * K
    rep = qm.gamma_parameter(cm.MapParams(K, N=N), dK, c["g"])
    r.derived.update(
        tau_p=ts.tau_p, tau_r=ts.tau_r, tau_m=ts.tau_m, tau_E=ts.tau_E, tau_H=qm.heisenberg_time(cm.MapParams(K, N=N)),
        h_KS=ts.h_KS, mu_max=ts.mu_max, K_E=rep.K_E, gamma_sq=rep.gamma_sq, regime=rep.regime,
        tau_r_quantum=rep.tau_r_predicted, deltaK=dK,
    )


def run_semiclassical(c: dict, seed: int, r: Result):
    params = cm.MapParams(c["K"], N=c["N"])
    a = (c["alpha_x"], c["alpha_p"])
    b = (c["beta_x"], c["beta_p"])
    s = sc.semiclassical_correlation(a, b, params, c["T"], c["radius"])
    r.table("correlation.dat", "correlation",
            [s.t, s.C_semiclassical.real, s.C_semiclassical.imag, s.C_quantum.real, s.C_quantum.imag, s.n_orbits, s.abs_err],
            [f"N={params.N} K={params.K} alpha={a} beta={b} radius={c['radius']}"],
            ("1:7", "|C_sc - C_qm|", "t", "error", "linespoints"))
    tau_E = qm.ehrenfest_time(params)
    err = s.max_error(2 * tau_E)
    r.derived.update(tau_E=tau_E, max_abs_err_2tauE=err, n_orbits=s.n_orbits.tolist(), warnings=s.warnings)
    r.timings.update({f"semiclassical_{k}": v for k, v in s.timings.items()})
    r.checks["max_err_le_tolerance"] = err <= c["tolerance"]


EXPERIMENTS: dict[str, Callable] = {
    "poincare": run_poincare,
    "mixing": run_mixing,
    "classical-echo": run_classical_echo,
    "qpropagate": run_qpropagate,
    "quantum-echo": run_quantum_echo,
    "manifold-stability": run_manifold_stability,
    "action-diff": run_action_diff,
    "timescales": run_timescales,
    "semiclassical": run_semiclassical,
}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rotorecho", description="Kicked-rotor echo, mixing and manifold experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI file with a [%s] section" % name)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.experiment, args.config, args.overrides, args.seed, args.out)
    except ConfigError as exc:
        print(f"rotorecho: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(cfg.out, exist_ok=True)
    res = Result(cfg.out)
    t0 = time.perf_counter()
    status = "ok"
    error = None
    try:
        EXPERIMENTS[cfg.experiment](cfg.values, cfg.seed, res)
    except Exception as exc:  # reported in the summary, never swallowed silently
        logger.exception("experiment failed")
        status, error = "error", f"{type(exc).__name__}: {exc}"
    res.timings["total"] = time.perf_counter() - t0
    if status == "ok" and not all(res.checks.values()):
        status = "check-failed"
    summary = {
        "experiment": cfg.experiment,
        "version": __version__,
        "backend": kernels.BACKEND,
        "seed": cfg.seed,
        "config": cfg.values,
        "derived": res.derived,
        "checks": res.checks,
        "status": status,
        "partial": status == "error",
        "error": error,
        "files": sorted(os.path.basename(f) for f in res.files),
        "timings": res.timings,
    }
    with open(os.path.join(cfg.out, "summary.json"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, ok in res.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"{cfg.experiment}: {status} -> {cfg.out}")
    return EXIT_OK if status == "ok" else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
