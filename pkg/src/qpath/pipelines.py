"""End-to-end pipelines behind the command-line front end.

Each function writes its artifacts into ``out`` and returns the list of
files written. No file contains timestamps or host details, so reruns
with the same configuration are byte-identical.
"""

from __future__ import annotations

import contextlib
from pathlib import Path

import numpy as np

from . import analysis as an
from . import io
from .config import FIGS3_TARGETS, FIGS4_PANELS, RunConfig
from .dynamics import BlochState
from .errors import ConfigError, InsufficientStatisticsError, QPathError
from .mlp import (
    BoundaryConditions, ShootOptions, analytic_undriven, optimal_signal, shoot,
    variational_check,
)
from .simulator import ensemble_mean, n_steps_for, reconstruct_from_record, simulate_ensemble


@contextlib.contextmanager
def stage(name: str):
    """Prefix any package error raised inside with the pipeline stage."""
    try:
        yield
    except QPathError as exc:
        exc.args = (f"stage {name}: {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        exc.stage = name
        raise


def _options(cfg: RunConfig) -> ShootOptions:
    return ShootOptions(step=cfg.step, decay=cfg.decay)


def _duration(cfg: RunConfig) -> float:
    return max([cfg.duration] + list(cfg.horizons))


def _simulate(cfg: RunConfig, workers: int):
    params = cfg.params()
    try:
        n_steps_for(_duration(cfg), params.dt)
        for T in cfg.horizons:
            n_steps_for(T, params.dt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with stage("simulate"):
        return simulate_ensemble(cfg.initial(), params, _duration(cfg), cfg.n, cfg.seed,
                                 workers=workers)


def run_simulate(cfg: RunConfig, out: Path, workers: int = 1) -> list:
    tset = _simulate(cfg, workers)
    files = io.save_trajectory_set(tset, out)
    mean = ensemble_mean(tset)
    files.append(io.write_columns(out / "ensemble_mean.csv", ("t", "x", "z", "x_se", "z_se"),
                                  (tset.times, mean["x"], mean["z"], mean["x_se"], mean["z_se"])))
    return files


def run_mlp(cfg: RunConfig, out: Path) -> list:
    """Solve the optimal-path problem at every horizon.

    With zero drive the shooting result is compared with the closed form.
    """
    if cfg.zf is None or not cfg.horizons:
        raise ConfigError("mlp needs zf and at least one horizon (--T)")
    params = cfg.params()
    files = []
    summary = {"horizons": []}
    for k, T in enumerate(cfg.horizons, start=1):
        xf = cfg.xf
        if params.omega == 0.0:
            # z_f fixes x_f; a target inside the selection window means the same endpoint
            forced = _x_final(cfg, T, params)
            if xf is None or abs(xf - forced) <= cfg.window:
                xf = forced
        elif xf is None:
            raise ConfigError("xf is required when the drive is on")
        bc = BoundaryConditions(cfg.x0, cfg.z0, xf, cfg.zf, T)
        with stage(f"shoot T{k}"):
            res = shoot(bc, params, _options(cfg))
        path = res.principal
        report = res.report()
        report["T"] = T
        report["xf_requested"] = cfg.xf
        if params.omega == 0.0:
            closed = analytic_undriven(cfg.zf, T, params, step=cfg.step, x_i=cfg.x0, z_i=cfg.z0,
                                       decay=cfg.decay)
            report["analytic_comparison"] = {
                "max_abs_dx": float(np.max(np.abs(path.x - closed.x))),
                "max_abs_dz": float(np.max(np.abs(path.z - closed.z))),
                "rbar": closed.meta["rbar"],
            }
            files.append(io.write_path(out / f"mlp_T{k}_analytic.csv", closed))
        if cfg.variational:
            with stage(f"variational T{k}"):
                var = variational_check(path, bc, params, options=_options(cfg))
            report["classification"] = var.classification
            report["variational_profile"] = var.profile
        files.append(io.write_path(out / f"mlp_T{k}.csv", path))
        files.append(io.write_json(out / f"mlp_T{k}_report.json", report))
        summary["horizons"].append({"T": T, "n_roots": len(res.roots),
                                    "residual": path.residual,
                                    "classification": report.get("classification")})
    files.append(io.write_json(out / "mlp_summary.json", summary))
    return files


def _x_final(cfg: RunConfig, T, params) -> float:
    """x endpoint forced by z_f for zero drive."""
    p = analytic_undriven(cfg.zf, T, params, step=cfg.step, x_i=cfg.x0, z_i=cfg.z0,
                          decay=cfg.decay)
    return float(p.x[-1])


def _write_hist(out, name, sub, coord, bins):
    return io.write_histogram(out / name, an.histogram(sub, coord, bins=bins))


def _selection_panel(out: Path, prefix: str, tset, cfg: RunConfig, xf, zf, T, theory, params):
    """Post-selected statistics for one horizon; returns (files, summary)."""
    files = []
    sel = an.PostSelection(xf, zf, cfg.window, T, cfg.selection_mode)
    with stage(f"postselect {prefix}"):
        sub = an.postselect(tset, sel)
        if sub.n == 0:
            raise InsufficientStatisticsError(
                f"no trajectories inside the window around ({xf}, {zf}) at {T:g} s", 0)
    for coord in ("z", "x"):
        files.append(_write_hist(out, f"{prefix}_hist_{coord}.csv", sub, coord, cfg.bins))
    with stage(f"empirical mlp {prefix}"):
        emp = an.empirical_mlp(sub, cfg.percentile)
    files.append(io.write_series(out / f"{prefix}_mlp_empirical_x.csv", emp.times, emp.x, emp.x_se, emp.n_top))
    files.append(io.write_series(out / f"{prefix}_mlp_empirical_z.csv", emp.times, emp.z, emp.z_se, emp.n_top))
    t_med, x_med, z_med = an.median_path(sub)
    files.append(io.write_states(out / f"{prefix}_median_path.csv", t_med, x_med, z_med))
    files.append(io.write_path(out / f"{prefix}_mlp_theory.csv", theory))
    wf = an.weak_function(sub)
    files.append(io.write_series(out / f"{prefix}_weak_function.csv", wf.times, wf.mean, wf.stderr, wf.n))
    v_opt = optimal_signal(theory, params.delta_v)
    files.append(io.write_columns(out / f"{prefix}_optimal_signal.csv", ("t", "r", "v_opt"),
                                  (theory.times, theory.r, v_opt)))
    r_at = np.interp(wf.times, theory.times, theory.r)
    summary = {
        "T": T,
        "target": {"x_f": xf, "z_f": zf, "window": cfg.window, "mode": cfg.selection_mode},
        "n_selected": sub.n,
        "n_top": emp.n_top,
        "likelihood_threshold": emp.threshold,
        "rms_empirical_vs_theory": an.path_rms(emp.times, emp.x, emp.z, theory),
        "rms_median_vs_theory": an.path_rms(t_med, x_med, z_med, theory),
        "weak_function_exceeds_unit_range": wf.exceeds_unit_range(),
        "weak_function_max_abs": float(np.max(np.abs(wf.mean))),
        "rms_weak_function_vs_optimal_signal": float(np.sqrt(np.mean((wf.mean - r_at) ** 2))),
        "theory": {"initial_multipliers": list(theory.initial_multipliers),
                   "residual": theory.residual, "log_likelihood": theory.log_likelihood,
                   "energy_drift": theory.energy_drift},
        "empirical_path": {"t": emp.times, "x": emp.x, "z": emp.z},
        "theory_path": {k: v for k, v in theory.sample(emp.times).items()},
        "weak_function": {"t": wf.times, "mean": wf.mean, "stderr": wf.stderr},
        "optimal_signal": {"t": wf.times, "r": r_at},
    }
    return files, summary


def _full_histograms(out: Path, prefix: str, tset, cfg: RunConfig) -> list:
    return [_write_hist(out, f"{prefix}_hist_{c}_full.csv", tset, c, cfg.bins) for c in ("z", "x")]


def fig3(cfg: RunConfig, out: Path, workers: int = 1) -> list:
    """Undriven histograms, post-selection on z_F = -0.85 and the closed form."""
    params = cfg.params()
    tset = _simulate(cfg, workers)
    files = _full_histograms(out, "fig3_ab", tset, cfg)
    bundle = {"figure": "fig3", "panels": {}}
    for k, T in enumerate(cfg.horizons, start=1):
        with stage("theory"):
            theory = analytic_undriven(cfg.zf, T, params, step=cfg.step, x_i=cfg.x0, z_i=cfg.z0,
                                       decay=cfg.decay)
        f, summary = _selection_panel(out, f"fig3_cd_T{k}", tset, cfg, cfg.xf, cfg.zf, T, theory, params)
        summary["rbar"] = theory.meta["rbar"]
        files += f
        bundle["panels"][f"T{k}"] = summary
    files.append(io.write_json(out / "fig3_comparison.json", bundle))
    return files


def fig4(cfg: RunConfig, out: Path, workers: int = 1) -> list:
    """Driven case: shooting solutions against the simulated sub-ensembles."""
    params = cfg.params()
    tset = _simulate(cfg, workers)
    files = _full_histograms(out, "fig4_ab", tset, cfg)
    bundle = {"figure": "fig4", "panels": {}}
    for k, T in enumerate(cfg.horizons, start=1):
        bc = BoundaryConditions(cfg.x0, cfg.z0, cfg.xf, cfg.zf, T)
        with stage(f"shoot t{k}"):
            res = shoot(bc, params, _options(cfg))
        files.append(io.write_json(out / f"fig4_t{k}_solver_report.json", res.report()))
        f, summary = _selection_panel(out, f"fig4_t{k}", tset, cfg, cfg.xf, cfg.zf, T,
                                      res.principal, params)
        summary["n_roots"] = len(res.roots)
        files += f
        bundle["panels"][f"t{k}"] = summary
    files.append(io.write_json(out / "fig4_comparison.json", bundle))
    return files


def figS2(cfg: RunConfig, out: Path, workers: int = 1) -> list:
    """Variational classification of the optimal path."""
    params = cfg.params()
    T = cfg.horizons[0]
    bc = BoundaryConditions(cfg.x0, cfg.z0, cfg.xf, cfg.zf, T)
    with stage("shoot"):
        res = shoot(bc, params, _options(cfg))
    path = res.principal
    with stage("variational"):
        var = variational_check(path, bc, params, options=_options(cfg))
    files = [io.write_path(out / "figS2_optimal_path.csv", path)]
    prof = var.profile
    files.append(io.write_columns(
        out / "figS2_profile.csv", ("d1_per_us", "d2_per_us", "log_likelihood", "diff", "converged"),
        ([p["d1"] for p in prof], [p["d2"] for p in prof],
         [np.nan if p["log_likelihood"] is None else p["log_likelihood"] for p in prof],
         [np.nan if p["diff"] is None else p["diff"] for p in prof],
         [float(p["converged"]) for p in prof]),
    ))
    report = res.report()
    report.update(classification=var.classification, base_log_likelihood=var.base_log_likelihood,
                  profile=prof)
    files.append(io.write_json(out / "figS2_report.json", report))
    return files


def figS3(cfg: RunConfig, out: Path, workers: int = 1) -> list:
    """Final-z densities against T with most-likely-time markers, plus a
    Monte Carlo check of the terminal-z distribution."""
    tau, z_i = cfg.tau, cfg.z0
    grid = np.arange(1, int(round(4 * tau / 1e-9)) + 1) * 1e-9
    cols = [grid]
    markers = {}
    for zf in FIGS3_TARGETS:
        dens = an.mlt_density(zf, z_i, grid, tau)
        cols.append(dens)
        markers[str(zf)] = {"T_opt": an.most_likely_time(zf, z_i, tau),
                            "T_argmax": float(grid[int(np.argmax(dens))]),
                            "grid_step": 1e-9}
    files = [io.write_columns(out / "figS3_density.csv",
                              ["T"] + [f"P_zf_{z}" for z in FIGS3_TARGETS], cols)]
    tset = _simulate(cfg, workers)
    mc = {}
    for k, T in enumerate(cfg.horizons, start=1):
        z_T = tset.z[:, tset.step_index(T)]
        chi2, dof, p = an.terminal_z_chi2(z_T, z_i, T, tau)
        mc[f"T{k}"] = {"T": T, "chi2": chi2, "dof": dof, "p_value": p, "n": int(z_T.size)}
    files.append(io.write_json(out / "figS3_most_likely_time.json",
                               {"tau": tau, "z_i": z_i, "markers": markers, "monte_carlo": mc}))
    return files


def figS4(cfg: RunConfig, out: Path, workers: int = 1) -> list:
    """Three (Omega, tau) panels with z_F = -0.5 post-selections."""
    files = []
    bundle = {"figure": "figS4", "panels": {}}
    base = cfg.to_dict()
    for label, overrides, xfs in FIGS4_PANELS:
        pc = RunConfig(**{**base, **overrides})
        params = pc.params()
        with stage(f"panel {label}"):
            tset = _simulate(pc, workers)
        files += _full_histograms(out, f"figS4_{label}", tset, pc)
        panel = {"omega_hz": pc.omega_hz, "tau": pc.tau, "gamma": pc.gamma, "horizons": {}}
        for k, (T, xf) in enumerate(zip(pc.horizons, xfs), start=1):
            bc = BoundaryConditions(pc.x0, pc.z0, xf, pc.zf, T)
            with stage(f"panel {label} shoot t{k}"):
                res = shoot(bc, params, _options(pc))
            f, summary = _selection_panel(out, f"figS4_{label}_t{k}", tset, pc, xf, pc.zf, T,
                                          res.principal, params)
            summary["n_roots"] = len(res.roots)
            files += f
            panel["horizons"][f"t{k}"] = summary
        bundle["panels"][label] = panel
    files.append(io.write_json(out / "figS4_comparison.json", bundle))
    return files


FIGURES = {"fig3": fig3, "fig4": fig4, "figS2": figS2, "figS3": figS3, "figS4": figS4}


def run_reconstruct(record_path, cfg: RunConfig, out: Path) -> list:
    params = cfg.params()
    with stage("read record"):
        record = io.read_record(record_path, delta_v=params.delta_v)
    try:
        traj = reconstruct_from_record(BlochState(cfg.x0, cfg.z0), params, record)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return [io.write_states(out / "states.csv", traj.times, traj.x, traj.z)]
