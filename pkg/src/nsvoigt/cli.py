"""Command-line driver: reproducible experiment runs with delimited output
and rendered figures in a per-invocation run directory.

Subcommands: simulate | chain | gevrey | steady | scales.
Exit codes: 0 success, 1 configuration or I/O error, 2 insufficient
checkpoint cadence, 3 blow-up, 4 insufficient resolution for the
splitting threshold, 5 steady-state non-convergence.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .lattice import ConfigurationError, make_lattice, sobolev_norm
from .bilinear import EmpiricalConstants, estimate_inequality_constants
from .integrator import (BlowUpError, dissipation_rates, run_simulation)
from .chain import build_chain, chain_report, compute_bounds
from .checkpoint import read_checkpoint, write_checkpoint
from .config import ExperimentConfig, read_config
from .gevrey import (GevreyConstants, InsufficientResolutionError,
                     evolve_hat_v, fit_decay_rate, length_scales, mode_split,
                     select_lambda, shell_spectrum)
from .steady import blow_up_time, solve_steady, verify_steady_gevrey
from . import figures
from .integrator import Trajectory

_FMT = "%.16e"   # 17 significant digits


def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, float):
                    cells.append(_FMT % v)
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def _config_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(run_dir: Path, command: str, config_path: Path,
                    seed: int, outputs: list) -> None:
    lines = [f"command: {command}",
             f"version: {__version__}",
             f"config: {config_path}",
             f"config_sha256: {_config_hash(config_path)}",
             f"seed: {seed}",
             "outputs:"]
    lines += [f"  - {o}" for o in outputs]
    (run_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _prepare_run_dir(path: str) -> Path:
    run_dir = Path(path)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        probe = run_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"run directory not writable: {exc}") from exc
    return run_dir


def _load_config(args) -> ExperimentConfig:
    cfg = read_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "m_max", None) is not None:
        cfg.m_max = args.m_max
    if getattr(args, "relaxed_lambda", None) is not None:
        cfg.relax = args.relaxed_lambda
    return cfg


def _constants(cfg: ExperimentConfig) -> tuple[EmpiricalConstants, GevreyConstants]:
    """Chain and Gevrey constants, measured or taken from the config."""
    if cfg.constants_source == "empirical":
        lat = make_lattice(min(cfg.N, 16), cfg.L)
        m_list = tuple(range(3, max(cfg.m_max, 3) + 1))
        emp = estimate_inequality_constants(lat, cfg.constant_samples,
                                            cfg.seed, m_list=m_list)
        emp = emp.with_safety(2.0)
        gc = GevreyConstants(C1=emp.C1, C4=cfg.C4, C5=cfg.C5,
                             c=emp.c_nlin, C6=cfg.C6, source="empirical")
        return emp, gc
    emp = EmpiricalConstants(
        c1=cfg.c, c2=cfg.c,
        c_m={m: cfg.c for m in range(3, max(cfg.m_max, 3) + 1)},
        c_nlin=cfg.c, C1=cfg.C1)
    gc = GevreyConstants(C1=cfg.C1, C4=cfg.C4, C5=cfg.C5, c=cfg.c,
                         C6=cfg.C6, source="manual")
    return emp, gc


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    run_dir = _prepare_run_dir(args.run_dir)
    params = cfg.sim_params()
    try:
        result = run_simulation(params)
    except BlowUpError as exc:
        ck = run_dir / "blowup_last_valid.nsvf"
        if exc.last_valid is not None:
            write_checkpoint(ck, exc.last_valid, params.nu, params.alpha, exc.t)
        print(f"blow-up at t = {exc.t:.6g}; last valid state in {ck}",
              file=sys.stderr)
        return 3
    ck_dir = run_dir / "checkpoints"
    ck_dir.mkdir(exist_ok=True)
    outputs = []
    for i, (t, u) in enumerate(zip(result.trajectory.times,
                                   result.trajectory.fields)):
        p = ck_dir / f"ckpt_{i:06d}.nsvf"
        write_checkpoint(p, u, params.nu, params.alpha, float(t))
        outputs.append(str(p.relative_to(run_dir)))
    _write_csv(run_dir / "energy.csv",
               ["t", "E", "enstrophy_norm", "dissipation", "injection",
                "residual"],
               [(r.t, r.energy, r.enstrophy_norm, r.dissipation, r.injection,
                 r.residual) for r in result.budget])
    t0_text = ("t0 not detected within the horizon" if result.t0 is None
               else f"t0 = {_FMT % result.t0}")
    m1_text = ("M1 not applicable (unforced or alpha = 0)"
               if result.m1 is None else f"M1 = {_FMT % result.m1}")
    (run_dir / "t0_report.txt").write_text(t0_text + "\n" + m1_text + "\n")
    if result.budget:
        figures.fig_energy(result.budget, run_dir / "energy.png")
        outputs.append("energy.png")
    outputs += ["energy.csv", "t0_report.txt"]
    _write_manifest(run_dir, "simulate", Path(args.config), cfg.seed, outputs)
    return 0


def _replay_chain(cfg: ExperimentConfig, run_dir: Path):
    """Load u0 from the run's first checkpoint and rebuild the chain."""
    ck_dir = run_dir / "checkpoints"
    first = ck_dir / "ckpt_000000.nsvf"
    if not first.exists():
        raise ConfigurationError(f"missing checkpoints under {ck_dir}")
    params = cfg.sim_params()
    lat = params.lattice()
    u0, meta = read_checkpoint(first, lat)
    if abs(meta["nu"] - params.nu) > 1e-12 or abs(meta["alpha"] - params.alpha) > 1e-12:
        raise ConfigurationError(
            "checkpoint (nu, alpha) does not match the configuration")
    emp, gc = _constants(cfg)
    bounds = compute_bounds(params, emp, m_max=max(cfg.m_max, 2))
    split, levels = build_chain(params, max(cfg.m_max, 2), bounds, u0=u0,
                                interp_tol=cfg.interp_tol)
    return params, bounds, gc, split, levels


def cmd_chain(args) -> int:
    cfg = _load_config(args)
    run_dir = _prepare_run_dir(args.run_dir)
    params, bounds, _, split, levels = _replay_chain(cfg, run_dir)
    for lv in levels:
        if lv.cadence_warning:
            print(f"level {lv.index}: {lv.cadence_warning}", file=sys.stderr)
            return 2
    rows = []
    for lv in levels:
        bound = lv.bound if lv.bound is not None else math.nan
        for t, err in zip(split.u.times, lv.error_series):
            sup = lv.sup_norm if lv.sup_norm is not None else math.nan
            rows.append((lv.index, float(t), float(err), bound, sup))
    _write_csv(run_dir / "chain.csv",
               ["level", "t", "error_V_norm", "bound_M", "sup_norm_measured"],
               rows)
    report = chain_report(levels, split.u)
    lines = [f"d0 = {_FMT % bounds.d0}", f"M1 = {_FMT % bounds.m1}",
             f"M3/2 = {_FMT % bounds.m32}", f"M2 = {_FMT % bounds.m2}"]
    for m in sorted(bounds.higher):
        lines.append(f"M{m} = {_FMT % bounds.higher[m]}")
    for r in report:
        lines.append(
            f"level {r.index}: terminal_error = {_FMT % r.terminal_error}, "
            f"decay_rate = "
            f"{'n/a' if r.decay_rate is None else _FMT % r.decay_rate}, "
            f"bound_satisfied = {r.bound_satisfied}, trend_ok = {r.trend_ok}")
    (run_dir / "chain_report.txt").write_text("\n".join(lines) + "\n")
    figures.fig_chain_errors(levels, split.u.times, run_dir / "chain_errors.png")
    _write_manifest(run_dir, "chain", Path(args.config), cfg.seed,
                    ["chain.csv", "chain_report.txt", "chain_errors.png"])
    return 0


def cmd_gevrey(args) -> int:
    cfg = _load_config(args)
    run_dir = _prepare_run_dir(args.run_dir)
    params, bounds, gc, split, levels = _replay_chain(cfg, run_dir)
    f = params.forcing.realize(split.u.lattice)
    try:
        plan = select_lambda(params, bounds, gc, f=f, tau0=cfg.tau0,
                             relax=cfg.relax)
    except InsufficientResolutionError as exc:
        print(f"insufficient resolution: required lambda ~ "
              f"{exc.required_lambda:.6g}, lattice maximum "
              f"{exc.lambda_max:.6g}; rerun with --relaxed-lambda",
              file=sys.stderr)
        return 4
    plan_lines = [f"lambda = {_FMT % plan.lam}", f"tau = {_FMT % plan.tau}",
                  f"d2 = {_FMT % plan.d2}", f"label: {plan.label}"]
    for c in plan.conditions:
        plan_lines.append(
            f"condition {c.name}: satisfied = {c.satisfied}, "
            f"lhs = {_FMT % c.lhs}, rhs = {_FMT % c.rhs}, "
            f"margin = {c.margin:.6g}")
    (run_dir / "plan.txt").write_text("\n".join(plan_lines) + "\n")

    level2 = levels[1].trajectory
    vbar = Trajectory(
        times=level2.times,
        fields=[mode_split(v, plan.lam)[0] for v in level2.fields])
    t0 = split.u.times[0]
    hat = evolve_hat_v(vbar, plan, params, bounds, f=f, t0=float(t0))
    _write_csv(run_dir / "phi.csv", ["t", "phi"],
               [(float(t), float(p)) for t, p in zip(hat.times, hat.phi)])
    figures.fig_phi(hat.times, hat.phi, hat.ceiling, run_dir / "phi.png")

    spec_rows = []
    prof_rows = []
    n_samp = len(split.u.fields)
    late = range(max(0, n_samp - 5), n_samp)
    last_profile, last_spectrum = None, None
    for i in late:
        t = float(split.u.times[i])
        sp = shell_spectrum(split.u.fields[i], t=t)
        for k, e in zip(sp.k, sp.E):
            spec_rows.append((t, int(k), float(e)))
        prof = fit_decay_rate(sp, cfg.fit_floor, cfg.fit_ceil)
        prof_rows.append((t,
                          math.nan if prof.tau_star is None else prof.tau_star,
                          prof.r2,
                          -1 if prof.k_lo is None else prof.k_lo,
                          -1 if prof.k_hi is None else prof.k_hi))
        last_profile, last_spectrum = prof, sp
    _write_csv(run_dir / "spectrum.csv", ["t", "k", "E_k"], spec_rows)
    _write_csv(run_dir / "profile.csv",
               ["t", "tau_star", "r2", "k_lo", "k_hi"], prof_rows)
    figures.fig_spectrum(last_spectrum, last_profile, run_dir / "spectrum.png")
    _write_manifest(run_dir, "gevrey", Path(args.config), cfg.seed,
                    ["plan.txt", "phi.csv", "phi.png", "spectrum.csv",
                     "profile.csv", "spectrum.png"])
    return 0


def cmd_steady(args) -> int:
    cfg = _load_config(args)
    run_dir = _prepare_run_dir(args.run_dir)
    params = cfg.sim_params()
    lat = params.lattice()
    f = params.forcing.realize(lat)
    report = solve_steady(f, params.nu, tol=cfg.steady_tol,
                          max_iter=cfg.steady_max_iter, theta=cfg.theta)
    _write_csv(run_dir / "residual_history.csv", ["iteration", "residual"],
               [(i, float(r)) for i, r in enumerate(report.residual_history)])
    figures.fig_residual_history(report.residual_history,
                                 run_dir / "residual_history.png")
    if not report.converged:
        print(f"steady solve did not converge: residual "
              f"{report.residual:.6g} after {report.iterations} iterations",
              file=sys.stderr)
        _write_manifest(run_dir, "steady", Path(args.config), cfg.seed,
                        ["residual_history.csv", "residual_history.png"])
        return 5
    write_checkpoint(run_dir / "steady_state.nsvf", report.u_ss,
                     params.nu, 0.0, 0.0)
    _, gc = _constants(cfg)
    bound = blow_up_time(report.u_ss, params.nu, n_f=max(report.n_f, 1.0),
                         sigma=cfg.sigma, c=gc.c)
    cmp = verify_steady_gevrey(report, bound)
    lines = [f"residual = {_FMT % report.residual}",
             f"iterations = {report.iterations}",
             f"||u|| = {_FMT % bound.u_norm}",
             f"N_f = {report.n_f:g}",
             f"sigma = {cfg.sigma:g}",
             f"tau_B = {_FMT % bound.tau_b}" if math.isfinite(bound.tau_b)
             else "tau_B = inf (zero solution)",
             f"tau_B_simplified = {bound.simplified:.6g}",
             f"tau_star = "
             f"{'n/a' if cmp.tau_star is None else _FMT % cmp.tau_star}",
             f"consistent = {cmp.consistent}",
             f"gevrey_norm_finite = {cmp.gevrey_norm_finite}"]
    if cmp.message:
        lines.append(f"note: {cmp.message}")
    (run_dir / "steady_report.txt").write_text("\n".join(lines) + "\n")
    _write_manifest(run_dir, "steady", Path(args.config), cfg.seed,
                    ["steady_state.nsvf", "steady_report.txt",
                     "residual_history.csv", "residual_history.png"])
    return 0


def cmd_scales(args) -> int:
    cfg = _load_config(args)
    run_dir = _prepare_run_dir(args.run_dir)
    params = cfg.sim_params()
    result = run_simulation(params)
    emp, _ = _constants(cfg)
    bounds = compute_bounds(params, emp, m_max=max(cfg.m_max, 2))
    t_start = result.t0 if result.t0 is not None else 0.0
    eps, eps_sup = dissipation_rates(result.trajectory, params, t_start)
    ls = length_scales(params, eps, eps_sup, bounds)
    _write_csv(run_dir / "scales.csv",
               ["eps", "eps_sup", "eps_sup_bound", "ell_K",
                "ell_1", "ell_2", "ell_3", "ell_4", "ell_NSV"],
               [(ls.eps, ls.eps_sup,
                 math.nan if ls.eps_sup_bound is None else ls.eps_sup_bound,
                 ls.ell_K, *ls.candidates, ls.ell_NSV)])
    lines = [f"post-t0 window start: {_FMT % t_start}",
             f"eps = {_FMT % ls.eps}",
             f"eps_sup (measured) = {_FMT % ls.eps_sup}",
             f"eps_sup (bound nu M1^2) = "
             f"{'n/a' if ls.eps_sup_bound is None else _FMT % ls.eps_sup_bound}",
             f"ell_K = {_FMT % ls.ell_K}",
             f"ell_NSV >= {_FMT % ls.ell_NSV}"]
    (run_dir / "scales_report.txt").write_text("\n".join(lines) + "\n")
    _write_manifest(run_dir, "scales", Path(args.config), cfg.seed,
                    ["scales.csv", "scales_report.txt"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsv",
        description="Pseudo-spectral Navier-Stokes-Voigt simulator and "
                    "analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("chain", cmd_chain),
                     ("gevrey", cmd_gevrey), ("steady", cmd_steady),
                     ("scales", cmd_scales)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--run-dir", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--relaxed-lambda", type=float, default=None,
                       help="relax the splitting conditions by this factor")
        p.add_argument("--m-max", type=int, default=None)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
