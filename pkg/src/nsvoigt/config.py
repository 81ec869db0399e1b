"""Flat key = value experiment configuration with round-trip parsing.

Sections: [sim] physical and numerical parameters, [forcing] one mode per
key, [chain] depth and interpolation tolerance, [gevrey] constants and fit
policy, [steady] solver settings.  Floats are written with repr precision
so write-then-read reproduces the configuration exactly.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .lattice import ConfigurationError
from .integrator import ForcingSpec, SimParams


@dataclass
class ExperimentConfig:
    # [sim]
    nu: float = 1.0
    alpha: float = 1.0
    L: float = 2.0 * np.pi
    N: int = 16
    dt: float = 1e-2
    t_end: float = 1.0
    seed: int = 0
    cadence: int = 1
    initial_amplitude: float = 0.0
    t0_window: int = 20
    # [forcing]
    forcing_modes: tuple = ()    # ((jx, jy, jz, cx, cy, cz), ...)
    # [chain]
    m_max: int = 4
    interp_tol: float = 1e-4
    # [gevrey]
    C1: float = 1.0
    C4: float = 1.0
    C5: float = 1.0
    c: float = 1.0
    C6: float = 1.0
    constants_source: str = "manual"   # or "empirical"
    constant_samples: int = 20
    tau0: float = float("inf")
    relax: float = 1.0
    fit_floor: float = 1e-24
    fit_ceil: float = 1e-6
    # [steady]
    steady_tol: float = 1e-10
    steady_max_iter: int = 200
    theta: float = 0.7
    sigma: float = 0.0

    def sim_params(self) -> SimParams:
        return SimParams(nu=self.nu, alpha=self.alpha, L=self.L, N=self.N,
                         dt=self.dt, t_end=self.t_end,
                         forcing=self.forcing_spec(), seed=self.seed,
                         cadence=self.cadence,
                         initial_amplitude=self.initial_amplitude,
                         t0_window=self.t0_window)

    def forcing_spec(self) -> ForcingSpec:
        modes = tuple(((jx, jy, jz), (cx, cy, cz))
                      for jx, jy, jz, cx, cy, cz in self.forcing_modes)
        return ForcingSpec(modes=modes)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, complex):
        return f"{x.real!r}{x.imag:+}j" if x.imag else repr(x.real)
    return str(x)


def write_config(cfg: ExperimentConfig, path) -> None:
    cp = configparser.ConfigParser()
    cp["sim"] = {k: _fmt(getattr(cfg, k))
                 for k in ("nu", "alpha", "L", "N", "dt", "t_end", "seed",
                           "cadence", "initial_amplitude", "t0_window")}
    cp["forcing"] = {
        f"mode_{i + 1}": " ".join(_fmt(v) for v in mode)
        for i, mode in enumerate(cfg.forcing_modes)}
    cp["chain"] = {"m_max": str(cfg.m_max), "interp_tol": repr(cfg.interp_tol)}
    cp["gevrey"] = {
        "C1": repr(cfg.C1), "C4": repr(cfg.C4), "C5": repr(cfg.C5),
        "c": repr(cfg.c), "C6": repr(cfg.C6),
        "constants_source": cfg.constants_source,
        "constant_samples": str(cfg.constant_samples),
        "tau0": repr(cfg.tau0), "relax": repr(cfg.relax),
        "fit_floor": repr(cfg.fit_floor), "fit_ceil": repr(cfg.fit_ceil)}
    cp["steady"] = {"tol": repr(cfg.steady_tol),
                    "max_iter": str(cfg.steady_max_iter),
                    "theta": repr(cfg.theta), "sigma": repr(cfg.sigma)}
    with open(path, "w") as fh:
        cp.write(fh)


def _parse_complex(tok: str) -> complex:
    try:
        return complex(tok)
    except ValueError as exc:
        raise ConfigurationError(f"bad complex literal {tok!r}") from exc


def read_config(path) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        try:
            cp.read_file(fh, source=str(path))
        except configparser.Error as exc:
            raise ConfigurationError(f"invalid config: {exc}") from exc
    cfg = ExperimentConfig()
    try:
        sim = cp["sim"]
        cfg.nu = sim.getfloat("nu", cfg.nu)
        cfg.alpha = sim.getfloat("alpha", cfg.alpha)
        cfg.L = sim.getfloat("L", cfg.L)
        cfg.N = sim.getint("N", cfg.N)
        cfg.dt = sim.getfloat("dt", cfg.dt)
        cfg.t_end = sim.getfloat("t_end", cfg.t_end)
        cfg.seed = sim.getint("seed", cfg.seed)
        cfg.cadence = sim.getint("cadence", cfg.cadence)
        cfg.initial_amplitude = sim.getfloat("initial_amplitude",
                                             cfg.initial_amplitude)
        cfg.t0_window = sim.getint("t0_window", cfg.t0_window)
        modes = []
        if cp.has_section("forcing"):
            for key in sorted(cp["forcing"], key=lambda k: (len(k), k)):
                toks = cp["forcing"][key].split()
                if len(toks) != 6:
                    raise ConfigurationError(
                        f"forcing {key} needs 6 entries, got {len(toks)}")
                modes.append((int(toks[0]), int(toks[1]), int(toks[2]),
                              _parse_complex(toks[3]), _parse_complex(toks[4]),
                              _parse_complex(toks[5])))
        cfg.forcing_modes = tuple(modes)
        if cp.has_section("chain"):
            cfg.m_max = cp["chain"].getint("m_max", cfg.m_max)
            cfg.interp_tol = cp["chain"].getfloat("interp_tol", cfg.interp_tol)
        if cp.has_section("gevrey"):
            g = cp["gevrey"]
            cfg.C1 = g.getfloat("C1", cfg.C1)
            cfg.C4 = g.getfloat("C4", cfg.C4)
            cfg.C5 = g.getfloat("C5", cfg.C5)
            cfg.c = g.getfloat("c", cfg.c)
            cfg.C6 = g.getfloat("C6", cfg.C6)
            cfg.constants_source = g.get("constants_source",
                                         cfg.constants_source)
            cfg.constant_samples = g.getint("constant_samples",
                                            cfg.constant_samples)
            cfg.tau0 = g.getfloat("tau0", cfg.tau0)
            cfg.relax = g.getfloat("relax", cfg.relax)
            cfg.fit_floor = g.getfloat("fit_floor", cfg.fit_floor)
            cfg.fit_ceil = g.getfloat("fit_ceil", cfg.fit_ceil)
        if cp.has_section("steady"):
            s = cp["steady"]
            cfg.steady_tol = s.getfloat("tol", cfg.steady_tol)
            cfg.steady_max_iter = s.getint("max_iter", cfg.steady_max_iter)
            cfg.theta = s.getfloat("theta", cfg.theta)
            cfg.sigma = s.getfloat("sigma", cfg.sigma)
    except KeyError as exc:
        raise ConfigurationError(f"missing config section {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"invalid config value: {exc}") from exc
    cfg.sim_params()   # surface validation errors at load time
    return cfg
