import numpy as np
import pytest

from nsvoigt.cli import main
from nsvoigt.config import ExperimentConfig, write_config


def base_config(**kw):
    cfg = ExperimentConfig(
        nu=0.5, alpha=0.8, L=2 * np.pi, N=16, dt=2e-2, t_end=4.0,
        seed=3, cadence=10, initial_amplitude=0.3, t0_window=5,
        forcing_modes=((1, 1, 0, 0.05, -0.05, 0.02),
                       (0, 1, 2, 0.03, 0.02, -0.01)),
        m_max=2, interp_tol=1e-2, constants_source="manual", C1=0.5, c=0.5,
        steady_tol=1e-10, relax=1.0)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def write_cfg(tmp_path, cfg, name="exp.cfg"):
    path = tmp_path / name
    write_config(cfg, path)
    return path


def run(args):
    return main([str(a) for a in args])


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_simulate_outputs(tmp_path):
    cfg_path = write_cfg(tmp_path, base_config())
    rd = tmp_path / "run"
    assert run(["simulate", "--config", cfg_path, "--run-dir", rd]) == 0
    header, rows = read_csv(rd / "energy.csv")
    assert header == ["t", "E", "enstrophy_norm", "dissipation", "injection",
                      "residual"]
    # 17 significant digits, scientific notation
    assert "e" in rows[0][1] and len(rows[0][1].split("e")[0].rstrip("-")
                                     .replace(".", "").lstrip("0")) >= 16
    ckpts = sorted((rd / "checkpoints").glob("ckpt_*.nsvf"))
    assert len(ckpts) == len(rows) == 21
    assert (rd / "energy.png").exists()
    assert (rd / "t0_report.txt").exists()
    manifest = (rd / "manifest.txt").read_text()
    assert "config_sha256" in manifest and "seed: 3" in manifest


def test_simulate_deterministic(tmp_path):
    cfg_path = write_cfg(tmp_path, base_config(t_end=1.0))
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    assert run(["simulate", "--config", cfg_path, "--run-dir", r1]) == 0
    assert run(["simulate", "--config", cfg_path, "--run-dir", r2]) == 0
    for p1 in sorted((r1 / "checkpoints").glob("*.nsvf")):
        p2 = r2 / "checkpoints" / p1.name
        assert p1.read_bytes() == p2.read_bytes()
    assert (r1 / "energy.csv").read_text() == (r2 / "energy.csv").read_text()


def test_seed_override_changes_output(tmp_path):
    cfg_path = write_cfg(tmp_path, base_config(t_end=0.5))
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    assert run(["simulate", "--config", cfg_path, "--run-dir", r1]) == 0
    assert run(["simulate", "--config", cfg_path, "--run-dir", r2,
                "--seed", 99]) == 0
    a = (r1 / "checkpoints" / "ckpt_000000.nsvf").read_bytes()
    b = (r2 / "checkpoints" / "ckpt_000000.nsvf").read_bytes()
    assert a != b
    assert "seed: 99" in (r2 / "manifest.txt").read_text()


def test_invalid_config_exit_1(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[sim]\ndt = 0.0\n")
    assert run(["simulate", "--config", bad, "--run-dir",
                tmp_path / "r"]) == 1
    missing = tmp_path / "nope.cfg"
    assert run(["simulate", "--config", missing, "--run-dir",
                tmp_path / "r"]) == 1


def test_blow_up_exit_3(tmp_path):
    cfg = base_config(nu=1e-6, alpha=0.0, dt=5.0, t_end=100.0,
                      initial_amplitude=50.0, forcing_modes=())
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["simulate", "--config", cfg_path, "--run-dir", rd]) == 3
    assert (rd / "blowup_last_valid.nsvf").exists()


def test_chain_pipeline(tmp_path):
    cfg = base_config(t_end=6.0, cadence=10)
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["simulate", "--config", cfg_path, "--run-dir", rd]) == 0
    assert run(["chain", "--config", cfg_path, "--run-dir", rd]) == 0
    header, rows = read_csv(rd / "chain.csv")
    assert header == ["level", "t", "error_V_norm", "bound_M",
                      "sup_norm_measured"]
    levels = sorted({r[0] for r in rows})
    assert levels == ["1", "2"]
    rep = (rd / "chain_report.txt").read_text()
    assert "M1 =" in rep and "level 2:" in rep
    assert (rd / "chain_errors.png").exists()


def test_chain_m_max_override(tmp_path):
    cfg = base_config(t_end=4.0, cadence=10)
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["simulate", "--config", cfg_path, "--run-dir", rd]) == 0
    assert run(["chain", "--config", cfg_path, "--run-dir", rd,
                "--m-max", 3]) == 0
    _, rows = read_csv(rd / "chain.csv")
    assert sorted({r[0] for r in rows}) == ["1", "2", "3"]


def test_chain_without_checkpoints_exit_1(tmp_path):
    cfg_path = write_cfg(tmp_path, base_config())
    assert run(["chain", "--config", cfg_path, "--run-dir",
                tmp_path / "empty"]) == 1


def test_chain_cadence_exit_2(tmp_path):
    cfg = base_config(t_end=6.0, cadence=150, interp_tol=1e-9,
                      initial_amplitude=1.0)
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["simulate", "--config", cfg_path, "--run-dir", rd]) == 0
    assert run(["chain", "--config", cfg_path, "--run-dir", rd]) == 2


def test_gevrey_insufficient_resolution_exit_4(tmp_path):
    cfg = base_config(t_end=4.0, nu=0.05, cadence=10,
                      forcing_modes=((1, 1, 0, 0.2, -0.2, 0.1),))
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["simulate", "--config", cfg_path, "--run-dir", rd]) == 0
    assert run(["gevrey", "--config", cfg_path, "--run-dir", rd]) == 4


def test_gevrey_relaxed_pipeline(tmp_path):
    cfg = base_config(t_end=4.0, cadence=10)
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["simulate", "--config", cfg_path, "--run-dir", rd]) == 0
    assert run(["gevrey", "--config", cfg_path, "--run-dir", rd,
                "--relaxed-lambda", 50.0]) == 0
    plan = (rd / "plan.txt").read_text()
    assert "lambda =" in plan and "outside theorem hypotheses" in plan
    header, rows = read_csv(rd / "phi.csv")
    assert header == ["t", "phi"]
    assert float(rows[0][1]) == 0.0
    header, rows = read_csv(rd / "spectrum.csv")
    assert header == ["t", "k", "E_k"]
    assert len({r[0] for r in rows}) == 5
    assert (rd / "profile.csv").exists()
    assert (rd / "phi.png").exists() and (rd / "spectrum.png").exists()


def test_steady_pipeline(tmp_path):
    cfg = base_config()
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["steady", "--config", cfg_path, "--run-dir", rd]) == 0
    rep = (rd / "steady_report.txt").read_text()
    assert "residual =" in rep and "tau_B =" in rep
    assert (rd / "steady_state.nsvf").exists()
    header, rows = read_csv(rd / "residual_history.csv")
    assert header == ["iteration", "residual"]
    assert float(rows[-1][1]) <= 1e-10
    assert (rd / "residual_history.png").exists()


def test_steady_nonconvergence_exit_5(tmp_path):
    cfg = base_config(nu=0.05, steady_max_iter=20,
                      forcing_modes=((1, 1, 0, 50.0, -50.0, 10.0),
                                     (0, 1, 2, 30.0, 20.0, -10.0)))
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["steady", "--config", cfg_path, "--run-dir", rd]) == 5
    assert (rd / "residual_history.csv").exists()


def test_scales_pipeline(tmp_path):
    cfg = base_config(t_end=4.0)
    cfg_path = write_cfg(tmp_path, cfg)
    rd = tmp_path / "r"
    assert run(["scales", "--config", cfg_path, "--run-dir", rd]) == 0
    header, rows = read_csv(rd / "scales.csv")
    assert header == ["eps", "eps_sup", "eps_sup_bound", "ell_K",
                      "ell_1", "ell_2", "ell_3", "ell_4", "ell_NSV"]
    vals = [float(v) for v in rows[0]]
    assert vals[0] <= vals[1]
    assert vals[8] == pytest.approx(min(vals[4:8]))
    assert "ell_NSV >=" in (rd / "scales_report.txt").read_text()


def test_entry_point_installed():
    import shutil
    exe = shutil.which("nsv")
    assert exe is not None
