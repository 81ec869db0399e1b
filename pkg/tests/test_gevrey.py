import numpy as np
import pytest

from nsvoigt.lattice import (ConfigurationError, SpectralField, make_lattice,
                             random_divfree_field, sobolev_norm)
from nsvoigt.bilinear import estimate_inequality_constants
from nsvoigt.integrator import ForcingSpec, SimParams
from nsvoigt.chain import compute_bounds, split_vw
from nsvoigt.gevrey import (GevreyConstants, InsufficientResolutionError,
                            evolve_hat_v, fit_decay_rate, gevrey_norm,
                            length_scales, mode_split, poincare_ratios,
                            phi_ode_coefficients, select_lambda,
                            shell_spectrum, verify_gevrey_inequality)

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def lat():
    return make_lattice(16, TWO_PI)


def single_mode(lat, j, amp=1.0):
    raw = np.zeros((3,) + (lat.N,) * 3, dtype=np.complex128)
    jx, jy, jz = j
    # amplitude along a direction orthogonal to j
    if jx == 0 and jy == 0:
        d = 0
    else:
        d = 2
    raw[d, jx % lat.N, jy % lat.N, jz % lat.N] = amp
    raw[d, -jx % lat.N, -jy % lat.N, -jz % lat.N] = np.conj(amp)
    return SpectralField(lat, raw)


def test_gevrey_norm_hand_value(lat):
    u = single_mode(lat, (1, 0, 0))
    for tau in (0.0, 0.3, 1.0):
        expect = np.sqrt(2.0) * np.exp(tau)
        assert gevrey_norm(u, 0, tau) == pytest.approx(expect)
        assert gevrey_norm(u, 2, tau) == pytest.approx(expect)
    u2 = single_mode(lat, (2, 1, 0))
    expect = np.sqrt(2.0) * 5.0 ** 0.5 * np.exp(0.2 * 5.0 ** 0.5)
    assert gevrey_norm(u2, 1, 0.2) == pytest.approx(expect)
    with pytest.raises(ConfigurationError):
        gevrey_norm(u, 0, -0.1)


def test_gevrey_norm_log_space_agrees(lat):
    # large tau forces the logsumexp branch; single mode keeps it exact
    u = single_mode(lat, (1, 0, 0))
    tau = 500.0
    got = gevrey_norm(u, 0, tau)
    expect = np.exp(tau + 0.5 * np.log(2.0))
    assert got == pytest.approx(expect, rel=1e-12)
    assert gevrey_norm(SpectralField.zero(lat), 1, 500.0) == 0.0


def test_gevrey_norm_at_tau_zero_is_sobolev(lat):
    u = random_divfree_field(lat, 1)
    for r in (0, 1, 2):
        assert gevrey_norm(u, r, 0.0) == pytest.approx(sobolev_norm(u, r))


def test_mode_split_partition(lat):
    u = random_divfree_field(lat, 2)
    low, high = mode_split(u, 4.0 * lat.lambda1)
    assert np.abs(low.coeffs + high.coeffs - u.coeffs).max() == 0.0
    nz = np.abs(low.coeffs).max(axis=0) > 0
    assert lat.j_sq[nz].max() <= 4
    nzh = np.abs(high.coeffs).max(axis=0) > 0
    assert lat.j_sq[nzh].min() > 4


def test_poincare_inequalities_hold(lat):
    u = random_divfree_field(lat, 3)
    for lam in (2.0, 5.0, 10.0):
        for tau in (0.05, 0.2):
            lhs1, rhs1, lhs2, rhs2 = poincare_ratios(u, lam, 1, tau)
            assert lhs1 <= rhs1 * (1 + 1e-12)
            assert lhs2 <= rhs2 * (1 + 1e-12)


def gevrey_setup(relax=1.0, nu=0.5, amp=0.05):
    f = ForcingSpec(modes=(((1, 1, 0), (amp, -amp, 0.0)),
                           ((0, 1, 1), (0.0, amp / 2, -amp / 2))))
    p = SimParams(nu=nu, alpha=0.8, L=TWO_PI, N=16, dt=2e-2, t_end=4.0,
                  forcing=f, seed=1, cadence=5, initial_amplitude=0.1)
    emp = estimate_inequality_constants(make_lattice(8, TWO_PI), 8, seed=0)
    bounds = compute_bounds(p, emp.with_safety(2.0))
    consts = GevreyConstants.from_empirical(emp)
    return p, bounds, consts


def test_select_lambda_unforced_case():
    p = SimParams(nu=5.0, alpha=1.0, L=TWO_PI, N=16, dt=1e-2, t_end=1.0)
    emp = estimate_inequality_constants(make_lattice(8, TWO_PI), 8, seed=0)
    bounds = compute_bounds(p, emp.with_safety(2.0))
    consts = GevreyConstants.from_empirical(emp)
    plan = select_lambda(p, bounds, consts)
    # f = 0 makes every condition trivial at the lowest level
    assert plan.lam == pytest.approx(p.lattice().lambda1)
    assert plan.satisfied
    assert plan.label == "within theorem hypotheses"
    assert plan.tau == pytest.approx(1.0)


def test_select_lambda_insufficient_resolution():
    p, bounds, consts = gevrey_setup(nu=0.05, amp=0.2)
    with pytest.raises(InsufficientResolutionError) as info:
        select_lambda(p, bounds, consts)
    assert info.value.required_lambda > info.value.lambda_max


def test_select_lambda_relaxed():
    p, bounds, consts = gevrey_setup()
    plan = select_lambda(p, bounds, consts, relax=50.0)
    assert plan.satisfied
    assert plan.lam > p.alpha ** -2
    assert "outside theorem hypotheses" in plan.label
    assert "50" in plan.label
    # Q_lam f = 0 at the chosen threshold
    f = p.forcing.realize(p.lattice())
    _, fh = mode_split(f, plan.lam)
    assert np.abs(fh.coeffs).max() < 1e-14
    with pytest.raises(ConfigurationError):
        select_lambda(p, bounds, consts, relax=0.5)


def test_condition_margins_positive_when_satisfied():
    p, bounds, consts = gevrey_setup()
    plan = select_lambda(p, bounds, consts, relax=50.0)
    for cond in plan.conditions:
        assert cond.satisfied
        assert cond.margin > 1.0


def test_phi_ode_and_hat_evolution_bounded():
    p, bounds, consts = gevrey_setup()
    plan = select_lambda(p, bounds, consts, relax=50.0)
    split = split_vw(p)
    # vbar = P_lam u as the resolved low-mode trajectory
    from nsvoigt.integrator import Trajectory
    low_fields = [mode_split(u, plan.lam)[0] for u in split.u.fields]
    vbar = Trajectory(times=split.u.times, fields=low_fields)
    a, b, c = phi_ode_coefficients(plan, p, bounds)
    assert a > 0 and b > 0 and c > 0
    hat = evolve_hat_v(vbar, plan, p, bounds)
    assert hat.ceiling == pytest.approx(2 * c / a)
    assert hat.phi[0] == 0.0
    assert np.all(np.isfinite(hat.phi))
    assert not hat.flagged
    # h stays supported on the high modes
    h_last = hat.trajectory.fields[-1]
    low, _ = mode_split(h_last, plan.lam)
    assert np.abs(low.coeffs).max() < 1e-15
    # v_omega reconstruction at a sample time
    t = float(hat.times[-1])
    vom = hat.v_omega(vbar, t)
    assert np.isfinite(sobolev_norm(vom, 1))


def test_shell_spectrum_hand_values(lat):
    u = single_mode(lat, (1, 0, 0), 2.0)
    spec = shell_spectrum(u)
    assert spec.k[0] == 1
    assert spec.E[0] == pytest.approx(8.0)
    assert np.all(spec.E[1:] == 0.0)
    # |j|^2 = 5 lands in shell round(sqrt(5)) = 2
    u2 = single_mode(lat, (2, 1, 0))
    spec2 = shell_spectrum(u2)
    assert spec2.E[1] == pytest.approx(2.0)


def test_fit_decay_rate_recovers_planted_tau(lat):
    rng = np.random.default_rng(0)
    tau = 0.8
    raw = np.zeros((3,) + (lat.N,) * 3, dtype=np.complex128)
    u = SpectralField(lat, raw)
    # plant shell sums E(k) = (k^{-2} e^{-tau k})^2 via a single mode per shell
    N = lat.N
    amps = {}
    for k in range(1, 7):
        amps[k] = k ** -2 * np.exp(-tau * k)
    raw = np.zeros((3,) + (N,) * 3, dtype=np.complex128)
    for k, a in amps.items():
        # put everything on the axis mode (k, 0, 0); two conjugate entries
        val = a / np.sqrt(2.0)
        raw[1, k % N, 0, 0] = val
        raw[1, -k % N, 0, 0] = val
    u = SpectralField(lat, raw)
    spec = shell_spectrum(u)
    for k, a in amps.items():
        assert spec.E[k - 1] == pytest.approx(a ** 2)
    prof = fit_decay_rate(spec, floor_frac=1e-30, ceil_frac=1.0)
    assert prof.tau_star == pytest.approx(tau, abs=1e-10)
    assert prof.r2 == pytest.approx(1.0)
    assert prof.k_lo == 1 and prof.k_hi == 6
    del rng


def test_fit_decay_rate_degenerate_cases(lat):
    empty = fit_decay_rate(shell_spectrum(SpectralField.zero(lat)))
    assert empty.tau_star is None and "empty" in empty.message
    flat = fit_decay_rate(shell_spectrum(single_mode(lat, (1, 0, 0))))
    assert flat.tau_star is None


def test_length_scales_arithmetic():
    p = SimParams(nu=0.5, alpha=0.8, L=TWO_PI, N=16, dt=1e-2, t_end=1.0)
    eps_sup = 0.3
    sc = length_scales(p, 0.2, eps_sup)
    ell_k = (p.nu ** 3 / eps_sup) ** 0.25
    assert sc.ell_K == pytest.approx(ell_k)
    r4 = (ell_k / p.L) ** 4
    assert sc.ell_NSV == pytest.approx(
        min(p.L, p.alpha, p.L ** (1 / 3) * p.alpha ** (2 / 3)) * r4)
    assert sc.ell_NSV == pytest.approx(min(sc.candidates))
    zero = length_scales(p, 0.0, 0.0)
    assert zero.ell_K == np.inf and zero.ell_NSV == np.inf
    with pytest.raises(ConfigurationError):
        length_scales(p, -1.0, 1.0)


def test_length_scale_nu_cubed_scaling():
    eps_sup = 0.3
    vals = []
    for nu in (0.2, 0.4):
        p = SimParams(nu=nu, alpha=0.8, L=TWO_PI, N=16, dt=1e-2, t_end=1.0)
        vals.append(length_scales(p, eps_sup, eps_sup).ell_NSV)
    assert vals[1] / vals[0] == pytest.approx(2.0 ** 3)


def test_gevrey_inequality_ratio_bounded(lat):
    u = random_divfree_field(lat, 11)
    v = random_divfree_field(lat, 12)
    w = random_divfree_field(lat, 13)
    r = verify_gevrey_inequality(u, v, w, tau=0.1)
    assert np.isfinite(r) and r >= 0.0
