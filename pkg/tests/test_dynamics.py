import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from qpath.dynamics import (
    BlochState, PhysicalParams, bayes_step, bayes_xz, continuum_derivatives, efficiency,
    env_dephasing_efficiency, lindblad_ensemble, measurement_time, propagate_step, step_xz,
    unitary_step,
)

from conftest import quiet_params, random_states

OMEGA = 2 * math.pi * 1.08e6


# --- BlochState / PhysicalParams ---------------------------------------------


def test_bloch_state_rejects_outside_sphere():
    with pytest.raises(ValueError):
        BlochState(0.8, 0.7)
    BlochState(1.0 + 1e-10, 0.0)  # inside the numerical slack


def test_bloch_state_density_matrix_roundtrip():
    s = BlochState(0.3, -0.4)
    assert s.rho11 == pytest.approx(0.7)
    assert s.rho01 == pytest.approx(0.15)
    back = BlochState.from_rho(s.rho11, s.rho01)
    assert back.x == pytest.approx(s.x) and back.z == pytest.approx(s.z)


def test_z_plus_one_is_ground():
    assert BlochState(0.0, 1.0).rho00 == 1.0


def test_params_gamma_extra_and_eta(fig2_params):
    assert fig2_params.gamma_extra == pytest.approx(3.85e6 - 1 / (2 * 315e-9))
    assert fig2_params.gamma_extra == pytest.approx(2.2627e6, rel=1e-4)
    assert fig2_params.eta_tot == pytest.approx(0.412, abs=1e-3)


def test_params_reject_efficiency_above_one():
    with pytest.raises(ValueError, match="efficiency"):
        PhysicalParams(omega=0.0, tau=315e-9, gamma_ens=1e6)


def test_params_ideal_detector_accepted():
    p = PhysicalParams(omega=0.0, tau=315e-9, gamma_ens=1 / (2 * 315e-9))
    assert p.gamma_extra == 0.0
    assert p.eta_tot == pytest.approx(1.0)


def test_params_warn_on_coarse_dt():
    with pytest.warns(UserWarning, match="not small"):
        PhysicalParams(omega=0.0, tau=50e-9, gamma_ens=1e7, dt=16e-9)


@pytest.mark.parametrize("field,value", [("tau", 0.0), ("dt", -1.0), ("delta_v", 0.0),
                                         ("omega", math.nan), ("scheme", "rk4")])
def test_params_validation(field, value):
    kw = dict(omega=1.0, tau=315e-9, gamma_ens=3.85e6)
    kw[field] = value
    with pytest.raises(ValueError):
        PhysicalParams(**kw)


# --- efficiencies ---------------------------------------------------------------


def test_efficiency_examples():
    assert efficiency(315e-9, 3.85e6) == pytest.approx(0.412, abs=1e-3)
    assert efficiency(1.25e-6, 0.94e6) == pytest.approx(0.4255, abs=1e-4)
    tau = 315e-9
    assert efficiency(tau, 1 / (2 * tau)) == pytest.approx(1.0)


def test_efficiency_rejects_nonpositive():
    with pytest.raises(ValueError):
        efficiency(0.0, 1.0)
    with pytest.raises(ValueError):
        env_dephasing_efficiency(1.0, 1.0, 0.0, 1.0)


def test_env_dephasing_formula():
    kappa, chi, nbar, t2 = 2e6, 1e6, 3.0, 10e-6
    assert env_dephasing_efficiency(kappa, chi, nbar, t2) == pytest.approx(
        1 / (1 + kappa / (8 * chi**2 * nbar * t2)))


def test_measurement_time_formula():
    assert measurement_time(1.0, 0.5, 2.0, 0.5, 0.5) == pytest.approx(1 / (16 * 0.25 * 2 * 0.25))


# --- unitary step ---------------------------------------------------------------


def test_unitary_zero_drive_is_identity():
    s = unitary_step(BlochState(1.0, 0.0), 0.0, 16e-9)
    assert (s.x, s.z) == (1.0, 0.0)


def test_unitary_first_order_hand_value():
    dt = 16e-9
    s = unitary_step(BlochState(0.0, 1.0), OMEGA, dt)
    a = OMEGA * dt
    assert a == pytest.approx(0.10857, abs=1e-5)
    # rho'_01 = (W/2) dt, then rho'_11 = (W/2)(2 rho'_01) dt
    assert s.x == pytest.approx(a, abs=1e-15)
    assert s.z == pytest.approx(1 - a * a, abs=1e-15)


def test_unitary_full_period_returns():
    dt = 1e-9
    n = round(2 * math.pi / (OMEGA * dt))
    s = BlochState(1.0, 0.0)
    for _ in range(n):
        s = unitary_step(s, OMEGA, dt)
    x, z = math.cos(OMEGA * n * dt), -math.sin(OMEGA * n * dt)
    assert abs(s.x - 1.0) < 0.01 and abs(s.z) < 0.01
    assert abs(s.x - x) < 0.01 and abs(s.z - z) < 0.01


def test_unitary_exact_matches_rotation():
    s = unitary_step(BlochState(0.6, 0.8), OMEGA, 0.1e-6, exact=True)
    th = OMEGA * 0.1e-6
    assert s.x == pytest.approx(0.6 * math.cos(th) + 0.8 * math.sin(th))
    assert s.z == pytest.approx(0.8 * math.cos(th) - 0.6 * math.sin(th))


def test_unitary_rejects_y():
    with pytest.raises(ValueError):
        unitary_step(BlochState(0.0, 0.0, y=0.5), OMEGA, 1e-9)


# --- Bayes step -----------------------------------------------------------------


def _ideal(tau=315e-9, dt=16e-9):
    return quiet_params(omega=0.0, tau=tau, gamma_ens=1 / (2 * tau), dt=dt)


def test_bayes_zero_readout_is_identity(rng):
    p = _ideal()
    for x, z in zip(*random_states(rng, 50)):
        s = bayes_step(BlochState(x, z), 0.0, p)
        assert s.x == pytest.approx(x, abs=1e-15) and s.z == pytest.approx(z, abs=1e-15)


def test_bayes_hand_value():
    p = _ideal()
    # v dt / (tau dV) = ln 3 / 4  <=>  r dt / tau = ln 3 / 2
    r = math.log(3) / 2 * p.tau / p.dt
    s = bayes_step(BlochState(1.0, 0.0), r, p)
    assert s.rho11 == pytest.approx(0.25, abs=1e-14)
    assert s.z == pytest.approx(0.5, abs=1e-14)
    assert s.x == pytest.approx(math.sqrt(3) / 2, abs=1e-14)


def _direct_posterior(x, z, v, delta_v, tau, dt, gamma):
    """Bayes rule on the two Gaussian voltage distributions."""
    var = delta_v**2 * tau / (4 * dt)
    p00, p11 = (1 + z) / 2, (1 - z) / 2
    l0 = np.exp(-((v - delta_v / 2) ** 2) / (2 * var))
    l1 = np.exp(-((v + delta_v / 2) ** 2) / (2 * var))
    norm = p00 * l0 + p11 * l1
    rho11 = p11 * l1 / norm
    rho01 = (x / 2) * np.sqrt(l0 * l1) / norm * np.exp(-gamma * dt)
    return 2 * rho01, 1 - 2 * rho11


def test_bayes_matches_direct_posterior(rng, fig2_params):
    n = 10_000
    x, z = random_states(rng, n)
    dv = 1.7
    p = fig2_params.with_(delta_v=dv)
    v = rng.normal(0, 2.0, n) * dv  # several sigma of the per-sample noise
    r = 2 * v / dv
    xb, zb = bayes_xz(x, z, r, p.dt, p.tau, p.gamma_extra)
    xd, zd = _direct_posterior(x, z, v, dv, p.tau, p.dt, p.gamma_extra)
    assert np.max(np.abs(zb - zd)) < 1e-12
    assert np.max(np.abs(xb - xd)) < 1e-12


def test_bayes_eigenstates_fixed_no_nan(fig2_params):
    for z in (1.0, -1.0):
        for r in (-50.0, 0.0, 3.0, 1e4):
            s = bayes_step(BlochState(0.0, z), r, fig2_params)
            assert s.z == z and s.x == 0.0


def test_bayes_extreme_readout_stays_finite(fig2_params):
    s = bayes_step(BlochState(0.6, 0.0), -1e6, fig2_params)
    assert math.isfinite(s.x) and s.z == pytest.approx(-1.0)


def test_bayes_coherence_decay_only():
    p = quiet_params(omega=0.0, tau=315e-9, gamma_ens=3.85e6)
    s = bayes_step(BlochState(1.0, 0.0), 0.0, p)
    assert s.x == pytest.approx(math.exp(-p.gamma_extra * p.dt))


def test_purity_preserved_ideal_detector(rng):
    p = _ideal()
    x, z = random_states(rng, 100_000, pure=True)
    r = rng.normal(0, math.sqrt(p.readout_variance), x.size)
    xb, zb = bayes_xz(x, z, r, p.dt, p.tau, 0.0)
    assert np.max(np.abs(xb**2 + zb**2 - 1)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(th=st.floats(0, 2 * math.pi), rad=st.floats(0, 1), r=st.floats(-200, 200),
       scheme=st.sampled_from(["symmetric", "first_order"]))
def test_step_stays_in_disk_and_plane(th, rad, r, scheme):
    p = quiet_params(omega=OMEGA, tau=315e-9, gamma_ens=3.85e6, scheme=scheme)
    s = propagate_step(BlochState(rad * math.sin(th), rad * math.cos(th)), r, p)
    assert s.norm2 <= 1 + 1e-9
    assert s.y == 0.0


def test_first_order_step_is_bayes_after_unitary(rng):
    p = quiet_params(omega=OMEGA, tau=315e-9, gamma_ens=3.85e6, scheme="first_order")
    for x, z in zip(*random_states(rng, 200)):
        r = rng.normal(0, 4.4)
        a = bayes_step(unitary_step(BlochState(x, z), p.omega, p.dt), r, p)
        b = step_xz(x, z, r, p)
        assert (a.x, a.z) == (float(b[0]), float(b[1]))


# --- continuum limit ------------------------------------------------------------


def test_continuum_eigenstates_fixed():
    p = quiet_params(omega=0.0, tau=315e-9, gamma_ens=3.85e6)
    for z in (1.0, -1.0):
        assert continuum_derivatives(0.0, z, 2.3, p) == (0.0, 0.0)


def test_continuum_value(fig2_params):
    p = fig2_params
    dx, dz = continuum_derivatives(0.88, 0.0, 1.0, p)
    assert dx == pytest.approx(-2.2627e6 * 0.88, rel=1e-4)
    assert dz == pytest.approx(-p.omega * 0.88 + 1 / p.tau)


def _composed_error(dt, r, x0, z0, T, scheme):
    p = quiet_params(omega=OMEGA, tau=315e-9, gamma_ens=3.85e6, dt=dt, scheme=scheme)
    n = round(T / dt)
    s = BlochState(x0, z0)
    for _ in range(n):
        if scheme == "first_order":
            s = bayes_step(unitary_step(s, p.omega, dt), r, p)
        else:
            s = propagate_step(s, r, p)
    sol = solve_ivp(lambda t, y: continuum_derivatives(y[0], y[1], r, p), (0, T), [x0, z0],
                    rtol=1e-12, atol=1e-14, method="DOP853")
    return math.hypot(s.x - sol.y[0, -1], s.z - sol.y[1, -1])


def test_composed_step_first_order_convergence(rng):
    ratios = []
    for _ in range(5):
        x0, z0 = random_states(rng, 1)
        r = rng.uniform(-1.5, 1.5)
        e1 = _composed_error(4e-9, r, x0[0], z0[0], 0.256e-6, "first_order")
        e2 = _composed_error(2e-9, r, x0[0], z0[0], 0.256e-6, "first_order")
        ratios.append(e1 / e2)
    assert np.allclose(ratios, 2.0, atol=0.25)


def test_symmetric_step_second_order(rng):
    x0, z0 = 0.6, 0.3
    e1 = _composed_error(4e-9, 0.7, x0, z0, 0.256e-6, "symmetric")
    e2 = _composed_error(2e-9, 0.7, x0, z0, 0.256e-6, "symmetric")
    assert e1 / e2 == pytest.approx(4.0, abs=0.4)


def test_single_euler_step_local_error_order(rng):
    ratios = []
    for _ in range(10):
        x0, z0 = random_states(rng, 1)
        x0, z0 = 0.9 * x0[0], 0.9 * z0[0]
        r = rng.uniform(-1, 1)
        errs = []
        for dt in (4e-9, 2e-9):
            p = quiet_params(omega=OMEGA, tau=315e-9, gamma_ens=3.85e6, dt=dt, scheme="first_order")
            s = bayes_step(unitary_step(BlochState(x0, z0), p.omega, dt), r, p)
            dx, dz = continuum_derivatives(x0, z0, r, p)
            errs.append(math.hypot(s.x - (x0 + dx * dt), s.z - (z0 + dz * dt)))
        ratios.append(errs[0] / errs[1])
    assert np.median(ratios) == pytest.approx(4.0, abs=0.5)


# --- Lindblad ensemble ----------------------------------------------------------


def test_lindblad_pure_dephasing():
    t = np.linspace(0, 2e-6, 11)
    x, z = lindblad_ensemble(1.0, 0.0, 0.0, 3.85e6, t)
    assert np.allclose(x, np.exp(-3.85e6 * t), rtol=1e-12)
    assert np.allclose(z, 0.0, atol=1e-15)


def test_lindblad_unitary_limit():
    t = np.linspace(0, 2e-6, 21)
    x, z = lindblad_ensemble(1.0, 0.0, OMEGA, 0.0, t)
    assert np.allclose(x, np.cos(OMEGA * t)) and np.allclose(z, -np.sin(OMEGA * t))
    assert np.allclose(x**2 + z**2, 1.0)


@pytest.mark.parametrize("omega,gamma", [(OMEGA, 3.85e6), (1e6, 8e6), (2e6, 4e6)])
def test_lindblad_matches_numerical_integration(omega, gamma):
    t = np.linspace(0, 0.5e-6, 6)
    sol = solve_ivp(lambda _, y: [-gamma * y[0] + omega * y[1], -omega * y[0]], (0, 0.5e-6),
                    [0.88, 0.0], t_eval=t, rtol=1e-12, atol=1e-14)
    x, z = lindblad_ensemble(0.88, 0.0, omega, gamma, t)
    assert np.allclose(x, sol.y[0], atol=1e-9) and np.allclose(z, sol.y[1], atol=1e-9)


def test_lindblad_critical_limit_continuous():
    g = 4e6
    a = lindblad_ensemble(0.5, 0.2, g / 2, g, 0.3e-6)
    b = lindblad_ensemble(0.5, 0.2, g / 2 * (1 + 1e-7), g, 0.3e-6)
    assert a == pytest.approx(b, abs=1e-6)


def test_lindblad_satisfies_odes(rng):
    for omega, gamma in ((OMEGA, 3.85e6), (1e6, 8e6), (2e6, 4e6)):
        t = rng.uniform(0.05e-6, 1.5e-6, 10)
        h = 1e-12
        xp, zp = lindblad_ensemble(0.88, 0.1, omega, gamma, t + h)
        xm, zm = lindblad_ensemble(0.88, 0.1, omega, gamma, t - h)
        x, z = lindblad_ensemble(0.88, 0.1, omega, gamma, t)
        dx, dz = (xp - xm) / (2 * h), (zp - zm) / (2 * h)
        scale = omega + gamma
        assert np.allclose(dx, -gamma * x + omega * z, rtol=1e-8, atol=1e-8 * scale)
        assert np.allclose(dz, -omega * x, rtol=1e-8, atol=1e-8 * scale)


def test_lindblad_rejects_negative_time():
    with pytest.raises(ValueError):
        lindblad_ensemble(1.0, 0.0, 1.0, 1.0, -1.0)
