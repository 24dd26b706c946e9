import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.linalg import expm

from mapthermo.dynamics import MapTrajectory
from mapthermo.errors import ConfigError, SingularMap, TruncationError
from mapthermo.models import (
    ClosedCoherentParams,
    JCParams,
    WeakCouplingParams,
    closed_coherent_protocol,
    extract_pc_rates,
    jc_mode_count,
    jc_reduced_map,
    vacuum_excited_population,
    weak_coupling_rates,
)
from mapthermo.operators import (
    PAULI,
    Superoperator,
    cptp_diagnostics,
    pauli_transfer_matrix,
)
from mapthermo.phase_covariant import pc_trajectory


def test_weak_coupling_params_validation():
    with pytest.raises(ConfigError):
        WeakCouplingParams(drive_mode="sawtooth")
    with pytest.raises(ConfigError):
        WeakCouplingParams(omega0=-1.0)
    with pytest.raises(ConfigError):
        WeakCouplingParams(beta=0.0)
    with pytest.raises(ConfigError):
        WeakCouplingParams(gamma=-0.1)


def test_weak_coupling_default_duration_and_grid():
    p = WeakCouplingParams(Omega=np.pi / 20)
    assert abs(p.default_t_f - 10.0) < 1e-14
    g = p.grid(250)
    assert g.size == 251 and g[0] == 0.0 and abs(g[-1] - 10.0) < 1e-14
    periodic = WeakCouplingParams(Omega=np.pi / 5, drive_mode="periodic")
    assert abs(periodic.default_t_f - 10.0) < 1e-14


def test_weak_coupling_rates_formulas():
    p = WeakCouplingParams(omega0=1.3, delta=0.8, Omega=0.4, gamma=0.05,
                           beta=2.0)
    r = weak_coupling_rates(p)
    ts = np.linspace(0.0, 5.0, 7)
    npt.assert_allclose(r.omega(ts), 1.3 + 0.8 * np.sin(0.4 * ts) ** 2,
                        atol=1e-14)
    n_th = 1.0 / math.expm1(2.0 * 1.3)
    npt.assert_allclose(r.gamma_plus(ts), 0.05 * n_th, atol=1e-15)
    npt.assert_allclose(r.gamma_minus(ts), 0.05 * (n_th + 1.0), atol=1e-15)
    npt.assert_allclose(r.gamma_z(ts), 0.0, atol=1e-15)
    # net bias xi = gamma_plus - gamma_minus is always -gamma
    assert abs((r.gamma_plus(0.0) - r.gamma_minus(0.0)) + 0.05) < 1e-15


def test_jc_params_validation():
    with pytest.raises(ConfigError):
        JCParams(omega_m=0.0)
    with pytest.raises(ConfigError):
        JCParams(beta=-1.0)
    with pytest.raises(ConfigError):
        JCParams(n_max=0)


def test_mode_count_vacuum_defaults_to_single_excitation():
    assert jc_mode_count(JCParams()) == 1
    assert jc_mode_count(JCParams(n_max=7)) == 7


def test_mode_count_rejects_heavy_tail():
    # q = e^{-1}: fourteen levels leave a ~1e-6 tail, far above the gate
    with pytest.raises(TruncationError) as exc:
        jc_mode_count(JCParams(beta=1.0, omega_m=1.0, n_max=13))
    assert exc.value.required_n_max > 13
    # the suggested cutoff passes
    assert jc_mode_count(JCParams(beta=1.0, omega_m=1.0,
                                  n_max=exc.value.required_n_max)) > 13


def test_mode_count_auto_cutoff_meets_margin():
    p = JCParams(beta=0.2, omega_m=2.0, tail_margin=1e-12)
    n = jc_mode_count(p)
    q = math.exp(-0.4)
    assert q ** (n + 1) < 1e-12
    assert q ** n >= 1e-12 * q  # not wastefully deep


def test_vacuum_detuned_rabi_oracle():
    p = JCParams(omega=1.0, omega_m=2.0, g=0.01, beta=math.inf)
    times = np.linspace(0.0, 40.0, 401)
    traj, _ = jc_reduced_map(p, times)
    pop = vacuum_excited_population(traj)
    delta = p.omega - p.omega_m
    rabi = math.sqrt(delta ** 2 + 4.0 * p.g ** 2)
    expect = (np.cos(rabi * times / 2.0) ** 2
              + (delta / rabi) ** 2 * np.sin(rabi * times / 2.0) ** 2)
    npt.assert_allclose(pop, expect, atol=1e-12)
    assert pop[0] == 1.0


def test_vacuum_resonant_exchange_empties_the_qubit():
    p = JCParams(omega=1.0, omega_m=1.0, g=0.1, beta=math.inf)
    t_swap = np.pi / (2.0 * 0.1)
    times = np.linspace(0.0, t_swap, 101)
    traj, _ = jc_reduced_map(p, times)
    pop = vacuum_excited_population(traj)
    npt.assert_allclose(pop, np.cos(0.1 * times) ** 2, atol=1e-12)
    assert pop[-1] < 1e-12


def test_reduced_map_is_cptp_and_phase_covariant():
    p = JCParams(omega=2.0, omega_m=2.0, g=0.05, beta=1.0, n_max=25)
    times = np.linspace(0.0, 8.0, 81)
    traj, _ = jc_reduced_map(p, times)
    for i in (20, 50, 80):
        rep = cptp_diagnostics(traj.maps[i])
        assert rep.choi_min_eigenvalue > -1e-9
        assert rep.trace_preserving_residual < 1e-12
        r = pauli_transfer_matrix(traj.maps[i])
        pattern = np.array([[1, 0, 0, 0], [0, 1, 1, 0],
                            [0, 1, 1, 0], [1, 0, 0, 1]], dtype=bool)
        assert np.max(np.abs(np.where(pattern, 0.0, r))) < 1e-12


def test_reduced_map_decoupled_limit_is_bare_rotation():
    p = JCParams(omega=1.4, omega_m=2.0, g=0.0, beta=1.0, n_max=12)
    times = np.linspace(0.0, 5.0, 51)
    _, coeffs = jc_reduced_map(p, times)
    npt.assert_allclose(coeffs.a, np.cos(1.4 * times), atol=1e-12)
    npt.assert_allclose(coeffs.b, np.sin(1.4 * times), atol=1e-12)
    npt.assert_allclose(coeffs.c, 0.0, atol=1e-12)
    npt.assert_allclose(coeffs.d_par, 1.0, atol=1e-12)


def test_reduced_map_derivatives_match_finite_differences():
    p = JCParams(omega=2.0, omega_m=2.0, g=0.05, beta=0.5, n_max=40)
    times = np.linspace(0.0, 4.0, 801)
    _, coeffs = jc_reduced_map(p, times)
    h = times[1] - times[0]
    for arr, darr in ((coeffs.a, coeffs.da), (coeffs.b, coeffs.db),
                      (coeffs.c, coeffs.dc), (coeffs.d_par, coeffs.dd_par)):
        fd = (arr[2:] - arr[:-2]) / (2.0 * h)
        assert np.max(np.abs(fd - darr[1:-1])) < 2e-4


def test_reduced_map_stable_under_deeper_truncation():
    times = np.linspace(0.0, 6.0, 61)
    shallow = jc_reduced_map(JCParams(omega=2.0, omega_m=2.0, g=0.05,
                                      beta=1.0, n_max=13), times)[1]
    deep = jc_reduced_map(JCParams(omega=2.0, omega_m=2.0, g=0.05,
                                   beta=1.0, n_max=18), times)[1]
    for name in ("a", "b", "c", "d_par"):
        dev = np.max(np.abs(getattr(shallow, name) - getattr(deep, name)))
        assert dev < 1e-8, name


def test_extraction_recovers_weak_coupling_rates():
    p = WeakCouplingParams(gamma=0.05, beta=2.0)
    times = p.grid(200)
    traj, _ = pc_trajectory(weak_coupling_rates(p), times)
    ex = extract_pc_rates(traj)
    r = weak_coupling_rates(p)
    npt.assert_allclose(ex.omega, r.omega(times), atol=1e-9)
    npt.assert_allclose(ex.gamma_plus, r.gamma_plus(times), atol=1e-9)
    npt.assert_allclose(ex.gamma_minus, r.gamma_minus(times), atol=1e-9)
    npt.assert_allclose(ex.gamma_z, 0.0, atol=1e-9)
    assert ex.map_residual < 1e-12
    assert ex.generator_residual < 1e-9


def test_extraction_of_decoupled_exchange_is_pure_rotation():
    p = JCParams(omega=1.4, omega_m=2.0, g=0.0, beta=1.0, n_max=12)
    times = np.linspace(0.0, 5.0, 51)
    traj, _ = jc_reduced_map(p, times)
    ex = extract_pc_rates(traj)
    npt.assert_allclose(ex.omega, 1.4, atol=1e-10)
    npt.assert_allclose(ex.kappa, 0.0, atol=1e-10)
    npt.assert_allclose(ex.xi, 0.0, atol=1e-10)
    npt.assert_allclose(ex.gamma_z, 0.0, atol=1e-10)


def test_extraction_interpolator_reproduces_grid_samples():
    p = WeakCouplingParams(gamma=0.05)
    times = p.grid(100)
    traj, _ = pc_trajectory(weak_coupling_rates(p), times)
    ex = extract_pc_rates(traj)
    rates = ex.as_rates()
    npt.assert_allclose(rates.omega(times), ex.omega, atol=1e-14)
    npt.assert_allclose(rates.gamma_plus(times), ex.gamma_plus, atol=1e-14)
    mid = 0.5 * (times[3] + times[4])
    expect = 0.5 * (ex.omega[3] + ex.omega[4])
    assert abs(rates.omega(mid) - expect) < 1e-14


def test_extraction_rejects_non_phase_covariant_trajectory():
    # x-axis rotation mixes y and z: wrong invariant block structure
    sx = PAULI[1]
    times = np.linspace(0.0, 1.0, 11)
    maps = tuple(Superoperator(np.kron(expm(1j * t * sx), expm(-1j * t * sx)))
                 for t in times)
    traj = MapTrajectory(times=times, maps=maps)
    with pytest.raises(ConfigError):
        extract_pc_rates(traj)


def test_extraction_raises_at_singular_exchange_node():
    p = JCParams(omega=1.0, omega_m=1.0, g=0.1, beta=math.inf)
    t_node = np.pi / 0.2
    times = np.linspace(0.0, 2.0 * t_node, 201)
    traj, _ = jc_reduced_map(p, times)
    with pytest.raises(SingularMap) as exc:
        extract_pc_rates(traj)
    assert abs(exc.value.time - t_node) < 1e-9


def test_extraction_succeeds_off_resonance():
    p = JCParams(omega=1.0, omega_m=2.0, g=0.01, beta=0.2, n_max=60)
    times = np.linspace(0.0, 30.0, 301)
    traj, _ = jc_reduced_map(p, times)
    ex = extract_pc_rates(traj)
    assert ex.map_residual < 1e-10
    assert ex.generator_residual < 1e-8
    # memory effects show up as a time-dependent splitting
    assert np.ptp(ex.omega) > 1e-4


def test_closed_coherent_params_validation():
    with pytest.raises(ConfigError):
        ClosedCoherentParams(drive_mode="square")
    with pytest.raises(ConfigError):
        ClosedCoherentParams(beta0=0.0)


def test_closed_coherent_protocol_structure():
    p = ClosedCoherentParams(rotation_angle=0.5)
    times = p.grid(100)
    rho0, hams, unitaries = closed_coherent_protocol(p, times)
    assert abs(np.trace(rho0.matrix) - 1.0) < 1e-12
    assert abs(rho0.matrix[0, 1]) > 1e-3
    omega = p.omega0 + p.delta * np.sin(p.Omega * times) ** 2
    for i in (0, 50, 100):
        npt.assert_allclose(hams[i].matrix, 0.5 * omega[i] * PAULI[3],
                            atol=1e-14)
    npt.assert_allclose(unitaries[0], np.eye(2), atol=1e-14)
    # propagators are phase rotations by the accumulated splitting
    for u in unitaries:
        npt.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)
        assert abs(u[0, 1]) < 1e-15


def test_closed_coherent_undriven_propagator_closed_form():
    p = ClosedCoherentParams(delta=1e-30, rotation_angle=0.0)
    times = p.grid(60)
    rho0, hams, unitaries = closed_coherent_protocol(p, times)
    assert abs(rho0.matrix[0, 1]) < 1e-15
    i = 45
    expect = np.diag([np.exp(-0.5j * p.omega0 * times[i]),
                      np.exp(0.5j * p.omega0 * times[i])])
    npt.assert_allclose(unitaries[i], expect, atol=1e-12)
