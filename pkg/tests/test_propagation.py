import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sta_coupler.errors import Indeterminate, NormDrift
from sta_coupler.hamiltonian import diabatic_hamiltonian, hamiltonian_provider
from sta_coupler.profiles import (
    AllenEberlyScheme,
    ExactCounterdiabatic,
    GaussianCounterdiabatic,
    NoCounterdiabatic,
)
from sta_coupler.propagation import (
    ZGrid,
    adiabatic_eigenstate,
    adiabatic_following_prediction,
    convergence_check,
    final_amplitudes,
    propagate_amplitudes,
    propagate_density,
    pure_density,
)

# 1 - cos(theta(L)/2)**2 with theta(L) = atan2(sech 2pi, tanh 2pi), mpmath 30 digits
SIN2_HALF_THETA_L = 3.4873301946946974464e-6


def constant(delta, kappa):
    return lambda z: diabatic_hamiltonian(np.full_like(z, delta), np.full_like(z, kappa))


def zero_h(z):
    return np.zeros(np.shape(z) + (2, 2), dtype=complex)


def naive_rk4(h_of_z, a0, z0, z1, n):
    """Textbook RK4 on i da/dz = H a, one scalar z at a time."""
    a = np.array(a0, dtype=complex)
    h = (z1 - z0) / n

    def f(z, y):
        return -1j * h_of_z(np.array(z))[()] @ y

    out = [a.copy()]
    for k in range(n):
        z = z0 + k * h
        k1 = f(z, a)
        k2 = f(z + h / 2, a + h / 2 * k1)
        k3 = f(z + h / 2, a + h / 2 * k2)
        k4 = f(z + h, a + h * k3)
        a = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(a.copy())
    return np.array(out)


def test_zgrid_validation_and_sampling():
    with pytest.raises(ValueError):
        ZGrid(1.0, 1.0, 10)
    with pytest.raises(ValueError):
        ZGrid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        ZGrid(0.0, 1.0, 10, stride=0)
    g = ZGrid(0.0, 1.0, 10, stride=4)
    np.testing.assert_array_equal(g.sample_indices(), [0, 4, 8, 10])
    assert g.step == 0.1
    g = ZGrid.from_step(-2.0, 2.0, 0.3)
    assert g.n_steps == 14 and g.step <= 0.3
    assert ZGrid.from_step(0.0, 1.0, 0.25).n_steps == 4


@pytest.mark.parametrize("spec", [NoCounterdiabatic(), ExactCounterdiabatic(), "gauss"])
def test_matches_textbook_rk4(spec):
    scheme = AllenEberlyScheme(1.0, 1.3, 1.5)
    if spec == "gauss":
        spec = GaussianCounterdiabatic.for_scheme(scheme)
    h = hamiltonian_provider(scheme, spec)
    grid = ZGrid(-1.5, 1.5, 300)
    traj = propagate_amplitudes(h, [1, 0], grid)
    ref = naive_rk4(h, [1, 0], -1.5, 1.5, 300)
    np.testing.assert_allclose(traj.states, ref, rtol=0, atol=1e-13)
    np.testing.assert_allclose(final_amplitudes(h, [1, 0], grid), ref[-1], rtol=0, atol=1e-13)


def test_zero_hamiltonian_keeps_state():
    traj = propagate_amplitudes(zero_h, [1, 0], ZGrid(-1, 1, 50))
    np.testing.assert_array_equal(traj.p2, 0.0)
    np.testing.assert_array_equal(traj.p1, 1.0)
    rho0 = pure_density([0.6, 0.8j])
    traj = propagate_density(zero_h, rho0, ZGrid(-1, 1, 50))
    np.testing.assert_allclose(traj.states, np.broadcast_to(rho0, traj.states.shape), atol=0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 4.0))
def test_constant_coupling_beats(kappa, length):
    grid = ZGrid(0.0, length, 2000, stride=50)
    traj = propagate_amplitudes(constant(0.0, kappa), [1, 0], grid)
    np.testing.assert_allclose(traj.p2, np.sin(kappa * traj.z) ** 2, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.1, 3.0))
def test_diagonal_hamiltonian_only_rotates_phases(delta, length):
    a0 = np.array([0.6, 0.8])
    grid = ZGrid(0.0, length, 1000, stride=100)
    traj = propagate_amplitudes(constant(delta, 0.0), a0, grid)
    np.testing.assert_allclose(traj.p1, 0.36, atol=1e-12)
    expected = np.stack([0.6 * np.exp(-1j * delta * traj.z), 0.8 * np.exp(1j * delta * traj.z)], axis=1)
    np.testing.assert_allclose(traj.states, expected, atol=1e-10)


def test_maximally_mixed_is_stationary():
    scheme = AllenEberlyScheme(1.0, 1.0, 2.0)
    traj = propagate_density(hamiltonian_provider(scheme, ExactCounterdiabatic()), np.eye(2) / 2, ZGrid.across(scheme))
    np.testing.assert_allclose(traj.states, 0.5 * np.broadcast_to(np.eye(2), traj.states.shape), atol=1e-15)


@pytest.mark.parametrize("spec", [NoCounterdiabatic(), ExactCounterdiabatic(), "gauss"])
def test_density_and_amplitudes_agree(spec):
    scheme = AllenEberlyScheme(1.0, 1.0, 2.0)
    if spec == "gauss":
        spec = GaussianCounterdiabatic.for_scheme(scheme)
    h = hamiltonian_provider(scheme, spec)
    grid = ZGrid.across(scheme, stride=8)
    a0 = np.array([0.8, 0.6j])
    amp = propagate_amplitudes(h, a0, grid)
    rho = propagate_density(h, pure_density(a0), grid)
    np.testing.assert_allclose(rho.p1, amp.p1, atol=1e-8)
    np.testing.assert_allclose(rho.p2, amp.p2, atol=1e-8)
    np.testing.assert_allclose(rho.rho12, amp.rho12, atol=1e-8)
    assert amp.max_norm_drift < 1e-8
    assert rho.max_norm_drift < 1e-8 and rho.max_purity_drift < 1e-8


def test_trajectory_invariants():
    scheme = AllenEberlyScheme(1.0, 2.0, 3.0)
    traj = propagate_density(
        hamiltonian_provider(scheme, GaussianCounterdiabatic.for_scheme(scheme)),
        pure_density([1, 0]),
        ZGrid.across(scheme, stride=7),
    )
    assert np.all(np.diff(traj.z) > 0)
    assert traj.z[0] == -3.0 and traj.z[-1] == 3.0
    np.testing.assert_allclose(traj.p1 + traj.p2, 1.0, atol=1e-12)
    rho = traj.states
    np.testing.assert_allclose(rho, np.conj(np.swapaxes(rho, 1, 2)), atol=1e-14)
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_coarse_step_raises_norm_drift():
    with pytest.raises(NormDrift):
        propagate_amplitudes(constant(0.0, 1.0), [1, 0], ZGrid(0.0, 20.0, 20))
    with pytest.raises(NormDrift):
        final_amplitudes(constant(0.0, 1.0), [1, 0], ZGrid(0.0, 20.0, 20))


def test_bad_initial_states_rejected():
    with pytest.raises(ValueError):
        propagate_amplitudes(zero_h, [1, 1], ZGrid(0, 1, 4))
    with pytest.raises(ValueError):
        propagate_density(zero_h, np.eye(2), ZGrid(0, 1, 4))
    with pytest.raises(ValueError):
        propagate_density(zero_h, np.array([[0.5, 1j], [1j, 0.5]]), ZGrid(0, 1, 4))
    with pytest.raises(ValueError):
        propagate_amplitudes(lambda z: np.zeros((2, 2)), [1, 0], ZGrid(0, 1, 4))


def test_adiabatic_following_examples():
    scheme = AllenEberlyScheme(1.0, 1.0, 2.0)
    assert adiabatic_following_prediction(scheme, 0.0)[1] == pytest.approx(0.5, abs=1e-15)
    assert adiabatic_following_prediction(scheme, 2.0)[1] == pytest.approx(1 - SIN2_HALF_THETA_L, abs=1e-15)
    assert adiabatic_following_prediction(scheme, -2.0)[1] == pytest.approx(SIN2_HALF_THETA_L, rel=1e-9)
    v = adiabatic_eigenstate(scheme, -2.0)
    assert abs(v[0]) ** 2 == pytest.approx(1 - SIN2_HALF_THETA_L, abs=1e-15)


@pytest.mark.parametrize("half_length", [0.5, 1.0, 2.0, 5.0, 12.0])
def test_exact_shortcut_follows_adiabatic_state(half_length):
    scheme = AllenEberlyScheme(1.0, 1.0, half_length)
    grid = ZGrid.across(scheme, stride=4)
    traj = propagate_amplitudes(
        hamiltonian_provider(scheme, ExactCounterdiabatic()), adiabatic_eigenstate(scheme, -half_length), grid
    )
    _, p2 = adiabatic_following_prediction(scheme, traj.z)
    np.testing.assert_allclose(traj.p2, p2, rtol=0, atol=1e-6)


def test_rotated_frame_gives_same_populations():
    scheme = AllenEberlyScheme(1.0, 1.0, 2.0)
    for spec in (ExactCounterdiabatic(), GaussianCounterdiabatic.for_scheme(scheme)):
        grid = ZGrid.across(scheme, stride=16)
        lab = propagate_amplitudes(hamiltonian_provider(scheme, spec), [1, 0], grid)
        rot = propagate_amplitudes(hamiltonian_provider(scheme, spec, "rotated"), [1, 0], grid)
        np.testing.assert_allclose(rot.p2, lab.p2, atol=1e-10)


@pytest.mark.parametrize("frame_spec", ["adiabatic", "rotated-gauss"])
def test_mirrored_backward_run_restores_input(frame_spec):
    scheme = AllenEberlyScheme(1.0, 1.0, 2.0)
    if frame_spec == "adiabatic":
        h = hamiltonian_provider(scheme, NoCounterdiabatic())
    else:
        h = hamiltonian_provider(scheme, GaussianCounterdiabatic.for_scheme(scheme), "rotated")
    grid = ZGrid.across(scheme)
    forward = final_amplitudes(h, [1, 0], grid)
    back = final_amplitudes(lambda z: h(-z), np.conj(forward), grid)
    assert abs(back[0]) ** 2 == pytest.approx(1.0, abs=1e-6)
    assert abs(back[1]) ** 2 == pytest.approx(0.0, abs=1e-6)


def test_convergence_order_rabi():
    order = convergence_check(constant(0.0, 1.0), [1, 0], ZGrid(0.0, 1.0, 16))
    assert 3.7 <= order <= 4.3


def test_convergence_zero_hamiltonian_is_indeterminate():
    with pytest.raises(Indeterminate):
        convergence_check(zero_h, [1, 0], ZGrid(0.0, 1.0, 16))


def test_convergence_order_allen_eberly():
    scheme = AllenEberlyScheme(1.0, 1.0, 5.0)
    h = hamiltonian_provider(scheme, NoCounterdiabatic())
    # h = 0.04 mm; finer steps put the final-P2 differences at round-off.
    order = convergence_check(h, [1, 0], ZGrid.from_step(-5.0, 5.0, 0.04))
    assert order >= 3.7
