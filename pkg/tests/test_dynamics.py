import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from redmix import rng as rng_mod
from redmix.dynamics import (CglModel, CglParams, dist_h, norm_h, phi1, phi2,
                             project_resolved, resolved_modes, smooth_state)
from redmix.errors import BlowUpError
from redmix.noise import ForceSpec, decay_coefficients


def zero_force(params):
    return np.zeros((params.n_steps, params.n_modes), dtype=complex)


def constant_force(params, vec):
    return np.tile(vec, (params.n_steps, 1))


# ---------------------------------------------------------------------------
# scalars and helpers


def test_phi_functions_match_reference():
    z = np.array([-3.0, -0.5, 0.5, 2.0])
    assert np.allclose(phi1(z), np.expm1(z) / z, rtol=1e-14)
    assert np.allclose(phi2(z), (np.expm1(z) - z) / z ** 2, rtol=1e-14)


def test_phi_functions_continuous_at_series_switch():
    # the exact branch loses a couple of digits to cancellation near the cut
    for fn, cut in [(phi1, 1e-5), (phi2, 1e-2)]:
        below = fn(np.array([cut * (1 - 1e-9)]))[()]
        above = fn(np.array([cut * (1 + 1e-9)]))[()]
        assert abs(below - above) < 1e-10
    assert phi1(np.array([0.0]))[()] == 1.0
    assert phi2(np.array([0.0]))[()] == 0.5


def test_norm_and_distance():
    u = np.array([3.0 + 4.0j, 0.0])
    assert norm_h(u) == 5.0
    assert dist_h(u, np.zeros(2, dtype=complex)) == 5.0


def test_resolved_modes_alternate_signs():
    assert resolved_modes(1) == (0,)
    assert resolved_modes(4) == (0, 1, -1, 2)
    assert resolved_modes(7) == (0, 1, -1, 2, -2, 3, -3)


def test_project_resolved_interleaves_parts():
    u = np.zeros(8, dtype=complex)
    u[0] = 1.0 + 2.0j
    u[1] = 3.0 - 1.0j
    u[7] = -0.5 + 0.25j
    out = project_resolved(u, (0, 1, -1), 8)
    assert np.array_equal(out, [1.0, 2.0, 3.0, -1.0, -0.5, 0.25])


def test_smooth_state_norm_and_zero():
    g = rng_mod.stream(3, 0)
    u = smooth_state(g, 32, 1.7)
    assert norm_h(u) == pytest.approx(1.7, rel=1e-12)
    assert np.array_equal(smooth_state(g, 32, 0.0), np.zeros(32, dtype=complex))


@pytest.mark.parametrize("kwargs", [
    {"epsilon": 0.0},
    {"p": 0},
    {"n_modes": 2},           # below the minimum size
    {"n_modes": 15},          # odd
])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        CglParams(**{"n_modes": 16, "dt_log2": 4, **kwargs})


def test_params_step_properties():
    params = CglParams(n_modes=16, dt_log2=5)
    assert params.n_steps == 32
    assert params.dt == pytest.approx(1.0 / 32.0)


# ---------------------------------------------------------------------------
# linear flow oracles


def test_linear_unforced_segment_is_exact_decay(small_linear_model):
    model = small_linear_model
    g = rng_mod.stream(5, 1)
    u0 = smooth_state(g, 16, 1.0)
    u1 = model.shift(u0, zero_force(model.params))
    assert np.allclose(u1, np.exp(-model.lam) * u0, rtol=1e-13, atol=1e-16)


def test_linear_forced_segment_matches_duhamel(small_linear_model, rng):
    # variation of constants for a force held constant on each sub-step
    model = small_linear_model
    params = model.params
    u0 = smooth_state(rng_mod.stream(5, 2), 16, 0.5)
    f = rng.standard_normal((params.n_steps, 16)) + 1j * rng.standard_normal((params.n_steps, 16))
    u1 = model.shift(u0, f)
    h = params.dt
    lam = model.lam
    expected = np.exp(-lam) * u0
    for n in range(params.n_steps):
        t_left = 1.0 - (n + 1) * h
        with np.errstate(invalid="ignore", divide="ignore"):
            weight = np.where(lam == 0.0, h, (1.0 - np.exp(-lam * h)) / lam)
        expected = expected + np.exp(-lam * t_left) * weight * f[n]
    assert np.allclose(u1, expected, rtol=1e-12, atol=1e-15)


# ---------------------------------------------------------------------------
# nonlinearity


def test_nonlinearity_single_mode_closed_form(small_model):
    # for u = A e^{ikx}: |u|^2 u = |A|^2 A e^{ikx}, so B acts diagonally
    model = small_model
    u = np.zeros(16, dtype=complex)
    k, amp = 3, 0.7 - 0.2j
    u[k] = amp
    b = model.nonlinearity(u)
    expected = 1j * (model.params.gamma * k ** 2 * amp + np.abs(amp) ** 2 * amp)
    assert b[k] == pytest.approx(expected, abs=1e-15)
    others = np.delete(b, k)
    assert np.max(np.abs(others)) < 1e-15


@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_nonlinearity_preserves_the_norm(seed):
    model = CglModel(CglParams(n_modes=16, dt_log2=4))
    u = smooth_state(rng_mod.stream(seed, 0), 16, 2.0)
    b = model.nonlinearity(u)
    pairing = np.real(np.vdot(u, b))
    assert abs(pairing) <= 1e-12 * max(1.0, norm_h(u) * norm_h(b))


def test_nonlinearity_is_dealiased():
    # doubling the grid must not change the coefficients of low-mode data
    small = CglModel(CglParams(n_modes=16, dt_log2=4))
    big = CglModel(CglParams(n_modes=32, dt_log2=4))
    u_small = np.zeros(16, dtype=complex)
    u_small[[0, 1, 2, 14, 15]] = [0.3, 0.5 - 0.1j, 0.2j, 0.1, -0.4j]
    u_big = np.zeros(32, dtype=complex)
    u_big[[0, 1, 2, 30, 31]] = u_small[[0, 1, 2, 14, 15]]
    b_small = small.nonlinearity(u_small)
    b_big = big.nonlinearity(u_big)
    assert np.allclose(b_small[:8], b_big[:8], atol=1e-15)
    assert np.allclose(b_small[8:], b_big[24:], atol=1e-15)


def test_higher_power_nonlinearity_closed_form():
    model = CglModel(CglParams(n_modes=16, dt_log2=4, p=2, gamma=0.0))
    u = np.zeros(16, dtype=complex)
    u[1] = 0.5 + 0.5j
    b = model.nonlinearity(u)
    assert b[1] == pytest.approx(1j * np.abs(u[1]) ** 4 * u[1], abs=1e-15)


# ---------------------------------------------------------------------------
# the segment map


def test_trajectory_shapes_and_views(small_model, small_spec):
    profile = small_spec.for_segment(2, 0, 0)
    u0 = smooth_state(rng_mod.stream(2, 9), 16, 0.3)
    traj = small_model.integrate(u0, profile)
    assert traj.us.shape == (33, 16)
    assert traj.stages.shape == (32, 16)
    assert traj.forces.shape == (32, 16)
    assert np.array_equal(traj.initial, u0)
    assert np.array_equal(traj.final, traj.us[-1])
    assert traj.cache is None
    cached = small_model.integrate(u0, profile, cache=True)
    assert cached.cache is not None
    assert np.array_equal(cached.final, traj.final)


def test_force_shape_is_checked(small_model):
    u0 = np.zeros(16, dtype=complex)
    with pytest.raises(ValueError):
        small_model.integrate(u0, np.zeros((5, 16)))


def test_blow_up_raises_with_time(small_model):
    f = zero_force(small_model.params)
    f[3, :] = np.nan
    with pytest.raises(BlowUpError) as err:
        small_model.integrate(np.zeros(16, dtype=complex), f)
    assert err.value.time == pytest.approx(4 * small_model.params.dt)


def test_shift_equals_integrate_final(small_model, small_spec):
    profile = small_spec.for_segment(4, 1, 2)
    u0 = smooth_state(rng_mod.stream(4, 7), 16, 0.4)
    assert np.array_equal(small_model.shift(u0, profile),
                          small_model.integrate(u0, profile).final)


def test_forced_norms_stay_bounded(small_model, small_spec):
    # dissipation beats the bounded force well before norm 5
    u = smooth_state(rng_mod.stream(6, 3), 16, 1.5)
    for seg in range(8):
        u = small_model.shift(u, small_spec.for_segment(6, 0, seg))
        assert norm_h(u) < 5.0
    assert norm_h(u) < 1.0


def test_evolve_ensemble_matches_individual_runs(small_model, small_spec):
    states = np.stack([smooth_state(rng_mod.stream(8, i), 16, 0.5) for i in range(3)])
    forces = [small_spec.for_segment(8, traj, 0) for traj in range(3)]
    batched = small_model.evolve_ensemble(states, forces)
    for i in range(3):
        assert np.array_equal(batched[i], small_model.shift(states[i], forces[i]))
    with pytest.raises(ValueError):
        small_model.evolve_ensemble(states, forces[:2])


def test_linear_flag_drops_the_nonlinearity(small_linear_model):
    u = smooth_state(rng_mod.stream(9, 0), 16, 1.0)
    assert np.array_equal(small_linear_model.nonlinearity(u), np.zeros(16, dtype=complex))
