import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from redmix import diagnostics as diag
from redmix import rng as rng_mod
from redmix.coupling import Coupler, CouplingPolicy
from redmix.dynamics import CglModel, CglParams, norm_h, resolved_modes, smooth_state
from redmix.errors import ConfigError
from redmix.noise import ForceSpec, decay_coefficients, density


def small_force_spec(amp=0.2, modes=(0, 1, -1)):
    return ForceSpec(modes=modes, amplitudes=(amp,) * len(modes),
                     c=tuple(decay_coefficients(3, 1.0, 2.0)))


# ---------------------------------------------------------------------------
# observables


def test_observable_values():
    states = np.array([[1.0 + 1.0j, 2.0 - 1.0j, 0.0, 0.5j],
                       [0.0, 0.0, 0.0, 0.0]])
    obs = diag.parse_observables(["norm2", "re:1", "im:-1"], 4)
    vals = obs.evaluate(states)
    assert vals.shape == (3, 2)
    assert vals[0, 0] == pytest.approx(2.0 + 5.0 + 0.25)
    assert vals[1, 0] == 2.0
    assert vals[2, 0] == 0.5          # mode -1 wraps to the last column
    assert np.all(vals[:, 1] == 0.0)


def test_observable_bound_on_ball():
    obs = diag.parse_observables(["norm2", "re:0"], 8)
    bounds = obs.bound_on_ball(2.0)
    assert bounds["norm2"] == 4.0
    assert bounds["re:0"] == 2.0


@pytest.mark.parametrize("names", [[], ["foo"], ["re:x"], ["re:100"], ["abs:1"]])
def test_observable_parsing_rejects(names):
    with pytest.raises(ConfigError):
        diag.parse_observables(names, 16)


# ---------------------------------------------------------------------------
# elementary statistics


def test_wasserstein_hand_values():
    assert diag.wasserstein_1d(np.array([0.0, 1.0]), np.array([1.0, 2.0])) == 1.0
    assert diag.wasserstein_1d(np.array([0.0, 2.0]), np.array([2.0, 0.0])) == 0.0
    assert diag.wasserstein_1d(np.array([1.0, 0.0, 3.0]), np.array([0.0, 1.0, 3.0])) == 0.0
    with pytest.raises(ValueError):
        diag.wasserstein_1d(np.zeros(3), np.zeros(4))


@given(arrays(np.float64, 8, elements=st.floats(-100, 100)),
       arrays(np.float64, 8, elements=st.floats(-100, 100)),
       st.floats(-10, 10))
def test_wasserstein_symmetry_and_shift(a, b, c):
    assert diag.wasserstein_1d(a, b) == pytest.approx(diag.wasserstein_1d(b, a))
    assert diag.wasserstein_1d(a + c, a) == pytest.approx(abs(c), abs=1e-9)


def test_fit_exponential_recovers_exact_decay():
    t = np.arange(12.0)
    fit = diag.fit_exponential(t, 3.0 * np.exp(-0.3 * t))
    assert fit.rate == pytest.approx(-0.3, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.n_points == 12
    assert not fit.inconclusive


def test_fit_exponential_constant_series():
    fit = diag.fit_exponential(np.arange(6.0), np.full(6, 2.5))
    assert fit.rate == pytest.approx(0.0, abs=1e-14)
    assert fit.r_squared == 1.0


def test_fit_exponential_drops_bad_points_and_gives_up():
    t = np.arange(8.0)
    d = np.exp(-t)
    d[2] = 0.0
    d[5] = -1.0
    fit = diag.fit_exponential(t, d)
    assert fit.n_points == 6
    assert fit.rate == pytest.approx(-1.0, abs=1e-12)
    sparse = diag.fit_exponential(t[:4], d[:4])
    assert sparse.inconclusive
    assert math.isnan(sparse.rate)


# ---------------------------------------------------------------------------
# ensembles


def test_run_ensemble_worker_split_is_invisible(small_params):
    spec = small_force_spec()
    u0s = np.stack([smooth_state(rng_mod.stream(1, i), 16, 0.3) for i in range(8)])
    serial = diag.run_ensemble(small_params, spec, u0s, range(8), 3, 42,
                               ("norm2", "re:0"), workers=1)
    parallel = diag.run_ensemble(small_params, spec, u0s, range(8), 3, 42,
                                 ("norm2", "re:0"), workers=2)
    assert np.array_equal(serial[0], parallel[0])
    assert np.array_equal(serial[1], parallel[1])
    assert serial[0].shape == (4, 2, 8)


def test_run_ensemble_streams_are_per_trajectory(small_params):
    spec = small_force_spec()
    u0s = np.zeros((3, 16), dtype=complex)
    series, finals = diag.run_ensemble(small_params, spec, u0s, [4, 5, 6], 2, 7, ("norm2",))
    model = CglModel(small_params)
    u = np.zeros(16, dtype=complex)
    for seg in range(2):
        u = model.shift(u, spec.for_segment(7, 5, seg))
    assert np.array_equal(finals[1], u)


def test_burn_in_state_is_deterministic(small_model):
    spec = small_force_spec()
    a = diag.burn_in_state(small_model, spec, 9, 4)
    b = diag.burn_in_state(small_model, spec, 9, 4)
    c = diag.burn_in_state(small_model, spec, 9, 4, tag=30)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert 0.0 < norm_h(a) < 2.0


# ---------------------------------------------------------------------------
# mixing


def test_mixing_equal_starts_with_shared_streams_is_null(small_params):
    spec = small_force_spec()
    obs = diag.parse_observables(["norm2", "re:0"], 16)
    u0 = smooth_state(rng_mod.stream(2, 0), 16, 0.4)
    report = diag.mixing_distance(small_params, spec, obs, u0, u0.copy(),
                                  ensemble=8, horizon=4, seed=11, shared_streams=True)
    assert np.all(report.aggregate == 0.0)
    assert report.fit.inconclusive
    assert report.separation == 0.0


def test_mixing_requires_even_ensemble(small_params):
    spec = small_force_spec()
    obs = diag.parse_observables(["norm2"], 16)
    with pytest.raises(ConfigError):
        diag.mixing_distance(small_params, spec, obs, np.zeros(16, complex),
                             np.zeros(16, complex), ensemble=5, horizon=3, seed=0)


def test_mixing_report_shapes(small_params):
    spec = small_force_spec()
    obs = diag.parse_observables(["norm2", "im:1"], 16)
    u01 = smooth_state(rng_mod.stream(3, 0), 16, 0.5)
    report = diag.mixing_distance(small_params, spec, obs, u01,
                                  np.zeros(16, complex), ensemble=8, horizon=5, seed=13)
    assert report.distances.shape == (6, 2)
    assert report.aggregate.shape == (6,)
    assert report.floor.shape == (6,)
    assert report.final_distance == report.aggregate[-1]
    assert report.separation == pytest.approx(0.5)
    assert np.array_equal(report.aggregate, report.distances.max(axis=1))


# ---------------------------------------------------------------------------
# structural checks


def test_verify_absorbing_report(small_params):
    spec = small_force_spec(amp=0.05)
    report = diag.verify_absorbing(small_params, spec, [0.2, 0.8], horizon=12, seed=3)
    assert report.norm_series.shape == (13, 2)
    assert report.radius > 0.0
    assert np.all(report.tail_sups <= report.radius + 1e-12)
    assert np.all(report.entry_times <= 12)
    # the larger start decays toward the same band
    assert report.norm_series[-1, 1] < 0.8


def test_verify_zero_stability_linear_rates_are_exact():
    params = CglParams(n_modes=16, dt_log2=5, linear=True)
    states = []
    for k in (0, 1, 2):
        e = np.zeros(16, dtype=complex)
        e[k] = 1.0
        states.append(e)
    report = diag.verify_zero_stability(params, states, horizon=10)
    lam = params.epsilon * (np.array([0.0, 1.0, 4.0]) + params.mass_shift)
    assert np.allclose(report.rates, -lam, atol=1e-10)
    assert report.reference_rate == pytest.approx(-params.epsilon * params.mass_shift)
    assert np.allclose(report.initial_norms, 1.0)


def test_rank_scan_shapes(small_params):
    spec = small_force_spec()
    report = diag.rank_scan(small_params, spec, k_ctl=1, n_resolved=3,
                            n_samples=3, seed=5, burn_in=2)
    assert report.n_rows == 6
    assert report.n_cols == 18
    assert len(report.eff_ranks) == 3
    assert np.all(report.sigma_max >= report.sigma_min)
    assert np.all(report.sigma_min > 0.0)
    assert 0.0 <= report.full_fraction <= 1.0


def test_contraction_survey_linear_contracts_fully():
    model = CglModel(CglParams(n_modes=16, dt_log2=5, linear=True))
    spec = small_force_spec(modes=resolved_modes(6))
    coupler = Coupler(model, spec, CouplingPolicy(lambda_reg=0.0), k_ctl=1, n_resolved=6)
    report = diag.contraction_survey(coupler, delta=1e-3, n_samples=5, seed=6, burn_in=2)
    assert report.accepted == 5
    assert report.contraction_fraction == 1.0
    # unresolved components still shrink by at least the slowest linear factor
    assert np.all(report.ratios < np.exp(-model.lam.min()) + 1e-12)
    assert np.all(report.residuals < 1e-10)


def test_contraction_survey_collects_draws():
    model = CglModel(CglParams(n_modes=16, dt_log2=5, linear=True))
    spec = small_force_spec(modes=resolved_modes(6))
    coupler = Coupler(model, spec, CouplingPolicy(lambda_reg=0.0), k_ctl=1, n_resolved=6)
    report = diag.contraction_survey(coupler, delta=1e-3, n_samples=3, seed=6,
                                     burn_in=2, collect_draws=True)
    per_attempt = 2 * len(spec.modes) * 3
    assert len(report.xi_nominal) == 3 * per_attempt
    assert len(report.xi_perturbed) == len(report.xi_nominal)
    assert np.all(np.abs(report.xi_nominal) <= 1.0)
    # perturbed draws differ from the nominal ones but only slightly
    gap = np.abs(report.xi_perturbed - report.xi_nominal)
    assert gap.max() > 0.0
    assert gap.max() < 0.5


def test_marginal_law_identity_map_vanishes():
    model = CglModel(CglParams(n_modes=16, dt_log2=5, linear=True))
    spec = small_force_spec(modes=resolved_modes(6))
    coupler = Coupler(model, spec, CouplingPolicy(lambda_reg=0.0), k_ctl=1, n_resolved=6)
    report = diag.marginal_law_distance(coupler, [1e-2, 1e-3], n_samples=4, seed=8,
                                        identity_map=True)
    assert np.all(report.ks_values == 0.0)
    assert not report.inconclusive
    assert math.isnan(report.exponent)
    assert np.all(report.deltas[:-1] > report.deltas[1:])


# ---------------------------------------------------------------------------
# noise-side checks


def test_orthonormality_error_is_tiny():
    assert diag.orthonormality_error(6) <= 1e-12


def test_boundedness_survey_small():
    c = decay_coefficients(4, 1.0, 2.0)
    report = diag.boundedness_survey(c, density("uniform"), n_paths=200, seed=1)
    assert report.n_paths == 200
    assert report.all_within
    assert report.max_abs <= report.bound


def test_donsker_ks_report_fields():
    report = diag.donsker_ks(2.0, density("uniform"), n_scale=64, n_samples=500, seed=2)
    assert report.sigma == pytest.approx(2.0 / math.sqrt(3.0))
    assert 0.0 <= report.ks_statistic <= 1.0
    assert report.n_samples == 500
