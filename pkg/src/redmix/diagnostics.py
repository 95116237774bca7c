"""Statistical diagnostics: mixing distances, structural checks, law scans.

Everything here is an observer; nothing feeds back into the dynamics.  All
randomness is addressed through the stream layout in :mod:`redmix.rng`, so
results are reproducible for a given master seed and independent of how work
is split across processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import haar, noise, rng as rng_mod
from .coupling import Coupler
from .dynamics import CglModel, CglParams, build_linearized, dist_h, norm_h, smooth_state
from .errors import ConfigError
from .noise import ForceSpec

# aux-stream tags, one per diagnostic so draws never collide
_TAG_BURN = 1
_TAG_ABSORB = 2
_TAG_SCAN_FORCE = 3
_TAG_SURVEY_FORCE = 4
_TAG_SURVEY_DIR = 5
_TAG_BOUND = 6
_TAG_DONSKER = 7


# ---------------------------------------------------------------------------
# Observables


@dataclass(frozen=True)
class ObservableSet:
    """Named scalar functions of the state, evaluated on stacked ensembles."""

    names: tuple[str, ...]
    n_modes: int

    def evaluate(self, states: np.ndarray) -> np.ndarray:
        """states (batch, n_modes) -> values (n_observables, batch)."""
        out = np.empty((len(self.names), len(states)))
        for i, name in enumerate(self.names):
            out[i] = _apply_observable(name, states, self.n_modes)
        return out

    def bound_on_ball(self, radius: float) -> dict[str, float]:
        """Upper bound of |observable| over states of norm <= radius."""
        return {name: radius ** 2 if name == "norm2" else radius for name in self.names}


def _apply_observable(name: str, states: np.ndarray, n_modes: int) -> np.ndarray:
    if name == "norm2":
        return np.sum(states.real ** 2 + states.imag ** 2, axis=1)
    part, _, num = name.partition(":")
    k = int(num)
    col = states[:, k % n_modes]
    return col.real if part == "re" else col.imag


def parse_observables(names, n_modes: int) -> ObservableSet:
    for name in names:
        if name == "norm2":
            continue
        part, sep, num = name.partition(":")
        if part not in ("re", "im") or not sep:
            raise ConfigError(f"unknown observable {name!r}; use 'norm2', 're:k' or 'im:k'")
        try:
            k = int(num)
        except ValueError:
            raise ConfigError(f"observable {name!r} needs an integer wavenumber")
        if abs(k) > n_modes // 2 - 1:
            raise ConfigError(f"observable {name!r} refers to an unresolvable wavenumber")
    if not names:
        raise ConfigError("at least one observable is required")
    return ObservableSet(tuple(names), n_modes)


# ---------------------------------------------------------------------------
# Elementary statistics


def wasserstein_1d(a: np.ndarray, b: np.ndarray) -> float:
    """First Wasserstein distance of two equally sized empirical laws."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("samples must be 1-D and equally sized")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


@dataclass
class ExpFit:
    rate: float
    intercept: float
    r_squared: float
    n_points: int
    inconclusive: bool


def fit_exponential(times, values) -> ExpFit:
    """Least-squares fit of log(values) = intercept + rate * times.

    Points with non-positive or non-finite values are dropped; fewer than
    five usable points marks the fit inconclusive.  A constant series fits
    exactly with rate zero.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(values, dtype=float)
    keep = np.isfinite(d) & (d > 0.0)
    t, d = t[keep], d[keep]
    if len(t) < 5:
        return ExpFit(math.nan, math.nan, 0.0, len(t), True)
    y = np.log(d)
    rate, intercept = np.polyfit(t, y, 1)
    resid = y - (intercept + rate * t)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ExpFit(float(rate), float(intercept), r2, len(t), False)


# ---------------------------------------------------------------------------
# Ensemble propagation (worker-safe)


def _evolve_collect(params: CglParams, force_spec: ForceSpec, u0s: np.ndarray,
                    traj_ids, horizon: int, seed: int, obs_names) -> tuple[np.ndarray, np.ndarray]:
    model = CglModel(params)
    obs = parse_observables(obs_names, params.n_modes)
    states = np.array(u0s, dtype=complex)
    series = np.empty((horizon + 1, len(obs_names), len(states)))
    series[0] = obs.evaluate(states)
    for seg in range(horizon):
        forces = [force_spec.for_segment(seed, t, seg) for t in traj_ids]
        states = model.evolve_ensemble(states, forces)
        series[seg + 1] = obs.evaluate(states)
    return series, states


def _ensemble_worker(payload):
    return _evolve_collect(*payload)


def run_ensemble(params: CglParams, force_spec: ForceSpec, u0s: np.ndarray, traj_ids,
                 horizon: int, seed: int, obs_names, workers: int = 1):
    """Observable series (horizon+1, n_obs, batch) plus final states.

    Trajectory streams are addressed by id, so any split across workers
    returns bit-identical numbers in the same order.
    """
    traj_ids = list(traj_ids)
    if workers <= 1 or len(traj_ids) < 2 * workers:
        return _evolve_collect(params, force_spec, u0s, traj_ids, horizon, seed, obs_names)
    chunks = np.array_split(np.arange(len(traj_ids)), workers)
    payloads = [(params, force_spec, u0s[idx], [traj_ids[i] for i in idx],
                 horizon, seed, obs_names) for idx in chunks if len(idx)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_ensemble_worker, payloads))
    series = np.concatenate([p[0] for p in parts], axis=2)
    finals = np.concatenate([p[1] for p in parts], axis=0)
    return series, finals


def burn_in_state(model: CglModel, force_spec: ForceSpec, seed: int,
                  n_segments: int, tag: int = _TAG_BURN) -> np.ndarray:
    """Drive the zero state into the absorbing region with auxiliary draws."""
    u = np.zeros(model.params.n_modes, dtype=complex)
    for seg in range(n_segments):
        force = force_spec.sample(rng_mod.aux_stream(seed, tag, seg))
        u = model.shift(u, force)
    return u


# ---------------------------------------------------------------------------
# Mixing distance between two ensembles


@dataclass
class MixingReport:
    times: np.ndarray
    observables: tuple[str, ...]
    distances: np.ndarray        # (len(times), n_observables)
    aggregate: np.ndarray        # max over observables
    floor: np.ndarray            # split-sample noise floor, same aggregation
    fit: ExpFit
    ensemble: int
    separation: float

    @property
    def final_distance(self) -> float:
        return float(self.aggregate[-1])

    @property
    def final_floor(self) -> float:
        return float(self.floor[-1])


def mixing_distance(params: CglParams, force_spec: ForceSpec, observables: ObservableSet,
                    u01: np.ndarray, u02: np.ndarray, ensemble: int, horizon: int,
                    seed: int, workers: int = 1, shared_streams: bool = False) -> MixingReport:
    """Worst-observable Wasserstein distance between two point-started ensembles.

    The floor is the distance between the two halves of each ensemble,
    averaged over the pair; values near the floor are statistically
    indistinguishable from equality.  ``shared_streams=True`` drives both
    ensembles with identical draws (a null check: distances vanish when the
    initial conditions agree).
    """
    if ensemble < 4 or ensemble % 2:
        raise ConfigError("mixing needs an even ensemble of at least 4")
    ids_a = range(ensemble)
    ids_b = ids_a if shared_streams else range(ensemble, 2 * ensemble)
    starts_a = np.tile(u01, (ensemble, 1))
    starts_b = np.tile(u02, (ensemble, 1))
    series_a, _ = run_ensemble(params, force_spec, starts_a, ids_a, horizon, seed,
                               observables.names, workers)
    series_b, _ = run_ensemble(params, force_spec, starts_b, ids_b, horizon, seed,
                               observables.names, workers)
    n_times = horizon + 1
    n_obs = len(observables.names)
    distances = np.empty((n_times, n_obs))
    floor = np.empty((n_times, n_obs))
    for t in range(n_times):
        for o in range(n_obs):
            a, b = series_a[t, o], series_b[t, o]
            distances[t, o] = wasserstein_1d(a, b)
            floor[t, o] = 0.5 * (wasserstein_1d(a[0::2], a[1::2])
                                 + wasserstein_1d(b[0::2], b[1::2]))
    aggregate = distances.max(axis=1)
    aggregate_floor = floor.max(axis=1)
    times = np.arange(n_times, dtype=float)
    # the half-sample floor sits sqrt(2) above the full-sample noise level,
    # so this keeps exactly the points that clear twice that level
    usable = aggregate > math.sqrt(2.0) * aggregate_floor
    fit = fit_exponential(times[usable], aggregate[usable])
    return MixingReport(times=times, observables=observables.names, distances=distances,
                        aggregate=aggregate, floor=aggregate_floor, fit=fit,
                        ensemble=ensemble, separation=dist_h(u01, u02))


# ---------------------------------------------------------------------------
# Structural checks


@dataclass
class AbsorbingReport:
    radius: float
    initial_norms: np.ndarray
    entry_times: np.ndarray
    tail_sups: np.ndarray
    norm_series: np.ndarray      # (horizon+1, n_traj)
    times: np.ndarray


def verify_absorbing(params: CglParams, force_spec: ForceSpec, initial_norms,
                     horizon: int, seed: int, workers: int = 1) -> AbsorbingReport:
    """Estimate the absorbing radius and per-trajectory entry times.

    The radius is the largest norm seen over the second half of the window;
    a trajectory has entered once it never exceeds that level again.
    """
    initial_norms = np.asarray(initial_norms, dtype=float)
    u0s = np.stack([smooth_state(rng_mod.aux_stream(seed, _TAG_ABSORB, i),
                                 params.n_modes, r) for i, r in enumerate(initial_norms)])
    series, _ = run_ensemble(params, force_spec, u0s, range(len(u0s)), horizon, seed,
                             ("norm2",), workers)
    norms = np.sqrt(series[:, 0, :])
    radius = float(norms[horizon // 2:, :].max())
    n_traj = norms.shape[1]
    entry = np.zeros(n_traj, dtype=int)
    tail = np.empty(n_traj)
    for i in range(n_traj):
        above = np.nonzero(norms[:, i] > radius)[0]
        entry[i] = 0 if len(above) == 0 else int(above[-1]) + 1
        tail[i] = norms[entry[i]:, i].max()
    return AbsorbingReport(radius=radius, initial_norms=initial_norms, entry_times=entry,
                           tail_sups=tail, norm_series=norms,
                           times=np.arange(horizon + 1, dtype=float))


@dataclass
class ZeroStabilityReport:
    initial_norms: np.ndarray
    rates: np.ndarray
    reference_rate: float        # -epsilon * mass_shift, the slow-mode bound
    norm_series: np.ndarray
    times: np.ndarray


def verify_zero_stability(params: CglParams, states, horizon: int) -> ZeroStabilityReport:
    """Decay rate of each unforced trajectory, from the tail of log-norms."""
    model = CglModel(params)
    zero_force = np.zeros((params.n_steps, params.n_modes), dtype=complex)
    n_traj = len(states)
    norms = np.empty((horizon + 1, n_traj))
    for i, u0 in enumerate(states):
        u = np.asarray(u0, dtype=complex)
        norms[0, i] = norm_h(u)
        for seg in range(horizon):
            u = model.shift(u, zero_force)
            norms[seg + 1, i] = norm_h(u)
    times = np.arange(horizon + 1, dtype=float)
    half = horizon // 2
    rates = np.array([fit_exponential(times[half:], norms[half:, i]).rate
                      for i in range(n_traj)])
    return ZeroStabilityReport(initial_norms=np.array([norm_h(s) for s in states]),
                               rates=rates,
                               reference_rate=-params.epsilon * params.mass_shift,
                               norm_series=norms, times=times)


@dataclass
class RankScanReport:
    sigma_max: np.ndarray
    sigma_min: np.ndarray
    eff_ranks: np.ndarray
    n_rows: int
    n_cols: int
    threshold: float
    full_fraction: float


def rank_scan(params: CglParams, force_spec: ForceSpec, k_ctl: int, n_resolved: int,
              n_samples: int, seed: int, burn_in: int = 10,
              threshold: float = 1e-8) -> RankScanReport:
    """Singular-value survey of the linearised response along one long run.

    Full effective rank on every sample is evidence that the truncated
    coefficients steer all resolved components; the fraction is reported,
    not asserted.
    """
    model = CglModel(params)
    u = burn_in_state(model, force_spec, seed, burn_in)
    s_max = np.empty(n_samples)
    s_min = np.empty(n_samples)
    ranks = np.empty(n_samples, dtype=int)
    rows = cols = 0
    for i in range(n_samples):
        force = force_spec.sample(rng_mod.aux_stream(seed, _TAG_SCAN_FORCE, i))
        traj = model.integrate(u, force, cache=True)
        op = build_linearized(model, traj, force, k_ctl, n_resolved)
        sig = op.singular_values()
        rows, cols = op.matrix.shape
        s_max[i], s_min[i] = float(sig[0]), float(sig[-1])
        ranks[i] = int(np.sum(sig > threshold * sig[0]))
        u = traj.final
    full = min(rows, cols)
    return RankScanReport(sigma_max=s_max, sigma_min=s_min, eff_ranks=ranks,
                          n_rows=rows, n_cols=cols, threshold=threshold,
                          full_fraction=float(np.mean(ranks == full)))


# ---------------------------------------------------------------------------
# Contraction and law-distance surveys


@dataclass
class ContractionReport:
    delta: float
    ratios: np.ndarray           # |u1 - v1| / delta over accepted attempts
    residuals: np.ndarray
    attempts: int
    accepted: int
    guard_rejections: int
    residual_rejections: int
    contraction_fraction: float  # fraction of accepted attempts with ratio <= 1/2
    xi_nominal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    xi_perturbed: np.ndarray = field(default_factory=lambda: np.zeros(0))


def contraction_survey(coupler: Coupler, delta: float, n_samples: int, seed: int,
                       burn_in: int = 10, attempt_cap: int | None = None,
                       collect_draws: bool = False, stream_tag: int = 0) -> ContractionReport:
    """Homological attempts at fixed separation from points on one long run.

    Each attempt perturbs the base point by delta along a fresh random smooth
    unit direction and runs the solve on a fresh force segment.  The base
    point advances along the nominal leg, so samples stay in the stationary
    regime.  With ``collect_draws`` the truncated draws of the nominal and
    perturbed forces are pooled for law-distance estimates.
    """
    model = coupler.model
    u = burn_in_state(model, coupler.force_spec, seed, burn_in)
    cap = attempt_cap if attempt_cap is not None else 10 * n_samples
    ratios, residuals = [], []
    nominal, perturbed = [], []
    attempts = accepted = guard = resid = 0
    n_tr = noise.n_truncated(coupler.k_ctl)
    while accepted < n_samples and attempts < cap:
        force = coupler.force_spec.sample(
            rng_mod.aux_stream(seed, _TAG_SURVEY_FORCE, stream_tag, attempts))
        direction = smooth_state(
            rng_mod.aux_stream(seed, _TAG_SURVEY_DIR, stream_tag, attempts),
            model.params.n_modes, 1.0)
        v = u + delta * direction
        out = coupler.attempt(u, v, force)
        attempts += 1
        if out.accepted:
            accepted += 1
            v_end = model.shift(v, out.eta_prime)
            ratios.append(dist_h(out.u_end, v_end) / delta)
            residuals.append(out.rho)
            if collect_draws:
                nominal.append(_truncated_draws(force, n_tr))
                perturbed.append(_truncated_draws(out.eta_prime, n_tr))
        elif out.reason == "support":
            guard += 1
        else:
            resid += 1
        u = out.u_end
    ratios = np.asarray(ratios)
    return ContractionReport(
        delta=delta, ratios=ratios, residuals=np.asarray(residuals),
        attempts=attempts, accepted=accepted, guard_rejections=guard,
        residual_rejections=resid,
        contraction_fraction=float(np.mean(ratios <= 0.5)) if len(ratios) else math.nan,
        xi_nominal=np.concatenate(nominal) if nominal else np.zeros(0),
        xi_perturbed=np.concatenate(perturbed) if perturbed else np.zeros(0))


def _truncated_draws(profile, n_tr: int) -> np.ndarray:
    parts = []
    for re, im in profile.paths:
        parts.append(re.xi[:n_tr])
        parts.append(im.xi[:n_tr])
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class MarginalLawReport:
    deltas: np.ndarray
    ks_values: np.ndarray
    pool_sizes: np.ndarray
    accepted: np.ndarray
    exponent: float
    inconclusive: bool


def marginal_law_distance(coupler: Coupler, delta_grid, n_samples: int, seed: int,
                          burn_in: int = 10, identity_map: bool = False) -> MarginalLawReport:
    """KS distance between nominal and shifted draw pools across separations.

    The pools are paired (each shifted draw comes from its own nominal draw),
    so the statistic measures the law shift directly rather than sampling
    noise.  ``identity_map=True`` replaces the solve by a zero shift, which
    must give exactly zero distance at every separation.
    """
    deltas = np.asarray(sorted(delta_grid, reverse=True), dtype=float)
    ks = np.empty(len(deltas))
    sizes = np.zeros(len(deltas), dtype=int)
    counts = np.zeros(len(deltas), dtype=int)
    for i, delta in enumerate(deltas):
        if identity_map:
            pool = _identity_pool(coupler, n_samples, seed, i)
            ks[i] = stats.ks_2samp(pool, pool).statistic if len(pool) else math.nan
            sizes[i] = len(pool)
            counts[i] = n_samples
            continue
        rep = contraction_survey(coupler, delta, n_samples, seed, burn_in=burn_in,
                                 collect_draws=True, stream_tag=100 + i)
        counts[i] = rep.accepted
        sizes[i] = len(rep.xi_nominal)
        if rep.accepted == 0:
            ks[i] = math.nan
            continue
        ks[i] = stats.ks_2samp(rep.xi_nominal, rep.xi_perturbed).statistic
    usable = np.isfinite(ks) & (ks > 0.0)
    if np.sum(usable) >= 2:
        exponent = float(np.polyfit(np.log(deltas[usable]), np.log(ks[usable]), 1)[0])
        inconclusive = False
    else:
        exponent = math.nan
        inconclusive = not identity_map
    return MarginalLawReport(deltas=deltas, ks_values=ks, pool_sizes=sizes,
                             accepted=counts, exponent=exponent, inconclusive=inconclusive)


def _identity_pool(coupler: Coupler, n_samples: int, seed: int, tag: int) -> np.ndarray:
    n_tr = noise.n_truncated(coupler.k_ctl)
    parts = [_truncated_draws(coupler.force_spec.sample(
        rng_mod.aux_stream(seed, _TAG_SURVEY_FORCE, 200 + tag, i)), n_tr)
        for i in range(n_samples)]
    return np.concatenate(parts) if parts else np.zeros(0)


# ---------------------------------------------------------------------------
# Noise-side checks


def orthonormality_error(max_level: int) -> float:
    """Largest deviation of the Haar Gram matrix from the identity."""
    gram = haar.gram_matrix(max_level)
    return float(np.max(np.abs(gram - np.eye(len(gram)))))


@dataclass
class BoundednessReport:
    n_paths: int
    bound: float
    max_abs: float
    all_within: bool


def boundedness_survey(c, dens: noise.NoiseDensity, n_paths: int, seed: int) -> BoundednessReport:
    """Sample many paths at once and compare sup norms with the a priori bound."""
    c = np.asarray(c, dtype=float)
    cells = noise.sample_cell_batch(c, dens, rng_mod.aux_stream(seed, _TAG_BOUND), n_paths)
    max_abs = float(np.max(np.abs(cells)))
    bound = noise.sup_bound(c)
    return BoundednessReport(n_paths=n_paths, bound=bound, max_abs=max_abs,
                             all_within=max_abs <= bound * (1.0 + 1e-12))


@dataclass
class DonskerReport:
    n_samples: int
    n_scale: int
    ks_statistic: float
    sigma: float


def donsker_ks(c0: float, dens: noise.NoiseDensity, n_scale: int, n_samples: int,
               seed: int) -> DonskerReport:
    """KS distance of the rescaled integrated noise from a standard normal."""
    samples = noise.donsker_samples(n_samples, n_scale, c0,
                                    dens, rng_mod.aux_stream(seed, _TAG_DONSKER))
    sigma = abs(c0) * math.sqrt(dens.variance)
    stat = float(stats.kstest(samples / sigma, "norm").statistic)
    return DonskerReport(n_samples=n_samples, n_scale=n_scale, ks_statistic=stat, sigma=sigma)
