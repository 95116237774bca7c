"""Pseudospectral complex Ginzburg-Landau dynamics on the 1-D torus.

The state is the vector of Fourier coefficients (FFT ordering) of a complex
field u(x, t) obeying

    du/dt + L u + B(u) = force,      L = epsilon * (k**2 + mass_shift),
    B(u)_k = i * gamma * k**2 * u_k + i * FFT(|u|**(2p) u)_k.

L is diagonal and strictly dissipative once mass_shift > 0; B collects the
dispersive and power-law parts and preserves the H norm.  Products are
evaluated on a grid padded to (p+1) * n_modes points, which dealiases the
degree-(2p+1) nonlinearity exactly.

The unit-time shift map integrates n_steps = 2**dt_log2 sub-steps of an
exponential two-stage scheme.  The forcing is piecewise constant on the step
grid, and the scheme applies it through exact phi-function weights, so runs
with B switched off reproduce the variation-of-constants formula to rounding
accuracy.  The tangent propagator below is the exact derivative of the
discrete step map, not a separate discretisation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError
from .noise import ForceProfile


def phi1(z):
    """(e**z - 1) / z with a series branch near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def phi2(z):
    """(e**z - 1 - z) / z**2 with a series branch near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    safe = np.where(small, 1.0, z)
    series = 0.5 + z / 6.0 + z * z / 24.0 + z ** 3 / 120.0 + z ** 4 / 720.0
    return np.where(small, series, (np.expm1(safe) - safe) / (safe * safe))


def norm_h(u: np.ndarray) -> float:
    """State norm: the l2 norm of the coefficient vector."""
    return float(np.linalg.norm(u))


def dist_h(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.linalg.norm(u - v))


def resolved_modes(n_resolved: int) -> tuple[int, ...]:
    """Wavenumbers ordered 0, 1, -1, 2, -2, ... up to the requested count."""
    out = [0]
    k = 1
    while len(out) < n_resolved:
        out.append(k)
        if len(out) < n_resolved:
            out.append(-k)
        k += 1
    return tuple(out)


def project_resolved(u: np.ndarray, modes: Sequence[int], n_modes: int) -> np.ndarray:
    """Real/imaginary parts of the selected coefficients, interleaved."""
    idx = [k % n_modes for k in modes]
    vals = u[idx]
    out = np.empty(2 * len(idx))
    out[0::2] = vals.real
    out[1::2] = vals.imag
    return out


def smooth_state(rng: np.random.Generator, n_modes: int, norm: float,
                 decay: float = 2.0) -> np.ndarray:
    """Random state with algebraically decaying spectrum, scaled to a given norm."""
    k = np.fft.fftfreq(n_modes, 1.0 / n_modes)
    raw = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    u = raw * (1.0 + np.abs(k)) ** -decay
    if norm == 0.0:
        return np.zeros(n_modes, dtype=complex)
    return u * (norm / np.linalg.norm(u))


def _col(arr: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Broadcast a per-mode vector against a (modes,) or (modes, batch) array."""
    return arr if like.ndim == 1 else arr[:, None]


@dataclass(frozen=True)
class CglParams:
    epsilon: float = 0.4
    gamma: float = 0.4
    p: int = 1
    mass_shift: float = 1.0
    n_modes: int = 64
    dt_log2: int = 7
    linear: bool = False  # drop B entirely; the flow is then diagonal

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.p < 1 or int(self.p) != self.p:
            raise ValueError("the power-law exponent p must be a positive integer")
        if self.n_modes < 4 or self.n_modes % 2:
            raise ValueError("n_modes must be an even number of Fourier modes, at least 4")

    @property
    def n_steps(self) -> int:
        return 2 ** self.dt_log2

    @property
    def dt(self) -> float:
        return 2.0 ** -self.dt_log2


@dataclass
class Trajectory:
    """One unit segment of states and stages, with optional product caches.

    us[n] is the state after n sub-steps; stages[n] is the predictor stage of
    step n.  The caches hold the physical-space fields entering the derivative
    of B at every node, so tangent propagation needs no extra transforms of
    the base states.
    """

    params: CglParams
    us: np.ndarray
    stages: np.ndarray
    forces: np.ndarray
    cache: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None

    @property
    def n_steps(self) -> int:
        return len(self.stages)

    @property
    def initial(self) -> np.ndarray:
        return self.us[0]

    @property
    def final(self) -> np.ndarray:
        return self.us[-1]


class CglModel:
    """Precomputed operators for one parameter set."""

    def __init__(self, params: CglParams):
        self.params = params
        n = params.n_modes
        self.wavenumbers = np.fft.fftfreq(n, 1.0 / n)
        self.ksq = self.wavenumbers ** 2
        self.lam = params.epsilon * (self.ksq + params.mass_shift)
        self.n_pad = (params.p + 1) * n
        h = params.dt
        z = -self.lam * h
        self.decay = np.exp(z)
        self.hphi1 = h * phi1(z)
        self.hphi2 = h * phi2(z)

    # -- transforms ---------------------------------------------------------

    def to_physical(self, u: np.ndarray) -> np.ndarray:
        """Field values on the padded grid (scaled so values are physical)."""
        n = self.params.n_modes
        half = n // 2
        big = np.zeros((self.n_pad,) + u.shape[1:], dtype=complex)
        big[:half] = u[:half]
        big[self.n_pad - half:] = u[half:]
        return np.fft.ifft(big, axis=0) * self.n_pad

    def from_physical(self, w: np.ndarray) -> np.ndarray:
        n = self.params.n_modes
        half = n // 2
        coeff = np.fft.fft(w, axis=0) / self.n_pad
        return np.concatenate([coeff[:half], coeff[self.n_pad - half:]], axis=0)

    # -- right-hand side pieces ----------------------------------------------

    def apply_l(self, u: np.ndarray) -> np.ndarray:
        return _col(self.lam, u) * u

    def nonlinearity(self, u: np.ndarray) -> np.ndarray:
        b, _ = self._b_terms(u, want_cache=False)
        return b

    def _b_terms(self, u, want_cache):
        """B(u) and, on request, the fields needed for its derivative at u."""
        if self.params.linear:
            return np.zeros_like(u), None
        p = self.params.p
        w = self.to_physical(u)
        abs2 = w.real ** 2 + w.imag ** 2
        abs2p = abs2 if p == 1 else abs2 ** p
        b = 1j * (_col(self.ksq, u) * self.params.gamma * u
                  + self.from_physical(abs2p * w))
        if not want_cache:
            return b, None
        # d/du |u|^2p u in physical space: (p+1)|w|^2p dv + p |w|^(2p-2) w^2 conj(dv)
        apow = (p + 1.0) * abs2p
        bsq = (w * w) if p == 1 else p * abs2 ** (p - 1) * (w * w)
        return b, (apow, bsq)

    def _db_apply(self, v, apow, bsq):
        """Derivative of B at a cached node, applied to tangent columns v."""
        if self.params.linear:
            return np.zeros_like(v)
        vp = self.to_physical(v)
        nl = _col(apow, vp) * vp + _col(bsq, vp) * np.conj(vp)
        return 1j * (_col(self.ksq, v) * self.params.gamma * v + self.from_physical(nl))

    # -- unit-time shift map ---------------------------------------------------

    def _force_values(self, force) -> np.ndarray:
        if isinstance(force, ForceProfile):
            return force.spectral_values(self.params.n_steps, self.params.n_modes)
        arr = np.asarray(force)
        if arr.shape != (self.params.n_steps, self.params.n_modes):
            raise ValueError(f"force array must have shape "
                             f"({self.params.n_steps}, {self.params.n_modes})")
        return arr

    def integrate(self, u0: np.ndarray, force, cache: bool = False) -> Trajectory:
        """Advance one unit segment, retaining every sub-step.

        ``force`` is a ForceProfile or a precomputed (n_steps, n_modes) array
        of per-step spectral force values.  With ``cache=True`` the trajectory
        keeps the physical-space fields needed by the tangent propagator.
        """
        f_values = self._force_values(force)
        n_steps = self.params.n_steps
        n = self.params.n_modes
        us = np.empty((n_steps + 1, n), dtype=complex)
        stages = np.empty((n_steps, n), dtype=complex)
        caches = None
        if cache and not self.params.linear:
            caches = (np.empty((n_steps, self.n_pad)), np.empty((n_steps, self.n_pad), complex),
                      np.empty((n_steps, self.n_pad)), np.empty((n_steps, self.n_pad), complex))
        us[0] = u0
        u = np.asarray(u0, dtype=complex)
        for step in range(n_steps):
            f = f_values[step]
            b_u, cache_u = self._b_terms(u, cache)
            a = self.decay * u + self.hphi1 * (f - b_u)
            b_a, cache_a = self._b_terms(a, cache)
            u = a + self.hphi2 * (b_u - b_a)
            if not np.all(np.isfinite(u)):
                raise BlowUpError((step + 1) * self.params.dt)
            stages[step] = a
            us[step + 1] = u
            if caches is not None:
                caches[0][step], caches[1][step] = cache_u
                caches[2][step], caches[3][step] = cache_a
        return Trajectory(params=self.params, us=us, stages=stages,
                          forces=np.asarray(f_values), cache=caches)

    def shift(self, u0: np.ndarray, force) -> np.ndarray:
        """The unit-time shift map: final state only."""
        return self.integrate(u0, force).final

    def evolve_ensemble(self, states: np.ndarray, forces: Sequence[ForceProfile]) -> np.ndarray:
        """Advance a batch of trajectories one segment; states has shape (batch, n_modes)."""
        n_steps = self.params.n_steps
        n = self.params.n_modes
        batch = len(states)
        if len(forces) != batch:
            raise ValueError("one force profile per ensemble member is required")
        f3 = np.zeros((n_steps, n, batch), dtype=complex)
        for i, profile in enumerate(forces):
            f3[:, :, i] = profile.spectral_values(n_steps, n)
        u = np.ascontiguousarray(states.T.astype(complex))
        decay = self.decay[:, None]
        hphi1 = self.hphi1[:, None]
        hphi2 = self.hphi2[:, None]
        for step in range(n_steps):
            b_u, _ = self._b_terms(u, False)
            a = decay * u + hphi1 * (f3[step] - b_u)
            b_a, _ = self._b_terms(a, False)
            u = a + hphi2 * (b_u - b_a)
            if not np.all(np.isfinite(u)):
                raise BlowUpError((step + 1) * self.params.dt)
        return u.T

    # -- tangent propagation ---------------------------------------------------

    def _node_cache(self, traj: Trajectory, step: int):
        if self.params.linear:
            return (None, None), (None, None)
        if traj.cache is None:
            raise ValueError("tangent propagation needs a trajectory integrated with cache=True")
        apow_u, bsq_u, apow_a, bsq_a = traj.cache
        return (apow_u[step], bsq_u[step]), (apow_a[step], bsq_a[step])

    def propagate_tangent(self, traj: Trajectory, v0: np.ndarray,
                          source: Callable[[int], np.ndarray] | None = None) -> np.ndarray:
        """Exact derivative of the discrete segment map along traj.

        Solves the linearisation of the stepped scheme for an initial tangent
        v0 and an additive forcing perturbation given per step by ``source``
        (same piecewise-constant convention as the forcing itself).  v0 may be
        a vector (n_modes,) or a block of columns (n_modes, cols).
        """
        v = np.asarray(v0, dtype=complex)
        for step in range(traj.n_steps):
            node_u, node_a = self._node_cache(traj, step)
            db_u_v = self._db_apply(v, *node_u)
            rhs = -db_u_v if source is None else source(step) - db_u_v
            a = _col(self.decay, v) * v + _col(self.hphi1, v) * rhs
            db_a_a = self._db_apply(a, *node_a)
            v = a + _col(self.hphi2, v) * (db_u_v - db_a_a)
        return v

    def tangent_step(self, traj: Trajectory, xi_values: np.ndarray,
                     v0: np.ndarray | None = None) -> np.ndarray:
        """Response of the segment map to a forcing perturbation given as
        per-step spectral values of shape (n_steps, n_modes)."""
        xi_values = np.asarray(xi_values)
        if v0 is None:
            v0 = np.zeros(self.params.n_modes, dtype=complex)
        return self.propagate_tangent(traj, v0, source=lambda n: xi_values[n])


@dataclass
class LinearizedOperator:
    """Real matrix of resolved-component responses to truncated force coefficients.

    Column order matches the truncated embedding: mode-major, real channel
    before imaginary, Haar functions in flat order.  Row order interleaves the
    real and imaginary parts of the resolved coefficients.
    """

    matrix: np.ndarray
    modes: tuple[int, ...]
    amplitudes: np.ndarray
    resolved: tuple[int, ...]
    k_ctl: int
    n_modes: int

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return self.matrix @ phi

    def project(self, u: np.ndarray) -> np.ndarray:
        return project_resolved(u, self.resolved, self.n_modes)

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)


def build_linearized(model: CglModel, traj: Trajectory, profile: ForceProfile,
                     k_ctl: int, n_resolved: int) -> LinearizedOperator:
    """Assemble the response matrix by one batched tangent propagation.

    Each column is the tangent response at the end of the segment to a unit
    truncated coefficient riding on the given base trajectory.
    """
    from . import haar, noise

    n = model.params.n_modes
    n_tr = noise.n_truncated(k_ctl)
    cols = 2 * len(profile.modes) * n_tr
    modes_out = resolved_modes(n_resolved)
    if cols == 0:
        return LinearizedOperator(np.zeros((2 * n_resolved, 0)), profile.modes,
                                  np.asarray(profile.amplitudes), modes_out, k_ctl, n)
    hgrid = haar.values_on_grid(k_ctl, model.params.n_steps)
    rows = np.empty(cols, dtype=int)
    scales = np.empty(cols, dtype=complex)
    hsel = np.empty(cols, dtype=int)
    col = 0
    for j, k in enumerate(profile.modes):
        for channel in (1.0, 1.0j):
            for fn in range(n_tr):
                rows[col] = k % n
                scales[col] = profile.amplitudes[j] * channel
                hsel[col] = fn
                col += 1
    buffer = np.zeros((n, cols), dtype=complex)
    col_index = np.arange(cols)

    def source(step: int) -> np.ndarray:
        buffer[rows, col_index] = scales * hgrid[step, hsel]
        return buffer

    v_final = model.propagate_tangent(traj, np.zeros((n, cols), dtype=complex), source)
    matrix = np.empty((2 * n_resolved, cols))
    for r, k in enumerate(modes_out):
        matrix[2 * r] = v_final[k % n].real
        matrix[2 * r + 1] = v_final[k % n].imag
    return LinearizedOperator(matrix, profile.modes, np.asarray(profile.amplitudes),
                              modes_out, k_ctl, n)
