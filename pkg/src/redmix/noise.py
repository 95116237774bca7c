"""Bounded red noise built from random Haar series.

A scalar path on one unit segment is

    eta(t) = sum_k c_k sum_l xi_{k,l} h_{k,l}(t),

with i.i.d. draws xi bounded by 1 and level weights c_k decaying like
c0 * k**-q * 2**(-k/2) for q > 1.  The decay makes the sup norm of the path
summable, so every sample is uniformly bounded by a constant that depends
only on (c_k).  A vector force assigns one complex path (two scalar paths,
real and imaginary channel) to each driven Fourier mode, scaled by a fixed
amplitude per mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.special import zeta

from . import haar, rng as rng_mod
from .errors import ConfigError


# ---------------------------------------------------------------------------
# Densities for the i.i.d. draws


@dataclass(frozen=True)
class NoiseDensity:
    """Law of a single draw: supported on [-1, 1], Lipschitz, positive at 0."""

    kind: str
    variance: float

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-1.0, 1.0, size=size)
        if self.kind == "raised_cosine":
            return _sample_raised_cosine(rng, size)
        raise ConfigError(f"unknown density kind {self.kind!r}")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= 1.0
        if self.kind == "uniform":
            return np.where(inside, 0.5, 0.0)
        return np.where(inside, 0.5 * (1.0 + np.cos(np.pi * x)), 0.0)


def _sample_raised_cosine(rng: np.random.Generator, size) -> np.ndarray:
    """Rejection sampling under a uniform envelope of height 1."""
    n = int(np.prod(size)) if not np.isscalar(size) else int(size)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(n - filled, 64)
        x = rng.uniform(-1.0, 1.0, size=m)
        u = rng.uniform(0.0, 1.0, size=m)
        keep = x[u <= 0.5 * (1.0 + np.cos(np.pi * x))]
        take = min(len(keep), n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out.reshape(size) if not np.isscalar(size) else out


DENSITIES = {
    "uniform": NoiseDensity("uniform", variance=1.0 / 3.0),
    "raised_cosine": NoiseDensity("raised_cosine", variance=1.0 / 3.0 - 2.0 / np.pi ** 2),
}


def density(kind: str) -> NoiseDensity:
    try:
        return DENSITIES[kind]
    except KeyError:
        raise ConfigError(f"unknown density kind {kind!r}; choose from {sorted(DENSITIES)}")


# ---------------------------------------------------------------------------
# Level weights


def decay_coefficients(max_level: int, c0: float, q: float) -> np.ndarray:
    """Weights c_k = c0 * k**-q * 2**(-k/2) (c_0 = c0) for levels 0..max_level."""
    k = np.arange(1, max_level + 1, dtype=float)
    return np.concatenate(([c0], c0 * k ** -q * 2.0 ** (-k / 2.0)))


def check_decay(c: np.ndarray, q: float, bound: float) -> None:
    """Require |c_k| <= bound * k**-q * 2**(-k/2) for k >= 1 and q > 1."""
    if q <= 1.0:
        raise ConfigError(f"decay exponent q must exceed 1, got {q}")
    k = np.arange(1, len(c), dtype=float)
    cap = bound * k ** -q * 2.0 ** (-k / 2.0)
    if np.any(np.abs(c[1:]) > cap * (1.0 + 1e-12)):
        raise ConfigError("level weights violate the summable-decay bound")


def sup_bound(c: np.ndarray) -> float:
    """Uniform bound on any path with these weights and |xi| <= 1."""
    k = np.arange(len(c), dtype=float)
    return float(np.sum(np.abs(c) * 2.0 ** (k / 2.0)))


def neglected_sup_tail(c0: float, q: float, max_level: int) -> float:
    """Sup-norm mass of the levels dropped by truncating at max_level."""
    partial = sum(k ** -q for k in range(1, max_level + 1))
    return float(abs(c0) * (zeta(q) - partial))


# ---------------------------------------------------------------------------
# Scalar paths


def _cells_from_draws(c: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Piecewise-constant values on the 2**(K+1) dyadic cells.

    Accepts a single draw vector (n_functions,) or a batch
    (n_paths, n_functions); the cell axis is always the last one.
    """
    single = xi.ndim == 1
    draws = xi[None, :] if single else xi
    max_level = len(c) - 1
    # invariant: after level k the values live on 2**(k+1) cells
    vals = np.repeat(c[0] * draws[:, :1], 2, axis=1)
    for level in range(1, max_level + 1):
        vals = np.repeat(vals, 2, axis=1)
        lo = 2 ** level - 1
        block = draws[:, lo:lo + 2 ** level]
        signed = np.repeat(block, 2, axis=1)
        signed[:, 1::2] *= -1.0
        vals = vals + (c[level] * 2.0 ** (level / 2.0)) * signed
    return vals[0] if single else vals


@dataclass
class HaarNoisePath:
    """One scalar red-noise path on the unit segment."""

    c: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        expected = haar.n_functions(len(self.c) - 1)
        if len(self.xi) != expected:
            raise ValueError(f"need {expected} draws for {len(self.c)} levels, got {len(self.xi)}")

    @property
    def max_level(self) -> int:
        return len(self.c) - 1

    @cached_property
    def cells(self) -> np.ndarray:
        return _cells_from_draws(self.c, self.xi)

    def value_at(self, t: float) -> float:
        if not 0.0 <= t < 1.0:
            raise ValueError(f"path is defined on [0, 1), got t={t}")
        n_cells = len(self.cells)
        return float(self.cells[min(int(t * n_cells), n_cells - 1)])

    def sup_bound(self) -> float:
        return sup_bound(self.c)

    def integral_to(self, t: float) -> float:
        """Exact integral over [0, t] for 0 <= t <= 1."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got t={t}")
        n_cells = len(self.cells)
        width = 1.0 / n_cells
        pos = t * n_cells
        full = min(int(pos), n_cells - 1)
        head = self.cells[:full].sum() * width
        return float(head + self.cells[full] * (t - full * width))

    def integral(self) -> float:
        return float(self.cells.sum() / len(self.cells))


def sample_path(c: np.ndarray, dens: NoiseDensity, rng: np.random.Generator) -> HaarNoisePath:
    """Draw one path; draws are guaranteed inside [-1, 1] by the density."""
    xi = dens.sample(rng, haar.n_functions(len(c) - 1))
    return HaarNoisePath(c=np.asarray(c, dtype=float), xi=xi)


def sample_cell_batch(c: np.ndarray, dens: NoiseDensity, rng: np.random.Generator,
                      n_paths: int) -> np.ndarray:
    """Cell values of many independent paths at once, shape (n_paths, 2**(K+1))."""
    draws = dens.sample(rng, (n_paths, haar.n_functions(len(c) - 1)))
    return _cells_from_draws(np.asarray(c, dtype=float), draws)


# ---------------------------------------------------------------------------
# Vector forces


@dataclass
class ForceProfile:
    """One segment of vector forcing: a complex path per driven mode."""

    modes: tuple[int, ...]
    amplitudes: np.ndarray
    c: np.ndarray
    paths: tuple[tuple[HaarNoisePath, HaarNoisePath], ...]  # (re, im) per mode

    @property
    def max_level(self) -> int:
        return len(self.c) - 1

    def coefficients(self, t: float) -> np.ndarray:
        """Complex force coefficient of every driven mode at time t."""
        out = np.empty(len(self.modes), dtype=complex)
        for j, (re, im) in enumerate(self.paths):
            out[j] = self.amplitudes[j] * (re.value_at(t) + 1j * im.value_at(t))
        return out

    def eval_force(self, t: float, n_modes: int) -> np.ndarray:
        """Spectral force vector at time t, in FFT ordering."""
        out = np.zeros(n_modes, dtype=complex)
        coeffs = self.coefficients(t)
        for j, k in enumerate(self.modes):
            out[k % n_modes] = coeffs[j]
        return out

    def spectral_values(self, n_steps: int, n_modes: int) -> np.ndarray:
        """Force on every integrator step, shape (n_steps, n_modes).

        Requires the step grid to resolve the finest Haar level.
        """
        n_cells = 2 ** (self.max_level + 1)
        if n_steps % n_cells != 0:
            raise ValueError(f"n_steps={n_steps} cannot resolve {n_cells} noise cells")
        rep = n_steps // n_cells
        out = np.zeros((n_steps, n_modes), dtype=complex)
        for j, k in enumerate(self.modes):
            cells = self.amplitudes[j] * (self.paths[j][0].cells + 1j * self.paths[j][1].cells)
            out[:, k % n_modes] = np.repeat(cells, rep)
        return out

    def l2_norm(self) -> float:
        """L2(0, 1) norm of the vector force, exact via Haar orthonormality."""
        total = 0.0
        for j in range(len(self.modes)):
            for path in self.paths[j]:
                d = path.c[haar.level_array(path.max_level)] * path.xi
                total += self.amplitudes[j] ** 2 * float(d @ d)
        return math.sqrt(total)


@dataclass(frozen=True)
class ForceSpec:
    """Recipe for drawing force segments; owns no randomness of its own."""

    modes: tuple[int, ...]
    amplitudes: tuple[float, ...]
    c: tuple[float, ...]
    density_kind: str = "uniform"

    def __post_init__(self):
        if len(self.amplitudes) != len(self.modes):
            raise ConfigError("one amplitude per driven mode is required")

    @property
    def density(self) -> NoiseDensity:
        return density(self.density_kind)

    @property
    def coefficients(self) -> np.ndarray:
        return np.asarray(self.c, dtype=float)

    def sample(self, rng: np.random.Generator) -> ForceProfile:
        """Draw one segment; paths come out in (mode, re, im) order."""
        c = self.coefficients
        dens = self.density
        paths = tuple(
            (sample_path(c, dens, rng), sample_path(c, dens, rng))
            for _ in self.modes
        )
        return ForceProfile(modes=self.modes, amplitudes=np.asarray(self.amplitudes),
                            c=c, paths=paths)

    def for_segment(self, seed: int, traj: int, segment: int,
                    independent: bool = False) -> ForceProfile:
        return self.sample(rng_mod.force_stream(seed, traj, segment, independent=independent))


# ---------------------------------------------------------------------------
# Truncated coefficient embedding
#
# Coefficients d = c_level * xi for levels <= k_ctl, ordered mode-major with
# the real channel before the imaginary one.  Haar orthonormality turns the
# L2(0,1) pairing of two truncated forces into a weighted Euclidean product
# of these vectors, with weight amplitude**2 per mode block.


def n_truncated(k_ctl: int) -> int:
    return haar.n_functions(k_ctl)


def embed_truncated(profile: ForceProfile, k_ctl: int) -> np.ndarray:
    if k_ctl > profile.max_level:
        raise ValueError(f"k_ctl={k_ctl} exceeds path level {profile.max_level}")
    n_tr = n_truncated(k_ctl)
    c_flat = profile.c[haar.level_array(profile.max_level)][:n_tr]
    blocks = []
    for re, im in profile.paths:
        blocks.append(c_flat * re.xi[:n_tr])
        blocks.append(c_flat * im.xi[:n_tr])
    if not blocks:
        return np.zeros(0)
    return np.concatenate(blocks)


def extract_truncated(vec: np.ndarray, spec: ForceSpec, k_ctl: int) -> ForceProfile:
    """Inverse of embed_truncated on the truncated set; higher levels are zero."""
    c = spec.coefficients
    n_tr = n_truncated(k_ctl)
    n_all = haar.n_functions(len(c) - 1)
    c_flat = c[haar.level_array(len(c) - 1)][:n_tr]
    if len(vec) != 2 * len(spec.modes) * n_tr:
        raise ValueError("coefficient vector does not match the mode/truncation layout")
    paths = []
    for j in range(len(spec.modes)):
        pair = []
        for ch in range(2):
            xi = np.zeros(n_all)
            xi[:n_tr] = vec[(2 * j + ch) * n_tr:(2 * j + ch + 1) * n_tr] / c_flat
            pair.append(HaarNoisePath(c=c, xi=xi))
        paths.append(tuple(pair))
    return ForceProfile(modes=spec.modes, amplitudes=np.asarray(spec.amplitudes),
                        c=c, paths=tuple(paths))


def column_weights(amplitudes, k_ctl: int) -> np.ndarray:
    """Per-coefficient weight; the embedded norm is ||weights * vec||_2."""
    return np.repeat(np.asarray(amplitudes, dtype=float), 2 * n_truncated(k_ctl))


def e_norm(vec: np.ndarray, amplitudes, k_ctl: int) -> float:
    return float(np.linalg.norm(column_weights(amplitudes, k_ctl) * vec))


def perturb_profile(profile: ForceProfile, phi: np.ndarray, delta: float,
                    k_ctl: int) -> tuple[ForceProfile, float]:
    """Shift the truncated coefficients by delta * phi (phi in coefficient units).

    Returns the new profile and the largest |xi| among modified draws, so the
    caller can enforce the support guard before using the profile.
    """
    n_tr = n_truncated(k_ctl)
    c_flat = profile.c[haar.level_array(profile.max_level)][:n_tr]
    max_abs = 0.0
    paths = []
    for j in range(len(profile.modes)):
        pair = []
        for ch in range(2):
            xi = profile.paths[j][ch].xi.copy()
            xi[:n_tr] = xi[:n_tr] + delta * phi[(2 * j + ch) * n_tr:(2 * j + ch + 1) * n_tr] / c_flat
            max_abs = max(max_abs, float(np.max(np.abs(xi[:n_tr]))) if n_tr else 0.0)
            pair.append(HaarNoisePath(c=profile.c, xi=xi))
        paths.append(tuple(pair))
    return (ForceProfile(modes=profile.modes, amplitudes=profile.amplitudes,
                         c=profile.c, paths=tuple(paths)), max_abs)


# ---------------------------------------------------------------------------
# Diffusive rescaling


def donsker_beta(paths, n_scale: int, T: float = 1.0) -> float:
    """beta_N(T) = N**-1/2 * integral of the concatenated path up to N*T."""
    if n_scale <= 0:
        raise ValueError("the rescaling index must be a positive integer")
    span = n_scale * T
    full = int(math.floor(span))
    needed = full + (1 if span > full else 0)
    if len(paths) < needed:
        raise ValueError(f"need {needed} segments to reach time {span}, got {len(paths)}")
    total = sum(p.integral() for p in paths[:full])
    if span > full:
        total += paths[full].integral_to(span - full)
    return total / math.sqrt(n_scale)


def donsker_samples(n_samples: int, n_scale: int, c0: float, dens: NoiseDensity,
                    rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo samples of beta_N(1) using only level-0 draws.

    Levels k >= 1 integrate to zero over every full segment, so they drop out
    of beta_N at integer times; the unit-interval tests pin this down against
    full-path integration.
    """
    draws = dens.sample(rng, (n_samples, n_scale))
    return c0 * draws.sum(axis=1) / math.sqrt(n_scale)
