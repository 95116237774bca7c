"""Segment-wise coupling of two solutions of the forced equation.

One segment advances a pair (u, v) by the unit-time shift map.  The u leg
always consumes the nominal force; the v leg is driven by a force chosen per
branch:

* independent: distance above delta0, draw a fresh force for v;
* homological: distance at most delta0, shift the truncated force
  coefficients by delta * phi so that the leading-order difference of the
  two endpoints cancels;
* trivial: reuse the nominal force unchanged, either because the pair has
  already coalesced or because a homological attempt was rejected.

The correction phi solves the linear system D phi = -s, where D maps
truncated coefficients to resolved endpoint responses along the u
trajectory and s is the resolved part of the normalised endpoint
difference.  A solution is accepted only if its relative residual is small
and the shifted draws stay inside the support box of the nominal law, so
the perturbed force remains absolutely continuous with respect to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import nan

import numpy as np

from . import rng as rng_mod
from .dynamics import CglModel, LinearizedOperator, build_linearized, dist_h
from .noise import ForceProfile, ForceSpec, e_norm, perturb_profile

BRANCH_INDEPENDENT = "independent"
BRANCH_HOMOLOGICAL = "homological"
BRANCH_TRIVIAL = "trivial"


@dataclass(frozen=True)
class CouplingPolicy:
    delta0: float = 1e-2        # homological attempts only below this distance
    rho_max: float = 0.2        # largest acceptable relative residual
    lambda_reg: float = 1e-8    # ridge, relative to sigma_max**2; 0 = min-norm
    xi_max: float = 1.0         # support guard on perturbed draws
    max_steps: int = 1000
    coalesce_tol: float = 1e-12

    def __post_init__(self):
        if self.delta0 <= 0.0:
            raise ValueError("delta0 must be positive")
        if not 0.0 < self.rho_max < 1.0:
            raise ValueError("rho_max must lie in (0, 1)")
        if self.lambda_reg < 0.0:
            raise ValueError("lambda_reg must be non-negative")
        if self.xi_max <= 0.0:
            raise ValueError("xi_max must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0.0 < self.coalesce_tol < self.delta0:
            raise ValueError("coalesce_tol must lie in (0, delta0)")


@dataclass
class StepRecord:
    step: int
    branch: str
    delta: float                  # distance after the step
    residual: float = nan         # relative residual of the solve, when attempted
    phi_norm: float = nan         # embedded norm of phi, when attempted
    perturbation: float = nan     # delta * phi_norm, the size of the force shift
    guard_violation: bool = False


@dataclass
class CouplingRun:
    records: list[StepRecord]
    deltas: np.ndarray            # distances delta_0 .. delta_n (entry 0 is initial)
    u_final: np.ndarray
    v_final: np.ndarray
    coalesced: bool
    coalesce_step: int | None = None

    @property
    def branches(self) -> list[str]:
        return [r.branch for r in self.records]


def s_delta(model: CglModel, u0: np.ndarray, v0: np.ndarray, force) -> np.ndarray:
    """Normalised difference of the two endpoints under the shared force."""
    delta = dist_h(u0, v0)
    if delta == 0.0:
        raise ValueError("states coincide; the normalised difference is undefined")
    return (model.shift(v0, force) - model.shift(u0, force)) / delta


def solve_homological(op: LinearizedOperator, rhs: np.ndarray,
                      policy: CouplingPolicy) -> tuple[np.ndarray, float]:
    """Least-squares coefficients phi with D phi ~ rhs, plus the relative residual.

    ``rhs`` may be a complex state vector (projected onto the resolved
    components here) or an already-projected real vector.  With
    lambda_reg = 0 the minimum-norm solution is returned; otherwise the
    ridge weight is lambda_reg * sigma_max**2.
    """
    if np.iscomplexobj(rhs):
        b = op.project(rhs)
    else:
        b = np.asarray(rhs, dtype=float)
        if b.shape != (op.matrix.shape[0],):
            raise ValueError(f"projected rhs must have length {op.matrix.shape[0]}")
    cols = op.matrix.shape[1]
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(cols), 0.0
    if cols == 0:
        return np.zeros(0), 1.0
    u_svd, sigma, vt = np.linalg.svd(op.matrix, full_matrices=False)
    s_max = sigma[0]
    if s_max == 0.0:
        return np.zeros(cols), 1.0
    if policy.lambda_reg > 0.0:
        gains = sigma / (sigma ** 2 + policy.lambda_reg * s_max ** 2)
    else:
        # plain pseudoinverse with a rounding-level cutoff
        keep = sigma > 1e-12 * s_max
        gains = np.where(keep, 1.0 / np.where(keep, sigma, 1.0), 0.0)
    phi = vt.T @ (gains * (u_svd.T @ b))
    rho = float(np.linalg.norm(op.matrix @ phi - b) / b_norm)
    return phi, rho


@dataclass
class AttemptOutcome:
    """Everything produced by one homological attempt on a segment."""

    accepted: bool
    reason: str                   # 'ok', 'residual' or 'support'
    rho: float
    phi: np.ndarray
    phi_norm: float
    eta_prime: ForceProfile | None
    u_end: np.ndarray
    v_end_nominal: np.ndarray
    delta_entry: float
    operator: LinearizedOperator | None = None


class Coupler:
    """Coupling engine for one model, force recipe and policy."""

    def __init__(self, model: CglModel, force_spec: ForceSpec, policy: CouplingPolicy,
                 k_ctl: int, n_resolved: int):
        self.model = model
        self.force_spec = force_spec
        self.policy = policy
        self.k_ctl = k_ctl
        self.n_resolved = n_resolved

    def attempt(self, u: np.ndarray, v: np.ndarray, force: ForceProfile,
                keep_operator: bool = False) -> AttemptOutcome:
        """Try to build a coalescing force shift for one segment.

        Runs the nominal pair, assembles the linearised response along the u
        trajectory, solves for phi against the sign-reversed normalised
        difference and applies the residual and support tests.  No branch
        thresholds are consulted; the caller decides when an attempt is due.
        """
        delta = dist_h(u, v)
        traj = self.model.integrate(u, force, cache=True)
        u_end = traj.final
        v_end = self.model.shift(v, force)
        s_hat = (v_end - u_end) / delta
        op = build_linearized(self.model, traj, force, self.k_ctl, self.n_resolved)
        phi, rho = solve_homological(op, -s_hat, self.policy)
        phi_norm = e_norm(phi, op.amplitudes, self.k_ctl)
        kept = op if keep_operator else None
        if rho > self.policy.rho_max:
            return AttemptOutcome(False, "residual", rho, phi, phi_norm, None,
                                  u_end, v_end, delta, kept)
        eta_prime, max_abs = perturb_profile(force, phi, delta, self.k_ctl)
        if max_abs > self.policy.xi_max:
            return AttemptOutcome(False, "support", rho, phi, phi_norm, None,
                                  u_end, v_end, delta, kept)
        return AttemptOutcome(True, "ok", rho, phi, phi_norm, eta_prime,
                              u_end, v_end, delta, kept)

    def step(self, step_index: int, u: np.ndarray, v: np.ndarray, force: ForceProfile,
             indep_rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, StepRecord]:
        """Advance the pair one segment and record what happened.

        The u leg sees exactly the nominal force on every branch, so its law
        matches a plain simulation draw for draw.
        """
        policy = self.policy
        delta_entry = dist_h(u, v)
        if delta_entry < policy.coalesce_tol:
            u1 = self.model.shift(u, force)
            v1 = u1 if delta_entry == 0.0 else self.model.shift(v, force)
            rec = StepRecord(step_index, BRANCH_TRIVIAL, dist_h(u1, v1))
            return u1, v1, rec
        if delta_entry > policy.delta0:
            u1 = self.model.shift(u, force)
            v1 = self.model.shift(v, self.force_spec.sample(indep_rng))
            rec = StepRecord(step_index, BRANCH_INDEPENDENT, dist_h(u1, v1))
            return u1, v1, rec
        out = self.attempt(u, v, force)
        if out.accepted:
            v1 = self.model.shift(v, out.eta_prime)
            rec = StepRecord(step_index, BRANCH_HOMOLOGICAL, dist_h(out.u_end, v1),
                             residual=out.rho, phi_norm=out.phi_norm,
                             perturbation=delta_entry * out.phi_norm)
            return out.u_end, v1, rec
        # rejected attempt: keep the nominal force for both legs
        rec = StepRecord(step_index, BRANCH_TRIVIAL, dist_h(out.u_end, out.v_end_nominal),
                         residual=out.rho, phi_norm=out.phi_norm,
                         guard_violation=(out.reason == "support"))
        return out.u_end, out.v_end_nominal, rec

    def run(self, u0: np.ndarray, v0: np.ndarray, seed: int, traj: int = 0,
            horizon: int | None = None) -> CouplingRun:
        """Couple a pair over consecutive segments until coalescence or the horizon.

        Forces are drawn from the per-(trajectory, segment) streams of the
        master seed, so the u marginal reproduces a plain simulation with the
        same addressing.
        """
        policy = self.policy
        steps = policy.max_steps if horizon is None else min(horizon, policy.max_steps)
        u, v = np.asarray(u0, dtype=complex), np.asarray(v0, dtype=complex)
        records: list[StepRecord] = []
        deltas = [dist_h(u, v)]
        coalesce_step = None
        for k in range(1, steps + 1):
            force = self.force_spec.for_segment(seed, traj, k - 1)
            indep = rng_mod.force_stream(seed, traj, k - 1, independent=True)
            u, v, rec = self.step(k, u, v, force, indep)
            records.append(rec)
            deltas.append(rec.delta)
            if rec.delta < policy.coalesce_tol:
                coalesce_step = k
                break
        return CouplingRun(records=records, deltas=np.asarray(deltas), u_final=u,
                           v_final=v, coalesced=coalesce_step is not None,
                           coalesce_step=coalesce_step)
