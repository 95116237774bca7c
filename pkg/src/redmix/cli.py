"""Command-line entry point.

Five subcommands cover the lab workflows:

* ``simulate``     one forced trajectory, coefficient dumps per segment
* ``couple``       coupled pairs with branch records per segment
* ``mixing``       ensemble Wasserstein distance against time
* ``noise-check``  orthonormality, boundedness and diffusive-limit checks
* ``hypotheses``   absorbing set, zero-force stability, response rank scan

Every run writes ``resolved_config.toml`` (the exact settings used) and
``metadata.json`` (command, version, timestamp) next to its data files.
Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import diagnostics as diag_mod
from . import io as io_mod
from . import noise as noise_mod
from . import rng as rng_mod
from .coupling import Coupler
from .dynamics import CglModel, norm_h, smooth_state
from .errors import ConfigError, NumericalError

# aux-stream tags used by the CLI itself (the diagnostics module owns 1..7)
_TAG_SIM_INIT = 20
_TAG_COUPLE_DIR = 21
_TAG_MIXING_INIT = 22
_TAG_PATH_SAMPLE = 23
_TAG_ZERO_INIT = 24


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config, args.overrides, workers=args.workers)
        out_dir = _prepare_out_dir(cfg, args.command)
        _COMMANDS[args.command](cfg, out_dir)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redmix",
        description="coupling and mixing experiments for a randomly forced "
                    "Ginzburg-Landau equation")
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "simulate": "integrate one forced trajectory",
        "couple": "run coupled pairs and record branch decisions",
        "mixing": "estimate the ensemble mixing distance",
        "noise-check": "validate the noise model",
        "hypotheses": "absorbing set, zero-force decay and response rank",
    }
    for name, help_text in descriptions.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", default=None, metavar="FILE",
                       help="TOML configuration file")
        p.add_argument("--workers", type=int, default=None, metavar="N",
                       help="worker processes for ensemble work")
        p.add_argument("overrides", nargs="*", metavar="key=value",
                       help="configuration overrides, e.g. seed=7")
    return parser


def _prepare_out_dir(cfg: config_mod.RunConfig, command: str) -> Path:
    env_dir = os.environ.get("REDMIX_OUT")
    if env_dir:
        cfg.out_dir = env_dir
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.toml").write_text(config_mod.resolved_toml(cfg))
    try:
        version = importlib_metadata.version("redmix")
    except importlib_metadata.PackageNotFoundError:
        version = "unknown"
    io_mod.write_json(out / "metadata.json", {
        "command": command,
        "package": "redmix",
        "version": version,
        "created": datetime.now(timezone.utc).isoformat(),
    })
    return out


# ---------------------------------------------------------------------------
# simulate


def _cmd_simulate(cfg: config_mod.RunConfig, out: Path) -> None:
    params = cfg.cgl_params()
    model = CglModel(params)
    spec = cfg.force_spec()
    u = smooth_state(rng_mod.aux_stream(cfg.seed, _TAG_SIM_INIT), params.n_modes,
                     cfg.sim.u0_norm)
    dump = cfg.sim.dump_modes
    header = ["t", "norm"]
    for k in dump:
        header += [f"re_u_{k}", f"im_u_{k}"]
    rows = [_trajectory_row(0.0, u, dump, params.n_modes)]
    for seg in range(cfg.sim.segments):
        u = model.shift(u, spec.for_segment(cfg.seed, 0, seg))
        rows.append(_trajectory_row(float(seg + 1), u, dump, params.n_modes))
    io_mod.write_csv(out / "trajectory.csv", header, rows)
    print(f"simulate: {cfg.sim.segments} segments, final norm {norm_h(u):.6g} "
          f"-> {out / 'trajectory.csv'}")


def _trajectory_row(t: float, u: np.ndarray, dump, n_modes: int) -> list:
    row: list = [t, norm_h(u)]
    for k in dump:
        coeff = u[k % n_modes]
        row += [coeff.real, coeff.imag]
    return row


# ---------------------------------------------------------------------------
# couple


def _make_coupler(cfg: config_mod.RunConfig) -> Coupler:
    return Coupler(CglModel(cfg.cgl_params()), cfg.force_spec(), cfg.policy(),
                   cfg.linop.k_ctl, cfg.linop.n_resolved)


def _couple_run_task(payload):
    cfg, u0, v0, run_index = payload
    coupler = _make_coupler(cfg)
    return coupler.run(u0, v0, cfg.seed, traj=run_index, horizon=cfg.couple.horizon)


def _cmd_couple(cfg: config_mod.RunConfig, out: Path) -> None:
    coupler = _make_coupler(cfg)
    model = coupler.model
    u0 = diag_mod.burn_in_state(model, coupler.force_spec, cfg.seed, cfg.couple.burn_in)
    payloads = []
    for r in range(cfg.couple.runs):
        direction = smooth_state(rng_mod.aux_stream(cfg.seed, _TAG_COUPLE_DIR, r),
                                 model.params.n_modes, 1.0)
        payloads.append((cfg, u0, u0 + cfg.couple.delta_start * direction, r))
    if cfg.workers > 1 and cfg.couple.runs > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_couple_run_task, payloads))
    else:
        runs = [_couple_run_task(p) for p in payloads]

    header = ["k", "branch", "delta", "residual", "phi_norm", "guard_violation"]
    summaries = []
    for r, run in enumerate(runs):
        rows = [[rec.step, rec.branch, rec.delta, rec.residual, rec.perturbation,
                 rec.guard_violation] for rec in run.records]
        name = "coupling.csv" if cfg.couple.runs == 1 else f"coupling_run{r:03d}.csv"
        io_mod.write_csv(out / name, header, rows)
        branches = run.branches
        summaries.append({
            "run": r,
            "steps": len(run.records),
            "coalesced": run.coalesced,
            "coalesce_step": run.coalesce_step,
            "final_delta": float(run.deltas[-1]),
            "homological": branches.count("homological"),
            "independent": branches.count("independent"),
            "trivial": branches.count("trivial"),
            "guard_violations": sum(rec.guard_violation for rec in run.records),
        })
    io_mod.write_json(out / "coupling_summary.json", {"runs": summaries})
    n_coalesced = sum(s["coalesced"] for s in summaries)
    print(f"couple: {len(runs)} run(s), {n_coalesced} coalesced -> {out}")


# ---------------------------------------------------------------------------
# mixing


def _cmd_mixing(cfg: config_mod.RunConfig, out: Path) -> None:
    params = cfg.cgl_params()
    spec = cfg.force_spec()
    observables = cfg.observables()
    u01 = smooth_state(rng_mod.aux_stream(cfg.seed, _TAG_MIXING_INIT), params.n_modes,
                       cfg.mixing.separation)
    u02 = np.zeros(params.n_modes, dtype=complex)
    report = diag_mod.mixing_distance(params, spec, observables, u01, u02,
                                      cfg.diag.ensemble, cfg.diag.horizon, cfg.seed,
                                      workers=cfg.workers)
    safe_names = [name.replace(":", "_") for name in report.observables]
    header = ["t"] + [f"dist_{name}" for name in safe_names] + ["aggregate", "floor"]
    rows = []
    for i, t in enumerate(report.times):
        rows.append([t, *report.distances[i], report.aggregate[i], report.floor[i]])
    io_mod.write_csv(out / "mixing.csv", header, rows)
    io_mod.write_json(out / "mixing.json", {
        "ensemble": report.ensemble,
        "separation": report.separation,
        "observables": list(report.observables),
        "final_distance": report.final_distance,
        "final_floor": report.final_floor,
        "rate": report.fit.rate,
        "r_squared": report.fit.r_squared,
        "n_points": report.fit.n_points,
        "inconclusive": report.fit.inconclusive,
    })
    print(f"mixing: final distance {report.final_distance:.4g} "
          f"(floor {report.final_floor:.4g}), rate {report.fit.rate:.4g} -> {out}")


# ---------------------------------------------------------------------------
# noise-check


def _cmd_noise_check(cfg: config_mod.RunConfig, out: Path) -> None:
    n = cfg.noise
    c = noise_mod.decay_coefficients(n.K, n.c0, n.q)
    dens = noise_mod.density(n.density)
    ortho = diag_mod.orthonormality_error(n.K)
    bound = diag_mod.boundedness_survey(c, dens, cfg.check.paths, cfg.seed)
    donsker = diag_mod.donsker_ks(n.c0, dens, cfg.check.donsker_n,
                                  cfg.check.donsker_samples, cfg.seed)
    path = noise_mod.sample_path(c, dens, rng_mod.aux_stream(cfg.seed, _TAG_PATH_SAMPLE))
    width = 1.0 / len(path.cells)
    io_mod.write_csv(out / "path_sample.csv", ["t", "value"],
                     [[i * width, v] for i, v in enumerate(path.cells)])
    io_mod.write_json(out / "noise_report.json", {
        "orthonormality_error": ortho,
        "sup_bound": noise_mod.sup_bound(c),
        "boundedness": {
            "n_paths": bound.n_paths,
            "max_abs": bound.max_abs,
            "bound": bound.bound,
            "all_within": bound.all_within,
        },
        "donsker": {
            "n_scale": donsker.n_scale,
            "n_samples": donsker.n_samples,
            "ks_statistic": donsker.ks_statistic,
            "sigma": donsker.sigma,
        },
        "neglected_sup_tail": noise_mod.neglected_sup_tail(n.c0, n.q, n.K),
    })
    print(f"noise-check: orthonormality error {ortho:.3g}, "
          f"bound ok {bound.all_within}, donsker KS {donsker.ks_statistic:.4f} -> {out}")


# ---------------------------------------------------------------------------
# hypotheses


def _cmd_hypotheses(cfg: config_mod.RunConfig, out: Path) -> None:
    params = cfg.cgl_params()
    spec = cfg.force_spec()
    absorbing = diag_mod.verify_absorbing(params, spec, cfg.hyp.norms, cfg.hyp.horizon,
                                          cfg.seed, workers=cfg.workers)
    io_mod.write_csv(out / "absorbing.csv",
                     ["traj", "initial_norm", "entry_time", "tail_sup"],
                     [[i, absorbing.initial_norms[i], absorbing.entry_times[i],
                       absorbing.tail_sups[i]] for i in range(len(absorbing.initial_norms))])

    zero_norms = [0.05, 0.1, 0.2]  # small data, where the decay bound is clean
    states = [smooth_state(rng_mod.aux_stream(cfg.seed, _TAG_ZERO_INIT, i),
                           params.n_modes, r) for i, r in enumerate(zero_norms)]
    stability = diag_mod.verify_zero_stability(params, states, cfg.hyp.horizon)
    io_mod.write_csv(out / "zero_stability.csv", ["traj", "initial_norm", "rate"],
                     [[i, stability.initial_norms[i], stability.rates[i]]
                      for i in range(len(states))])

    ranks = diag_mod.rank_scan(params, spec, cfg.linop.k_ctl, cfg.linop.n_resolved,
                               cfg.hyp.samples, cfg.seed, burn_in=cfg.hyp.burn_in)
    full = min(ranks.n_rows, ranks.n_cols)
    io_mod.write_csv(out / "rank_scan.csv",
                     ["sample", "sigma_max", "sigma_min", "eff_rank", "full_rank"],
                     [[i, ranks.sigma_max[i], ranks.sigma_min[i], ranks.eff_ranks[i],
                       bool(ranks.eff_ranks[i] == full)] for i in range(len(ranks.eff_ranks))])

    worst_gap = float(np.max(np.abs(stability.rates - stability.reference_rate)
                             / abs(stability.reference_rate)))
    io_mod.write_json(out / "hypotheses.json", {
        "absorbing": {
            "radius": absorbing.radius,
            "entry_times": absorbing.entry_times,
            "initial_norms": absorbing.initial_norms,
            "max_tail_sup": float(np.max(absorbing.tail_sups)),
        },
        "zero_stability": {
            "rates": stability.rates,
            "reference_rate": stability.reference_rate,
            "max_relative_gap": worst_gap,
        },
        "controllability": {
            "full_fraction": ranks.full_fraction,
            "n_rows": ranks.n_rows,
            "n_cols": ranks.n_cols,
            "threshold": ranks.threshold,
        },
    })
    print(f"hypotheses: radius {absorbing.radius:.4g}, "
          f"zero-force rate gap {worst_gap:.3g}, "
          f"full-rank fraction {ranks.full_fraction:.2f} -> {out}")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "couple": _cmd_couple,
    "mixing": _cmd_mixing,
    "noise-check": _cmd_noise_check,
    "hypotheses": _cmd_hypotheses,
}


if __name__ == "__main__":
    sys.exit(main())
