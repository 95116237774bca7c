"""Run configuration: TOML files with dotted keys plus key=value overrides.

Every tunable lives in one flat namespace ("section.key").  Files may use
either dotted keys or TOML tables; command-line overrides use the same
names.  Unknown keys are rejected, and the fully resolved mapping can be
serialised back to TOML so every run can echo exactly what it used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import get_args, get_origin

import tomli

from .coupling import CouplingPolicy
from .diagnostics import ObservableSet, parse_observables
from .dynamics import CglParams
from .errors import ConfigError
from .noise import DENSITIES, ForceSpec, check_decay, decay_coefficients


@dataclass
class NoiseConfig:
    K: int = 6                    # finest Haar level kept in the noise
    q: float = 2.0                # level-weight decay exponent (> 1)
    c0: float = 1.0               # level-0 weight; higher levels scale from it
    density: str = "uniform"      # law of the bounded draws


@dataclass
class ForceConfig:
    modes: list[int] = field(default_factory=lambda: [0, 1, -1, 2, -2, 3, -3])
    amplitudes: list[float] = field(default_factory=lambda: [0.25] * 7)


@dataclass
class CglConfig:
    epsilon: float = 0.4
    gamma: float = 0.4
    p: int = 1
    mass_shift: float = 1.0
    linear: bool = False          # drop the dispersive and power-law terms


@dataclass
class GridConfig:
    n_modes: int = 64
    dt_log2: int = 7              # 2**dt_log2 sub-steps per unit segment


@dataclass
class LinopConfig:
    k_ctl: int = 2                # Haar truncation of the control coefficients
    n_resolved: int = 16          # resolved Fourier modes in the solve


@dataclass
class CouplingConfig:
    delta0: float = 1e-2
    rho_max: float = 0.2
    lambda_reg: float = 1e-8
    xi_max: float = 1.0
    max_steps: int = 1000
    coalesce_tol: float = 1e-12


@dataclass
class DiagConfig:
    ensemble: int = 200
    horizon: int = 50
    observables: list[str] = field(default_factory=lambda: ["norm2", "re:0", "im:0", "re:1", "im:1"])
    delta_grid: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])


@dataclass
class SimConfig:
    segments: int = 20
    u0_norm: float = 0.0
    dump_modes: list[int] = field(default_factory=lambda: [0, 1, 2])


@dataclass
class CoupleConfig:
    runs: int = 1
    horizon: int = 100
    delta_start: float = 5e-3
    burn_in: int = 10


@dataclass
class MixingConfig:
    separation: float = 1.0


@dataclass
class HypConfig:
    samples: int = 50             # rank-scan sample count
    burn_in: int = 10
    horizon: int = 30
    norms: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])


@dataclass
class CheckConfig:
    paths: int = 10000
    donsker_n: int = 4096
    donsker_samples: int = 5000


@dataclass
class RunConfig:
    seed: int = 1234
    out_dir: str = "out"
    workers: int = 1
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    force: ForceConfig = field(default_factory=ForceConfig)
    cgl: CglConfig = field(default_factory=CglConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    linop: LinopConfig = field(default_factory=LinopConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    diag: DiagConfig = field(default_factory=DiagConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    couple: CoupleConfig = field(default_factory=CoupleConfig)
    mixing: MixingConfig = field(default_factory=MixingConfig)
    hyp: HypConfig = field(default_factory=HypConfig)
    check: CheckConfig = field(default_factory=CheckConfig)

    # -- derived objects -----------------------------------------------------

    def cgl_params(self) -> CglParams:
        return CglParams(epsilon=self.cgl.epsilon, gamma=self.cgl.gamma, p=self.cgl.p,
                         mass_shift=self.cgl.mass_shift, n_modes=self.grid.n_modes,
                         dt_log2=self.grid.dt_log2, linear=self.cgl.linear)

    def force_spec(self) -> ForceSpec:
        c = decay_coefficients(self.noise.K, self.noise.c0, self.noise.q)
        return ForceSpec(modes=tuple(self.force.modes),
                         amplitudes=tuple(self.force.amplitudes),
                         c=tuple(c), density_kind=self.noise.density)

    def policy(self) -> CouplingPolicy:
        c = self.coupling
        return CouplingPolicy(delta0=c.delta0, rho_max=c.rho_max, lambda_reg=c.lambda_reg,
                              xi_max=c.xi_max, max_steps=c.max_steps,
                              coalesce_tol=c.coalesce_tol)

    def observables(self) -> ObservableSet:
        return parse_observables(self.diag.observables, self.grid.n_modes)

    def flat(self) -> dict:
        """Resolved configuration as a sorted dotted-key mapping."""
        out = {"seed": self.seed, "out_dir": self.out_dir, "workers": self.workers}
        for section in _SECTIONS:
            sub = getattr(self, section)
            for f in fields(sub):
                out[f"{section}.{f.name}"] = getattr(sub, f.name)
        return dict(sorted(out.items()))


_SECTIONS = ("noise", "force", "cgl", "grid", "linop", "coupling", "diag",
             "sim", "couple", "mixing", "hyp", "check")
_TOP_LEVEL = {"seed": int, "out_dir": str, "workers": int}


def _flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def _cast(key: str, value, annotation):
    """Check and coerce one raw TOML value against a dataclass field type."""
    origin = get_origin(annotation)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{key} expects a list, got {value!r}")
        inner = get_args(annotation)[0]
        return [_cast(key, item, inner) for item in value]
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects a boolean, got {value!r}")
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a string, got {value!r}")
        return value
    raise ConfigError(f"{key} has unsupported type {annotation!r}")


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, _, raw = text.partition("=")
    key = key.strip()
    raw = raw.strip()
    if not key or not raw:
        raise ConfigError(f"override {text!r} must look like key=value")
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw  # bare words read as strings
    return key, value


def load_config(path: str | None = None, overrides=(), workers: int | None = None) -> RunConfig:
    """Build a validated RunConfig from an optional file plus overrides."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as handle:
                raw = _flatten(tomli.load(handle))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomli.TOMLDecodeError as err:
            raise ConfigError(f"config file {path} is not valid TOML: {err}")
    for item in overrides:
        key, value = _parse_override(item)
        raw[key] = value
    if workers is not None:
        raw["workers"] = workers

    cfg = RunConfig()
    section_types = {s: {f.name: f.type for f in fields(getattr(cfg, s))} for s in _SECTIONS}
    for key, value in raw.items():
        if key in _TOP_LEVEL:
            setattr(cfg, key, _cast(key, value, _TOP_LEVEL[key]))
            continue
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name or name not in section_types[section]:
            raise ConfigError(f"unknown configuration key {key!r}")
        ann = section_types[section][name]
        if isinstance(ann, str):  # string annotations from __future__ imports
            ann = eval(ann)  # noqa: S307 -- closed set of builtin annotations
        setattr(getattr(cfg, section), name, _cast(key, value, ann))
    _validate(cfg)
    return cfg


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _validate(cfg: RunConfig) -> None:
    n = cfg.noise
    _require(n.K >= 0, "noise.K must be >= 0")
    _require(n.q > 1.0, "noise.q must exceed 1 for a summable sup bound")
    _require(n.c0 != 0.0, "noise.c0 must be nonzero")
    _require(n.density in DENSITIES, f"noise.density must be one of {sorted(DENSITIES)}")
    check_decay(decay_coefficients(n.K, n.c0, n.q), n.q, abs(n.c0))

    g = cfg.grid
    _require(g.n_modes >= 8 and g.n_modes % 2 == 0, "grid.n_modes must be even and >= 8")
    _require(4 <= g.dt_log2 <= 16, "grid.dt_log2 must lie in [4, 16]")
    _require(g.dt_log2 >= n.K + 1,
             "grid.dt_log2 must be at least noise.K + 1 so steps resolve the finest level")

    f = cfg.force
    _require(len(set(f.modes)) == len(f.modes), "force.modes must be distinct")
    _require(all(abs(k) <= g.n_modes // 2 - 1 for k in f.modes),
             "force.modes must be resolvable wavenumbers for grid.n_modes")
    _require(len(f.amplitudes) == len(f.modes),
             "force.amplitudes must match force.modes in length")
    _require(all(a > 0.0 for a in f.amplitudes), "force.amplitudes must be positive")

    c = cfg.cgl
    _require(c.epsilon > 0.0, "cgl.epsilon must be positive")
    _require(c.gamma >= 0.0, "cgl.gamma must be non-negative")
    _require(c.p >= 1, "cgl.p must be a positive integer")
    _require(c.mass_shift >= 0.0, "cgl.mass_shift must be non-negative")

    lo = cfg.linop
    _require(0 <= lo.k_ctl <= n.K, "linop.k_ctl must lie in [0, noise.K]")
    _require(lo.n_resolved >= 1, "linop.n_resolved must be positive")
    _require(lo.n_resolved // 2 <= g.n_modes // 2 - 1,
             "linop.n_resolved exceeds the resolvable wavenumbers")

    cp = cfg.coupling
    try:
        CouplingPolicy(delta0=cp.delta0, rho_max=cp.rho_max, lambda_reg=cp.lambda_reg,
                       xi_max=cp.xi_max, max_steps=cp.max_steps, coalesce_tol=cp.coalesce_tol)
    except ValueError as err:
        raise ConfigError(f"coupling: {err}")

    d = cfg.diag
    _require(d.ensemble >= 4 and d.ensemble % 2 == 0, "diag.ensemble must be even and >= 4")
    _require(d.horizon >= 2, "diag.horizon must be at least 2")
    _require(all(x > 0.0 for x in d.delta_grid), "diag.delta_grid entries must be positive")
    parse_observables(d.observables, g.n_modes)

    s = cfg.sim
    _require(s.segments >= 1, "sim.segments must be at least 1")
    _require(s.u0_norm >= 0.0, "sim.u0_norm must be non-negative")
    _require(all(abs(k) <= g.n_modes // 2 - 1 for k in s.dump_modes),
             "sim.dump_modes must be resolvable wavenumbers")

    co = cfg.couple
    _require(co.runs >= 1, "couple.runs must be at least 1")
    _require(co.horizon >= 1, "couple.horizon must be at least 1")
    _require(co.delta_start > 0.0, "couple.delta_start must be positive")
    _require(co.burn_in >= 0, "couple.burn_in must be non-negative")

    _require(cfg.mixing.separation > 0.0, "mixing.separation must be positive")

    h = cfg.hyp
    _require(h.samples >= 1, "hyp.samples must be at least 1")
    _require(h.burn_in >= 0, "hyp.burn_in must be non-negative")
    _require(h.horizon >= 4, "hyp.horizon must be at least 4")
    _require(len(h.norms) >= 1 and all(x >= 0.0 for x in h.norms),
             "hyp.norms must be non-negative and nonempty")

    ck = cfg.check
    _require(ck.paths >= 1, "check.paths must be at least 1")
    _require(ck.donsker_n >= 1, "check.donsker_n must be at least 1")
    _require(ck.donsker_samples >= 10, "check.donsker_samples must be at least 10")

    _require(cfg.seed >= 0, "seed must be non-negative")
    _require(cfg.workers >= 1, "workers must be at least 1")
    _require(bool(cfg.out_dir), "out_dir must be nonempty")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r} as TOML")


def resolved_toml(cfg: RunConfig) -> str:
    """The full configuration as dotted-key TOML, one key per line."""
    lines = [f"{key} = {_format_value(value)}" for key, value in cfg.flat().items()]
    return "\n".join(lines) + "\n"
