"""Run configuration: dataclasses loaded from a TOML file plus CLI overrides."""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import OMEGA0_MIN, BatteryParams, BoundMode


class ConfigError(ValueError):
    pass


SWEEP_CASES = (
    (2.5, 1 / 3),
    (4.0, 1 / 3),
    (6.0, 1 / 3),
    (2.0, 1 / 2),
    (2.0, 1 / 3),
    (2.0, 1 / 5),
    (2.0, 1 / 10),
)


@dataclass(frozen=True)
class SweepConfig:
    t_points: int = 600
    t_max: float = 2 * math.pi
    cases: tuple[tuple[float, float], ...] = SWEEP_CASES

    def t_grid(self) -> list[float]:
        return [self.t_max * k / self.t_points for k in range(1, self.t_points + 1)]


@dataclass(frozen=True)
class MinTimeConfig:
    omega0_min: float = 1.7321
    omega0_max: float = 1000.0
    points: int = 200

    def omega0_grid(self) -> list[float]:
        r = math.log(self.omega0_max / self.omega0_min)
        n = self.points
        return [self.omega0_min * math.exp(r * k / (n - 1)) for k in range(n)]


@dataclass(frozen=True)
class BlochConfig:
    omega0: tuple[float, ...] = (2.5, 4.0, 6.0)
    chi: float = 1 / 3
    sequences: tuple[str, ...] = ("I", "II")
    samples_per_segment: int = 400


@dataclass(frozen=True)
class PhizConfig:
    omega0: tuple[float, ...] = (2.5, 4.0, 6.0)
    chi: float = 1 / 3
    points: int = 200


@dataclass(frozen=True)
class OracleConfig:
    enabled: bool = True
    grid_step: float = 1e-3
    n_segments: int = 64
    restarts: int = 20
    t_points: int = 20


@dataclass(frozen=True)
class VerifyConfig:
    cases: tuple[tuple[float, float], ...] = ((2.5, 1 / 3), (4.0, 1 / 3), (6.0, 1 / 3))
    t_points: int = 8
    hc_tol: float = 1e-8
    switch_tol: float = 1e-8
    degenerate_tol: float = 1e-8
    grid_tol: float = 1e-5
    ascent_tol: float = 1e-4
    perturb_tau1: float = 0.0
    oracle: bool = True


@dataclass(frozen=True)
class RunConfig:
    params: BatteryParams = field(default_factory=lambda: BatteryParams(4.0, 1 / 3))
    sweep: SweepConfig = SweepConfig()
    min_time: MinTimeConfig = MinTimeConfig()
    bloch: BlochConfig = BlochConfig()
    phiz: PhizConfig = PhizConfig()
    oracle: OracleConfig = OracleConfig()
    verify: VerifyConfig = VerifyConfig()
    out: str = "out"
    seed: int = 0
    workers: int = 1

    def validate(self) -> "RunConfig":
        s, m, b, p, o, v = self.sweep, self.min_time, self.bloch, self.phiz, self.oracle, self.verify
        _check(s.t_points >= 1, "sweep.t_points must be >= 1")
        _check(s.t_max > 0, "sweep.t_max must be positive")
        _check(len(s.cases) > 0, "sweep.cases must not be empty")
        for w, chi in s.cases + v.cases:
            BatteryParams(w, chi)
        for w in b.omega0 + p.omega0:
            _check(w > OMEGA0_MIN, f"full-charging workflows need omega0_over_J > sqrt(3), got {w}")
        BatteryParams(2.0, b.chi)
        BatteryParams(2.0, p.chi)
        _check(OMEGA0_MIN < m.omega0_min < m.omega0_max, "min_time needs sqrt(3) < omega0_min < omega0_max")
        _check(m.points >= 2, "min_time.points must be >= 2")
        _check(len(b.sequences) > 0 and all(x in ("I", "II") for x in b.sequences), "bloch.sequences must be a non-empty subset of {I, II}")
        _check(b.samples_per_segment >= 1, "bloch.samples_per_segment must be >= 1")
        _check(len(b.omega0) > 0 and len(p.omega0) > 0, "omega0 lists must not be empty")
        _check(p.points >= 2, "phiz.points must be >= 2")
        _check(o.grid_step > 0, "oracle.grid_step must be positive")
        _check(o.n_segments >= 8, "oracle.n_segments must be >= 8")
        _check(o.restarts >= 1, "oracle.restarts must be >= 1")
        _check(o.t_points >= 1, "oracle.t_points must be >= 1")
        _check(len(v.cases) > 0, "verify.cases must not be empty")
        _check(v.t_points >= 1, "verify.t_points must be >= 1")
        for name in ("hc_tol", "switch_tol", "degenerate_tol", "grid_tol", "ascent_tol"):
            _check(getattr(v, name) > 0, f"verify.{name} must be positive")
        _check(math.isfinite(v.perturb_tau1), "verify.perturb_tau1 must be finite")
        _check(self.workers >= 1, "workers must be >= 1")
        _check(0 <= self.seed < 2**64, "seed must be in [0, 2^64)")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = {
            "omega0_over_J": self.params.omega0_over_J,
            "chi": self.params.chi,
            "bound": self.params.bound_mode.value,
        }
        return d


def _check(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _section(cls, data: dict, name: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        if isinstance(default, tuple):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        elif isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"[{name}].{k} must be a boolean")
        elif isinstance(default, int):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"[{name}].{k} must be an integer")
        elif isinstance(default, float):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"[{name}].{k} must be a number")
            v = float(v)
        kw[k] = v
    return replace(cls(), **kw)


SECTIONS = {
    "sweep": SweepConfig,
    "min_time": MinTimeConfig,
    "bloch": BlochConfig,
    "phiz": PhizConfig,
    "oracle": OracleConfig,
    "verify": VerifyConfig,
}


def from_dict(data: dict) -> RunConfig:
    data = dict(data)
    kw = {}
    p = data.pop("params", {})
    unknown = set(p) - {"omega0_over_J", "chi", "bound"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [params]: {', '.join(sorted(unknown))}")
    base = RunConfig().params
    try:
        kw["params"] = BatteryParams(
            float(p.get("omega0_over_J", base.omega0_over_J)),
            float(p.get("chi", base.chi)),
            BoundMode(p.get("bound", base.bound_mode.value)),
        )
    except ValueError as exc:
        raise ConfigError(f"[params]: {exc}") from exc
    for name, cls in SECTIONS.items():
        if name in data:
            kw[name] = _section(cls, data.pop(name), name)
    for key in ("out", "seed", "workers"):
        if key in data:
            kw[key] = data.pop(key)
    if data:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(data))}")
    try:
        return RunConfig(**kw).validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    try:
        return from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def apply_overrides(
    cfg: RunConfig,
    omega0: float | None = None,
    chi: float | None = None,
    bound: str | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> RunConfig:
    """CLI flags win over config keys. A given omega0/chi also narrows the case lists."""
    p = cfg.params
    try:
        params = BatteryParams(
            p.omega0_over_J if omega0 is None else omega0,
            p.chi if chi is None else chi,
            p.bound_mode if bound is None else BoundMode(bound),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    new = replace(cfg, params=params)
    if omega0 is not None or chi is not None:
        case = ((params.omega0_over_J, params.chi),)
        new = replace(new, sweep=replace(new.sweep, cases=case), verify=replace(new.verify, cases=case))
    if omega0 is not None:
        new = replace(
            new,
            bloch=replace(new.bloch, omega0=(omega0,)),
            phiz=replace(new.phiz, omega0=(omega0,)),
        )
    if chi is not None:
        new = replace(new, bloch=replace(new.bloch, chi=chi), phiz=replace(new.phiz, chi=chi))
    if seed is not None:
        new = replace(new, seed=seed)
    if out is not None:
        new = replace(new, out=out)
    return new.validate()
