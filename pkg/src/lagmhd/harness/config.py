"""Run configuration: parsing, defaults, validation and dot-path overrides."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending dot-path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


PRESET_ARITY = {
    "rest": (),
    "screw_pinch": ("c0", "c1"),
    "rigid_rotation": ("omega",),
    "perturbed_pinch": ("c0", "c1", "amp"),
    "mms": ("case_id",),
    # deliberately inadmissible seeds for monitor tests
    "azimuthal_pinch": ("c0",),
    "radial_seed": (),
}

FLAT_ALIASES = {
    "Nr": "grid.Nr", "Nz": "grid.Nz", "R0": "grid.R0", "Lz": "grid.Lz",
    "RS": "wall.RS",
    "T": "time.T", "dt": "time.dt", "cfl_safety": "time.cfl_safety",
    "C0": "physics.C0", "eps": "physics.eps", "delta_min": "physics.delta_min",
    "preset": "initial.preset", "seed_check": "initial.seed_check",
    "n_max": "iteration.n_max", "psi_tol": "iteration.psi_tol", "norm_order": "iteration.norm_order",
    "directory": "output.directory", "snapshot_every": "output.snapshot_every",
    "emit_fields": "output.emit_fields",
}

DEFAULTS = {
    "grid": {"Nr": 64, "Nz": 64, "R0": 1.0, "Lz": 2.0 * math.pi},
    "wall": {"RS": math.e},
    "time": {"T": 0.25, "dt": None, "cfl_safety": 0.4},
    "physics": {"C0": 1.0, "eps": 0.0, "delta_min": 1e-6},
    "initial": {"preset": "rest", "seed_check": "error"},
    "iteration": {"n_max": 12, "psi_tol": 1e-8, "norm_order": 4},
    "output": {"directory": None, "snapshot_every": 0, "emit_fields": True},
}


@dataclass(frozen=True)
class Preset:
    name: str
    params: tuple = ()

    def __str__(self) -> str:
        return f"{self.name}({', '.join(repr(p) for p in self.params)})"

    def param(self, key: str) -> float:
        return self.params[PRESET_ARITY[self.name].index(key)]


@dataclass(frozen=True)
class GridConfig:
    Nr: int
    Nz: int
    R0: float
    Lz: float


@dataclass(frozen=True)
class TimeConfig:
    T: float
    dt: float | None
    cfl_safety: float


@dataclass(frozen=True)
class PhysicsConfig:
    C0: float
    eps: float
    delta_min: float


@dataclass(frozen=True)
class IterationConfig:
    n_max: int
    psi_tol: float
    norm_order: int


@dataclass(frozen=True)
class OutputConfig:
    directory: str | None
    snapshot_every: int
    emit_fields: bool


@dataclass(frozen=True)
class SimConfig:
    grid: GridConfig
    RS: float
    time: TimeConfig
    physics: PhysicsConfig
    preset: Preset
    seed_check: str
    iteration: IterationConfig
    output: OutputConfig
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "grid": asdict(self.grid),
            "wall": {"RS": self.RS},
            "time": asdict(self.time),
            "physics": asdict(self.physics),
            "initial": {"preset": str(self.preset), "seed_check": self.seed_check},
            "iteration": asdict(self.iteration),
            "output": asdict(self.output),
        }

    def provenance_hash(self) -> str:
        """sha256 of the canonical physics-relevant config (output section excluded)."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, overrides) -> "SimConfig":
        return parse_config(apply_overrides(self.to_dict(), overrides))


# --- preset strings -----------------------------------------------------------

_PRESET_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def _coerce(v):
    # YAML 1.1 reads exponent forms without a dot (1e-10) as strings
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def parse_preset(value) -> Preset:
    key = "initial.preset"
    if isinstance(value, Preset):
        return value
    if isinstance(value, dict):
        value = dict(value)
        name = value.pop("name", None)
        if name not in PRESET_ARITY:
            raise ConfigError(key, f"unknown preset {name!r}")
        names = PRESET_ARITY[name]
        missing = [n for n in names if n not in value]
        extra = set(value) - set(names)
        if missing or extra:
            raise ConfigError(key, f"preset {name} takes {names}, got {sorted(value)}")
        params = tuple(value[n] for n in names)
    elif isinstance(value, str):
        m = _PRESET_RE.match(value)
        if not m:
            raise ConfigError(key, f"cannot parse preset {value!r}")
        name, args = m.group(1), m.group(2)
        if name not in PRESET_ARITY:
            raise ConfigError(key, f"unknown preset {name!r}")
        params = tuple(yaml.safe_load(f"[{args}]")) if args and args.strip() else ()
    else:
        raise ConfigError(key, f"preset must be a string or mapping, got {type(value).__name__}")
    params = tuple(_coerce(p) for p in params)
    arity = PRESET_ARITY[name]
    if len(params) != len(arity):
        raise ConfigError(key, f"preset {name} takes {len(arity)} parameters {arity}, got {len(params)}")
    for p in params:
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise ConfigError(key, f"preset parameters must be numbers, got {p!r}")
    if name == "mms" and params[0] not in (1, 2):
        raise ConfigError(key, f"mms case_id must be 1 or 2, got {params[0]}")
    return Preset(name, tuple(float(p) if name != "mms" else int(p) for p in params))


# --- parsing ------------------------------------------------------------------

def _normalize(src: dict) -> dict:
    """Fold flat aliases into the nested layout and merge defaults."""
    if not isinstance(src, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    out = copy.deepcopy(DEFAULTS)
    for key, value in src.items():
        if key in DEFAULTS:
            if not isinstance(value, dict):
                raise ConfigError(key, "section must be a mapping")
            for sub, v in value.items():
                if sub not in DEFAULTS[key]:
                    raise ConfigError(f"{key}.{sub}", "unknown key")
                out[key][sub] = v
        elif key in FLAT_ALIASES:
            sec, sub = FLAT_ALIASES[key].split(".")
            out[sec][sub] = value
        else:
            raise ConfigError(key, "unknown key")
    return out


def _num(d: dict, path: str, kind=float):
    sec, sub = path.split(".")
    v = _coerce(d[sec][sub])
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(path, f"expected an integer, got {v!r}")
        return int(v)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(path, f"must be finite, got {v}")
    return v


def parse_config(source) -> SimConfig:
    """Parse a mapping, a YAML/JSON string, or a path to a YAML/JSON file."""
    if isinstance(source, Path):
        source = load_text(source)
    if isinstance(source, str):
        try:
            source = yaml.safe_load(source)
        except yaml.YAMLError as exc:
            raise ConfigError("<root>", f"not valid YAML/JSON: {exc}") from exc
    d = _normalize(source or {})

    Nr, Nz = _num(d, "grid.Nr", int), _num(d, "grid.Nz", int)
    for k, v in (("grid.Nr", Nr), ("grid.Nz", Nz)):
        if v < 8:
            raise ConfigError(k, f"must be >= 8, got {v}")
    R0, Lz = _num(d, "grid.R0"), _num(d, "grid.Lz")
    if R0 <= 0:
        raise ConfigError("grid.R0", f"must be positive, got {R0}")
    if Lz <= 0:
        raise ConfigError("grid.Lz", f"must be positive, got {Lz}")
    RS = _num(d, "wall.RS")
    if RS <= R0:
        raise ConfigError("wall.RS", f"wall radius {RS} must exceed R0={R0}")

    T = _num(d, "time.T")
    if T <= 0:
        raise ConfigError("time.T", f"must be positive, got {T}")
    dt = d["time"]["dt"]
    if dt is not None:
        dt = _num(d, "time.dt")
        if dt <= 0:
            raise ConfigError("time.dt", f"must be positive, got {dt}")
        n = round(T / dt)
        if n < 1 or not math.isclose(n * dt, T, rel_tol=1e-9):
            raise ConfigError("time.dt", f"T={T} is not a whole number of steps of {dt}")
    cfl = _num(d, "time.cfl_safety")
    if not 0.0 < cfl < 1.0:
        raise ConfigError("time.cfl_safety", f"must lie in (0, 1), got {cfl}")

    C0, eps, dmin = _num(d, "physics.C0"), _num(d, "physics.eps"), _num(d, "physics.delta_min")
    if eps < 0:
        raise ConfigError("physics.eps", f"must be >= 0, got {eps}")
    if dmin < 0:
        raise ConfigError("physics.delta_min", f"must be >= 0, got {dmin}")

    preset = parse_preset(d["initial"]["preset"])
    seed_check = d["initial"]["seed_check"]
    if seed_check not in ("error", "warn"):
        raise ConfigError("initial.seed_check", f"must be 'error' or 'warn', got {seed_check!r}")

    n_max = _num(d, "iteration.n_max", int)
    if n_max < 2:
        raise ConfigError("iteration.n_max", f"must be >= 2, got {n_max}")
    psi_tol = _num(d, "iteration.psi_tol")
    if psi_tol <= 0:
        raise ConfigError("iteration.psi_tol", f"must be positive, got {psi_tol}")
    k = _num(d, "iteration.norm_order", int)
    if k not in (2, 3, 4):
        raise ConfigError("iteration.norm_order", f"must be 2, 3 or 4, got {k}")

    out = d["output"]
    directory = out["directory"]
    if directory is not None and not isinstance(directory, str):
        raise ConfigError("output.directory", "must be a string path")
    every = _num(d, "output.snapshot_every", int)
    if every < 0:
        raise ConfigError("output.snapshot_every", f"must be >= 0, got {every}")
    if not isinstance(out["emit_fields"], bool):
        raise ConfigError("output.emit_fields", "must be true or false")

    return SimConfig(GridConfig(Nr, Nz, R0, Lz), RS, TimeConfig(T, dt, cfl),
                     PhysicsConfig(C0, eps, dmin), preset, seed_check,
                     IterationConfig(n_max, psi_tol, k),
                     OutputConfig(directory, every, out["emit_fields"]), raw=d)


def load_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc


def apply_overrides(d: dict, overrides) -> dict:
    """Apply ``key=value`` dot-path overrides; values are parsed as YAML scalars."""
    d = _normalize(d)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        key = FLAT_ALIASES.get(key, key)
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in DEFAULTS or parts[1] not in DEFAULTS[parts[0]]:
            raise ConfigError(key, "unknown override key")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"cannot parse value {raw!r}") from exc
        d[parts[0]][parts[1]] = value
    return d
