"""Simulation configuration: defaults, flat key=value files, validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

MODES = ("trajectories", "unitary", "master", "random-bath", "analyze")


class ConfigError(ValueError):
    pass


@dataclass
class SimulationConfig:
    """All run parameters; energies in units of J, times in units of 1/J."""

    mode: str = "unitary"
    L: int = 6
    J: float = 1.0
    h_s: float = 5.0
    gamma: list[float] = field(default_factory=lambda: [0.5])
    M: int = 100
    omega_max: float = 10.0
    dt: float = 0.1
    t_s: float = 50.0
    N_TJ: int = 256
    N_init: int = 256
    seed: int = 0
    sample_times: list[float] | None = None
    output: str = "results"
    x_min: float = 8.0
    max_modes: int = 16384
    workers: int = 1
    inputs: list[str] = field(default_factory=list)
    observable: str = "Cw_total"
    n_boot: int = 200
    grid: int = 5
    gamma_c_range: list[float] | None = None
    nu_range: list[float] = field(default_factory=lambda: [0.3, 5.0])
    zeta_range: list[float] = field(default_factory=lambda: [-1.0, 1.0])

    def validate(self) -> "SimulationConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.L < 2 or self.L % 2:
            raise ConfigError(f"L must be an even integer >= 2, got {self.L}")
        if self.M < 1 or self.omega_max <= 0 or self.h_s <= 0:
            raise ConfigError("need M >= 1, omega_max > 0, h_s > 0")
        if not self.gamma or min(self.gamma) < 0:
            raise ConfigError("gamma must be a non-empty list of non-negative rates")
        if self.dt <= 0 or self.t_s <= 0 or self.J <= 0:
            raise ConfigError("dt, t_s and J must be positive")
        if self.N_TJ < 1 or self.N_init < 1 or self.workers < 1:
            raise ConfigError("N_TJ, N_init and workers must be >= 1")
        if self.sample_times is not None and any(not 0 <= t <= self.t_s for t in self.sample_times):
            raise ConfigError("sample_times must lie in [0, t_s]")
        for name in ("nu_range", "zeta_range", "gamma_c_range"):
            r = getattr(self, name)
            if r is not None and (len(r) != 2 or not r[1] > r[0]):
                raise ConfigError(f"{name} must be two increasing numbers, got {r}")
        return self

    def times(self) -> list[float]:
        """Sample times; by default uniform with spacing 1/J up to and including t_s."""
        if self.sample_times is not None:
            return sorted(set(float(t) for t in self.sample_times))
        step = 1.0 / self.J
        n = int(self.t_s / step + 1e-9)
        times = [round(k * step, 12) for k in range(1, n + 1)]
        if not times or abs(times[-1] - self.t_s) > 1e-9:
            times.append(self.t_s)
        return times

    def items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in dataclasses.fields(self)]


_LISTS = {"gamma": float, "sample_times": float, "inputs": str, "gamma_c_range": float,
          "nu_range": float, "zeta_range": float}
_SCALARS = {f.name: f.type for f in dataclasses.fields(SimulationConfig) if f.name not in _LISTS}


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def parse_value(key: str, text: str):
    text = text.strip()
    try:
        if key in _LISTS:
            if text.lower() == "none":
                return None
            return [_LISTS[key](x) for x in text.replace(",", " ").split()]
        kind = _SCALARS[key]
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except KeyError:
        raise ConfigError(f"unknown config key {key!r}") from None
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None


def read_config_file(path: str | Path) -> dict:
    """Flat ``key=value`` file; ``#`` starts a comment and ``meta.*`` keys are ignored."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("meta."):
            continue
        out[key] = parse_value(key, value)
    return out


def build_config(*layers: dict) -> SimulationConfig:
    """Merge override dicts left to right over the defaults and validate."""
    merged = {}
    for layer in layers:
        merged.update(layer)
    try:
        cfg = SimulationConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()
