"""Experiment configuration: domain parameter sets, TOML loading, validation.

All parameter records are frozen dataclasses so they can be shared freely
across parallel workers and used as memoization keys.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


def _default_omega_grid() -> tuple[float, ...]:
    # 0.1 .. 1.0 in steps of 0.1, then 1.5 .. 10.0 in steps of 0.5
    fine = [round(0.1 * k, 1) for k in range(1, 11)]
    coarse = [round(1.0 + 0.5 * k, 1) for k in range(1, 19)]
    return tuple(fine + coarse)


@dataclass(frozen=True)
class VamThresholds:
    """Kinematic trigger thresholds and generation-interval limits."""

    delta_pos: float = 4.0        # meters
    delta_speed: float = 0.5      # m/s
    delta_orient_deg: float = 4.0  # degrees
    t_gen_min: float = 0.1        # seconds
    t_gen_max: float = 5.0        # seconds

    def validate(self):
        for name in ("delta_pos", "delta_speed", "delta_orient_deg",
                     "t_gen_min", "t_gen_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"thresholds.{name} must be > 0")
        if self.t_gen_min >= self.t_gen_max:
            raise ConfigError("thresholds.t_gen_min must be < t_gen_max")


@dataclass(frozen=True)
class GnmParams:
    """Pedestrian-dynamics constants: ODE, influence kernel, wall kernel."""

    tau: float = 0.5       # reaction time, seconds
    v: float = 1.34        # desired speed, m/s
    h: float = 0.05        # Euler step, seconds (must stay below tau)
    w_bar: float = 1.34    # mean walking speed used in closed-form rates
    kernel_p: float = 3.59  # kernel maximum scale
    r_h: float = 0.7       # kernel support radius, meters
    kappa: float = 0.6     # angular frequency inside the cardioid factor
    r_s: float = 0.03      # logistic steepness of the cardioid factor
    x_0: float = 0.3       # logistic offset of the cardioid factor
    wall_p: float = 3.59   # wall kernel maximum scale
    wall_r: float = 0.7    # wall kernel support, meters
    g_eps: float = 0.25    # width of the direction-normalizer blending zone

    def validate(self):
        if not (0 < self.h < self.tau):
            raise ConfigError("gnm.h must satisfy 0 < h < tau")
        for name in ("v", "w_bar", "r_h", "wall_r", "kernel_p", "wall_p",
                     "r_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"gnm.{name} must be > 0")
        if not (0 < self.g_eps < 1):
            raise ConfigError("gnm.g_eps must be in (0, 1)")


@dataclass(frozen=True)
class ChannelParams:
    """802.11p MAC constants for the contention model."""

    w0: int = 15                      # contention window, slots
    slot_time: float = 13e-6          # seconds
    aifs_delta: float = 110e-6        # arbitration gap, seconds
    frame_time_t0: float = 467.424e-6  # frame on-air time, seconds

    def validate(self):
        if self.w0 < 1 or int(self.w0) != self.w0:
            raise ConfigError("channel.w0 must be an integer >= 1")
        for name in ("slot_time", "aifs_delta", "frame_time_t0"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"channel.{name} must be > 0")

    @property
    def busy_time(self) -> float:
        return self.aifs_delta + self.frame_time_t0


@dataclass(frozen=True)
class ScenarioConfig:
    """Street geometry, populations, message rates and the sampling grid."""

    street_length: float = 2000.0   # meters
    sidewalk_width: float = 2.0     # meters
    n_p: int = 16
    n_b: int = 0
    n_c: int = 0
    lambda_b: float = 1.0           # messages/second per bike
    lambda_c: float = 3.0           # messages/second per car
    mu: float | None = None         # ped/m^2; derived from counts when absent
    omega_grid: tuple[float, ...] = field(default_factory=_default_omega_grid)
    omega_max: float = 10.0         # Hz
    d_wall_min: float = 0.6         # meters, wall-distance averaging bound
    d_wall_max: float = 2.0         # meters

    def validate(self):
        for name in ("n_p", "n_b", "n_c"):
            if getattr(self, name) < 0:
                raise ConfigError(f"scenario.{name} must be >= 0")
        for name in ("lambda_b", "lambda_c"):
            if getattr(self, name) < 0:
                raise ConfigError(f"scenario.{name} must be >= 0")
        for name in ("street_length", "sidewalk_width", "omega_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"scenario.{name} must be > 0")
        if self.mu is not None and self.mu < 0:
            raise ConfigError("scenario.mu must be >= 0")
        if not self.omega_grid:
            raise ConfigError("scenario.omega_grid must not be empty")
        prev = 0.0
        for w in self.omega_grid:
            if w <= prev:
                raise ConfigError("scenario.omega_grid must be strictly increasing and positive")
            prev = w
        if self.omega_grid[-1] > self.omega_max:
            raise ConfigError("scenario.omega_grid entries must not exceed omega_max")
        if not (0 < self.d_wall_min < self.d_wall_max):
            raise ConfigError("scenario.d_wall_min must satisfy 0 < d_wall_min < d_wall_max")

    @property
    def mu_effective(self) -> float:
        """Pedestrian density: explicit value, else count over sidewalk area."""
        if self.mu is not None:
            return self.mu
        area = 2.0 * self.street_length * self.sidewalk_width
        return self.n_p / area

    @property
    def total_stations(self) -> int:
        return self.n_p + self.n_b + self.n_c

    @property
    def background_rate(self) -> float:
        """Aggregate message rate of bikes and cars, messages/second."""
        return self.n_b * self.lambda_b + self.n_c * self.lambda_c


@dataclass(frozen=True)
class Experiment:
    """Full validated configuration bundle."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    thresholds: VamThresholds = field(default_factory=VamThresholds)
    gnm: GnmParams = field(default_factory=GnmParams)
    channel: ChannelParams = field(default_factory=ChannelParams)

    def validate(self):
        self.scenario.validate()
        self.thresholds.validate()
        self.gnm.validate()
        self.channel.validate()


_SECTIONS = {
    "scenario": ScenarioConfig,
    "thresholds": VamThresholds,
    "gnm": GnmParams,
    "channel": ChannelParams,
}


def _build_section(cls, name: str, raw: dict):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key {name}.{key}")
        if key == "omega_grid":
            value = tuple(float(x) for x in value)
        elif key in ("n_p", "n_b", "n_c", "w0"):
            value = int(value)
        elif value is not None:
            value = float(value)
        kwargs[key] = value
    return cls(**kwargs)


def _owning_section(key: str) -> str | None:
    for name, cls in _SECTIONS.items():
        if key in {f.name for f in fields(cls)}:
            return name
    return None


def from_dict(raw: dict) -> Experiment:
    grouped: dict[str, dict] = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section [{key}] must be a table")
            grouped.setdefault(key, {}).update(value)
        elif isinstance(value, dict):
            raise ConfigError(f"unknown section [{key}]")
        else:
            # bare keys route to the section that owns the field
            section = _owning_section(key)
            if section is None:
                raise ConfigError(f"unknown key {key}")
            grouped.setdefault(section, {})[key] = value
    sections = {name: _build_section(_SECTIONS[name], name, body)
                for name, body in grouped.items()}
    exp = Experiment(**sections)
    exp.validate()
    return exp


def load_config(path) -> Experiment:
    """Load and validate a TOML experiment file; absent fields get defaults."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(raw)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"unsupported config value {value!r}")


def to_toml(exp: Experiment) -> str:
    """Canonical serialization: fixed section and key order, repr floats."""
    out = []
    for section, cls in _SECTIONS.items():
        obj = getattr(exp, section)
        out.append(f"[{section}]")
        for f in fields(cls):
            value = getattr(obj, f.name)
            if value is None:
                continue
            out.append(f"{f.name} = {_toml_value(value)}")
        out.append("")
    return "\n".join(out)


def save_config(exp: Experiment, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_toml(exp))


def config_hash(exp: Experiment) -> str:
    return hashlib.sha256(to_toml(exp).encode()).hexdigest()


def derive_seed(base_seed: int, *indices: int) -> int:
    """Stable per-task seed: results must not depend on worker scheduling."""
    msg = ",".join(str(int(x)) for x in (base_seed, *indices)).encode()
    return int.from_bytes(hashlib.sha256(msg).digest()[:8], "big")


def with_scenario(exp: Experiment, **changes) -> Experiment:
    """Convenience copy with scenario fields replaced (re-validated)."""
    new = replace(exp, scenario=replace(exp.scenario, **changes))
    new.validate()
    return new
