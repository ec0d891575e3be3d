"""Cell geometry and large-scale fading for a single-cell uplink population.

Devices fall uniformly over the area of an annulus between a guard radius and
the cell radius, and each device's average channel gain comes from a
log-distance path loss with a fixed intercept.  Human-type devices always
occupy the leading indices and machine-type devices the trailing ones; the
rest of the package relies on that ordering.

``Scenario`` objects are immutable after construction and safe to share
across threads.  Randomness is confined to :func:`drop_devices`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

SCENARIO_SCHEMA_VERSION = 1

# Log-distance path loss: fixed_db + slope_db * log10(d / 1 km).
DEFAULT_PATHLOSS_FIXED_DB = 130.0
DEFAULT_PATHLOSS_SLOPE_DB = 37.6

DEFAULT_NOISE_PSD_DBM_PER_HZ = -174.0
DEFAULT_BANDWIDTH_HZ = 20e6

DEFAULT_CELL_RADIUS_M = 250.0
DEFAULT_GUARD_RADIUS_M = 20.0


class ConfigError(ValueError):
    """A configuration value violates a structural constraint."""


class DeviceClass(enum.Enum):
    HUMAN = "human"
    MACHINE = "machine"


def make_rng(seed, stream=0):
    """Return a counter-based generator for the pair (seed, stream).

    Distinct stream indices under the same seed give statistically
    independent streams, so parallel batches stay reproducible no matter how
    work is scheduled.  An existing Generator passes through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ConfigError("seed must be an int or a numpy Generator, not None")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def noise_power_watt(psd_dbm_per_hz=DEFAULT_NOISE_PSD_DBM_PER_HZ,
                     bandwidth_hz=DEFAULT_BANDWIDTH_HZ):
    """Thermal noise power in watt over a bandwidth with a flat PSD in dBm/Hz."""
    if bandwidth_hz <= 0:
        raise ConfigError(f"bandwidth_hz must be > 0, got {bandwidth_hz}")
    return float(dbm_to_watt(psd_dbm_per_hz + 10.0 * math.log10(bandwidth_hz)))


def pathloss_db(distance_km, fixed_db=DEFAULT_PATHLOSS_FIXED_DB,
                slope_db=DEFAULT_PATHLOSS_SLOPE_DB):
    """Path loss in dB at a distance in km (scalar or array)."""
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0.0):
        raise ConfigError("distance_km must be > 0")
    out = fixed_db + slope_db * np.log10(d)
    return float(out) if np.isscalar(distance_km) else out


def beta_from_distance_km(distance_km, fixed_db=DEFAULT_PATHLOSS_FIXED_DB,
                          slope_db=DEFAULT_PATHLOSS_SLOPE_DB):
    """Linear average channel gain for the log-distance path loss."""
    pl = pathloss_db(distance_km, fixed_db=fixed_db, slope_db=slope_db)
    return 10.0 ** (-np.asarray(pl, dtype=float) / 10.0) if not np.isscalar(pl) \
        else 10.0 ** (-pl / 10.0)


@dataclass(frozen=True)
class Device:
    """One uplink device: identity, class, average channel gain, position."""
    id: int
    kind: DeviceClass
    beta: float
    position_m: tuple[float, float] | None = None

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ConfigError(f"device {self.id}: beta must be finite and > 0, got {self.beta}")
        if self.position_m is not None:
            object.__setattr__(self, "position_m",
                               (float(self.position_m[0]), float(self.position_m[1])))


@dataclass(frozen=True)
class DropConfig:
    """Parameters for one random placement of the device population."""
    K_h: int
    K_m: int
    M: int
    cell_radius_m: float = DEFAULT_CELL_RADIUS_M
    guard_radius_m: float = DEFAULT_GUARD_RADIUS_M
    pathloss_fixed_db: float = DEFAULT_PATHLOSS_FIXED_DB
    pathloss_slope_db: float = DEFAULT_PATHLOSS_SLOPE_DB
    noise_power_w: float = field(default_factory=noise_power_watt)
    p_max_w: float = 1.0  # 30 dBm

    def __post_init__(self):
        if self.K_h < 1:
            raise ConfigError(f"K_h must be >= 1, got {self.K_h}")
        if self.K_m < 0:
            raise ConfigError(f"K_m must be >= 0, got {self.K_m}")
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if not 0.0 < self.guard_radius_m < self.cell_radius_m:
            raise ConfigError(
                f"need 0 < guard_radius_m < cell_radius_m, got "
                f"{self.guard_radius_m} and {self.cell_radius_m}")
        if self.noise_power_w <= 0.0:
            raise ConfigError(f"noise_power_w must be > 0, got {self.noise_power_w}")
        if self.p_max_w <= 0.0:
            raise ConfigError(f"p_max_w must be > 0, got {self.p_max_w}")


@dataclass(frozen=True)
class Scenario:
    """Frozen snapshot of one cell: device list plus radio constants.

    Humans occupy indices 0..K_h-1 and machines K_h..K-1, ids equal indices.
    """
    devices: tuple[Device, ...]
    M: int
    noise_power_w: float
    p_max_w: float
    cell_radius_m: float = DEFAULT_CELL_RADIUS_M
    guard_radius_m: float = DEFAULT_GUARD_RADIUS_M
    pathloss_fixed_db: float = DEFAULT_PATHLOSS_FIXED_DB
    pathloss_slope_db: float = DEFAULT_PATHLOSS_SLOPE_DB
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if self.noise_power_w <= 0.0:
            raise ConfigError(f"noise_power_w must be > 0, got {self.noise_power_w}")
        if self.p_max_w <= 0.0:
            raise ConfigError(f"p_max_w must be > 0, got {self.p_max_w}")
        kinds = [d.kind for d in self.devices]
        n_h = sum(1 for k in kinds if k is DeviceClass.HUMAN)
        if n_h < 1:
            raise ConfigError("scenario needs at least one human device")
        # humans first, machines after, ids sequential
        for i, d in enumerate(self.devices):
            if d.id != i:
                raise ConfigError(f"device ids must be 0..K-1 in order, got id {d.id} at index {i}")
            expect = DeviceClass.HUMAN if i < n_h else DeviceClass.MACHINE
            if d.kind is not expect:
                raise ConfigError("humans must occupy the leading indices, machines the trailing ones")

    @property
    def K(self):
        return len(self.devices)

    @property
    def K_h(self):
        return sum(1 for d in self.devices if d.kind is DeviceClass.HUMAN)

    @property
    def K_m(self):
        return self.K - self.K_h

    @property
    def humans(self):
        return slice(0, self.K_h)

    @property
    def machines(self):
        return slice(self.K_h, self.K)

    def betas(self):
        return np.array([d.beta for d in self.devices], dtype=float)

    def is_human(self):
        return np.array([d.kind is DeviceClass.HUMAN for d in self.devices])

    def with_m(self, M):
        """Same population with a different antenna count."""
        return replace(self, M=int(M))

    @classmethod
    def from_betas(cls, betas_h, betas_m, M, noise_power_w, p_max_w=1.0, seed=None, **kw):
        """Build a scenario directly from average gains, skipping the drop."""
        devices = []
        for b in np.atleast_1d(np.asarray(betas_h, dtype=float)):
            devices.append(Device(len(devices), DeviceClass.HUMAN, float(b)))
        for b in np.atleast_1d(np.asarray(betas_m, dtype=float)):
            devices.append(Device(len(devices), DeviceClass.MACHINE, float(b)))
        return cls(devices=tuple(devices), M=int(M), noise_power_w=float(noise_power_w),
                   p_max_w=float(p_max_w), seed=seed, **kw)


def drop_devices(config: DropConfig, seed) -> Scenario:
    """Place K_h + K_m devices uniformly over the annulus area and return a Scenario.

    Uniform over area means the radius density grows linearly in r; radii are
    drawn via the inverse CDF so a fixed seed gives a byte-stable scenario.
    """
    rng = make_rng(seed, stream=0)
    K = config.K_h + config.K_m
    a2 = config.guard_radius_m ** 2
    b2 = config.cell_radius_m ** 2
    r = np.sqrt(a2 + (b2 - a2) * rng.uniform(size=K))
    theta = rng.uniform(0.0, 2.0 * math.pi, size=K)
    x = r * np.cos(theta)
    y = r * np.sin(theta)
    beta = beta_from_distance_km(r / 1000.0, fixed_db=config.pathloss_fixed_db,
                                 slope_db=config.pathloss_slope_db)
    devices = []
    for i in range(K):
        kind = DeviceClass.HUMAN if i < config.K_h else DeviceClass.MACHINE
        devices.append(Device(i, kind, float(beta[i]), (float(x[i]), float(y[i]))))
    return Scenario(
        devices=tuple(devices), M=config.M,
        noise_power_w=config.noise_power_w, p_max_w=config.p_max_w,
        cell_radius_m=config.cell_radius_m, guard_radius_m=config.guard_radius_m,
        pathloss_fixed_db=config.pathloss_fixed_db,
        pathloss_slope_db=config.pathloss_slope_db,
        seed=int(seed) if not isinstance(seed, np.random.Generator) else None)


def scenario_to_json_dict(scenario: Scenario) -> dict:
    return {
        "schema_version": SCENARIO_SCHEMA_VERSION,
        "seed": scenario.seed,
        "M": scenario.M,
        "noise_power_w": scenario.noise_power_w,
        "p_max_w": scenario.p_max_w,
        "cell_radius_m": scenario.cell_radius_m,
        "guard_radius_m": scenario.guard_radius_m,
        "pathloss_fixed_db": scenario.pathloss_fixed_db,
        "pathloss_slope_db": scenario.pathloss_slope_db,
        "devices": [
            {
                "id": d.id,
                "class": d.kind.value,
                "beta": d.beta,
                "position_m": list(d.position_m) if d.position_m is not None else None,
            }
            for d in scenario.devices
        ],
    }


def scenario_to_json(scenario: Scenario) -> str:
    """Canonical JSON text; byte-identical for equal scenarios."""
    return json.dumps(scenario_to_json_dict(scenario), indent=2, sort_keys=True) + "\n"


def scenario_from_json_dict(data: dict) -> Scenario:
    version = data.get("schema_version")
    if version != SCENARIO_SCHEMA_VERSION:
        raise ConfigError(f"unsupported scenario schema_version {version!r}, "
                          f"expected {SCENARIO_SCHEMA_VERSION}")
    try:
        devices = tuple(
            Device(int(d["id"]), DeviceClass(d["class"]), float(d["beta"]),
                   tuple(d["position_m"]) if d.get("position_m") is not None else None)
            for d in data["devices"])
        return Scenario(
            devices=devices, M=int(data["M"]),
            noise_power_w=float(data["noise_power_w"]), p_max_w=float(data["p_max_w"]),
            cell_radius_m=float(data["cell_radius_m"]),
            guard_radius_m=float(data["guard_radius_m"]),
            pathloss_fixed_db=float(data["pathloss_fixed_db"]),
            pathloss_slope_db=float(data["pathloss_slope_db"]),
            seed=data.get("seed"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed scenario JSON: {exc}") from exc


def scenario_from_json(text: str) -> Scenario:
    return scenario_from_json_dict(json.loads(text))
