"""Pilot bookkeeping for the three coherence-interval allocation schemes.

Humans hold reserved, mutually orthogonal pilot sequences.  Machines share a
small pool of orthogonal sequences (orthogonal to the human ones as well) and
each machine picks one uniformly at random in every coherence interval, so
two machines collide with probability 1/Np_m.  Cross-correlation magnitudes
are therefore always 0 or 1 and a plan only needs to record indices, not
sequences.

Scheme layout of one coherence interval of N symbols:

* SC1: humans and machines live in disjoint intervals.  A human interval
  spends Np_h symbols on pilots, a machine interval Np_m; a fraction alpha_h
  of all intervals goes to humans.
* SC2: one shared training window of Np_h = K_h + Np_m symbols; machine
  sequences span the orthogonal complement of the human ones.
* SC3: humans train alone for Np_h symbols, then machines train for Np_m
  symbols while humans already send data; everyone shares the remaining
  N - Np_h - Np_m symbols for data.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .scenario import ConfigError, DeviceClass, Scenario, make_rng


class Scheme(enum.Enum):
    SC1 = "sc1"
    SC2 = "sc2"
    SC3 = "sc3"


@dataclass(frozen=True)
class SchemeConfig:
    """Static allocation choices for one scheme on one scenario."""
    scheme: Scheme
    N: int          # coherence interval length in symbols
    Np_h: int       # human training length (SC2: the shared window)
    Np_m: int       # machine pilot pool size = machine training length
    alpha_h: float = 1.0  # SC1 only: fraction of intervals given to humans

    @classmethod
    def sc1(cls, N, Np_h, Np_m, alpha_h):
        return cls(Scheme.SC1, int(N), int(Np_h), int(Np_m), float(alpha_h))

    @classmethod
    def sc2(cls, N, K_h, Np_m):
        # shared window: humans use K_h dimensions, machines the complement
        return cls(Scheme.SC2, int(N), int(K_h) + int(Np_m), int(Np_m))

    @classmethod
    def sc3(cls, N, Np_h, Np_m):
        return cls(Scheme.SC3, int(N), int(Np_h), int(Np_m))

    def validate(self, scenario: Scenario):
        """Raise ConfigError when the allocation cannot host the scenario."""
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if self.Np_h < scenario.K_h:
            raise ConfigError(f"Np_h={self.Np_h} cannot host K_h={scenario.K_h} orthogonal pilots")
        if scenario.K_m >= 1 and self.Np_m < 1:
            raise ConfigError(f"Np_m must be >= 1 when machines are present, got {self.Np_m}")
        if self.Np_m < 0:
            raise ConfigError(f"Np_m must be >= 0, got {self.Np_m}")
        if self.scheme is Scheme.SC1:
            if not 0.0 <= self.alpha_h <= 1.0:
                raise ConfigError(f"alpha_h must lie in [0, 1], got {self.alpha_h}")
            if self.Np_h >= self.N or (scenario.K_m >= 1 and self.Np_m >= self.N):
                raise ConfigError("SC1 training must leave room for data: Np_h < N and Np_m < N")
        else:
            if self.alpha_h != 1.0:
                raise ConfigError(f"alpha_h is only meaningful for SC1, got {self.alpha_h}")
        if self.scheme is Scheme.SC2:
            if self.Np_h != scenario.K_h + self.Np_m:
                raise ConfigError(
                    f"SC2 shared window must satisfy Np_h = K_h + Np_m, "
                    f"got Np_h={self.Np_h}, K_h={scenario.K_h}, Np_m={self.Np_m}")
            if self.Np_h > self.N:
                raise ConfigError(f"SC2 window Np_h={self.Np_h} exceeds N={self.N}")
        if self.scheme is Scheme.SC3:
            if self.Np_h + self.Np_m >= self.N:
                raise ConfigError(
                    f"SC3 needs Np_h + Np_m < N, got {self.Np_h} + {self.Np_m} >= {self.N}")

    def despread_length(self, kind: DeviceClass) -> int:
        """Training window length seen by a device of the given class."""
        if self.scheme is Scheme.SC2:
            return self.Np_h
        return self.Np_h if kind is DeviceClass.HUMAN else self.Np_m

    def prelog(self, scenario: Scenario) -> np.ndarray:
        """Per-device fraction of the coherence interval carrying data."""
        self.validate(scenario)
        N = float(self.N)
        out = np.empty(scenario.K, dtype=float)
        h = scenario.humans
        m = scenario.machines
        if self.scheme is Scheme.SC1:
            out[h] = self.alpha_h * (N - self.Np_h) / N
            out[m] = (1.0 - self.alpha_h) * (N - self.Np_m) / N
        elif self.scheme is Scheme.SC2:
            out[:] = (N - self.Np_h) / N
        else:
            out[h] = (N - self.Np_h) / N
            out[m] = (N - self.Np_h - self.Np_m) / N
        if np.any(out < 0.0):
            raise ConfigError("negative data fraction, training exceeds the coherence interval")
        return out


@dataclass(frozen=True)
class PilotPlan:
    """Realized pilot indices for one coherence interval.

    Humans hold reserved indices 0..K_h-1 in the human pilot space; machine
    choices live in the separate machine pool {0..Np_m-1}.  Only equality of
    machine choices matters for collisions.
    """
    K_h: int
    Np_m: int
    machine_choices: np.ndarray

    def __post_init__(self):
        choices = np.asarray(self.machine_choices, dtype=np.int64)
        choices.setflags(write=False)
        object.__setattr__(self, "machine_choices", choices)
        if choices.size and (choices.min() < 0 or choices.max() >= self.Np_m):
            raise ConfigError("machine pilot choices out of range")

    @property
    def K_m(self):
        return int(self.machine_choices.size)

    @property
    def K(self):
        return self.K_h + self.K_m

    def collision_sets(self):
        """Map pilot index -> machine device ids sharing it (only used indices)."""
        out = {}
        for j, c in enumerate(self.machine_choices):
            out.setdefault(int(c), []).append(self.K_h + j)
        return {c: np.array(ids, dtype=int) for c, ids in out.items()}


def draw_pilot_plan(config: SchemeConfig, scenario: Scenario, seed) -> PilotPlan:
    """Draw each machine's pilot index uniformly from the pool."""
    config.validate(scenario)
    rng = make_rng(seed)
    if scenario.K_m == 0:
        choices = np.empty(0, dtype=np.int64)
    else:
        choices = rng.integers(0, config.Np_m, size=scenario.K_m)
    return PilotPlan(K_h=scenario.K_h, Np_m=config.Np_m, machine_choices=choices)


def gram_matrix(plan: PilotPlan) -> np.ndarray:
    """K x K matrix of |<pilot_i, pilot_j>|, always 0 or 1.

    Humans are orthogonal to everyone; machines overlap exactly when they
    picked the same pool index.
    """
    K = plan.K
    out = np.eye(K, dtype=float)
    if plan.K_m:
        same = plan.machine_choices[:, None] == plan.machine_choices[None, :]
        out[plan.K_h:, plan.K_h:] = same.astype(float)
    return out
