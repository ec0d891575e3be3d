"""Closed-form link quantities for the three CI allocation schemes.

Everything here is a deterministic function of the average channel gains,
the transmit powers, the antenna count and the scheme geometry:

* ``gamma_*``: the mean-square of one component of the linear channel
  estimate, either for a given pilot overlap pattern or averaged over the
  random machine pilot choices (a harmonic mean, since the estimate quality
  enters the SINR through its reciprocal).
* ``sinr_sc1/sc2/sc3``: effective SINRs of the ratio combiner under the
  standard worst-case-uncorrelated-noise lower bound, split into a desired
  term, a noncoherent interference-plus-noise term, and a coherent term
  caused by pilot collisions (and, under SC3, by human data leaking into the
  machine training window).
* ``rates`` / ``asymptotic_sinr``: achievable rates with the per-class
  prelog factors and the infinite-antenna SINR limits.

All SINRs are assembled from nonnegative terms, so there is no cancellation,
and scaling the noise power and every transmit power by a common factor
leaves every SINR unchanged.  Functions are pure; inputs are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ConfigError, DeviceClass, Scenario
from .pilots import PilotPlan, Scheme, SchemeConfig, gram_matrix

#: Sentinel for quantities that grow without bound (human SINR as M -> inf).
UNBOUNDED = math.inf


def gamma_orthogonal(beta_k, q_k, Np, q_prof, beta_prof, gram2_prof,
                     noise_power_w, extra_interference_w=0.0):
    """Estimate quality of one device for a fixed pilot overlap pattern.

    Parameters
    ----------
    beta_k, q_k : float
        Average gain and pilot power of the device being estimated.
    Np : int
        De-spreading length (number of pilot symbols in the window).
    q_prof, beta_prof, gram2_prof : array_like
        Pilot power, average gain and squared pilot cross-correlation (0 or
        1) of every device transmitting pilots in the same window, including
        the device itself with gram2 = 1.
    noise_power_w : float
        Receiver noise power per symbol.
    extra_interference_w : float, optional
        Received power that is present during the window but not spread by
        the pilot (data sent by other devices while this one trains).

    Returns
    -------
    float
        Mean-square of one component of the linear estimate.
    """
    if Np < 1:
        raise ConfigError(f"Np must be >= 1, got {Np}")
    if q_k < 0.0 or beta_k <= 0.0:
        raise ValueError("need q_k >= 0 and beta_k > 0")
    q_prof = np.asarray(q_prof, dtype=float)
    beta_prof = np.asarray(beta_prof, dtype=float)
    gram2_prof = np.asarray(gram2_prof, dtype=float)
    den = Np * float(np.sum(q_prof * beta_prof * gram2_prof)) \
        + float(extra_interference_w) + float(noise_power_w)
    if den <= 0.0:
        raise ValueError("estimate quality undefined: zero interference and zero noise")
    return Np * q_k * beta_k ** 2 / den


def gamma_given_plan(scenario: Scenario, config: SchemeConfig,
                     q: np.ndarray, p: np.ndarray, plan: PilotPlan) -> np.ndarray:
    """Per-device estimate quality for one realized pilot plan.

    Humans never collide, so their value does not depend on the plan.  Under
    SC3 the machine window additionally carries every human's data power.
    """
    config.validate(scenario)
    beta = scenario.betas()
    sigma2 = scenario.noise_power_w
    gram2 = gram_matrix(plan) ** 2
    out = np.empty(scenario.K, dtype=float)
    for k in range(scenario.K):
        kind = scenario.devices[k].kind
        Np = config.despread_length(kind)
        if kind is DeviceClass.HUMAN:
            prof = ([q[k]], [beta[k]], [1.0])
            extra = 0.0
        else:
            m = scenario.machines
            prof = (q[m], beta[m], gram2[k, m])
            extra = float(np.sum(p[scenario.humans] * beta[scenario.humans])) \
                if config.scheme is Scheme.SC3 else 0.0
        out[k] = gamma_orthogonal(beta[k], q[k], Np, *prof, sigma2,
                                  extra_interference_w=extra)
    return out


def _machine_arrays(scenario, q):
    m = scenario.machines
    beta_m = scenario.betas()[m]
    q_m = np.asarray(q, dtype=float)[m]
    return beta_m, q_m


def gamma_bar_sc1(scenario: Scenario, q, Np_m) -> np.ndarray:
    """Collision-averaged machine estimate quality when machines train alone.

    Average of the reciprocal quality over the uniform pilot choices, then
    inverted; each other machine collides with probability 1/Np_m, which
    turns the de-spread interference term into a plain sum of its received
    pilot powers.
    """
    if Np_m < 1:
        raise ConfigError(f"Np_m must be >= 1, got {Np_m}")
    beta_m, q_m = _machine_arrays(scenario, q)
    qb = q_m * beta_m
    others = np.sum(qb) - qb
    den = Np_m * qb + others + scenario.noise_power_w
    return Np_m * q_m * beta_m ** 2 / den


def gamma_bar_sc2(scenario: Scenario, q, Np) -> np.ndarray:
    """Collision-averaged machine quality in the shared training window.

    The machine pool spans the complement of the human pilots, so collisions
    happen with probability 1/(Np - K_h) while de-spreading still spans Np
    symbols; the cross-machine term picks up the ratio Np/(Np - K_h).
    """
    K_h = scenario.K_h
    if Np <= K_h:
        raise ConfigError(f"shared window Np={Np} must exceed K_h={K_h}")
    beta_m, q_m = _machine_arrays(scenario, q)
    qb = q_m * beta_m
    others = (Np / (Np - K_h)) * (np.sum(qb) - qb)
    den = Np * qb + others + scenario.noise_power_w
    return Np * q_m * beta_m ** 2 / den


def gamma_bar_sc3(scenario: Scenario, q, p, Np_m) -> np.ndarray:
    """Collision-averaged machine quality when humans send data during training.

    Same harmonic mean as the stand-alone machine window, with every human's
    received data power added to the interference floor.
    """
    if Np_m < 1:
        raise ConfigError(f"Np_m must be >= 1, got {Np_m}")
    beta = scenario.betas()
    beta_m, q_m = _machine_arrays(scenario, q)
    p = np.asarray(p, dtype=float)
    human_floor = float(np.sum(p[scenario.humans] * beta[scenario.humans]))
    qb = q_m * beta_m
    others = np.sum(qb) - qb
    den = Np_m * qb + others + human_floor + scenario.noise_power_w
    return Np_m * q_m * beta_m ** 2 / den


@dataclass(frozen=True)
class PowerAllocation:
    """Per-device data power p and pilot power q, in watt."""
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        q = np.array(self.q, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise ConfigError("p and q must be 1-D arrays of equal length")
        if np.any(p < 0.0) or np.any(q < 0.0):
            raise ConfigError("powers must be >= 0")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def full_power(cls, scenario: Scenario):
        cap = scenario.p_max_w
        return cls(np.full(scenario.K, cap), np.full(scenario.K, cap))

    @classmethod
    def uniform(cls, scenario: Scenario, p_w, q_w=None):
        p = np.full(scenario.K, float(p_w))
        q = np.full(scenario.K, float(p_w) if q_w is None else float(q_w))
        return cls(p, q)

    def validate(self, scenario: Scenario):
        if self.p.size != scenario.K:
            raise ConfigError(f"power vectors have length {self.p.size}, scenario has K={scenario.K}")
        cap = scenario.p_max_w * (1.0 + 1e-9)
        if np.any(self.p > cap) or np.any(self.q > cap):
            raise ConfigError("a power exceeds the per-device cap")


@dataclass(frozen=True)
class SinrBreakdown:
    """Per-device SINR decomposition, arrays indexed by device.

    ``gamma`` is the collision-free estimate quality; ``gamma_bar`` the
    collision-averaged one (equal to gamma for humans, whose pilots are
    deterministic).  ``sinr`` always equals desired / (noncoherent +
    coherent).  Devices with zero pilot and zero data power carry sinr 0
    with an infinite noncoherent field.
    """
    gamma: np.ndarray
    gamma_bar: np.ndarray
    desired: np.ndarray
    noncoherent: np.ndarray
    coherent: np.ndarray
    sinr: np.ndarray


def _check_powers(scenario, powers):
    powers.validate(scenario)
    dead = (powers.q == 0.0)
    if np.any(dead & (powers.p > 0.0)):
        raise ConfigError("zero pilot power with positive data power is not estimable")
    return dead & (powers.p == 0.0)


def _gamma_humans(scenario, config, q):
    """Collision-free human estimate quality; training is orthogonal and clean."""
    h = scenario.humans
    beta_h = scenario.betas()[h]
    q_h = np.asarray(q, dtype=float)[h]
    Np = config.despread_length(DeviceClass.HUMAN)
    den = Np * q_h * beta_h + scenario.noise_power_w
    return Np * q_h * beta_h ** 2 / den


def _gamma_machines_no_collision(scenario, config, q, p):
    """Machine estimate quality if no other machine picked the same pilot."""
    beta_m, q_m = _machine_arrays(scenario, q)
    Np = config.despread_length(DeviceClass.MACHINE)
    extra = 0.0
    if config.scheme is Scheme.SC3:
        beta = scenario.betas()
        extra = float(np.sum(np.asarray(p)[scenario.humans] * beta[scenario.humans]))
    den = Np * q_m * beta_m + extra + scenario.noise_power_w
    return Np * q_m * beta_m ** 2 / den


def _coherent_machine_term(scenario, config, p, q, extra_human_quadratic=False):
    """Average coherent interference power at each machine's combiner output.

    Colliding machines contribute p*q*beta^2 each with probability 1/Np_m;
    under SC3 every human contributes p^2*beta^2 surely, scaled by the same
    1/Np_m de-spreading factor.  Normalized by the victim's own q*beta^2.
    """
    beta = scenario.betas()
    m = scenario.machines
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    M = scenario.M
    Np_m = config.Np_m
    c = p[m] * q[m] * beta[m] ** 2
    cross = np.sum(c) - c
    if extra_human_quadratic:
        h = scenario.humans
        cross = cross + np.sum((p[h] * beta[h]) ** 2)
    own = q[m] * beta[m] ** 2
    out = np.zeros(scenario.K_m, dtype=float)
    live = own > 0.0
    out[live] = (M / Np_m) * cross[live] / own[live]
    return out


def _assemble(scenario, powers, gamma_h, gamma_bar_m, gamma_nc_m,
              human_interf_sum, machine_interf_sum, coherent_m, dead):
    """Glue the per-class pieces into a SinrBreakdown over all devices."""
    K, K_h = scenario.K, scenario.K_h
    sigma2 = scenario.noise_power_w
    M = scenario.M
    gamma = np.zeros(K)
    gamma_bar = np.zeros(K)
    desired = M * powers.p
    noncoh = np.full(K, np.inf)
    coh = np.zeros(K)
    h, m = scenario.humans, scenario.machines

    live_h = ~dead[h]
    gamma[h] = np.where(live_h, gamma_h, 0.0)
    gamma_bar[h] = gamma[h]
    noncoh[h] = np.where(live_h, (human_interf_sum + sigma2) / np.where(live_h, gamma_h, 1.0), np.inf)

    if scenario.K_m:
        live_m = ~dead[m]
        gamma[m] = np.where(live_m, gamma_nc_m, 0.0)
        gamma_bar[m] = np.where(live_m, gamma_bar_m, 0.0)
        noncoh[m] = np.where(live_m, (machine_interf_sum + sigma2) / np.where(live_m, gamma_bar_m, 1.0), np.inf)
        coh[m] = np.where(live_m, coherent_m, 0.0)

    sinr = np.where(np.isinf(noncoh), 0.0, desired / (noncoh + coh))
    return SinrBreakdown(gamma=gamma, gamma_bar=gamma_bar, desired=desired,
                         noncoherent=noncoh, coherent=coh, sinr=sinr)


def sinr_sc1(scenario: Scenario, powers: PowerAllocation, config: SchemeConfig) -> SinrBreakdown:
    """Effective SINRs when humans and machines occupy separate intervals.

    Each class only sees its own class in both training and data; both CI
    types are evaluated in one call (the interval split alpha_h only enters
    the rate prelog, never the SINR).
    """
    config.validate(scenario)
    dead = _check_powers(scenario, powers)
    beta = scenario.betas()
    h, m = scenario.humans, scenario.machines
    gamma_h = _gamma_humans(scenario, config, powers.q)
    human_sum = float(np.sum(powers.p[h] * beta[h]))
    if scenario.K_m:
        gbar = gamma_bar_sc1(scenario, powers.q, config.Np_m)
        gnc = _gamma_machines_no_collision(scenario, config, powers.q, powers.p)
        mach_sum = float(np.sum(powers.p[m] * beta[m]))
        coh = _coherent_machine_term(scenario, config, powers.p, powers.q)
    else:
        gbar = gnc = coh = np.empty(0)
        mach_sum = 0.0
    return _assemble(scenario, powers, gamma_h, gbar, gnc, human_sum, mach_sum, coh, dead)


def sinr_sc2(scenario: Scenario, powers: PowerAllocation, config: SchemeConfig) -> SinrBreakdown:
    """Effective SINRs for the fully shared interval.

    Every device hears every other device during data, so both classes carry
    the full-population interference sum; machines additionally suffer the
    collision-driven coherent term.
    """
    config.validate(scenario)
    dead = _check_powers(scenario, powers)
    beta = scenario.betas()
    total_sum = float(np.sum(powers.p * beta))
    gamma_h = _gamma_humans(scenario, config, powers.q)
    if scenario.K_m:
        gbar = gamma_bar_sc2(scenario, powers.q, config.Np_h)
        gnc = _gamma_machines_no_collision(scenario, config, powers.q, powers.p)
        coh = _coherent_machine_term(scenario, config, powers.p, powers.q)
    else:
        gbar = gnc = coh = np.empty(0)
    return _assemble(scenario, powers, gamma_h, gbar, gnc, total_sum, total_sum, coh, dead)


def sinr_sc3(scenario: Scenario, powers: PowerAllocation, config: SchemeConfig) -> SinrBreakdown:
    """Effective SINRs for staggered training.

    Humans estimate from a clean window.  Machines train while humans send
    data, which both raises their estimate noise floor and adds a coherent
    term quadratic in the human data power.  During data everyone interferes
    with everyone.
    """
    config.validate(scenario)
    dead = _check_powers(scenario, powers)
    beta = scenario.betas()
    total_sum = float(np.sum(powers.p * beta))
    gamma_h = _gamma_humans(scenario, config, powers.q)
    if scenario.K_m:
        gbar = gamma_bar_sc3(scenario, powers.q, powers.p, config.Np_m)
        gnc = _gamma_machines_no_collision(scenario, config, powers.q, powers.p)
        coh = _coherent_machine_term(scenario, config, powers.p, powers.q,
                                     extra_human_quadratic=True)
    else:
        gbar = gnc = coh = np.empty(0)
    return _assemble(scenario, powers, gamma_h, gbar, gnc, total_sum, total_sum, coh, dead)


_SINR_DISPATCH = {Scheme.SC1: sinr_sc1, Scheme.SC2: sinr_sc2, Scheme.SC3: sinr_sc3}


def compute_sinr(scenario: Scenario, powers: PowerAllocation, config: SchemeConfig) -> SinrBreakdown:
    return _SINR_DISPATCH[config.scheme](scenario, powers, config)


@dataclass(frozen=True)
class RateReport:
    """Rates for one (scenario, powers, scheme) triple plus the SINR pieces."""
    scenario: Scenario
    config: SchemeConfig
    powers: PowerAllocation
    breakdown: SinrBreakdown
    prelog: np.ndarray
    rate: np.ndarray
    min_human_rate: float
    min_machine_rate: float | None

    def to_rows(self):
        """One dict per device with the stable CSV column set."""
        s, c = self.scenario, self.config
        beta = s.betas()
        rows = []
        for k in range(s.K):
            rows.append({
                "scheme": c.scheme.value,
                "M": s.M,
                "N": c.N,
                "Np_h": c.Np_h,
                "Np_m": c.Np_m,
                "alpha": c.alpha_h,
                "device_id": k,
                "class": s.devices[k].kind.value,
                "beta": beta[k],
                "p": self.powers.p[k],
                "q": self.powers.q[k],
                "gamma": self.breakdown.gamma[k],
                "gamma_bar": self.breakdown.gamma_bar[k],
                "sinr": self.breakdown.sinr[k],
                "prelog": self.prelog[k],
                "rate": self.rate[k],
            })
        return rows

    def to_json_dict(self):
        return {
            "scheme": self.config.scheme.value,
            "M": self.scenario.M,
            "N": self.config.N,
            "Np_h": self.config.Np_h,
            "Np_m": self.config.Np_m,
            "alpha": self.config.alpha_h,
            "rate": self.rate.tolist(),
            "sinr": self.breakdown.sinr.tolist(),
            "prelog": self.prelog.tolist(),
            "min_human_rate": self.min_human_rate,
            "min_machine_rate": self.min_machine_rate,
        }


def rates(scenario: Scenario, powers: PowerAllocation, config: SchemeConfig) -> RateReport:
    """Achievable rate per device in bit/s/Hz, prelog times log2(1 + SINR)."""
    breakdown = compute_sinr(scenario, powers, config)
    prelog = config.prelog(scenario)
    rate = prelog * np.log2(1.0 + breakdown.sinr)
    h, m = scenario.humans, scenario.machines
    min_h = float(np.min(rate[h]))
    min_m = float(np.min(rate[m])) if scenario.K_m else None
    return RateReport(scenario=scenario, config=config, powers=powers,
                      breakdown=breakdown, prelog=prelog, rate=rate,
                      min_human_rate=min_h, min_machine_rate=min_m)


def _asymptote_machines_shared(p_m, q_m, beta_m, Np_m):
    """Large-antenna machine SINR limit when only collisions stay coherent.

    Identical function for SC1 and SC2 by construction; SC2 callers pass the
    complement pool size Np_m = Np - K_h.
    """
    c = p_m * q_m * beta_m ** 2
    cross = np.sum(c) - c
    own = q_m * beta_m ** 2
    out = np.empty(p_m.size, dtype=float)
    for j in range(p_m.size):
        if p_m[j] == 0.0:
            out[j] = 0.0
        elif cross[j] == 0.0:
            out[j] = UNBOUNDED
        else:
            out[j] = p_m[j] * Np_m * own[j] / cross[j]
    return out


def asymptotic_sinr(scenario: Scenario, powers: PowerAllocation, config: SchemeConfig) -> np.ndarray:
    """Per-device SINR limit as the antenna count grows without bound.

    Humans keep orthogonal pilots, their SINR grows linearly in M, so they
    get the UNBOUNDED sentinel.  Machines saturate at the ratio of desired
    power to coherent interference.
    """
    config.validate(scenario)
    dead = _check_powers(scenario, powers)
    out = np.full(scenario.K, UNBOUNDED)
    out[scenario.humans] = np.where(dead[scenario.humans], 0.0, UNBOUNDED)
    if not scenario.K_m:
        return out
    m = scenario.machines
    beta_m, q_m = _machine_arrays(scenario, powers.q)
    p_m = powers.p[m]
    if config.scheme in (Scheme.SC1, Scheme.SC2):
        out[m] = _asymptote_machines_shared(p_m, q_m, beta_m, config.Np_m)
    else:
        beta = scenario.betas()
        h = scenario.humans
        c = p_m * q_m * beta_m ** 2
        cross = (np.sum(c) - c) + np.sum((powers.p[h] * beta[h]) ** 2)
        own = q_m * beta_m ** 2
        vals = np.empty(scenario.K_m, dtype=float)
        for j in range(scenario.K_m):
            if p_m[j] == 0.0:
                vals[j] = 0.0
            elif cross[j] == 0.0:
                vals[j] = UNBOUNDED
            else:
                vals[j] = p_m[j] * config.Np_m * own[j] / cross[j]
        out[m] = vals
    out[dead] = 0.0
    return out


def asymptotic_machine_rates(scenario: Scenario, powers: PowerAllocation,
                             config: SchemeConfig) -> np.ndarray:
    """Machine rate ceilings, prelog times log2(1 + limit SINR)."""
    lim = asymptotic_sinr(scenario, powers, config)[scenario.machines]
    prelog = config.prelog(scenario)[scenario.machines]
    return prelog * np.log2(1.0 + lim)
