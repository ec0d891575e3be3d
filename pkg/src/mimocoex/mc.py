"""Monte Carlo verification of the closed-form link quantities.

Simulates the physical uplink chain per coherence interval: channel draws,
pilot transmission with random machine pilot selection, de-spreading, linear
channel estimation and ratio combining.  Sample moments of the combined
signal components are assembled into an effective-SINR estimate that the
closed forms in ``rates`` must reproduce within Monte Carlo error.  This
module deliberately avoids reusing the assembled closed forms; only the
per-pattern estimator coefficient is shared, because the receiver itself is
defined by it.

Pilot sequences are materialized as standard basis vectors.  Every statistic
produced here is invariant to a common unitary rotation of the pilot space,
so basis pilots lose no generality while keeping the overlap structure
exact.  Data symbols never have to be drawn for the effective-SINR moments
(the bound handles them analytically); the one symbol process that matters
is human data leaking into the machine training window under SC3, drawn as
unit-power circularly symmetric Gaussian symbols.

Sampling is chunked and chunk i uses generator stream (seed, i), so results
are reproducible for a fixed seed regardless of chunk size, thread count or
scheduling order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .scenario import ConfigError, DeviceClass, Scenario, make_rng
from .pilots import PilotPlan, Scheme, SchemeConfig, draw_pilot_plan
from .rates import PowerAllocation, gamma_given_plan


@dataclass(frozen=True)
class McEstimate:
    """One Monte Carlo moment estimate with its standard error."""
    quantity: str
    value: float
    stderr: float
    n_samples: int


@dataclass(frozen=True)
class McSample:
    """One simulated coherence interval (training phase)."""
    scheme: Scheme
    plan: PilotPlan
    G: np.ndarray                  # (M, K) channel realization
    y: np.ndarray                  # (M, K) de-spread training observations
    g_hat: np.ndarray              # (M, K) linear channel estimates
    v_hat: np.ndarray              # (M, K) ratio combiners
    gamma: np.ndarray              # (K,) realized estimate qualities
    Y: dict                        # window name -> (M, Np) received block
    Z: dict                        # window name -> matching noise block
    human_data: np.ndarray | None  # (K_h, Np_m) human data during the SC3 machine window


@dataclass(frozen=True)
class UatfEstimate:
    """Moment estimates feeding the effective-SINR lower bound, per device.

    ``interference[k, j]`` holds the estimated mean square of combiner k
    applied to channel j; pairs that never share a data phase (cross-class
    under SC1) are NaN.  ``desired_amp`` estimates the mean combined desired
    amplitude, which the combiner normalization pins at sqrt(M).
    """
    scheme: Scheme
    n_samples: int
    n_batches: int
    sinr: np.ndarray
    sinr_stderr: np.ndarray
    desired_amp: np.ndarray
    desired_power: np.ndarray
    desired_var: np.ndarray
    noise_power: np.ndarray
    interference: np.ndarray

    def sinr_estimate(self, k) -> McEstimate:
        return McEstimate("uatf_sinr", float(self.sinr[k]),
                          float(self.sinr_stderr[k]), self.n_samples)


def _cn(rng, shape):
    """Standard circularly symmetric complex Gaussian, unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _require_live_pilots(powers):
    if np.any(powers.q <= 0.0):
        raise ConfigError("Monte Carlo estimation needs pilot power > 0 for every device")


def _plan_matches(plan, scenario, config):
    if plan.K_h != scenario.K_h or plan.K_m != scenario.K_m or plan.Np_m != config.Np_m:
        raise ConfigError("pilot plan does not match the scenario/config shapes")


def _simulate_chunk(scenario, config, powers, rng, n, fixed_choices=None):
    """Simulate n independent coherence intervals, vectorized.

    Returns a dict with G (n, M, K), g_hat, v_hat, gamma_x (n, K) and the
    machine pilot choices (n, K_m).  Under SC1 the human and machine columns
    belong to different interval types; nothing couples them, so a single
    channel tensor serves both.
    """
    M, K, K_h, K_m = scenario.M, scenario.K, scenario.K_h, scenario.K_m
    beta = scenario.betas()
    sigma2 = scenario.noise_power_w
    p, q = powers.p, powers.q
    scheme = config.scheme

    if K_m:
        if fixed_choices is None:
            choices = rng.integers(0, config.Np_m, size=(n, K_m))
        else:
            choices = np.broadcast_to(np.asarray(fixed_choices, dtype=np.int64), (n, K_m))
    else:
        choices = np.empty((n, 0), dtype=np.int64)

    G = _cn(rng, (n, M, K)) * np.sqrt(beta)[None, None, :]
    y = np.empty((n, M, K), dtype=complex)
    D = np.empty((n, K), dtype=float)

    h, m = scenario.humans, scenario.machines
    Np_h = config.despread_length(DeviceClass.HUMAN)

    # humans: reserved orthogonal pilots, each sees only its own noise column
    z_h = _cn(rng, (n, M, K_h)) * math.sqrt(sigma2)
    y[:, :, h] = math.sqrt(Np_h) * np.sqrt(q[h])[None, None, :] * G[:, :, h] + z_h
    D[:, h] = Np_h * (q[h] * beta[h])[None, :] + sigma2

    if K_m:
        Np_m_len = config.despread_length(DeviceClass.MACHINE)
        pool = config.Np_m
        # machine de-spread columns live in the shared pool; colliding
        # machines read the same noise column, so the pool is materialized
        z_pool = _cn(rng, (n, M, pool)) * math.sqrt(sigma2)
        same = (choices[:, :, None] == choices[:, None, :]).astype(float)  # (n, Km, Km)
        sqG = G[:, :, m] * np.sqrt(q[m])[None, None, :]
        sig = math.sqrt(Np_m_len) * np.einsum("nmj,njk->nmk", sqG, same)
        z_m = np.take_along_axis(z_pool, choices[:, None, :], axis=2)
        y_m = sig + z_m
        D_m = Np_m_len * np.einsum("j,njk->nk", q[m] * beta[m], same) + sigma2
        human_floor = 0.0
        if scheme is Scheme.SC3:
            # human data occupies the machine training window; with basis
            # pilots the de-spread leak per pool column is one scaled symbol
            leak = np.sqrt(p[h])[None, :, None] * _cn(rng, (n, K_h, pool))
            leak_sel = np.take_along_axis(leak, choices[:, None, :], axis=2)
            y_m = y_m + np.einsum("nmh,nhk->nmk", G[:, :, h], leak_sel)
            human_floor = float(np.sum(p[h] * beta[h]))
            D_m = D_m + human_floor
        y[:, :, m] = y_m
        D[:, m] = D_m

    Np_vec = np.full(K, float(Np_h))
    if K_m:
        Np_vec[m] = config.despread_length(DeviceClass.MACHINE)
    gamma_x = Np_vec[None, :] * (q * beta ** 2)[None, :] / D
    coef = np.sqrt(Np_vec * q)[None, :] * beta[None, :] / D
    g_hat = coef[:, None, :] * y
    v_hat = g_hat / (gamma_x[:, None, :] * math.sqrt(M))
    return {"G": G, "y": y, "g_hat": g_hat, "v_hat": v_hat,
            "gamma_x": gamma_x, "choices": choices}


def simulate_training(scenario: Scenario, plan: PilotPlan, powers: PowerAllocation,
                      config: SchemeConfig, rng) -> McSample:
    """One coherence interval through the explicit physical chain.

    Unlike the chunked estimators this materializes the received training
    blocks Y as matrices and de-spreads them by actual pilot correlation, so
    structural tests can probe the intermediate signals.
    """
    config.validate(scenario)
    powers.validate(scenario)
    _require_live_pilots(powers)
    _plan_matches(plan, scenario, config)
    rng = make_rng(rng)
    M, K, K_h, K_m = scenario.M, scenario.K, scenario.K_h, scenario.K_m
    beta = scenario.betas()
    sigma2 = scenario.noise_power_w
    p, q = powers.p, powers.q
    h, m = scenario.humans, scenario.machines

    G = _cn(rng, (M, K)) * np.sqrt(beta)[None, :]
    y = np.empty((M, K), dtype=complex)
    Y_blocks, Z_blocks = {}, {}
    human_data = None

    Np_h = config.despread_length(DeviceClass.HUMAN)
    if config.scheme is Scheme.SC2:
        Np = config.Np_h
        phi = np.zeros((Np, K))
        phi[np.arange(K_h), np.arange(K_h)] = 1.0
        if K_m:
            phi[K_h + plan.machine_choices, np.arange(K_h, K)] = 1.0
        Z = _cn(rng, (M, Np)) * math.sqrt(sigma2)
        Y = math.sqrt(Np) * (G * np.sqrt(q)[None, :]) @ phi.T + Z
        y[:] = Y @ phi
        Y_blocks["shared_training"] = Y
        Z_blocks["shared_training"] = Z
    else:
        phi_h = np.zeros((Np_h, K_h))
        phi_h[np.arange(K_h), np.arange(K_h)] = 1.0
        Z_h = _cn(rng, (M, Np_h)) * math.sqrt(sigma2)
        Y_h = math.sqrt(Np_h) * (G[:, h] * np.sqrt(q[h])[None, :]) @ phi_h.T + Z_h
        y[:, h] = Y_h @ phi_h
        Y_blocks["human_training"] = Y_h
        Z_blocks["human_training"] = Z_h
        if K_m:
            Np_m_len = config.Np_m
            phi_m = np.zeros((Np_m_len, K_m))
            phi_m[plan.machine_choices, np.arange(K_m)] = 1.0
            Z_m = _cn(rng, (M, Np_m_len)) * math.sqrt(sigma2)
            Y_m = math.sqrt(Np_m_len) * (G[:, m] * np.sqrt(q[m])[None, :]) @ phi_m.T + Z_m
            if config.scheme is Scheme.SC3:
                human_data = np.sqrt(p[h])[:, None] * _cn(rng, (K_h, Np_m_len))
                Y_m = Y_m + G[:, h] @ np.conj(human_data)
            y[:, m] = Y_m @ phi_m
            Y_blocks["machine_training"] = Y_m
            Z_blocks["machine_training"] = Z_m

    gamma = gamma_given_plan(scenario, config, q, p, plan)
    Np_vec = np.full(K, float(Np_h))
    if K_m:
        Np_vec[m] = config.despread_length(DeviceClass.MACHINE)
    # LMMSE scaling written through the realized quality: c = gamma / (sqrt(Np q) beta)
    coef = gamma / (np.sqrt(Np_vec * q) * beta)
    g_hat = coef[None, :] * y
    v_hat = g_hat / (gamma[None, :] * math.sqrt(M))
    return McSample(scheme=config.scheme, plan=plan, G=G, y=y, g_hat=g_hat,
                    v_hat=v_hat, gamma=gamma, Y=Y_blocks, Z=Z_blocks,
                    human_data=human_data)


def _chunk_layout(n_samples, max_chunk, min_batches):
    n_batches = max(min_batches, math.ceil(n_samples / max_chunk))
    chunk = math.ceil(n_samples / n_batches)
    return n_batches, chunk


def estimate_gamma_moment(scenario: Scenario, config: SchemeConfig,
                          powers: PowerAllocation, plan: PilotPlan,
                          n_samples: int, seed, *, max_chunk=1024,
                          threads=1) -> list[McEstimate]:
    """Estimate the per-component mean square of each channel estimate.

    The pilot plan stays fixed across draws, so the target is the realized
    per-pattern quality, not its collision average.  The mean pools every
    component across draws and antennas, but the standard error is taken
    over per-interval antenna means: components within one interval share
    that interval's non-channel randomness (human data under SC3), so they
    are not independent of each other.  ``n_samples`` counts the pooled
    scalar components.
    """
    config.validate(scenario)
    powers.validate(scenario)
    _require_live_pilots(powers)
    _plan_matches(plan, scenario, config)
    M, K = scenario.M, scenario.K
    draws = max(1, math.ceil(n_samples / M))
    n_batches, chunk = _chunk_layout(draws, max_chunk, min_batches=8)

    def one(i):
        rng = make_rng(seed, stream=i)
        out = _simulate_chunk(scenario, config, powers, rng, chunk,
                              fixed_choices=plan.machine_choices)
        u = (np.abs(out["g_hat"]) ** 2).mean(axis=1)  # (chunk, K) per-interval means
        return u.sum(axis=0), (u ** 2).sum(axis=0)

    results = _map_chunks(one, n_batches, threads)
    s1 = np.sum([r[0] for r in results], axis=0)
    s2 = np.sum([r[1] for r in results], axis=0)
    n_draws = n_batches * chunk
    count = n_draws * M
    mean = s1 / n_draws
    var = np.maximum(s2 / n_draws - mean ** 2, 0.0)
    stderr = np.sqrt(var / n_draws)
    return [McEstimate("gamma_moment", float(mean[k]), float(stderr[k]), count)
            for k in range(K)]


def estimate_orthogonality_defect(scenario, config, powers, plan, n_samples, seed,
                                  *, max_chunk=1024) -> list[McEstimate]:
    """Mean of g_hat * conj(g - g_hat) per device, zero for a linear MMSE fit.

    The reported value is the magnitude of the pooled complex mean; like the
    gamma moment, the standard error comes from per-interval antenna means.
    """
    config.validate(scenario)
    powers.validate(scenario)
    _require_live_pilots(powers)
    _plan_matches(plan, scenario, config)
    M, K = scenario.M, scenario.K
    draws = max(1, math.ceil(n_samples / M))
    n_batches, chunk = _chunk_layout(draws, max_chunk, min_batches=8)
    s1 = np.zeros(K, dtype=complex)
    s2 = np.zeros(K)
    for i in range(n_batches):
        rng = make_rng(seed, stream=i)
        out = _simulate_chunk(scenario, config, powers, rng, chunk,
                              fixed_choices=plan.machine_choices)
        u = (out["g_hat"] * np.conj(out["G"] - out["g_hat"])).mean(axis=1)
        s1 += u.sum(axis=0)
        s2 += (np.abs(u) ** 2).sum(axis=0)
    n_draws = n_batches * chunk
    count = n_draws * M
    mean = s1 / n_draws
    var = np.maximum(s2 / n_draws - np.abs(mean) ** 2, 0.0)
    stderr = np.sqrt(var / n_draws)
    return [McEstimate("lmmse_orthogonality", float(np.abs(mean[k])),
                       float(stderr[k]), count) for k in range(K)]


def _map_chunks(fn, n_batches, threads):
    if threads and threads != 1:
        workers = threads if threads > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n_batches)))
    return [fn(i) for i in range(n_batches)]


def _uatf_groups(scenario, scheme):
    """Device index groups that share a data phase (and hence interfere)."""
    if scheme is Scheme.SC1:
        groups = [np.arange(scenario.K_h)]
        if scenario.K_m:
            groups.append(np.arange(scenario.K_h, scenario.K))
        return groups
    return [np.arange(scenario.K)]


def estimate_uatf_components(scenario: Scenario, config: SchemeConfig,
                             powers: PowerAllocation, n_samples: int, seed,
                             *, max_chunk=1024, min_batches=16,
                             threads=1) -> UatfEstimate:
    """Assemble the effective-SINR lower bound from sample moments.

    Per device k the bound reads

        p_k |E[v^H g_k]|^2 /
        (sum_j p_j E[|v^H g_j|^2] - p_k |E[v^H g_k]|^2 + sigma^2 E[||v||^2])

    with j running over the devices sharing k's data phase.  Machine pilot
    choices are redrawn every interval, so the estimate covers both channel
    and pilot randomness.  The standard error of the assembled SINR comes
    from batch means over the chunks.
    """
    config.validate(scenario)
    powers.validate(scenario)
    _require_live_pilots(powers)
    M, K = scenario.M, scenario.K
    sigma2 = scenario.noise_power_w
    p = powers.p
    n_batches, chunk = _chunk_layout(n_samples, max_chunk, min_batches)
    groups = _uatf_groups(scenario, config.scheme)

    def one(i):
        rng = make_rng(seed, stream=i)
        out = _simulate_chunk(scenario, config, powers, rng, chunk)
        res = []
        for g in groups:
            v = out["v_hat"][:, :, g]
            Gg = out["G"][:, :, g]
            amp = np.einsum("nmk,nmk->nk", np.conj(v), Gg)
            cross = np.einsum("nmk,nmj->nkj", np.conj(v), Gg)
            c2 = (np.abs(cross) ** 2).sum(axis=0)
            w = np.einsum("nmk,nmk->nk", np.conj(v), v).real
            res.append((amp.sum(axis=0), c2, w.sum(axis=0)))
        return res

    per_chunk = _map_chunks(one, n_batches, threads)

    sinr = np.empty(K)
    sinr_stderr = np.empty(K)
    desired_amp = np.empty(K, dtype=complex)
    desired_power = np.empty(K)
    desired_var = np.empty(K)
    noise_power = np.empty(K)
    interference = np.full((K, K), np.nan)
    n_eff = n_batches * chunk

    def assemble(amp_mean, c2_mean, w_mean, pg):
        dp = np.abs(amp_mean) ** 2
        denom = (c2_mean * pg[None, :]).sum(axis=1) - pg * dp + sigma2 * w_mean
        return pg * dp / denom

    for gi, g in enumerate(groups):
        pg = p[g]
        amp_sum = np.sum([c[gi][0] for c in per_chunk], axis=0)
        c2_sum = np.sum([c[gi][1] for c in per_chunk], axis=0)
        w_sum = np.sum([c[gi][2] for c in per_chunk], axis=0)
        amp_mean = amp_sum / n_eff
        c2_mean = c2_sum / n_eff
        w_mean = w_sum / n_eff
        vals = assemble(amp_mean, c2_mean, w_mean, pg)
        batch_vals = np.stack([
            assemble(c[gi][0] / chunk, c[gi][1] / chunk, c[gi][2] / chunk, pg)
            for c in per_chunk])
        sinr[g] = vals
        sinr_stderr[g] = batch_vals.std(axis=0, ddof=1) / math.sqrt(n_batches)
        desired_amp[g] = amp_mean
        desired_power[g] = np.abs(amp_mean) ** 2
        desired_var[g] = np.maximum(np.diag(c2_mean) - np.abs(amp_mean) ** 2, 0.0)
        noise_power[g] = sigma2 * w_mean
        interference[np.ix_(g, g)] = c2_mean

    return UatfEstimate(scheme=config.scheme, n_samples=n_eff, n_batches=n_batches,
                        sinr=sinr, sinr_stderr=sinr_stderr, desired_amp=desired_amp,
                        desired_power=desired_power, desired_var=desired_var,
                        noise_power=noise_power, interference=interference)
