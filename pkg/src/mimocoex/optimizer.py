"""Max-min rate optimization over powers, machine pilot length and CI split.

The core solve is a bisection on a human rate target.  Each probe converts
the target (and the machine rate floor) into per-device SINR targets through
each device's own prelog, then asks whether data powers within the cap can
meet them.  The power subproblem is a monotone interference system: device
k's SINR denominator is a nondecreasing function of every data power, so the
minimal power vector meeting the targets is the least fixed point of the
per-device required-power map.  With pilot powers held at the cap the map is
affine for SC1 and SC2 and the least fixed point comes from one linear
solve; SC3's human-power dependent terms are handled by freezing them and
re-solving, which walks monotonically up to the same least fixed point.
Tying pilot power to data power makes the system non-monotone, so that mode
runs a damped fixed point and flags runs that fail to converge.

Every returned point is re-validated through the closed-form rate engine,
never through the solver's own intermediate state.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .scenario import ConfigError, Scenario
from .pilots import Scheme, SchemeConfig
from .rates import (PowerAllocation, RateReport, asymptotic_machine_rates,
                    compute_sinr, rates, _gamma_humans, gamma_bar_sc1,
                    gamma_bar_sc2, gamma_bar_sc3)


class PilotPowerMode(enum.Enum):
    FULL = "full"    # pilots at the cap regardless of data power
    TIED = "tied"    # pilot power equals data power


DEFAULT_ALPHA_GRID = tuple(float(x) for x in np.linspace(0.0, 1.0, 41))


@dataclass(frozen=True)
class OptimizationProblem:
    """One max-min instance: scenario, scheme, floor, and search knobs."""
    scenario: Scenario
    scheme_config: SchemeConfig
    pilot_power_mode: PilotPowerMode = PilotPowerMode.FULL
    machine_rate_floor: float = 0.0
    tolerance: float = 1e-3          # bisection gap on the rate target
    search_np_m: bool = True         # let optimize_pilot_length sweep Np_m
    search_alpha: bool = True        # SC1 only: line-search the CI split
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    fp_max_iter: int = 400           # tied-pilot fixed point budget
    fp_tol: float = 1e-10

    def __post_init__(self):
        if self.machine_rate_floor < 0.0:
            raise ConfigError(f"machine_rate_floor must be >= 0, got {self.machine_rate_floor}")
        if self.tolerance <= 0.0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")

    def with_floor(self, floor):
        return replace(self, machine_rate_floor=float(floor))


@dataclass(frozen=True)
class RateRegionPoint:
    """One operating point: achieved class rates and how they were reached."""
    R_h: float
    R_m: float
    powers: PowerAllocation | None
    np_m: int
    alpha: float
    feasible: bool
    config: SchemeConfig
    floor: float
    status: str = "ok"
    bisection_gap: float = 0.0

    def to_json_dict(self):
        return {
            "scheme": self.config.scheme.value,
            "N": self.config.N,
            "Np_h": self.config.Np_h,
            "Np_m": self.np_m,
            "alpha": self.alpha,
            "floor_Rm": self.floor,
            "achieved_Rh": self.R_h,
            "achieved_Rm": self.R_m,
            "feasible": self.feasible,
            "status": self.status,
            "p": self.powers.p.tolist() if self.powers is not None else None,
            "q": self.powers.q.tolist() if self.powers is not None else None,
        }


def config_with(config: SchemeConfig, scenario: Scenario, np_m=None, alpha=None):
    """Clone a scheme config with a new machine pilot length / CI split."""
    if np_m is None and alpha is None:
        return config
    np_m = config.Np_m if np_m is None else int(np_m)
    alpha = config.alpha_h if alpha is None else float(alpha)
    if config.scheme is Scheme.SC2:
        return SchemeConfig.sc2(config.N, scenario.K_h, np_m)
    if config.scheme is Scheme.SC1:
        return SchemeConfig.sc1(config.N, config.Np_h, np_m, alpha)
    return SchemeConfig.sc3(config.N, config.Np_h, np_m)


def _sinr_targets(scenario, config, t_h, t_m):
    """Per-device SINR targets from per-class rate targets via own prelogs."""
    prelog = config.prelog(scenario)
    target_rate = np.empty(scenario.K)
    target_rate[scenario.humans] = t_h
    target_rate[scenario.machines] = t_m
    out = np.zeros(scenario.K)
    with np.errstate(over="ignore", divide="ignore"):
        pos = target_rate > 0.0
        zero_prelog = prelog <= 0.0
        out[pos & zero_prelog] = np.inf
        live = pos & ~zero_prelog
        out[live] = np.exp2(target_rate[live] / prelog[live]) - 1.0
    return out


def _affine_system(scenario, config, q, p_freeze=None):
    """Denominator coefficients: SINR_k(p) = M p_k / ((W p)_k + b_k).

    Rows mirror the closed forms exactly; for SC3 the pieces that depend on
    human data powers (the machine estimate floor and the quadratic coherent
    term) are frozen at ``p_freeze``.
    """
    K, K_h, K_m = scenario.K, scenario.K_h, scenario.K_m
    M = scenario.M
    beta = scenario.betas()
    sigma2 = scenario.noise_power_w
    h, m = scenario.humans, scenario.machines
    scheme = config.scheme
    W = np.zeros((K, K))
    b = np.zeros(K)

    gamma_h = _gamma_humans(scenario, config, q)
    if scheme is Scheme.SC1:
        W[h, :K_h] = beta[None, :K_h] / gamma_h[:, None]
    else:
        W[h, :] = beta[None, :] / gamma_h[:, None]
    b[:K_h] = sigma2 / gamma_h

    if K_m:
        if scheme is Scheme.SC1:
            gbar = gamma_bar_sc1(scenario, q, config.Np_m)
        elif scheme is Scheme.SC2:
            gbar = gamma_bar_sc2(scenario, q, config.Np_h)
        else:
            p_freeze = np.zeros(K) if p_freeze is None else p_freeze
            gbar = gamma_bar_sc3(scenario, q, p_freeze, config.Np_m)
        rows = np.arange(K_h, K)
        if scheme is Scheme.SC1:
            W[rows[:, None], rows[None, :]] += beta[None, m] / gbar[:, None]
        else:
            W[rows, :] += beta[None, :] / gbar[:, None]
        b[m] = sigma2 / gbar
        # coherent pilot-collision term, linear in the interferer data power
        own = q[m] * beta[m] ** 2
        coh = (M / config.Np_m) * (q[m] * beta[m] ** 2)[None, :] / own[:, None]
        np.fill_diagonal(coh, 0.0)
        W[rows[:, None], rows[None, :]] += coh
        if scheme is Scheme.SC3:
            quad = np.sum((p_freeze[h] * beta[h]) ** 2)
            b[m] += (M / config.Np_m) * quad / own
    return W, b


def _solve_affine(W, b, t_sinr, M, p_max):
    """Least fixed point of p = diag(t/M)(W p + b), or None if infeasible.

    Any nonnegative fixed point within the cap certifies feasibility, so a
    residual check after the linear solve is all the certification needed.
    """
    if np.any(np.isinf(t_sinr)):
        return None
    # a huge finite target can overflow here; the finiteness checks below
    # turn that into a clean infeasibility verdict
    with np.errstate(over="ignore", invalid="ignore"):
        A = (t_sinr / M)[:, None] * W
        c = t_sinr * b / M
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
        return None
    K = c.size
    try:
        p = np.linalg.solve(np.eye(K) - A, c)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(p)):
        return None
    if np.any(p < -1e-9 * p_max):
        return None
    p = np.clip(p, 0.0, None)
    if np.any(p > p_max * (1.0 + 1e-9)):
        return None
    scale = max(p_max, float(np.max(p)))
    if float(np.max(np.abs(A @ p + c - p))) > 1e-8 * scale:
        return None
    return np.minimum(p, p_max)


class _FeasibilitySolver:
    """Caches the target-independent pieces of the power subproblem."""

    def __init__(self, problem: OptimizationProblem, config: SchemeConfig):
        self.problem = problem
        self.config = config
        self.scenario = problem.scenario
        self.mode = problem.pilot_power_mode
        self.p_max = self.scenario.p_max_w
        self.status = "ok"
        if self.mode is PilotPowerMode.FULL:
            self.q = np.full(self.scenario.K, self.p_max)
            if config.scheme in (Scheme.SC1, Scheme.SC2):
                self.W, self.b = _affine_system(self.scenario, config, self.q)

    def check(self, t_h, t_m):
        """Minimal feasible data powers for the rate targets, or None."""
        t_sinr = _sinr_targets(self.scenario, self.config, t_h, t_m)
        if self.mode is PilotPowerMode.TIED:
            return self._check_tied(t_sinr)
        if self.config.scheme in (Scheme.SC1, Scheme.SC2):
            return _solve_affine(self.W, self.b, t_sinr, self.scenario.M, self.p_max)
        return self._check_sc3(t_sinr)

    def _check_sc3(self, t_sinr, max_outer=300):
        scenario, config = self.scenario, self.config
        p = np.zeros(scenario.K)
        for _ in range(max_outer):
            W, b = _affine_system(scenario, config, self.q, p_freeze=p)
            p_new = _solve_affine(W, b, t_sinr, scenario.M, self.p_max)
            if p_new is None:
                return None
            if float(np.max(np.abs(p_new - p))) <= 1e-12 * self.p_max:
                return p_new
            p = p_new
        self.status = "sc3-outer-no-convergence"
        return None

    def _check_tied(self, t_sinr):
        """Damped heuristic for pilot power tied to data power.

        The coupled system is not monotone, so convergence is not
        guaranteed; the result only counts if the closed forms confirm the
        targets afterwards.
        """
        scenario, config = self.scenario, self.config
        problem = self.problem
        if np.any(np.isinf(t_sinr)):
            return None
        live = t_sinr > 0.0
        if not np.any(live):
            return np.zeros(scenario.K)
        M = scenario.M
        p = np.where(live, self.p_max, 0.0)
        converged = False
        for _ in range(problem.fp_max_iter):
            powers = PowerAllocation(p, p)
            bd = compute_sinr(scenario, powers, config)
            denom = bd.noncoherent + bd.coherent
            p_req = np.zeros(scenario.K)
            p_req[live] = t_sinr[live] * denom[live] / M
            p_new = np.clip(0.5 * p + 0.5 * p_req, 0.0, self.p_max)
            if float(np.max(np.abs(p_new - p))) <= problem.fp_tol * self.p_max:
                p = p_new
                converged = True
                break
            p = p_new
        if not converged:
            self.status = "tied-fp-no-convergence"
            return None
        bd = compute_sinr(scenario, PowerAllocation(p, p), config)
        if np.any(bd.sinr[live] < t_sinr[live] * (1.0 - 1e-6)):
            return None
        return p

    def allocation(self, p):
        q = self.q if self.mode is PilotPowerMode.FULL else p
        return PowerAllocation(p, np.array(q, dtype=float))


def _rate_upper_bound(problem, config):
    """Safe overestimate of any achievable per-device rate, for bracketing."""
    s = problem.scenario
    beta = s.betas()
    prelog = config.prelog(s)
    cap = s.M * s.p_max_w * beta / s.noise_power_w
    vals = prelog * np.log2(1.0 + cap)
    return float(np.max(vals)) * 1.0001 + 1e-9


def maxmin_power_control(problem: OptimizationProblem, np_m=None, alpha=None,
                         *, balanced=False) -> RateRegionPoint:
    """Bisect the human rate target at a fixed Np_m and CI split.

    With ``balanced`` the machine floor is tied to the bisected target, which
    lands on the equal-rate point of the region; otherwise the floor is
    ``problem.machine_rate_floor``.  Feasible results carry the achieved
    per-class minima recomputed through the rate engine.
    """
    scenario = problem.scenario
    config = config_with(problem.scheme_config, scenario, np_m, alpha)
    config.validate(scenario)
    floor = problem.machine_rate_floor
    solver = _FeasibilitySolver(problem, config)

    p0 = solver.check(0.0, 0.0 if balanced else floor)
    if p0 is None:
        return RateRegionPoint(R_h=0.0, R_m=0.0, powers=None, np_m=config.Np_m,
                               alpha=config.alpha_h, feasible=False, config=config,
                               floor=floor, status=solver.status if solver.status != "ok"
                               else "floor-infeasible")
    lo, hi = 0.0, _rate_upper_bound(problem, config)
    p_best = p0
    while hi - lo > problem.tolerance:
        mid = 0.5 * (lo + hi)
        p = solver.check(mid, mid if balanced else floor)
        if p is None:
            hi = mid
        else:
            lo, p_best = mid, p
    powers = solver.allocation(p_best)
    report = rates(scenario, powers, config)
    R_m = report.min_machine_rate if report.min_machine_rate is not None else 0.0
    return RateRegionPoint(R_h=report.min_human_rate, R_m=float(R_m), powers=powers,
                           np_m=config.Np_m, alpha=config.alpha_h, feasible=True,
                           config=config, floor=floor, status="ok",
                           bisection_gap=hi - lo)


def admissible_np_m(problem: OptimizationProblem):
    """Machine pilot lengths the scheme geometry can host."""
    config = problem.scheme_config
    scenario = problem.scenario
    N = config.N
    if scenario.K_m == 0:
        # pilot length is moot without machines; keep the configured one
        return [config.Np_m]
    if config.scheme is Scheme.SC1:
        hi = N - 1
    elif config.scheme is Scheme.SC2:
        hi = N - 1 - scenario.K_h
    else:
        hi = N - 1 - config.Np_h
    vals = list(range(1, hi + 1))
    if not vals:
        raise ConfigError(f"no admissible machine pilot length for N={N}")
    return vals


def optimize_pilot_length(problem: OptimizationProblem, *, balanced=False) -> RateRegionPoint:
    """Exhaustive Np_m search (and alpha line search for SC1).

    Ties resolve to the smallest pilot length and the earliest grid alpha,
    so results are deterministic.
    """
    config = problem.scheme_config
    if config.scheme is Scheme.SC1 and problem.search_alpha:
        alphas = list(problem.alpha_grid)
    else:
        alphas = [config.alpha_h if config.scheme is Scheme.SC1 else None]
    best = None
    for np_m in admissible_np_m(problem):
        for alpha in alphas:
            pt = maxmin_power_control(problem, np_m, alpha, balanced=balanced)
            if not pt.feasible:
                continue
            if best is None or pt.R_h > best.R_h:
                best = pt
    if best is None:
        return RateRegionPoint(R_h=0.0, R_m=0.0, powers=None, np_m=config.Np_m,
                               alpha=config.alpha_h, feasible=False, config=config,
                               floor=problem.machine_rate_floor, status="floor-infeasible")
    return best


def best_point(problem: OptimizationProblem, *, balanced=False) -> RateRegionPoint:
    """Solve with whatever search freedom the problem grants."""
    config = problem.scheme_config
    if problem.search_np_m:
        return optimize_pilot_length(problem, balanced=balanced)
    if config.scheme is Scheme.SC1 and problem.search_alpha:
        best = None
        for alpha in problem.alpha_grid:
            pt = maxmin_power_control(problem, None, alpha, balanced=balanced)
            if pt.feasible and (best is None or pt.R_h > best.R_h):
                best = pt
        if best is not None:
            return best
        return maxmin_power_control(problem, balanced=balanced)
    return maxmin_power_control(problem, balanced=balanced)


def _map_points(fn, items, threads):
    if threads and threads != 1:
        workers = threads if threads > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def rate_region_sweep(problem: OptimizationProblem, floor_grid, *, threads=1):
    """One optimized point per machine rate floor.

    Infeasible floors produce recorded infeasible points, never an error.
    """
    floors = [float(f) for f in floor_grid]
    if any(f < 0 for f in floors):
        raise ConfigError("machine rate floors must be >= 0")
    return _map_points(lambda f: best_point(problem.with_floor(f)), floors, threads)


@dataclass(frozen=True)
class AntennaPoint:
    """Rates, machine rate ceiling and convergence gap at one antenna count."""
    M: int
    report: RateReport
    config: SchemeConfig
    point: RateRegionPoint | None
    machine_asymptote_rates: np.ndarray
    min_machine_asymptote_rate: float
    gap: float
    optimized: bool


def antenna_sweep(problem: OptimizationProblem, M_grid, *, optimize_powers=True,
                  balanced=True, threads=1):
    """Evaluate one scheme across antenna counts.

    With ``optimize_powers`` each M gets its own max-min solve (balanced by
    default, which tracks the equal-rate point); otherwise every device
    transmits at the cap with the problem's fixed pilot length, which keeps
    the machine rate monotone in M and the asymptote gap nonincreasing.
    """
    Ms = [int(M) for M in M_grid]
    if any(M < 1 for M in Ms):
        raise ConfigError("antenna counts must be >= 1")

    def one(M):
        scen = problem.scenario.with_m(M)
        prob = replace(problem, scenario=scen)
        if optimize_powers:
            pt = best_point(prob, balanced=balanced)
            if not pt.feasible:
                empty = np.empty(0)
                return AntennaPoint(M=M, report=rates(scen, PowerAllocation.full_power(scen),
                                                      problem.scheme_config),
                                    config=problem.scheme_config, point=pt,
                                    machine_asymptote_rates=empty,
                                    min_machine_asymptote_rate=math.nan,
                                    gap=math.nan, optimized=True)
            config, powers = pt.config, pt.powers
        else:
            pt = None
            config = problem.scheme_config
            powers = PowerAllocation.full_power(scen)
        report = rates(scen, powers, config)
        asym = asymptotic_machine_rates(scen, powers, config)
        if asym.size:
            min_asym = float(np.min(asym))
            gap = min_asym - float(report.min_machine_rate)
        else:
            min_asym, gap = math.nan, math.nan
        return AntennaPoint(M=M, report=report, config=config, point=pt,
                            machine_asymptote_rates=asym,
                            min_machine_asymptote_rate=min_asym, gap=gap,
                            optimized=optimize_powers)

    return _map_points(one, Ms, threads)
