"""Command line front end.

Subcommands:

* ``drop``     draw a random scenario and save it as JSON
* ``rates``    per-device closed-form rates as CSV
* ``region``   max-min human rate across a grid of machine rate floors
* ``antennas`` rates and large-array limits across antenna counts
* ``verify``   Monte Carlo check of the closed forms

Every output CSV starts with ``#`` metadata lines carrying the command, a
sha256 of the fully resolved configuration and the seed, so a result file
can always be traced back to an exact rerun.  No timestamps are written;
identical inputs give byte-identical outputs.  A ``<out stem>.config.json``
with the resolved configuration is written next to each output.

Exit codes: 0 success, 1 bad usage or configuration, 2 runtime failure
(including a failed ``verify``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from .scenario import (ConfigError, DropConfig, Scenario, DeviceClass,
                       dbm_to_watt, drop_devices, make_rng, noise_power_watt,
                       scenario_from_json, scenario_to_json,
                       DEFAULT_NOISE_PSD_DBM_PER_HZ, DEFAULT_BANDWIDTH_HZ,
                       DEFAULT_CELL_RADIUS_M, DEFAULT_GUARD_RADIUS_M)
from .pilots import Scheme, SchemeConfig, draw_pilot_plan
from .rates import PowerAllocation, compute_sinr, gamma_given_plan, rates
from .mc import estimate_gamma_moment, estimate_uatf_components
from .optimizer import (OptimizationProblem, PilotPowerMode, antenna_sweep,
                        best_point, rate_region_sweep)

DEFAULTS = {
    "scheme": "sc2",
    "K_h": 5,
    "K_m": 15,
    "M": 100,
    "N": 200,
    "Np_h": None,          # defaults to K_h
    "Np_m": 10,
    "alpha": 0.5,
    "cell_radius_m": DEFAULT_CELL_RADIUS_M,
    "guard_radius_m": DEFAULT_GUARD_RADIUS_M,
    "noise_psd_dbm_per_hz": DEFAULT_NOISE_PSD_DBM_PER_HZ,
    "bandwidth_hz": DEFAULT_BANDWIDTH_HZ,
    "p_max_dbm": 30.0,
    "p_dbm": None,         # uniform data power; None means the cap
    "tied": False,
    "drops": 1,
    "samples": 20000,
    "threads": 1,
    "floor": 0.0,
    "floors": None,
    "floor_max": None,
    "floor_steps": 9,
    "M_grid": None,
    "fixed_power": False,
    "balanced": True,
    "np_m_search": True,
    "alpha_search": True,
    "tolerance": 1e-3,
    "scenario_file": None,
}

_FLOAT_KEYS = {"alpha", "cell_radius_m", "guard_radius_m", "noise_psd_dbm_per_hz",
               "bandwidth_hz", "p_max_dbm", "p_dbm", "floor", "floor_max",
               "tolerance"}
_INT_KEYS = {"K_h", "K_m", "M", "N", "Np_h", "Np_m", "drops", "samples",
             "threads", "floor_steps", "seed"}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def _int_list(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma separated integers, got {text!r}") from exc


def _float_list(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma separated numbers, got {text!r}") from exc


def build_parser():
    top = _Parser(prog="mimocoex",
                  description="Uplink coexistence rate engine for human and "
                              "machine devices under a shared antenna array.")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON file with any of the configuration keys")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--scheme", choices=[s.value for s in Scheme], default=None)
        p.add_argument("--K-h", dest="K_h", type=int, default=None)
        p.add_argument("--K-m", dest="K_m", type=int, default=None)
        p.add_argument("--M", type=int, default=None)
        p.add_argument("--N", type=int, default=None)
        p.add_argument("--Np-h", dest="Np_h", type=int, default=None)
        p.add_argument("--Np-m", dest="Np_m", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None,
                       help="fraction of coherence intervals given to humans (sc1)")
        p.add_argument("--cell-radius-m", type=float, default=None)
        p.add_argument("--guard-radius-m", type=float, default=None)
        p.add_argument("--noise-psd-dbm-per-hz", type=float, default=None)
        p.add_argument("--bandwidth-hz", type=float, default=None)
        p.add_argument("--p-max-dbm", type=float, default=None)
        p.add_argument("--scenario", dest="scenario_file", type=Path, default=None,
                       help="reuse a scenario JSON written by the drop command")
        p.add_argument("--threads", type=int, default=None)
        return p

    common(sub.add_parser("drop", help="draw device positions and save them"))

    p = common(sub.add_parser("rates", help="closed-form per-device rates"))
    p.add_argument("--p-dbm", dest="p_dbm", type=float, default=None,
                   help="uniform data power; defaults to the cap")
    p.add_argument("--tied", action="store_true", default=None,
                   help="pilot power equals data power instead of the cap")
    p.add_argument("--drops", type=int, default=None,
                   help="average over this many independent drops")

    p = common(sub.add_parser("region", help="max-min rate trade-off sweep"))
    p.add_argument("--floors", type=str, default=None,
                   help="comma separated machine rate floors (bit/s/Hz)")
    p.add_argument("--floor-max", dest="floor_max", type=float, default=None)
    p.add_argument("--floor-steps", dest="floor_steps", type=int, default=None)
    p.add_argument("--tied", action="store_true", default=None)
    p.add_argument("--no-np-m-search", dest="np_m_search", action="store_false",
                   default=None)
    p.add_argument("--no-alpha-search", dest="alpha_search", action="store_false",
                   default=None)
    p.add_argument("--tolerance", type=float, default=None)

    p = common(sub.add_parser("antennas", help="sweep the antenna count"))
    p.add_argument("--M-grid", dest="M_grid", type=str, default=None,
                   help="comma separated antenna counts")
    p.add_argument("--fixed-power", dest="fixed_power", action="store_true",
                   default=None, help="full power everywhere instead of max-min")
    p.add_argument("--floor", type=float, default=None)
    p.add_argument("--no-np-m-search", dest="np_m_search", action="store_false",
                   default=None)
    p.add_argument("--tolerance", type=float, default=None)

    p = common(sub.add_parser("verify", help="Monte Carlo check of the closed forms"))
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--p-dbm", dest="p_dbm", type=float, default=None)

    return top


def _load_config_file(path: Path):
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - set(DEFAULTS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _resolve(args):
    """Merge defaults, config file and flags (flags win)."""
    cfg = dict(DEFAULTS)
    cfg["seed"] = None
    if args.config is not None:
        cfg.update(_load_config_file(args.config))
    for key in list(cfg):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    if cfg["seed"] is None:
        cfg["seed"] = int.from_bytes(os.urandom(8), "big")
    if cfg["Np_h"] is None:
        cfg["Np_h"] = cfg["K_h"]
    for key in _INT_KEYS:
        if cfg.get(key) is not None:
            cfg[key] = int(cfg[key])
    for key in _FLOAT_KEYS:
        if cfg.get(key) is not None:
            cfg[key] = float(cfg[key])
    if isinstance(cfg.get("floors"), str):
        cfg["floors"] = _float_list(cfg["floors"])
    if isinstance(cfg.get("M_grid"), str):
        cfg["M_grid"] = _int_list(cfg["M_grid"])
    if cfg.get("scenario_file") is not None:
        cfg["scenario_file"] = str(cfg["scenario_file"])
    return cfg


def _config_sha(cfg):
    canon = {k: v for k, v in cfg.items() if k != "out"}
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _resolve_scenario(cfg):
    if cfg["scenario_file"]:
        path = Path(cfg["scenario_file"])
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
        scen = scenario_from_json(text)
        if cfg["M"] != scen.M:
            scen = scen.with_m(cfg["M"])
        return scen
    drop = DropConfig(
        K_h=cfg["K_h"], K_m=cfg["K_m"], M=cfg["M"],
        cell_radius_m=cfg["cell_radius_m"], guard_radius_m=cfg["guard_radius_m"],
        noise_power_w=noise_power_watt(cfg["noise_psd_dbm_per_hz"], cfg["bandwidth_hz"]),
        p_max_w=dbm_to_watt(cfg["p_max_dbm"]),
    )
    return drop_devices(drop, seed=cfg["seed"])


def _scheme_config(cfg, scenario):
    scheme = Scheme(cfg["scheme"])
    if scheme is Scheme.SC2:
        return SchemeConfig.sc2(cfg["N"], scenario.K_h, cfg["Np_m"])
    if scheme is Scheme.SC1:
        return SchemeConfig.sc1(cfg["N"], cfg["Np_h"], cfg["Np_m"], cfg["alpha"])
    return SchemeConfig.sc3(cfg["N"], cfg["Np_h"], cfg["Np_m"])


def _powers(cfg, scenario):
    if cfg["p_dbm"] is None:
        return PowerAllocation.full_power(scenario)
    p = dbm_to_watt(cfg["p_dbm"])
    q = p if cfg["tied"] else None
    return PowerAllocation.uniform(scenario, p, q)


def _write_csv(path: Path, cfg, fieldnames, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# mimocoex: {cfg['command']}\n")
        fh.write(f"# config_sha256: {_config_sha(cfg)}\n")
        fh.write(f"# seed: {cfg['seed']}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in fieldnames})


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return str(float(value))
    return str(value)


def _write_sidecar(out: Path, cfg, extra=None):
    side = out.with_name(out.stem + ".config.json")
    payload = {k: v for k, v in cfg.items() if k != "out"}
    payload["config_sha256"] = _config_sha(cfg)
    if extra:
        payload.update(extra)
    side.write_text(json.dumps(payload, sort_keys=True, indent=2, default=str) + "\n")
    return side


def cmd_drop(cfg):
    scenario = _resolve_scenario(cfg)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(scenario_to_json(scenario))
    _write_sidecar(out, cfg)
    print(f"wrote {out} ({scenario.K_h} human, {scenario.K_m} machine devices)")
    return 0


def cmd_rates(cfg):
    out = Path(cfg["out"])
    rows = []
    drops = cfg["drops"]
    min_h, min_m = [], []
    for i in range(drops):
        if cfg["scenario_file"] and drops > 1:
            raise ConfigError("--drops > 1 needs random drops, not a fixed --scenario")
        if cfg["scenario_file"]:
            scenario = _resolve_scenario(cfg)
        else:
            sub = dict(cfg)
            scenario = drop_devices(DropConfig(
                K_h=cfg["K_h"], K_m=cfg["K_m"], M=cfg["M"],
                cell_radius_m=cfg["cell_radius_m"], guard_radius_m=cfg["guard_radius_m"],
                noise_power_w=noise_power_watt(sub["noise_psd_dbm_per_hz"], sub["bandwidth_hz"]),
                p_max_w=dbm_to_watt(cfg["p_max_dbm"])),
                seed=make_rng(cfg["seed"], stream=i))
        config = _scheme_config(cfg, scenario)
        config.validate(scenario)
        report = rates(scenario, _powers(cfg, scenario), config)
        for row in report.to_rows():
            row = dict(row)
            row["drop_index"] = i
            rows.append(row)
        min_h.append(report.min_human_rate)
        if report.min_machine_rate is not None:
            min_m.append(report.min_machine_rate)
    fields = ["drop_index"] + [k for k in rows[0] if k != "drop_index"]
    _write_csv(out, cfg, fields, rows)
    agg = {
        "mean_min_human_rate": float(np.mean(min_h)) if min_h else None,
        "mean_min_machine_rate": float(np.mean(min_m)) if min_m else None,
        "drops": drops,
    }
    _write_sidecar(out, cfg, {"aggregate": agg})
    print(f"wrote {out} ({len(rows)} device rows, {drops} drop(s))")
    return 0


def _region_floors(cfg):
    if cfg["floors"]:
        floors = [float(f) for f in cfg["floors"]]
    else:
        top = cfg["floor_max"]
        if top is None:
            top = 1.0
        floors = [float(x) for x in np.linspace(0.0, top, cfg["floor_steps"])]
    if any(f < 0 for f in floors):
        raise ConfigError("floors must be >= 0")
    return floors


def cmd_region(cfg):
    scenario = _resolve_scenario(cfg)
    config = _scheme_config(cfg, scenario)
    config.validate(scenario)
    problem = OptimizationProblem(
        scenario=scenario, scheme_config=config,
        pilot_power_mode=PilotPowerMode.TIED if cfg["tied"] else PilotPowerMode.FULL,
        tolerance=cfg["tolerance"], search_np_m=cfg["np_m_search"],
        search_alpha=cfg["alpha_search"])
    floors = _region_floors(cfg)
    points = rate_region_sweep(problem, floors, threads=cfg["threads"])
    rows = []
    for pt in points:
        rows.append({
            "scheme": pt.config.scheme.value, "M": scenario.M, "N": pt.config.N,
            "Np_h": pt.config.Np_h, "Np_m": pt.np_m, "alpha": pt.alpha,
            "floor_Rm": pt.floor, "achieved_Rh": pt.R_h, "achieved_Rm": pt.R_m,
            "feasible": pt.feasible, "status": pt.status,
        })
    out = Path(cfg["out"])
    _write_csv(out, cfg, list(rows[0]), rows)
    detail = out.with_name(out.stem + ".points.json")
    detail.write_text(json.dumps([pt.to_json_dict() for pt in points],
                                 sort_keys=True, indent=2) + "\n")
    _write_sidecar(out, cfg)
    n_ok = sum(pt.feasible for pt in points)
    print(f"wrote {out} ({n_ok}/{len(points)} floors feasible)")
    return 0


def cmd_antennas(cfg):
    scenario = _resolve_scenario(cfg)
    config = _scheme_config(cfg, scenario)
    config.validate(scenario)
    if cfg["M_grid"]:
        grid = [int(m) for m in cfg["M_grid"]]
    else:
        grid = [int(m) for m in (10, 20, 50, 100, 200, 500, 1000)]
    problem = OptimizationProblem(
        scenario=scenario, scheme_config=config,
        machine_rate_floor=cfg["floor"], tolerance=cfg["tolerance"],
        search_np_m=cfg["np_m_search"])
    points = antenna_sweep(problem, grid, optimize_powers=not cfg["fixed_power"],
                           threads=cfg["threads"])
    rows = []
    for ap in points:
        feasible = ap.point.feasible if ap.point is not None else True
        rows.append({
            "scheme": ap.config.scheme.value, "M": ap.M, "N": ap.config.N,
            "Np_h": ap.config.Np_h, "Np_m": ap.config.Np_m,
            "alpha": ap.config.alpha_h,
            "min_human_rate": ap.report.min_human_rate if feasible else math.nan,
            "min_machine_rate": ap.report.min_machine_rate if feasible else math.nan,
            "min_machine_asymptote_rate": ap.min_machine_asymptote_rate,
            "gap_to_asymptote": ap.gap,
            "optimized": ap.optimized, "feasible": feasible,
        })
    out = Path(cfg["out"])
    _write_csv(out, cfg, list(rows[0]), rows)
    _write_sidecar(out, cfg)
    print(f"wrote {out} ({len(rows)} antenna counts)")
    return 0


def cmd_verify(cfg):
    scenario = _resolve_scenario(cfg)
    config = _scheme_config(cfg, scenario)
    config.validate(scenario)
    powers = _powers(cfg, scenario)
    seed = cfg["seed"]
    n = cfg["samples"]
    rows = []
    all_ok = True

    plan = draw_pilot_plan(config, scenario, seed=make_rng(seed, stream=900))
    exact = gamma_given_plan(scenario, config, powers.q, powers.p, plan)
    moments = estimate_gamma_moment(scenario, config, powers, plan,
                                    n_samples=max(n, 1000), seed=seed,
                                    threads=cfg["threads"])
    for k, est in enumerate(moments):
        tol = max(0.01 * exact[k], 3.0 * est.stderr)
        err = abs(est.value - exact[k])
        ok = err <= tol
        all_ok &= ok
        rows.append({
            "kind": "gamma_moment", "device_id": k,
            "class": scenario.devices[k].kind.value,
            "closed_form": exact[k], "mc_value": est.value, "stderr": est.stderr,
            "abs_error": err, "tolerance": tol, "n_samples": est.n_samples,
            "passed": ok,
        })

    bd = compute_sinr(scenario, powers, config)
    est = estimate_uatf_components(scenario, config, powers, n_samples=n,
                                   seed=seed + 1, threads=cfg["threads"])
    for k in range(scenario.K):
        ref = bd.sinr[k]
        e = est.sinr_estimate(k)
        tol = max(0.02 * ref, 4.0 * e.stderr)
        err = abs(e.value - ref)
        ok = err <= tol
        all_ok &= ok
        rows.append({
            "kind": "uatf_sinr", "device_id": k,
            "class": scenario.devices[k].kind.value,
            "closed_form": ref, "mc_value": e.value, "stderr": e.stderr,
            "abs_error": err, "tolerance": tol, "n_samples": est.n_samples,
            "passed": ok,
        })

    out = Path(cfg["out"])
    _write_csv(out, cfg, list(rows[0]), rows)
    _write_sidecar(out, cfg)
    n_pass = sum(r["passed"] for r in rows)
    print(f"verify: {n_pass}/{len(rows)} checks passed -> {out}")
    if not all_ok:
        print("verify: FAIL", file=sys.stderr)
        return 2
    print("verify: PASS")
    return 0


_COMMANDS = {
    "drop": cmd_drop,
    "rates": cmd_rates,
    "region": cmd_region,
    "antennas": cmd_antennas,
    "verify": cmd_verify,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(args)
        cfg["out"] = str(args.out)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 0
        return code
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
