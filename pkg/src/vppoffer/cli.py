"""Batch command-line interface.

Subcommands: ``estimate`` (fit the price model), ``sample`` (draw scenario
sets), ``solve`` (full pipeline to an offer surface plus reports),
``evaluate`` (out-of-sample economic dispatch against realized data) and
``verify`` (recompute the extensive-form optimum for a finished run).

All artifacts are machine-readable (JSON with sorted keys, CSV with full
float precision) and byte-stable under identical configs and seeds; files
are written atomically.  Exit codes: 0 success, 2 input error, 3 infeasible
model, 4 verification gap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, InputError
from .model import (
    DeviceParams,
    OfferSurface,
    build_dispatch,
    rt_cost_direct,
    validate_offer,
)
from .price_markov import (
    PriceGrid,
    ScenarioSet,
    TransitionModel,
    build_grid,
    estimate_transitions,
    sample_trajectories,
)
from .psm import (
    PsmConfig,
    certainty_equivalent_offer,
    solve as psm_solve,
    suggest_step_config,
)
from .pv_uncertainty import BudgetSet, worst_case_profile
from .recourse import EnergyFeasibleSet, solve_scenario
from .oracles import extensive_form_solve

MODEL_FORMAT = "vppoffer-model-v1"
SCENARIO_FORMAT = "vppoffer-scenarios-v1"
RUN_FORMAT = "vppoffer-run-v1"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    prices_csv: str = ""
    load_csv: str = ""
    pv_bounds_csv: str = ""
    device: dict = field(default_factory=dict)
    n_states: int = 5
    n_scenarios: int = 25
    budget: float = 6.0
    seed: int = 0
    psm: dict = field(default_factory=dict)
    output_dir: str = "out"
    verify: bool = False
    gap_tol: float | None = None
    trace: bool = False

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise InputError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path} is not valid JSON: {exc}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def device_params(self) -> DeviceParams:
        required = {
            "horizon",
            "storage_power_cap",
            "energy_min",
            "energy_max",
            "initial_soc",
            "eta_ch",
            "eta_dis",
            "cost_pv",
            "cost_es",
            "kappa",
            "offer_min",
            "offer_max",
        }
        missing = required - set(self.device)
        if missing:
            raise InputError(f"device config missing keys: {sorted(missing)}")
        horizon = int(self.device["horizon"])
        load = read_load_csv(self.load_csv, horizon)
        return DeviceParams(
            horizon=horizon,
            storage_power_cap=float(self.device["storage_power_cap"]),
            energy_min=float(self.device["energy_min"]),
            energy_max=float(self.device["energy_max"]),
            initial_soc=float(self.device["initial_soc"]),
            eta_ch=float(self.device["eta_ch"]),
            eta_dis=float(self.device["eta_dis"]),
            cost_pv=float(self.device["cost_pv"]),
            cost_es=float(self.device["cost_es"]),
            kappa=float(self.device["kappa"]),
            offer_min=float(self.device["offer_min"]),
            offer_max=float(self.device["offer_max"]),
            load=load,
        )

    def psm_config(self, scenarios: ScenarioSet, params: DeviceParams) -> PsmConfig:
        base = suggest_step_config(scenarios, params)
        values = {
            "alpha0": base.alpha0,
            "alpha_min": base.alpha_min,
            "alpha_max": base.alpha_max,
            "eps_rel": base.eps_rel,
            "max_iters": base.max_iters,
        }
        unknown = set(self.psm) - set(values)
        if unknown:
            raise InputError(f"unknown psm config keys: {sorted(unknown)}")
        values.update({k: type(values[k])(v) for k, v in self.psm.items()})
        return PsmConfig(**values)


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    mapping = {
        "prices": "prices_csv",
        "load": "load_csv",
        "pv_bounds": "pv_bounds_csv",
        "states": "n_states",
        "scenarios": "n_scenarios",
        "gamma": "budget",
        "seed": "seed",
        "out": "output_dir",
        "gap_tol": "gap_tol",
    }
    for arg_name, field_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(config, field_name, value)
    if getattr(args, "verify", False):
        config.verify = True
    if getattr(args, "trace", False):
        config.trace = True
    return config


# ---------------------------------------------------------------------------
# file helpers


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    out = []
    out.append(",".join(header))
    for row in rows:
        out.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    _atomic_write(path, "\n".join(out) + "\n")


def sha256_of_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_of_payload(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _read_csv_rows(path: str, required: list[str]) -> list[dict]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise InputError(f"file not found: {path}")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file, expected a header row")
        fields = [f.strip().lower() for f in reader.fieldnames]
        missing = [c for c in required if c not in fields]
        if missing:
            raise InputError(f"{path}: missing required columns {missing} (found {fields})")
        rows = []
        for i, raw in enumerate(reader, start=2):
            rows.append({(k or "").strip().lower(): v for k, v in raw.items()})
            rows[-1]["_line"] = i
    return rows


def _parse_float(value: str, path: str, line: int, column: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InputError(f"{path}, line {line}, column {column!r}: not a number: {value!r}")


def read_price_history(path: str):
    """Long-format price CSV (date, hour, price) to a (days x hours) matrix
    plus the ordered date list."""
    rows = _read_csv_rows(path, ["date", "hour", "price"])
    by_date: dict[str, dict[int, float]] = {}
    dates: list[str] = []
    for row in rows:
        date = row["date"]
        hour = int(_parse_float(row["hour"], path, row["_line"], "hour"))
        price = _parse_float(row["price"], path, row["_line"], "price")
        if date not in by_date:
            by_date[date] = {}
            dates.append(date)
        by_date[date][hour] = price
    if not dates:
        raise InputError(f"{path}: no data rows")
    hours = sorted(by_date[dates[0]])
    if hours != list(range(1, len(hours) + 1)):
        raise InputError(f"{path}: hours must be 1..T, got {hours}")
    matrix = np.empty((len(dates), len(hours)))
    for d, date in enumerate(dates):
        if sorted(by_date[date]) != hours:
            raise InputError(f"{path}: date {date} does not cover hours 1..{len(hours)}")
        for t in hours:
            matrix[d, t - 1] = by_date[date][t]
    return matrix, dates


def read_load_csv(path: str, horizon: int) -> np.ndarray:
    rows = _read_csv_rows(path, ["hour", "kw"])
    load = np.full(horizon, np.nan)
    for row in rows:
        hour = int(_parse_float(row["hour"], path, row["_line"], "hour"))
        if not (1 <= hour <= horizon):
            raise InputError(f"{path}, line {row['_line']}: hour {hour} outside 1..{horizon}")
        load[hour - 1] = _parse_float(row["kw"], path, row["_line"], "kw")
    if np.any(np.isnan(load)):
        missing = [t + 1 for t in np.nonzero(np.isnan(load))[0]]
        raise InputError(f"{path}: missing load for hours {missing}")
    return load


def read_pv_bounds_csv(path: str, horizon: int, budget: float) -> BudgetSet:
    rows = _read_csv_rows(path, ["hour", "lower_kw", "upper_kw"])
    lower = np.full(horizon, np.nan)
    upper = np.full(horizon, np.nan)
    for row in rows:
        hour = int(_parse_float(row["hour"], path, row["_line"], "hour"))
        if not (1 <= hour <= horizon):
            raise InputError(f"{path}, line {row['_line']}: hour {hour} outside 1..{horizon}")
        lower[hour - 1] = _parse_float(row["lower_kw"], path, row["_line"], "lower_kw")
        upper[hour - 1] = _parse_float(row["upper_kw"], path, row["_line"], "upper_kw")
    if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
        raise InputError(f"{path}: PV bounds must cover hours 1..{horizon}")
    return BudgetSet.from_bounds(lower, upper, budget)


# ---------------------------------------------------------------------------
# model / scenario serialization


def model_payload(grid: PriceGrid, model: TransitionModel, metadata: dict) -> dict:
    return {
        "format": MODEL_FORMAT,
        "grid": {
            "lower": grid.lower.tolist(),
            "upper": grid.upper.tolist(),
            "representative": grid.representative.tolist(),
        },
        "transitions": {
            "initial": model.initial.tolist(),
            "matrices": model.transitions.tolist(),
            "fallback_rows": [list(r) for r in model.fallback_rows],
        },
        "metadata": metadata,
    }


def load_model(path: Path) -> tuple[PriceGrid, TransitionModel, dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"model file not found: {path}")
    if payload.get("format") != MODEL_FORMAT:
        raise InputError(f"{path}: unexpected format {payload.get('format')!r}")
    g = payload["grid"]
    grid = PriceGrid(
        lower=np.array(g["lower"]), upper=np.array(g["upper"]), representative=np.array(g["representative"])
    )
    tr = payload["transitions"]
    model = TransitionModel(
        initial=np.array(tr["initial"]),
        transitions=np.array(tr["matrices"]),
        fallback_rows=tuple(tuple(r) for r in tr["fallback_rows"]),
    )
    return grid, model, payload.get("metadata", {})


def scenarios_payload(scen: ScenarioSet, metadata: dict) -> dict:
    return {
        "format": SCENARIO_FORMAT,
        "states": (scen.states + 1).tolist(),  # 1-based on disk
        "prices": scen.prices.tolist(),
        "weights": scen.weights.tolist(),
        "metadata": metadata,
    }


def load_scenarios(path: Path) -> tuple[ScenarioSet, dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"scenario file not found: {path}")
    if payload.get("format") != SCENARIO_FORMAT:
        raise InputError(f"{path}: unexpected format {payload.get('format')!r}")
    scen = ScenarioSet(
        states=np.array(payload["states"], dtype=int) - 1,
        prices=np.array(payload["prices"]),
        weights=np.array(payload["weights"]),
    )
    return scen, payload.get("metadata", {})


def offer_rows(offer: OfferSurface, grid: PriceGrid) -> list[list]:
    rows = []
    for t in range(offer.n_hours):
        for s in range(offer.n_states):
            rows.append(
                [t + 1, s + 1, float(grid.representative[t, s]), float(offer.quantities[t, s])]
            )
    return rows


def load_offer_csv(path: Path, horizon: int, n_states: int) -> OfferSurface:
    rows = _read_csv_rows(str(path), ["hour", "state", "price", "quantity"])
    q = np.full((horizon, n_states), np.nan)
    for row in rows:
        t = int(_parse_float(row["hour"], str(path), row["_line"], "hour")) - 1
        s = int(_parse_float(row["state"], str(path), row["_line"], "state")) - 1
        q[t, s] = _parse_float(row["quantity"], str(path), row["_line"], "quantity")
    if np.any(np.isnan(q)):
        raise InputError(f"{path}: offer surface does not cover every (hour, state)")
    return OfferSurface(quantities=q)


# ---------------------------------------------------------------------------
# commands


def _estimate(config: RunConfig) -> tuple[PriceGrid, TransitionModel, dict]:
    history, dates = read_price_history(config.prices_csv)
    grid = build_grid(history, config.n_states)
    model = estimate_transitions(history, grid)
    metadata = {
        "n_days": len(dates),
        "n_hours": int(history.shape[1]),
        "n_states": config.n_states,
        "binning": "equal-frequency quantile intervals, in-bin mean representatives",
        "initial_distribution": "empirical hour-1 state frequency",
        "price_data_sha256": sha256_of_file(config.prices_csv),
    }
    return grid, model, metadata


def cmd_estimate(config: RunConfig) -> int:
    grid, model, metadata = _estimate(config)
    out = Path(config.output_dir)
    write_json(out / "model.json", model_payload(grid, model, metadata))
    print(f"wrote {out / 'model.json'} ({metadata['n_days']} days, "
          f"{metadata['n_hours']} hours, {metadata['n_states']} states)")
    return 0


def cmd_sample(config: RunConfig, model_path: str | None) -> int:
    out = Path(config.output_dir)
    if model_path:
        grid, model, meta = load_model(Path(model_path))
    else:
        grid, model, meta = _estimate(config)
    scen = sample_trajectories(model, grid, config.n_scenarios, config.seed)
    payload = scenarios_payload(
        scen,
        {
            "seed": config.seed,
            "n_samples": config.n_scenarios,
            "weighting": "uniform",
            "model_sha256": sha256_of_payload(model_payload(grid, model, meta)),
        },
    )
    write_json(out / "scenarios.json", payload)
    print(f"wrote {out / 'scenarios.json'} ({scen.n_scenarios} trajectories, seed {config.seed})")
    return 0


def _config_echo(config: RunConfig) -> dict:
    echo = asdict(config)
    return echo


def cmd_solve(config: RunConfig, model_path: str | None) -> int:
    t_start = time.perf_counter()
    out = Path(config.output_dir)
    params = config.device_params()
    if not (0.0 <= config.budget <= params.horizon):
        raise InputError(f"budget must lie in [0, {params.horizon}], got {config.budget}")
    if model_path:
        grid, model, meta = load_model(Path(model_path))
    else:
        grid, model, meta = _estimate(config)
    if grid.n_hours != params.horizon:
        raise InputError(
            f"price model covers {grid.n_hours} hours but device horizon is {params.horizon}"
        )
    scen = sample_trajectories(model, grid, config.n_scenarios, config.seed)
    budget_set = read_pv_bounds_csv(config.pv_bounds_csv, params.horizon, config.budget)
    psm_config = config.psm_config(scen, params)
    initial = certainty_equivalent_offer(params, grid, budget_set)
    result = psm_solve(initial, scen, budget_set, params, grid, psm_config)
    wall = time.perf_counter() - t_start

    write_json(out / "model.json", model_payload(grid, model, meta))
    write_json(
        out / "scenarios.json",
        scenarios_payload(
            scen,
            {
                "seed": config.seed,
                "n_samples": config.n_scenarios,
                "weighting": "uniform",
                "model_sha256": sha256_of_payload(model_payload(grid, model, meta)),
            },
        ),
    )
    write_csv(
        out / "offer_surface.csv",
        ["hour", "state", "price", "quantity"],
        offer_rows(result.offer, grid),
    )
    dispatch_rows = []
    for w, sol in enumerate(result.scenario_solutions):
        committed = result.offer.committed(scen.states[w])
        pv = worst_case_profile(budget_set, scen.prices[w])
        d = build_dispatch(sol.delta_e, pv, committed, params)
        for t in range(params.horizon):
            dispatch_rows.append(
                [
                    w + 1,
                    t + 1,
                    int(scen.states[w, t]) + 1,
                    float(scen.prices[w, t]),
                    float(committed[t]),
                    float(d.pv[t]),
                    float(d.charge[t]),
                    float(d.discharge[t]),
                    float(d.soc[t]),
                    float(d.mismatch[t]),
                ]
            )
    write_csv(
        out / "scenario_dispatch.csv",
        ["scenario", "hour", "state", "price", "committed", "pv", "charge", "discharge", "soc", "mismatch"],
        dispatch_rows,
    )

    warnings = list(result.warnings)
    trace_report = None
    if config.trace:
        trace_report = _trace_check(result.offer, scen, budget_set, params)
        if not trace_report["invariant_ok"]:
            warnings.append("greedy trace invariant check failed; see run.json trace block")

    run_payload = {
        "format": RUN_FORMAT,
        "objective": result.value,
        "iterations": result.iterations,
        "oracle_sweeps": result.oracle_sweeps,
        "status": result.status,
        "wall_time_s": wall,
        "iteration_log": [
            {
                "iteration": rec.iteration,
                "value": rec.value,
                "value_after_step": rec.value_after_step,
                "step_size": rec.step_size,
                "rel_change": rec.rel_change,
            }
            for rec in result.log
        ],
        "warnings": warnings,
        "config": _config_echo(config),
        "config_sha256": sha256_of_payload(_config_echo(config)),
        "seed": config.seed,
        "budget_set": {
            "nominal": budget_set.nominal.tolist(),
            "half_width": budget_set.half_width.tolist(),
            "budget": budget_set.budget,
        },
        "metadata": {
            "device_aggregation": "fleet modeled as one equivalent PV unit and one equivalent storage unit",
            "sweeps_per_iteration": 2,
            "initial_offer": "certainty-equivalent per-state plan, projected",
        },
    }
    if trace_report is not None:
        run_payload["trace"] = trace_report

    exit_code = 0
    if config.verify:
        ref = extensive_form_solve(scen, params, budget_set, grid)
        if ref.status != "optimal":
            raise InfeasibleError(f"extensive-form verification came back {ref.status}")
        gap = abs(result.value - ref.value) / max(1.0, abs(ref.value))
        run_payload["verification"] = {
            "extensive_form_objective": ref.value,
            "gap": gap,
        }
        if config.gap_tol is not None and gap > config.gap_tol:
            warnings.append(f"verification gap {gap:.3e} exceeds tolerance {config.gap_tol:.3e}")
            run_payload["warnings"] = warnings
            exit_code = 4
    write_json(out / "run.json", run_payload)
    print(
        f"objective {result.value:.6f} after {result.iterations} iterations "
        f"({result.oracle_sweeps} oracle sweeps, {result.status}); wrote {out / 'run.json'}"
    )
    if config.verify:
        print(f"extensive-form objective {run_payload['verification']['extensive_form_objective']:.6f}, "
              f"gap {run_payload['verification']['gap']:.3e}")
    return exit_code


def _trace_check(offer: OfferSurface, scen: ScenarioSet, budget_set: BudgetSet, params: DeviceParams) -> dict:
    """Re-solve every scenario with the debug trace on and check the greedy
    iterate invariants: SOC above its lower bounds, pending upper violations
    repairable, and componentwise monotone iterates."""
    feas = EnergyFeasibleSet.from_params(params)
    worst_lower = 0.0
    worst_margin = 0.0
    n_steps = 0
    ok = True
    for w in range(scen.n_scenarios):
        pv = worst_case_profile(budget_set, scen.prices[w])
        committed = offer.committed(scen.states[w])
        sol, steps = solve_scenario(params, scen.prices[w], pv, committed, trace=True)
        prev = None
        for st in steps:
            n_steps += 1
            de = np.asarray(st.delta_e)
            soc = feas.soc_of(de)
            lower_gap = float(np.min(soc - feas.lower))
            worst_lower = min(worst_lower, lower_gap)
            viol = np.maximum.accumulate(np.maximum(soc[1:-1] - feas.upper[1:-1], 0.0))
            margin = float(np.min((soc[2:] - feas.lower[2:]) - viol)) if soc.shape[0] > 2 else 0.0
            worst_margin = min(worst_margin, margin)
            if lower_gap < -1e-9 or margin < -1e-9:
                ok = False
            if prev is not None and np.any(de > prev + 1e-12):
                ok = False
            prev = de
    return {
        "invariant_ok": ok,
        "iterates_checked": n_steps,
        "worst_lower_bound_slack": worst_lower,
        "worst_repairability_margin": worst_margin,
    }


def cmd_evaluate(config: RunConfig, realized_prices: str, realized_pv: str) -> int:
    out = Path(config.output_dir)
    params = config.device_params()
    grid, _, _ = load_model(out / "model.json")
    offer = load_offer_csv(out / "offer_surface.csv", grid.n_hours, grid.n_states)
    price_matrix, dates = read_price_history(realized_prices)
    if price_matrix.shape[1] != params.horizon:
        raise InputError(
            f"realized prices cover {price_matrix.shape[1]} hours, expected {params.horizon}"
        )
    pv_matrix = _read_realized_pv(realized_pv, dates, params.horizon)

    warnings: list[str] = []
    dispatch_rows = []
    day_rows = []
    profits = []
    for d, date in enumerate(dates):
        lam = price_matrix[d]
        states = np.empty(params.horizon, dtype=int)
        for t in range(params.horizon):
            s, clamped = grid.state_of(t, float(lam[t]), clamp=True)
            states[t] = s
            if clamped:
                warnings.append(
                    f"{date} hour {t + 1}: realized price {lam[t]} outside the grid; "
                    f"clamped to state {s + 1}"
                )
        committed = offer.committed(states)
        sol = solve_scenario(params, lam, pv_matrix[d], committed)
        dispatch = build_dispatch(sol.delta_e, pv_matrix[d], committed, params)
        rt = rt_cost_direct(dispatch, lam, params)
        revenue = float(lam @ committed)
        profit = revenue - rt
        profits.append(profit)
        day_rows.append([date, revenue, rt, profit])
        for t in range(params.horizon):
            dispatch_rows.append(
                [
                    date,
                    t + 1,
                    float(lam[t]),
                    int(states[t]) + 1,
                    float(committed[t]),
                    float(dispatch.pv[t]),
                    float(dispatch.charge[t]),
                    float(dispatch.discharge[t]),
                    float(dispatch.soc[t]),
                    float(dispatch.mismatch[t]),
                ]
            )
    write_csv(
        out / "evaluation_dispatch.csv",
        ["date", "hour", "price", "state", "committed", "pv", "charge", "discharge", "soc", "mismatch"],
        dispatch_rows,
    )
    write_csv(out / "evaluation_days.csv", ["date", "revenue", "rt_cost", "profit"], day_rows)
    profits_arr = np.asarray(profits)
    summary = {
        "n_days": len(dates),
        "profit_mean": float(profits_arr.mean()),
        "profit_variance": float(profits_arr.var()),
        "warnings": warnings,
        "config_sha256": sha256_of_payload(_config_echo(config)),
    }
    write_json(out / "evaluation_summary.json", summary)
    print(
        f"evaluated {len(dates)} days: mean profit {summary['profit_mean']:.6f}, "
        f"variance {summary['profit_variance']:.6f}; wrote {out / 'evaluation_summary.json'}"
    )
    return 0


def _read_realized_pv(path: str, dates: list[str], horizon: int) -> np.ndarray:
    rows = _read_csv_rows(path, ["hour", "kw"])
    has_date = all("date" in row and row.get("date") not in (None, "") for row in rows)
    if has_date:
        by_date: dict[str, np.ndarray] = {}
        for row in rows:
            date = row["date"]
            arr = by_date.setdefault(date, np.full(horizon, np.nan))
            hour = int(_parse_float(row["hour"], path, row["_line"], "hour"))
            arr[hour - 1] = _parse_float(row["kw"], path, row["_line"], "kw")
        missing_dates = [d for d in dates if d not in by_date]
        if missing_dates:
            raise InputError(f"{path}: no PV data for dates {missing_dates}")
        out = np.empty((len(dates), horizon))
        for d, date in enumerate(dates):
            if np.any(np.isnan(by_date[date])):
                raise InputError(f"{path}: date {date} does not cover all hours")
            out[d] = by_date[date]
        return out
    profile = np.full(horizon, np.nan)
    for row in rows:
        hour = int(_parse_float(row["hour"], path, row["_line"], "hour"))
        profile[hour - 1] = _parse_float(row["kw"], path, row["_line"], "kw")
    if np.any(np.isnan(profile)):
        raise InputError(f"{path}: PV profile does not cover all hours")
    return np.tile(profile, (len(dates), 1))


def cmd_verify(output_dir: str, gap_tol: float | None) -> int:
    out = Path(output_dir)
    try:
        with open(out / "run.json", "r", encoding="utf-8") as fh:
            run = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"no run.json under {out}; run `vppoffer solve` first")
    config = RunConfig(**run["config"])
    params = config.device_params()
    grid, _, _ = load_model(out / "model.json")
    scen, _ = load_scenarios(out / "scenarios.json")
    bs = run["budget_set"]
    budget_set = BudgetSet(
        nominal=np.array(bs["nominal"]), half_width=np.array(bs["half_width"]), budget=bs["budget"]
    )
    ref = extensive_form_solve(scen, params, budget_set, grid)
    if ref.status != "optimal":
        raise InfeasibleError(f"extensive-form verification came back {ref.status}")
    gap = abs(run["objective"] - ref.value) / max(1.0, abs(ref.value))
    payload = {
        "psm_objective": run["objective"],
        "extensive_form_objective": ref.value,
        "gap": gap,
        "gap_tol": gap_tol,
    }
    write_json(out / "verify.json", payload)
    print(f"psm {run['objective']:.6f} vs extensive form {ref.value:.6f}: gap {gap:.3e}")
    if gap_tol is not None and gap > gap_tol:
        print(f"gap exceeds tolerance {gap_tol:.3e}", file=sys.stderr)
        return 4
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vppoffer",
        description="Day-ahead offering pipeline: estimate, sample, solve, evaluate, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--prices", help="price history CSV (date, hour, price)")
        p.add_argument("--load", help="load profile CSV (hour, kw)")
        p.add_argument("--pv-bounds", dest="pv_bounds", help="PV bounds CSV (hour, lower_kw, upper_kw)")
        p.add_argument("--states", type=int, help="price states per hour")
        p.add_argument("--scenarios", type=int, help="number of sampled trajectories")
        p.add_argument("--gamma", type=float, help="PV uncertainty budget")
        p.add_argument("--seed", type=int, help="sampling seed")
        p.add_argument("--out", help="output directory")

    p_est = sub.add_parser("estimate", help="fit the price grid and transition model")
    common(p_est)

    p_sample = sub.add_parser("sample", help="sample a scenario set from a fitted model")
    common(p_sample)
    p_sample.add_argument("--model", help="existing model.json (otherwise estimated from prices)")

    p_solve = sub.add_parser("solve", help="run the full offering pipeline")
    common(p_solve)
    p_solve.add_argument("--model", help="existing model.json (otherwise estimated from prices)")
    p_solve.add_argument("--verify", action="store_true", help="also solve the extensive form")
    p_solve.add_argument("--gap-tol", dest="gap_tol", type=float, help="fail (exit 4) if the verification gap exceeds this")
    p_solve.add_argument("--trace", action="store_true", help="check greedy iterate invariants at the incumbent")

    p_eval = sub.add_parser("evaluate", help="out-of-sample dispatch against realized data")
    common(p_eval)
    p_eval.add_argument("--realized-prices", required=True, help="realized price CSV (date, hour, price)")
    p_eval.add_argument("--realized-pv", required=True, help="realized PV CSV (hour, kw) or (date, hour, kw)")

    p_ver = sub.add_parser("verify", help="recompute the extensive-form optimum for a finished run")
    p_ver.add_argument("--out", required=True, help="output directory of the run")
    p_ver.add_argument("--gap-tol", dest="gap_tol", type=float, help="fail (exit 4) above this gap")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.out, args.gap_tol)
        config = apply_overrides(RunConfig.from_file(args.config), args)
        if args.command == "estimate":
            return cmd_estimate(config)
        if args.command == "sample":
            return cmd_sample(config, getattr(args, "model", None))
        if args.command == "solve":
            return cmd_solve(config, getattr(args, "model", None))
        if args.command == "evaluate":
            return cmd_evaluate(config, args.realized_prices, args.realized_pv)
        raise InputError(f"unknown command {args.command!r}")
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible model: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
