"""Shared instance generators for the test suite.

Everything is seeded through numpy Generators so tests are reproducible;
the desk-scale family mirrors the synthetic bundle in scripts/.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vppoffer.model import DeviceParams, make_params
from vppoffer.price_markov import (
    PriceGrid,
    ScenarioSet,
    build_grid,
    estimate_transitions,
    sample_trajectories,
)
from vppoffer.pv_uncertainty import BudgetSet
from vppoffer.recourse import EnergyFeasibleSet, StagewiseCost


def random_cost(rng: np.random.Generator, max_pieces: int = 4) -> StagewiseCost:
    n = int(rng.integers(1, max_pieces + 1))
    slopes = rng.uniform(-60.0, 80.0, size=n)
    intercepts = rng.uniform(-50.0, 50.0, size=n)
    return StagewiseCost.from_pieces(slopes, intercepts)


def random_feasible_set(rng: np.random.Generator, horizon: int) -> EnergyFeasibleSet:
    e_min = float(rng.uniform(0.0, 3.0))
    e_max = e_min + float(rng.uniform(0.5, 8.0))
    e0 = float(rng.uniform(e_min, e_max))
    return EnergyFeasibleSet.from_bounds(e0, e_min, e_max, horizon)


def synthetic_price_history(rng: np.random.Generator, n_days: int, horizon: int) -> np.ndarray:
    hours = np.arange(horizon)
    base = (
        45.0
        + 18.0 * np.sin((hours - 7) * 2.0 * np.pi / horizon)
        + 8.0 * np.sin(hours * 4.0 * np.pi / horizon)
    )
    day_scale = rng.lognormal(0.0, 0.15, size=(n_days, 1))
    noise = rng.normal(0.0, 4.0, size=(n_days, horizon))
    return np.maximum(12.0, base[None, :] * day_scale + noise)


@dataclass
class DeskInstance:
    params: DeviceParams
    grid: PriceGrid
    scenarios: ScenarioSet
    budget_set: BudgetSet


def desk_instance(
    seed: int,
    n_scenarios: int,
    horizon: int = 24,
    n_states: int = 5,
    kappa: float = 0.1,
    n_days: int = 150,
) -> DeskInstance:
    """PV-heavy exporting VPP with a mid-size battery; the regime where the
    imbalance charge is small against price spreads, as the decoupling
    condition demands."""
    rng = np.random.default_rng(seed)
    history = synthetic_price_history(rng, n_days, horizon)
    grid = build_grid(history, n_states)
    model = estimate_transitions(history, grid)
    scenarios = sample_trajectories(model, grid, n_scenarios, seed=seed + 1)
    hours = np.arange(horizon)
    load = 5.0 + 2.0 * np.sin((hours - 18) * 2.0 * np.pi / horizon) + rng.uniform(0.0, 0.5, horizon)
    params = make_params(
        horizon,
        load,
        energy_min=1.0,
        energy_max=15.0,
        initial_soc=8.0,
        eta_ch=0.92,
        eta_dis=0.92,
        cost_pv=5.0,
        cost_es=1.0,
        kappa=kappa,
        offer_min=-20.0,
        offer_max=60.0,
        storage_power_cap=10.0,
    )
    pv_nominal = np.maximum(0.0, 40.0 * np.sin((hours - 5) * np.pi / 14.0))
    budget_set = BudgetSet(
        nominal=pv_nominal, half_width=np.minimum(4.0, pv_nominal), budget=6.0
    )
    return DeskInstance(params=params, grid=grid, scenarios=scenarios, budget_set=budget_set)


def tight_storage_instance(seed: int, n_scenarios: int = 4, horizon: int = 12,
                           n_states: int = 3) -> DeskInstance:
    """Variant with a nearly pinned battery: the recourse optimum lands on
    cumulative-bound corners rather than settlement kinks, so scenario hours
    are generically unbalanced and the settlement-side subgradient is exact."""
    rng = np.random.default_rng(seed)
    history = synthetic_price_history(rng, 120, horizon)
    grid = build_grid(history, n_states)
    model = estimate_transitions(history, grid)
    scenarios = sample_trajectories(model, grid, n_scenarios, seed=seed + 1)
    hours = np.arange(horizon)
    load = 4.0 + rng.uniform(0.0, 1.0, horizon)
    params = make_params(
        horizon,
        load,
        energy_min=2.0,
        energy_max=2.4,
        initial_soc=2.2,
        eta_ch=0.9,
        eta_dis=0.9,
        cost_pv=3.0,
        cost_es=0.5,
        kappa=2.0,
        offer_min=-15.0,
        offer_max=30.0,
        storage_power_cap=5.0,
    )
    pv_nominal = np.maximum(0.0, 12.0 * np.sin((hours - 2) * np.pi / (horizon - 2)))
    budget_set = BudgetSet(
        nominal=pv_nominal, half_width=0.3 * pv_nominal, budget=3.0
    )
    return DeskInstance(params=params, grid=grid, scenarios=scenarios, budget_set=budget_set)


def random_offer(rng: np.random.Generator, params: DeviceParams, grid: PriceGrid) -> np.ndarray:
    """Random feasible offer surface (sorted rows inside the box)."""
    q = rng.uniform(params.offer_min, params.offer_max, size=(grid.n_hours, grid.n_states))
    return np.sort(q, axis=1)


def separated_price_instance(rng: np.random.Generator, horizon: int, kappa: float = 1.5,
                             cost_pv: float = 3.0):
    """Short-horizon scenario whose prices satisfy the decoupling condition:
    pairwise gaps of at least twice the imbalance charge and a comfortable
    margin over the PV marginal cost."""
    base = np.array([20.0, 32.0, 46.0, 62.0])[:horizon]
    prices = rng.permutation(base) + rng.uniform(-1.0, 1.0, horizon)
    load = rng.uniform(1.0, 5.0, horizon)
    e_min = float(rng.uniform(0.0, 1.0))
    e_max = e_min + float(rng.uniform(0.5, 4.0))
    e0 = float(rng.uniform(e_min, e_max))
    params = make_params(
        horizon,
        load,
        energy_min=e_min,
        energy_max=e_max,
        initial_soc=e0,
        eta_ch=float(rng.uniform(0.85, 1.0)),
        eta_dis=float(rng.uniform(0.85, 1.0)),
        cost_pv=cost_pv,
        cost_es=float(rng.uniform(0.0, 1.0)),
        kappa=kappa,
        offer_min=-20.0,
        offer_max=40.0,
        storage_power_cap=50.0,
    )
    nominal = rng.uniform(2.0, 8.0, horizon)
    width = rng.uniform(0.0, 0.5, horizon) * nominal
    budget = float(rng.integers(0, horizon + 1))
    budget_set = BudgetSet(nominal=nominal, half_width=width, budget=budget)
    committed = rng.uniform(-5.0, 8.0, horizon)
    return params, budget_set, prices, committed


def write_data_bundle(tmp_path, n_days=30, horizon=6, seed=0, kappa=0.5,
                      n_states=2, n_scenarios=3):
    """Small CSV + config bundle for CLI tests; returns the config path."""
    import json

    rng = np.random.default_rng(seed)
    out = tmp_path / "data"
    out.mkdir(parents=True, exist_ok=True)
    history = synthetic_price_history(rng, n_days, horizon)
    lines = ["date,hour,price"]
    for d in range(n_days):
        for t in range(horizon):
            lines.append(f"d{d:04d},{t + 1},{float(history[d, t])!r}")
    (out / "prices.csv").write_text("\n".join(lines) + "\n")
    load = 3.0 + rng.uniform(0.0, 1.0, horizon)
    (out / "load.csv").write_text(
        "hour,kw\n" + "\n".join(f"{t + 1},{float(load[t])!r}" for t in range(horizon)) + "\n"
    )
    nominal = rng.uniform(2.0, 10.0, horizon)
    width = 0.3 * nominal
    (out / "pv_bounds.csv").write_text(
        "hour,lower_kw,upper_kw\n"
        + "\n".join(
            f"{t + 1},{float(nominal[t] - width[t])!r},{float(nominal[t] + width[t])!r}"
            for t in range(horizon)
        )
        + "\n"
    )
    config = {
        "prices_csv": str(out / "prices.csv"),
        "load_csv": str(out / "load.csv"),
        "pv_bounds_csv": str(out / "pv_bounds.csv"),
        "device": {
            "horizon": horizon,
            "storage_power_cap": 6.0,
            "energy_min": 0.5,
            "energy_max": 6.0,
            "initial_soc": 3.0,
            "eta_ch": 0.92,
            "eta_dis": 0.92,
            "cost_pv": 4.0,
            "cost_es": 0.5,
            "kappa": kappa,
            "offer_min": -15.0,
            "offer_max": 25.0,
        },
        "n_states": n_states,
        "n_scenarios": n_scenarios,
        "budget": 2.0,
        "seed": seed,
        "psm": {"max_iters": 120},
        "output_dir": str(out / "run"),
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, sort_keys=True, indent=2) + "\n")
    return config_path, out
