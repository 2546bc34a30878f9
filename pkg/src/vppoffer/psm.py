"""Projected subgradient method for the two-stage stochastic LP.

Each iteration sweeps the greedy recourse oracle over all scenarios to get
the objective and a subgradient with respect to the offer surface, takes a
clipped Barzilai-Borwein step, and projects back onto the feasible offer set
(per-hour bounded isotonic regression solved by pool-adjacent-violators
followed by clipping).  The incumbent, not the last iterate, is returned:
subgradient steps are not descent steps, so the best value seen wins.
Scenario reductions run in index order, making runs bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import (
    DeviceParams,
    OfferSurface,
    build_dispatch,
    power_cap_excess,
    validate_offer,
)
from .price_markov import PriceGrid, ScenarioSet
from .pv_uncertainty import BudgetSet, check_decoupling_condition, worst_case_profile
from .recourse import RecourseSolution, solve_scenario, subgradient_slopes


@dataclass(frozen=True)
class PsmConfig:
    """Step-size safeguards and stopping parameters (step sizes in kW per
    unit of subgradient)."""

    alpha0: float = 1e-3
    alpha_min: float = 1e-6
    alpha_max: float = 1e-1
    eps_rel: float = 1e-8
    max_iters: int = 600

    def __post_init__(self):
        if not (0.0 < self.alpha_min <= self.alpha0 <= self.alpha_max):
            raise InputError(
                f"need 0 < alpha_min <= alpha0 <= alpha_max, got "
                f"({self.alpha_min}, {self.alpha0}, {self.alpha_max})"
            )
        if self.eps_rel <= 0.0:
            raise InputError(f"eps_rel must be positive, got {self.eps_rel}")
        if self.max_iters < 1:
            raise InputError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class PsmState:
    """Mutable loop state: current iterate, the previous iterate/subgradient
    pair feeding the BB step, and the incumbent."""

    iterate: OfferSurface
    prev_iterate: OfferSurface | None = None
    prev_subgradient: np.ndarray | None = None
    incumbent: OfferSurface | None = None
    incumbent_value: float = np.inf
    iteration: int = 0

    def offer_candidate(self, offer: OfferSurface, value: float) -> None:
        if value < self.incumbent_value:
            self.incumbent = offer
            self.incumbent_value = value


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    value: float
    value_after_step: float
    step_size: float
    rel_change: float


@dataclass(frozen=True)
class PsmResult:
    offer: OfferSurface
    value: float
    iterations: int
    oracle_sweeps: int
    status: str  # "converged" | "max_iterations"
    log: tuple[IterationRecord, ...]
    warnings: tuple[str, ...]
    scenario_solutions: tuple[RecourseSolution, ...]  # at the incumbent


def isotonic_fit(values: np.ndarray) -> np.ndarray:
    """Unbounded least-squares isotonic fit by pool-adjacent-violators."""
    blocks: list[list[float]] = []  # [total, count]
    for v in values:
        tot, cnt = float(v), 1.0
        while blocks and blocks[-1][0] * cnt > tot * blocks[-1][1]:
            ptot, pcnt = blocks.pop()
            tot += ptot
            cnt += pcnt
        blocks.append([tot, cnt])
    out = np.empty(len(values))
    pos = 0
    for tot, cnt in blocks:
        n = int(cnt)
        out[pos : pos + n] = tot / cnt
        pos += n
    return out


def pava_project(
    target: OfferSurface, grid: PriceGrid, offer_min: float, offer_max: float
) -> OfferSurface:
    """Euclidean projection onto the feasible offer set, hour by hour.

    The per-hour projection is a bounded isotonic regression in the grid's
    price order; with identical bounds on every component it equals the
    unbounded isotonic fit clipped to the box.
    """
    if offer_min > offer_max:
        raise InputError(f"offer bounds reversed: {offer_min} > {offer_max}")
    q = target.quantities
    if q.shape != grid.representative.shape:
        raise InputError(
            f"target shape {q.shape} does not match grid shape {grid.representative.shape}"
        )
    out = np.empty_like(q)
    for t in range(q.shape[0]):
        order = np.argsort(grid.representative[t], kind="stable")
        fitted = isotonic_fit(q[t, order])
        out[t, order] = np.clip(fitted, offer_min, offer_max)
    return OfferSurface(quantities=out)


def bb_step(delta_p: np.ndarray, delta_g: np.ndarray, config: PsmConfig) -> float:
    """Clipped two-point secant step; falls back to the initial step when the
    subgradient did not move."""
    dg = np.asarray(delta_g, dtype=float).ravel()
    dp = np.asarray(delta_p, dtype=float).ravel()
    denom = float(dg @ dg)
    if denom == 0.0:
        return config.alpha0
    alpha = float(dp @ dg) / denom
    return min(config.alpha_max, max(config.alpha_min, alpha))


def evaluate_objective(
    offer: OfferSurface,
    scenarios: ScenarioSet,
    pv_profiles: np.ndarray,
    params: DeviceParams,
) -> tuple[float, list[RecourseSolution]]:
    """Expected net cost of an offer: day-ahead settlement revenue netted
    against each scenario's exact recourse value, accumulated in scenario
    index order."""
    phi = 0.0
    solutions: list[RecourseSolution] = []
    for w in range(scenarios.n_scenarios):
        committed = offer.committed(scenarios.states[w])
        sol = solve_scenario(params, scenarios.prices[w], pv_profiles[w], committed)
        phi += scenarios.weights[w] * (
            -float(scenarios.prices[w] @ committed) + sol.value
        )
        solutions.append(sol)
    return phi, solutions


def assemble_subgradient(
    solutions: list[RecourseSolution],
    scenarios: ScenarioSet,
    n_states: int,
    kappa: float,
) -> np.ndarray:
    """Subgradient of the objective in the offer surface: each scenario adds
    its revenue slope plus the settlement-side slope of its recourse to the
    component of the state it visits; unvisited (hour, state) pairs stay 0."""
    horizon = scenarios.n_hours
    g = np.zeros((horizon, n_states))
    hours = np.arange(horizon)
    for w in range(scenarios.n_scenarios):
        slopes = subgradient_slopes(solutions[w], scenarios.prices[w], kappa)
        contrib = scenarios.weights[w] * (slopes - scenarios.prices[w])
        np.add.at(g, (hours, scenarios.states[w]), contrib)
    return g


def certainty_equivalent_offer(
    params: DeviceParams, grid: PriceGrid, budget_set: BudgetSet
) -> OfferSurface:
    """Warm start: for each price state, plan dispatch deterministically
    against that state's representative price path (worst-case PV, zero
    commitment) and offer the delivered aggregate.  Projected onto the
    feasible set before use."""
    horizon, n_states = grid.n_hours, grid.n_states
    q = np.empty((horizon, n_states))
    for s in range(n_states):
        lam = grid.representative[:, s]
        pv = worst_case_profile(budget_set, lam)
        sol = solve_scenario(params, lam, pv, np.zeros(horizon))
        dispatch = build_dispatch(sol.delta_e, pv, np.zeros(horizon), params)
        q[:, s] = dispatch.aggregate
    return pava_project(OfferSurface(quantities=q), grid, params.offer_min, params.offer_max)


def suggest_step_config(
    scenarios: ScenarioSet, params: DeviceParams, max_iters: int = 600, eps_rel: float = 1e-8
) -> PsmConfig:
    """Step safeguards matched to the instance scale.

    Subgradient components scale like the scenario weight times the imbalance
    charge, and on a piecewise-linear objective the two-point step formula
    spends most iterations clamped at its floor, so the floor has to sit
    where single steps move offers by a fraction of a kW.
    """
    w_mean = float(np.mean(scenarios.weights))
    pull = max(w_mean * params.kappa, 1e-12)
    return PsmConfig(
        alpha0=0.05 / pull,
        alpha_min=0.01 / pull,
        alpha_max=1.0 / pull,
        eps_rel=eps_rel,
        max_iters=max_iters,
    )


def solve(
    initial: OfferSurface,
    scenarios: ScenarioSet,
    budget_set: BudgetSet,
    params: DeviceParams,
    grid: PriceGrid,
    config: PsmConfig | None = None,
) -> PsmResult:
    """Run the projected subgradient iteration from ``initial``.

    The worst-case PV profile is computed once per scenario up front (it does
    not depend on the offer).  Each iteration evaluates the objective twice,
    once with subgradient information at the current iterate and once at the
    projected step, exactly as the update sequence requires; both evaluations
    update the incumbent.  Stops when the relative objective change across
    the step falls below ``eps_rel`` or the iteration cap is hit.
    """
    config = config or PsmConfig()
    if scenarios.n_hours != params.horizon or grid.n_hours != params.horizon:
        raise InputError("scenario set, grid and device horizon disagree")
    if int(scenarios.states.max()) >= grid.n_states:
        raise InputError("scenario states exceed the grid's state count")

    warnings: list[str] = []
    for w in range(scenarios.n_scenarios):
        chk = check_decoupling_condition(scenarios.prices[w], params.kappa, params.cost_pv)
        if not chk.ok:
            parts = []
            if chk.close_pairs:
                shown = ", ".join(f"({a},{b})" for a, b in chk.close_pairs[:6])
                more = "" if len(chk.close_pairs) <= 6 else f" and {len(chk.close_pairs) - 6} more"
                parts.append(f"hour pairs with price gap below 2*kappa: {shown}{more}")
            if chk.thin_margin_hours:
                parts.append(
                    "hours with price margin over PV cost below kappa: "
                    + ", ".join(str(h) for h in chk.thin_margin_hours[:6])
                )
            warnings.append(
                f"scenario {w + 1}: worst-case/dispatch decoupling not certified ({'; '.join(parts)})"
            )

    pv_profiles = np.vstack(
        [worst_case_profile(budget_set, scenarios.prices[w]) for w in range(scenarios.n_scenarios)]
    )

    start = initial
    if validate_offer(start, params, grid):
        start = pava_project(start, grid, params.offer_min, params.offer_max)
    state = PsmState(iterate=start)
    log: list[IterationRecord] = []
    sweeps = 0
    status = "max_iterations"

    for k in range(config.max_iters):
        state.iteration = k
        phi_k, solutions = evaluate_objective(state.iterate, scenarios, pv_profiles, params)
        sweeps += 1
        g = assemble_subgradient(solutions, scenarios, grid.n_states, params.kappa)
        state.offer_candidate(state.iterate, phi_k)

        if k == 0 or state.prev_subgradient is None:
            alpha = config.alpha0
        else:
            alpha = bb_step(
                state.iterate.quantities - state.prev_iterate.quantities,
                g - state.prev_subgradient,
                config,
            )
        stepped = OfferSurface(quantities=state.iterate.quantities - alpha * g)
        nxt = pava_project(stepped, grid, params.offer_min, params.offer_max)
        phi_next, _ = evaluate_objective(nxt, scenarios, pv_profiles, params)
        sweeps += 1
        state.offer_candidate(nxt, phi_next)

        rel = abs(phi_next - phi_k) / max(1.0, abs(phi_k))
        log.append(
            IterationRecord(
                iteration=k,
                value=phi_k,
                value_after_step=phi_next,
                step_size=alpha,
                rel_change=rel,
            )
        )
        state.prev_iterate = state.iterate
        state.prev_subgradient = g
        state.iterate = nxt
        if rel <= config.eps_rel:
            status = "converged"
            break

    # one final sweep at the incumbent for reporting (dispatch, warnings)
    _, best_solutions = evaluate_objective(
        state.incumbent, scenarios, pv_profiles, params
    )
    sweeps += 1
    for w, sol in enumerate(best_solutions):
        committed = state.incumbent.committed(scenarios.states[w])
        dispatch = build_dispatch(sol.delta_e, pv_profiles[w], committed, params)
        over = power_cap_excess(dispatch.charge, dispatch.discharge, params)
        if over:
            warnings.append(
                f"scenario {w + 1}: storage power rating exceeded at hours "
                + ", ".join(str(h) for h in over)
            )

    return PsmResult(
        offer=state.incumbent,
        value=state.incumbent_value,
        iterations=len(log),
        oracle_sweeps=sweeps,
        status=status,
        log=tuple(log),
        warnings=tuple(warnings),
        scenario_solutions=tuple(best_solutions),
    )
