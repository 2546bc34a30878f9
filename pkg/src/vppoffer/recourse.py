"""Per-scenario recourse: hourly piecewise-linear costs and an exact greedy
solver.

After fixing the scenario's worst-case PV profile, the real-time problem
separates into one convex piecewise-linear cost per hour in the net stored
energy increment, coupled only through nested cumulative SOC bounds and the
terminal SOC equality.  The greedy solver starts from the componentwise upper
bound of the feasible set and repeatedly takes the steepest available
marginal decrement, capping each step so that every SOC lower bound stays
satisfied and every pending upper-bound violation stays repairable.  It
returns an exact optimizer together with the active piece and the mismatch
side per hour, which is all the outer solver needs to build subgradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleError, InputError
from .model import DeviceParams, build_dispatch, readonly_array

SLOPE_TOL = 1e-9  # absolute tolerance for slope comparisons and merges
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class EffectivePrices:
    """Marginal rates of one hour's cost after substituting the storage
    increment variable.  ``*_shortfall`` slopes apply on the net-import side
    of the settlement, ``*_surplus`` on the net-export side."""

    discharge_shortfall: float
    charge_shortfall: float
    discharge_surplus: float
    charge_surplus: float
    pv_shortfall: float
    pv_surplus: float
    import_rate: float
    export_rate: float


def effective_prices(price: float, params: DeviceParams) -> EffectivePrices:
    """Slopes of the four affine candidates at one hour for one price."""
    lam_imp = price + params.kappa
    lam_exp = price - params.kappa
    return EffectivePrices(
        discharge_shortfall=params.eta_dis * (lam_imp - params.cost_es),
        charge_shortfall=lam_imp / params.eta_ch,
        discharge_surplus=params.eta_dis * (lam_exp - params.cost_es),
        charge_surplus=lam_exp / params.eta_ch,
        pv_shortfall=params.cost_pv - lam_imp,
        pv_surplus=params.cost_pv - lam_exp,
        import_rate=lam_imp,
        export_rate=lam_exp,
    )


@dataclass(frozen=True)
class StagewiseCost:
    """One hour's convex piecewise-linear cost in the SOC increment.

    Pieces are the upper envelope of the supplied affine functions, stored
    with slopes strictly decreasing; ``breakpoints[k]`` is the left end of
    piece ``k``'s active interval (so breakpoints decrease as well, and the
    last piece extends to minus infinity).
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    breakpoints: np.ndarray

    @classmethod
    def from_pieces(cls, slopes, intercepts) -> "StagewiseCost":
        a = np.asarray(slopes, dtype=float)
        b = np.asarray(intercepts, dtype=float)
        if a.ndim != 1 or a.shape != b.shape or a.size == 0:
            raise InputError("need equal-length nonempty slope and intercept vectors")
        order = np.argsort(a, kind="stable")
        a, b = a[order], b[order]
        # merge near-equal slopes, keeping the larger intercept
        merged: list[tuple[float, float]] = []
        for ai, bi in zip(a, b):
            if merged and ai - merged[-1][0] <= SLOPE_TOL:
                if bi > merged[-1][1]:
                    merged[-1] = (merged[-1][0], bi)
            else:
                merged.append((float(ai), float(bi)))
        # upper envelope, slopes ascending: drop lines that never attain the max
        env: list[tuple[float, float]] = []
        for ai, bi in merged:
            while len(env) >= 2:
                a1, b1 = env[-1]
                a0, b0 = env[-2]
                x_top = (b0 - b1) / (a1 - a0)
                x_new = (b0 - bi) / (ai - a0)
                if x_new <= x_top:
                    env.pop()
                else:
                    break
            env.append((ai, bi))
        env.reverse()
        sl = np.array([p[0] for p in env])
        ic = np.array([p[1] for p in env])
        bp = np.array(
            [(ic[k + 1] - ic[k]) / (sl[k] - sl[k + 1]) for k in range(len(env) - 1)]
        )
        return cls(
            slopes=readonly_array(sl),
            intercepts=readonly_array(ic),
            breakpoints=readonly_array(bp),
        )

    @property
    def n_pieces(self) -> int:
        return self.slopes.shape[0]

    def value(self, x: float) -> float:
        return float(np.max(self.slopes * x + self.intercepts))

    def piece_left_of(self, x: float) -> int:
        """Index of the piece active immediately left of ``x`` (ties at a
        breakpoint resolve to the flatter piece)."""
        k = 0
        for bp in self.breakpoints:
            if x <= bp:
                k += 1
            else:
                break
        return k

    def left_derivative(self, x: float) -> float:
        return float(self.slopes[self.piece_left_of(x)])

    def max_step_on_piece(self, x: float, piece: int) -> float:
        """Largest decrement from ``x`` that keeps the left derivative at or
        above piece ``piece``'s slope; infinite on the flattest piece."""
        if piece >= self.n_pieces - 1:
            return math.inf
        return max(0.0, x - float(self.breakpoints[piece]))


def hourly_cost(
    eff: EffectivePrices, pv_output: float, committed: float, load: float
) -> StagewiseCost:
    """Cost of one hour as a function of the SOC increment, with the PV
    output and the committed quantity folded into the intercepts."""
    short_base = eff.pv_shortfall * pv_output + eff.import_rate * (committed + load)
    surplus_base = eff.pv_surplus * pv_output + eff.export_rate * (committed + load)
    return StagewiseCost.from_pieces(
        slopes=[
            eff.discharge_shortfall,
            eff.charge_shortfall,
            eff.discharge_surplus,
            eff.charge_surplus,
        ],
        intercepts=[short_base, short_base, surplus_base, surplus_base],
    )


@dataclass(frozen=True)
class EnergyFeasibleSet:
    """Nested cumulative SOC bounds with pinned endpoints.

    ``lower[tau] <= initial + sum(delta_e[:tau]) <= upper[tau]`` for
    tau = 0..T; index 0 is pinned to the initial SOC and index T encodes the
    terminal requirement intersected with the energy box (an empty interval
    there marks an infeasible set).
    """

    initial: float
    lower: np.ndarray  # (T+1,)
    upper: np.ndarray  # (T+1,)

    def __post_init__(self):
        lo = readonly_array(self.lower)
        up = readonly_array(self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        if lo.ndim != 1 or lo.shape != up.shape or lo.shape[0] < 2:
            raise InputError("bound arrays must be 1-D of length horizon + 1")
        if lo[0] != self.initial or up[0] != self.initial:
            raise InputError("bounds at index 0 must pin the initial SOC")

    @classmethod
    def from_bounds(
        cls,
        initial: float,
        energy_min: float,
        energy_max: float,
        horizon: int,
        terminal: float | None = None,
    ) -> "EnergyFeasibleSet":
        if horizon < 1:
            raise InputError("horizon must be >= 1")
        if energy_min > energy_max:
            raise InputError("energy bounds reversed")
        target = initial if terminal is None else terminal
        lo = np.full(horizon + 1, energy_min)
        up = np.full(horizon + 1, energy_max)
        lo[0] = up[0] = initial
        # terminal equality intersected with the energy box
        lo[horizon] = max(target, energy_min)
        up[horizon] = min(target, energy_max)
        return cls(initial=initial, lower=lo, upper=up)

    @classmethod
    def from_params(cls, params: DeviceParams) -> "EnergyFeasibleSet":
        return cls.from_bounds(
            initial=params.initial_soc,
            energy_min=params.energy_min,
            energy_max=params.energy_max,
            horizon=params.horizon,
        )

    @property
    def horizon(self) -> int:
        return self.lower.shape[0] - 1

    @property
    def is_feasible(self) -> bool:
        return bool(np.all(self.lower <= self.upper))

    def soc_of(self, delta_e) -> np.ndarray:
        soc = np.empty(self.horizon + 1)
        soc[0] = self.initial
        soc[1:] = self.initial + np.cumsum(np.asarray(delta_e, dtype=float))
        return soc

    def contains(self, delta_e, tol: float = FEAS_TOL) -> bool:
        soc = self.soc_of(delta_e)
        return bool(np.all(soc >= self.lower - tol) and np.all(soc <= self.upper + tol))


@dataclass(frozen=True)
class RecourseSolution:
    """Optimal SOC increments for one scenario, with the objective value, the
    active piece per hour and the settlement side of the optimal mismatch
    (-1 shortfall, +1 surplus, 0 balanced; None for generic costs)."""

    delta_e: np.ndarray
    value: float
    active_piece: np.ndarray
    mismatch_sign: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "delta_e", readonly_array(self.delta_e))
        object.__setattr__(self, "active_piece", readonly_array(self.active_piece, dtype=int))
        if self.mismatch_sign is not None:
            object.__setattr__(
                self, "mismatch_sign", readonly_array(self.mismatch_sign, dtype=int)
            )


@dataclass(frozen=True)
class GreedyStep:
    """One debug-trace entry: the iterate after an update and the number of
    surviving candidate pieces."""

    delta_e: tuple[float, ...]
    n_active: int


def greedy_solve(
    costs, feas: EnergyFeasibleSet, trace: bool = False
) -> tuple[RecourseSolution, list[GreedyStep]] | RecourseSolution:
    """Exact minimizer of ``sum_t cost_t(delta_e[t])`` over the nested SOC
    feasible set.

    Starts at the componentwise upper bound ``upper[t+1] - lower[t]`` and only
    ever decreases coordinates.  Candidate pieces across all hours are ranked
    by slope descending (ties by hour, then piece index); each step takes the
    largest decrement that stays on the head piece, keeps all later SOC lower
    bounds above the worst pending upper-bound violation, and, once all
    remaining slopes are nonpositive, repairs upper-bound violations at the
    least marginal cost.  Pruning removes pieces that can never become active
    again, which bounds the iteration count.

    With ``trace=True`` returns ``(solution, steps)`` where steps record every
    iterate for invariant checking.
    """
    costs = list(costs)
    horizon = feas.horizon
    if len(costs) != horizon:
        raise InputError(f"got {len(costs)} hourly costs for horizon {horizon}")
    if not feas.is_feasible:
        raise InfeasibleError(
            "empty recourse feasible set: initial or terminal SOC outside the energy bounds"
        )
    lower = feas.lower
    upper = feas.upper

    de = np.array([upper[t + 1] - lower[t] for t in range(horizon)])
    soc = feas.soc_of(de)

    # candidate list: (slope, hour, piece), ranked by slope desc, hour asc, piece asc
    entries: list[tuple[float, int, int]] = []
    for t, cost in enumerate(costs):
        for k in range(cost.n_pieces):
            entries.append((float(cost.slopes[k]), t, k))
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))
    alive = [True] * len(entries)
    n_alive = len(entries)
    head = 0

    def kill(idx: int) -> None:
        nonlocal n_alive
        if alive[idx]:
            alive[idx] = False
            n_alive -= 1

    def kill_hours(max_hour: int) -> None:
        # drop every candidate at 0-based hours <= max_hour
        for idx, (_, t, _) in enumerate(entries):
            if alive[idx] and t <= max_hour:
                kill(idx)

    def apply_step(t: int, delta: float) -> None:
        de[t] -= delta
        soc[t + 1 :] -= delta

    steps: list[GreedyStep] = []

    def record() -> None:
        if trace:
            steps.append(GreedyStep(delta_e=tuple(de), n_active=n_alive))

    record()
    max_iter = 16 * len(entries) + 8 * horizon + 16
    for _ in range(max_iter):
        if n_alive == 0:
            break
        while head < len(entries) and not alive[head]:
            head += 1
        slope_head, t_head, piece_head = entries[head]
        a_cur = costs[t_head].left_derivative(de[t_head])

        if a_cur < slope_head - SLOPE_TOL:
            # the head piece lies to the right of the current point
            kill(head)
            record()
            continue

        if a_cur <= SLOPE_TOL:
            # no improving decrement remains anywhere; repair or finish
            viol = soc[1:] - upper[1:]
            if np.max(viol) <= FEAS_TOL:
                break
            tau_v = int(np.argmax(viol > FEAS_TOL)) + 1  # first violated SOC index
            # first live candidate at an hour that can lower soc[tau_v],
            # skipping (and pruning) pieces the iterate has already passed
            pick = None
            for idx in range(len(entries)):
                if not alive[idx]:
                    continue
                slope_i, t_i, k_i = entries[idx]
                if t_i > tau_v - 1:
                    continue
                if costs[t_i].left_derivative(de[t_i]) < slope_i - SLOPE_TOL:
                    kill(idx)
                    continue
                pick = idx
                break
            if pick is None:
                raise InfeasibleError(
                    "greedy oracle: upper-bound violation with no candidate hour left; "
                    "feasibility invariant broken"
                )
            slope_p, t_p, k_p = entries[pick]
            d1 = costs[t_p].max_step_on_piece(de[t_p], k_p)
            between = soc[t_p + 1 : tau_v] - lower[t_p + 1 : tau_v]
            d2 = float(np.min(between)) if between.size else math.inf
            d3 = float(soc[tau_v] - upper[tau_v])
            step = min(d1, d2, d3)
            pre_soc = soc.copy()
            apply_step(t_p, step)
            if step == d1:
                kill(pick)
            elif step == d2:
                slack = pre_soc[t_p + 1 : tau_v] - lower[t_p + 1 : tau_v]
                tau_star = t_p + 1 + int(np.nonzero(slack == d2)[0][-1])
                kill_hours(tau_star - 1)
            record()
            continue

        # improving decrement at the head hour
        t = t_head
        d1 = costs[t].max_step_on_piece(de[t], piece_head)
        after = soc[t + 1 :] - lower[t + 1 :]
        min_slack = float(np.min(after))
        prior = soc[1 : t + 1] - upper[1 : t + 1]
        prior_viol = float(np.max(prior, initial=0.0))
        prior_viol = max(prior_viol, 0.0)
        d2 = min_slack - prior_viol
        step = min(d1, max(d2, 0.0))
        pre_soc = soc.copy()
        apply_step(t, step)
        if step == d1:
            kill(head)
        elif step == max(d2, 0.0):
            if prior_viol <= 0.0:
                slack = pre_soc[t + 1 :] - lower[t + 1 :]
                tau = t + 1 + int(np.nonzero(slack == min_slack)[0][-1])
                kill_hours(tau - 1)
            else:
                raw_prior = pre_soc[1 : t + 1] - upper[1 : t + 1]
                tau_lo = 1 + int(np.nonzero(raw_prior == prior_viol)[0][0])
                slack = pre_soc[t + 1 :] - lower[t + 1 :]
                tau_hi = t + 1 + int(np.nonzero(slack == min_slack)[0][-1])
                for idx, (_, t_i, _) in enumerate(entries):
                    if alive[idx] and tau_lo <= t_i <= tau_hi - 1:
                        kill(idx)
        record()
    else:
        raise InfeasibleError("greedy oracle failed to terminate within its iteration bound")

    if not feas.contains(de):
        raise InfeasibleError("greedy oracle returned an infeasible point; invariant broken")
    value = sum(cost.value(float(de[t])) for t, cost in enumerate(costs))
    active = np.array([cost.piece_left_of(float(de[t])) for t, cost in enumerate(costs)])
    sol = RecourseSolution(delta_e=de, value=float(value), active_piece=active)
    if trace:
        return sol, steps
    return sol


def solve_scenario(
    params: DeviceParams,
    prices,
    pv_profile,
    committed,
    feas: EnergyFeasibleSet | None = None,
    trace: bool = False,
):
    """Build the hourly costs for one price scenario (PV fixed at its
    worst-case profile), run the greedy solver and classify each hour's
    mismatch side from the reconstructed dispatch."""
    lam = np.asarray(prices, dtype=float)
    pv = np.asarray(pv_profile, dtype=float)
    q = np.asarray(committed, dtype=float)
    if lam.shape != (params.horizon,) or pv.shape != lam.shape or q.shape != lam.shape:
        raise InputError("scenario inputs must all have the horizon length")
    costs = [
        hourly_cost(effective_prices(float(lam[t]), params), float(pv[t]), float(q[t]), float(params.load[t]))
        for t in range(params.horizon)
    ]
    if feas is None:
        feas = EnergyFeasibleSet.from_params(params)
    out = greedy_solve(costs, feas, trace=trace)
    sol, steps = out if trace else (out, None)
    dispatch = build_dispatch(sol.delta_e, pv, q, params)
    sign = np.zeros(params.horizon, dtype=int)
    sign[dispatch.mismatch < -FEAS_TOL] = -1
    sign[dispatch.mismatch > FEAS_TOL] = 1
    sol = replace(sol, mismatch_sign=sign)
    if trace:
        return sol, steps
    return sol


def scenario_subgradient_piece(
    sol: RecourseSolution, hour: int, price: float, kappa: float
) -> float:
    """Slope of one hour's cost with respect to the committed quantity:
    price + kappa on a shortfall, price - kappa on a surplus, and the
    midpoint (the price itself) when the optimum sits on the kink."""
    if sol.mismatch_sign is None:
        raise InputError("solution carries no mismatch classification")
    return price - int(sol.mismatch_sign[hour]) * kappa


def subgradient_slopes(sol: RecourseSolution, prices, kappa: float) -> np.ndarray:
    """Vectorized :func:`scenario_subgradient_piece` over all hours."""
    if sol.mismatch_sign is None:
        raise InputError("solution carries no mismatch classification")
    return np.asarray(prices, dtype=float) - sol.mismatch_sign * kappa
