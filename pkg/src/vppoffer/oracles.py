"""Exact, slow verification oracles.

These back the fast production paths with independent reference answers: a
dense two-phase simplex solver, an epigraph LP for the hourly recourse, the
stacked extensive-form LP of the whole two-stage problem, a vertex-enumeration
worst-case oracle, and a partition-enumeration bounded isotonic projection.
They ship with the library so any production answer can be audited, but they
are not built for speed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import InfeasibleError, InputError
from .model import DeviceParams, OfferSurface, readonly_array
from .price_markov import PriceGrid, ScenarioSet
from .pv_uncertainty import BudgetSet, worst_case_profile
from .recourse import EnergyFeasibleSet, StagewiseCost, effective_prices

_PIVOT_TOL = 1e-10
_FEAS_TOL = 1e-8


@dataclass(frozen=True)
class DenseLP:
    """min objective @ x subject to a_ub @ x <= b_ub, a_eq @ x = b_eq and
    elementwise bounds (entries may be infinite)."""

    objective: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def build(cls, objective, a_ub=None, b_ub=None, a_eq=None, b_eq=None, lower=None, upper=None):
        c = np.asarray(objective, dtype=float)
        n = c.shape[0]
        a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float)
        b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
        a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
        lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        if a_ub.shape != (b_ub.shape[0], n) or a_eq.shape != (b_eq.shape[0], n):
            raise InputError("LP constraint matrices and right-hand sides disagree in shape")
        if lower.shape != (n,) or upper.shape != (n,):
            raise InputError("LP bound vectors must match the variable count")
        return cls(
            objective=readonly_array(c),
            a_ub=readonly_array(a_ub),
            b_ub=readonly_array(b_ub),
            a_eq=readonly_array(a_eq),
            b_eq=readonly_array(b_eq),
            lower=readonly_array(lower),
            upper=readonly_array(upper),
        )

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float | None
    x: np.ndarray | None


def _run_simplex(tab: np.ndarray, basis: list[int], n_cols: int, dantzig_pivots: int) -> str:
    """Iterate the tableau in place until optimal or unbounded.

    Dantzig's rule (most negative reduced cost) for the first
    ``dantzig_pivots`` iterations, then Bland's rule; ratio-test ties resolve
    to the smallest basic index.  The cost row is the last row.
    """
    m = tab.shape[0] - 1
    pivots = 0
    max_pivots = 200 * (m + n_cols) + 2000
    while True:
        cost = tab[-1, :n_cols]
        if pivots < dantzig_pivots:
            col = int(np.argmin(cost))
            if cost[col] >= -_PIVOT_TOL:
                return "optimal"
        else:
            negatives = np.nonzero(cost < -_PIVOT_TOL)[0]
            if negatives.size == 0:
                return "optimal"
            col = int(negatives[0])
        column = tab[:m, col]
        rows = np.nonzero(column > _PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded"
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        tie = rows[ratios <= best + _PIVOT_TOL * (1.0 + abs(best))]
        row = int(min(tie, key=lambda r: basis[r]))
        piv = tab[row] / tab[row, col]
        tab -= np.outer(tab[:, col], piv)
        tab[row] = piv
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex exceeded its pivot budget; numerical trouble")


def simplex_solve(lp: DenseLP, dantzig_pivots: int | None = None) -> LPResult:
    """Two-phase dense simplex.  Verification-scale only (a few hundred
    variables); exact on degenerate instances thanks to the Bland fallback."""
    n = lp.n_vars
    # shift/flip/split variables onto u >= 0
    col_of: list[tuple[str, int, float] | tuple[str, int, int]] = []
    shift = np.zeros(n)
    sign = np.ones(n)
    extra_ub_rows: list[tuple[int, float]] = []  # (u-column, cap)
    u_cols = 0
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo > hi:
            return LPResult("infeasible", None, None)
        if math.isfinite(lo):
            shift[j] = lo
            col_of.append(("single", u_cols, j))
            if math.isfinite(hi):
                extra_ub_rows.append((u_cols, hi - lo))
            u_cols += 1
        elif math.isfinite(hi):
            shift[j] = hi
            sign[j] = -1.0
            col_of.append(("single", u_cols, j))
            u_cols += 1
        else:
            col_of.append(("split", u_cols, j))
            u_cols += 2

    def expand(matrix: np.ndarray) -> np.ndarray:
        out = np.zeros((matrix.shape[0], u_cols))
        for kind, pos, j in col_of:
            if kind == "single":
                out[:, pos] = matrix[:, j] * sign[j]
            else:
                out[:, pos] = matrix[:, j]
                out[:, pos + 1] = -matrix[:, j]
        return out

    a_ub = expand(lp.a_ub)
    b_ub = lp.b_ub - lp.a_ub @ shift
    if extra_ub_rows:
        cap_rows = np.zeros((len(extra_ub_rows), u_cols))
        cap_rhs = np.empty(len(extra_ub_rows))
        for i, (pos, cap) in enumerate(extra_ub_rows):
            cap_rows[i, pos] = 1.0
            cap_rhs[i] = cap
        a_ub = np.vstack([a_ub, cap_rows])
        b_ub = np.concatenate([b_ub, cap_rhs])
    a_eq = expand(lp.a_eq)
    b_eq = lp.b_eq - lp.a_eq @ shift

    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq
    rows = np.vstack([a_ub, a_eq]) if m else np.zeros((0, u_cols))
    rhs = np.concatenate([b_ub, b_eq])
    slack = np.vstack([np.eye(m_ub), np.zeros((m_eq, m_ub))]) if m else np.zeros((0, 0))
    flip = rhs < 0.0
    rows[flip] *= -1.0
    rhs[flip] *= -1.0
    if m_ub:
        slack[flip] *= -1.0

    # a slack column serves as the initial basis where it kept coefficient +1;
    # every other row gets an artificial
    art_rows = [r for r in range(m) if r >= m_ub or flip[r]]
    n_struct = u_cols + m_ub
    n_cols = n_struct + len(art_rows)
    tab = np.zeros((m + 1, n_cols + 1))
    if m:
        tab[:m, :u_cols] = rows
        tab[:m, u_cols:n_struct] = slack
        tab[:m, -1] = rhs
    basis = [0] * m
    for r in range(m_ub):
        if not flip[r]:
            basis[r] = u_cols + r
    for k, r in enumerate(art_rows):
        tab[r, n_struct + k] = 1.0
        basis[r] = n_struct + k

    scale = max(1.0, float(np.max(np.abs(rhs))) if m else 1.0)
    if dantzig_pivots is None:
        dantzig_pivots = 50 * (m + n_cols)

    if art_rows:
        tab[-1, n_struct:n_cols] = 1.0
        for r in art_rows:
            tab[-1] -= tab[r]
        status = _run_simplex(tab, basis, n_cols, dantzig_pivots)
        if status != "optimal":
            raise RuntimeError("phase-1 simplex cannot be unbounded")
        if -tab[-1, -1] > _FEAS_TOL * scale:
            return LPResult("infeasible", None, None)
        # drive remaining artificials out of the basis
        for r in range(m):
            if basis[r] >= n_struct:
                pivot_col = None
                for c in range(n_struct):
                    if abs(tab[r, c]) > _PIVOT_TOL:
                        pivot_col = c
                        break
                if pivot_col is None:
                    continue  # redundant row
                piv = tab[r] / tab[r, pivot_col]
                tab -= np.outer(tab[:, pivot_col], piv)
                tab[r] = piv
                basis[r] = pivot_col

    # phase 2 on structural columns only
    tab2 = np.delete(tab, np.s_[n_struct:n_cols], axis=1)
    cost = np.zeros(n_struct + 1)
    obj_u = np.zeros(u_cols)
    for kind, pos, j in col_of:
        if kind == "single":
            obj_u[pos] = lp.objective[j] * sign[j]
        else:
            obj_u[pos] = lp.objective[j]
            obj_u[pos + 1] = -lp.objective[j]
    cost[:u_cols] = obj_u
    tab2[-1] = cost
    for r in range(m):
        if basis[r] < n_struct and abs(cost[basis[r]]) > 0.0:
            tab2[-1] -= cost[basis[r]] * tab2[r]
    status = _run_simplex(tab2, basis, n_struct, dantzig_pivots)
    if status == "unbounded":
        return LPResult("unbounded", None, None)

    u = np.zeros(u_cols)
    for r in range(m):
        if basis[r] < u_cols:
            u[basis[r]] = tab2[r, -1]
    x = np.empty(n)
    for kind, pos, j in col_of:
        if kind == "single":
            x[j] = shift[j] + sign[j] * u[pos]
        else:
            x[j] = u[pos] - u[pos + 1]
    return LPResult("optimal", float(lp.objective @ x), x)


@dataclass(frozen=True)
class RecourseLPResult:
    status: str
    value: float | None
    delta_e: np.ndarray | None


def _cumulative_rows(feas: EnergyFeasibleSet, n_vars: int, offset: int):
    """Inequality pairs encoding the nested SOC bounds (the pinned or empty
    terminal interval included)."""
    horizon = feas.horizon
    rows, rhs = [], []
    for tau in range(1, horizon + 1):
        row = np.zeros(n_vars)
        row[offset : offset + tau] = 1.0
        rows.append(row)
        rhs.append(feas.upper[tau] - feas.initial)
        rows.append(-row)
        rhs.append(-(feas.lower[tau] - feas.initial))
    return rows, rhs


def lp_recourse(costs, feas: EnergyFeasibleSet) -> RecourseLPResult:
    """Epigraph LP for the hourly recourse: the independent check on the
    greedy solver."""
    costs = list(costs)
    horizon = feas.horizon
    if len(costs) != horizon:
        raise InputError(f"got {len(costs)} hourly costs for horizon {horizon}")
    n_vars = 2 * horizon  # delta_e then z
    c = np.concatenate([np.zeros(horizon), np.ones(horizon)])
    rows, rhs = [], []
    for t, cost in enumerate(costs):
        for a, b in zip(cost.slopes, cost.intercepts):
            row = np.zeros(n_vars)
            row[t] = a
            row[horizon + t] = -1.0
            rows.append(row)
            rhs.append(-b)
    cum_rows, cum_rhs = _cumulative_rows(feas, n_vars, offset=0)
    rows.extend(cum_rows)
    rhs.extend(cum_rhs)
    lp = DenseLP.build(objective=c, a_ub=np.array(rows), b_ub=np.array(rhs))
    res = simplex_solve(lp)
    if res.status != "optimal":
        return RecourseLPResult(res.status, None, None)
    return RecourseLPResult("optimal", res.value, res.x[:horizon])


@dataclass(frozen=True)
class ExtensiveFormResult:
    status: str
    value: float | None
    offer: OfferSurface | None


def extensive_form_solve(
    scenarios: ScenarioSet,
    params: DeviceParams,
    budget_set: BudgetSet,
    grid: PriceGrid,
    backend: str = "highs",
) -> ExtensiveFormResult:
    """Single LP stacking every scenario's recourse next to the first stage.

    Exact global optimum of the two-stage stochastic LP at desk scale.  The
    default backend hands the (sparse) stacked LP to scipy's HiGHS; the
    ``builtin`` backend assembles a dense LP for the in-package simplex and is
    meant for small audit instances only.
    """
    n_sc, horizon = scenarios.n_scenarios, scenarios.n_hours
    n_states = grid.n_states
    if horizon != params.horizon or grid.n_hours != horizon:
        raise InputError("scenario set, grid and device horizon disagree")
    if n_sc * horizon > 2000:
        raise InputError(
            f"extensive form with {n_sc * horizon} recourse variables exceeds the desk-scale "
            "guard (2000); use the projected subgradient solver instead"
        )
    feas = EnergyFeasibleSet.from_params(params)
    n_offer = horizon * n_states
    n_vars = n_offer + 2 * n_sc * horizon  # offers, then per-scenario delta_e, then z

    def q_col(t: int, s: int) -> int:
        return t * n_states + s

    def de_col(w: int, t: int) -> int:
        return n_offer + w * horizon + t

    def z_col(w: int, t: int) -> int:
        return n_offer + n_sc * horizon + w * horizon + t

    c = np.zeros(n_vars)
    for w in range(n_sc):
        rho = scenarios.weights[w]
        for t in range(horizon):
            c[q_col(t, scenarios.states[w, t])] -= rho * scenarios.prices[w, t]
            c[z_col(w, t)] += rho

    data, rid, cid, rhs = [], [], [], []

    def add_entry(row: int, col: int, val: float) -> None:
        rid.append(row)
        cid.append(col)
        data.append(val)

    row_count = 0
    for w in range(n_sc):
        pv_star = worst_case_profile(budget_set, scenarios.prices[w])
        for t in range(horizon):
            eff = effective_prices(float(scenarios.prices[w, t]), params)
            pieces = (
                (eff.discharge_shortfall, eff.pv_shortfall, eff.import_rate),
                (eff.charge_shortfall, eff.pv_shortfall, eff.import_rate),
                (eff.discharge_surplus, eff.pv_surplus, eff.export_rate),
                (eff.charge_surplus, eff.pv_surplus, eff.export_rate),
            )
            for slope, pv_coef, rate in pieces:
                add_entry(row_count, de_col(w, t), slope)
                add_entry(row_count, q_col(t, scenarios.states[w, t]), rate)
                add_entry(row_count, z_col(w, t), -1.0)
                rhs.append(-(pv_coef * pv_star[t] + rate * params.load[t]))
                row_count += 1
        for tau in range(1, horizon + 1):
            for t in range(tau):
                add_entry(row_count, de_col(w, t), 1.0)
                add_entry(row_count + 1, de_col(w, t), -1.0)
            rhs.append(feas.upper[tau] - feas.initial)
            rhs.append(-(feas.lower[tau] - feas.initial))
            row_count += 2
    for t in range(horizon):
        order = np.argsort(grid.representative[t], kind="stable")
        for k in range(n_states - 1):
            add_entry(row_count, q_col(t, int(order[k])), 1.0)
            add_entry(row_count, q_col(t, int(order[k + 1])), -1.0)
            rhs.append(0.0)
            row_count += 1

    lower = np.concatenate(
        [np.full(n_offer, params.offer_min), np.full(2 * n_sc * horizon, -np.inf)]
    )
    upper = np.concatenate(
        [np.full(n_offer, params.offer_max), np.full(2 * n_sc * horizon, np.inf)]
    )

    if backend == "highs":
        a_ub = sp.csr_matrix((data, (rid, cid)), shape=(row_count, n_vars))
        res = linprog(
            c,
            A_ub=a_ub,
            b_ub=np.asarray(rhs),
            bounds=list(zip(lower, upper)),
            method="highs",
        )
        if res.status == 2:
            return ExtensiveFormResult("infeasible", None, None)
        if res.status == 3:
            return ExtensiveFormResult("unbounded", None, None)
        if res.status != 0:
            raise RuntimeError(f"extensive-form LP solve failed: {res.message}")
        x = res.x
        value = float(res.fun)
    elif backend == "builtin":
        if n_vars > 400:
            raise InputError(
                f"builtin simplex backend limited to 400 variables, got {n_vars}"
            )
        a_ub = np.zeros((row_count, n_vars))
        a_ub[rid, cid] = data
        lp = DenseLP.build(
            objective=c, a_ub=a_ub, b_ub=np.asarray(rhs), lower=lower, upper=upper
        )
        res = simplex_solve(lp)
        if res.status != "optimal":
            return ExtensiveFormResult(res.status, None, None)
        x = res.x
        value = float(res.value)
    else:
        raise InputError(f"unknown extensive-form backend {backend!r}")

    offer = OfferSurface(quantities=x[:n_offer].reshape(horizon, n_states))
    return ExtensiveFormResult("optimal", value, offer)


@dataclass(frozen=True)
class MaxMinResult:
    value: float
    worst_profile: np.ndarray
    inner_pv: np.ndarray
    inner_delta_e: np.ndarray


def _inner_dispatch_lp(
    prices, committed, availability, params: DeviceParams
) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact real-time dispatch cost for a fixed availability profile, written
    in the original variable space (PV output, charge, discharge, SOC) with
    the settlement epigraph; no reformulation machinery involved."""
    horizon = params.horizon
    lam = np.asarray(prices, dtype=float)
    q = np.asarray(committed, dtype=float)
    avail = np.asarray(availability, dtype=float)
    # variables: pv, ch, dis, e, w
    def col(block: int, t: int) -> int:
        return block * horizon + t

    n_vars = 5 * horizon
    c = np.zeros(n_vars)
    c[0:horizon] = params.cost_pv
    c[2 * horizon : 3 * horizon] = params.cost_es
    c[4 * horizon :] = 1.0
    lower = np.concatenate(
        [
            np.zeros(3 * horizon),
            np.full(horizon, params.energy_min),
            np.full(horizon, -np.inf),
        ]
    )
    upper = np.concatenate(
        [
            avail,
            np.full(2 * horizon, np.inf),
            np.full(horizon, params.energy_max),
            np.full(horizon, np.inf),
        ]
    )
    # terminal SOC pinned to the initial level
    lower[col(3, horizon - 1)] = params.initial_soc
    upper[col(3, horizon - 1)] = params.initial_soc
    a_eq, b_eq = [], []
    for t in range(horizon):
        row = np.zeros(n_vars)
        row[col(3, t)] = 1.0
        row[col(1, t)] = -params.eta_ch
        row[col(2, t)] = 1.0 / params.eta_dis
        if t > 0:
            row[col(3, t - 1)] = -1.0
            b_eq.append(0.0)
        else:
            b_eq.append(params.initial_soc)
        a_eq.append(row)
    a_ub, b_ub = [], []
    for t in range(horizon):
        for rate in (lam[t] + params.kappa, lam[t] - params.kappa):
            row = np.zeros(n_vars)
            row[col(0, t)] = -rate
            row[col(2, t)] = -rate
            row[col(1, t)] = rate
            row[col(4, t)] = -1.0
            a_ub.append(row)
            b_ub.append(-rate * (params.load[t] + q[t]))
    lp = DenseLP.build(
        objective=c,
        a_ub=np.array(a_ub),
        b_ub=np.array(b_ub),
        a_eq=np.array(a_eq),
        b_eq=np.array(b_eq),
        lower=lower,
        upper=upper,
    )
    res = simplex_solve(lp)
    if res.status != "optimal":
        raise InfeasibleError(f"inner dispatch LP came back {res.status}")
    return res.value, res.x[0:horizon], res.x


def bruteforce_maxmin(
    prices, committed, budget_set: BudgetSet, params: DeviceParams
) -> MaxMinResult:
    """Worst-case real-time cost by enumerating availability sign patterns.

    Requires an integer budget and a short horizon (at most 4 hours): the
    candidate set is every profile ``nominal + half_width * xi`` with
    ``xi in {-1, 0, +1}`` and total deviation within the budget, which covers
    all extreme points of the uncertainty set.  The inner dispatch problem is
    solved exactly in the original variable space, so this oracle is fully
    independent of the worst-case ranking and the greedy solver.
    """
    horizon = params.horizon
    if horizon > 4:
        raise InputError(f"vertex enumeration limited to 4 hours, got {horizon}")
    gamma = budget_set.budget
    if abs(gamma - round(gamma)) > 1e-12:
        raise InputError(f"vertex enumeration needs an integer budget, got {gamma}")
    gamma = int(round(gamma))
    best = None
    for pattern in itertools.product((-1, 0, 1), repeat=horizon):
        if sum(abs(p) for p in pattern) > gamma:
            continue
        profile = budget_set.nominal + budget_set.half_width * np.asarray(pattern, float)
        value, inner_pv, x = _inner_dispatch_lp(prices, committed, profile, params)
        if best is None or value > best[0]:
            ch = x[params.horizon : 2 * params.horizon]
            dis = x[2 * params.horizon : 3 * params.horizon]
            delta_e = params.eta_ch * ch - dis / params.eta_dis
            best = (value, profile, inner_pv, delta_e)
    value, profile, inner_pv, delta_e = best
    return MaxMinResult(
        value=float(value),
        worst_profile=profile,
        inner_pv=inner_pv,
        inner_delta_e=delta_e,
    )


def bruteforce_isotonic(target, lb: float, ub: float) -> np.ndarray:
    """Exact bounded isotonic projection by enumerating contiguous-block
    partitions; each block takes its clipped mean, infeasible (decreasing)
    candidates are discarded, and the least-squares feasible candidate wins.
    Limited to 12 elements."""
    y = np.asarray(target, dtype=float)
    n = y.shape[0]
    if n > 12:
        raise InputError(f"partition enumeration limited to 12 elements, got {n}")
    if lb > ub:
        raise InputError(f"bounds reversed: {lb} > {ub}")
    p1 = np.concatenate([[0.0], np.cumsum(y)])
    p2 = np.concatenate([[0.0], np.cumsum(y * y)])
    best_sse = math.inf
    best_blocks = None
    for mask in range(1 << (n - 1)) if n > 1 else (0,):
        start = 0
        prev = -math.inf
        sse = 0.0
        blocks = []
        ok = True
        for i in range(n):
            if i == n - 1 or (mask >> i) & 1:
                cnt = i + 1 - start
                s1 = p1[i + 1] - p1[start]
                mean = s1 / cnt
                v = min(max(mean, lb), ub)
                if v < prev:
                    ok = False
                    break
                sse += (p2[i + 1] - p2[start]) - 2.0 * v * s1 + v * v * cnt
                blocks.append((start, i + 1, v))
                prev = v
                start = i + 1
        if ok and sse < best_sse:
            best_sse = sse
            best_blocks = blocks
    out = np.empty(n)
    for start, end, v in best_blocks:
        out[start:end] = v
    return out
