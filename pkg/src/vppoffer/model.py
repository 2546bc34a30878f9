"""Physical and market domain model for a PV + storage virtual power plant.

Conventions: positive power is injection into the grid, power in kW over a
one-hour step, energy in kWh, prices in currency per kWh.  Arrays are
0-based internally; hours and price states are reported 1-based in
violations and warnings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InputError

FEAS_TOL = 1e-9  # absolute feasibility tolerance, kW / kWh


def readonly_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DeviceParams:
    """Aggregated fleet parameters: one PV plant, one equivalent storage unit
    and a deterministic hourly load profile.

    ``storage_power_cap`` is a rating used for post-solve warnings only; the
    recourse feasible set carries cumulative energy bounds, not power bounds.
    """

    horizon: int
    storage_power_cap: float
    energy_min: float
    energy_max: float
    initial_soc: float
    eta_ch: float
    eta_dis: float
    cost_pv: float
    cost_es: float
    kappa: float
    offer_min: float
    offer_max: float
    load: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "load", readonly_array(self.load))
        if self.horizon < 1:
            raise InputError(f"horizon must be >= 1, got {self.horizon}")
        if self.load.shape != (self.horizon,):
            raise InputError(
                f"load profile must have length {self.horizon}, got shape {self.load.shape}"
            )
        if not (0.0 < self.eta_ch <= 1.0) or not (0.0 < self.eta_dis <= 1.0):
            raise InputError(
                f"efficiencies must lie in (0, 1], got eta_ch={self.eta_ch}, eta_dis={self.eta_dis}"
            )
        if self.cost_pv < 0.0 or self.cost_es < 0.0:
            raise InputError("PV and storage marginal costs must be nonnegative")
        if self.kappa <= 0.0:
            raise InputError(f"imbalance charge kappa must be positive, got {self.kappa}")
        if not (self.energy_min <= self.initial_soc <= self.energy_max):
            raise InputError(
                f"initial SOC {self.initial_soc} outside energy bounds "
                f"[{self.energy_min}, {self.energy_max}]"
            )
        if self.offer_min > self.offer_max:
            raise InputError(
                f"offer bounds reversed: {self.offer_min} > {self.offer_max}"
            )
        if self.storage_power_cap <= 0.0:
            raise InputError("storage power rating must be positive")


@dataclass(frozen=True)
class OfferSurface:
    """First-stage decision: offered net injection per (hour, price state).

    Feasibility requires every quantity inside the offer box and, within each
    hour, quantities nondecreasing in the price ordering of the states.
    """

    quantities: np.ndarray  # (T, N)

    def __post_init__(self):
        q = readonly_array(self.quantities)
        if q.ndim != 2:
            raise InputError(f"offer surface must be 2-D (hours x states), got ndim={q.ndim}")
        object.__setattr__(self, "quantities", q)

    @property
    def n_hours(self) -> int:
        return self.quantities.shape[0]

    @property
    def n_states(self) -> int:
        return self.quantities.shape[1]

    def committed(self, states: np.ndarray) -> np.ndarray:
        """Per-hour committed quantity for a 0-based state sequence."""
        return self.quantities[np.arange(self.n_hours), np.asarray(states, dtype=int)]


class Violation(NamedTuple):
    hour: int  # 1-based
    state: int  # 1-based; for monotonicity, the lower-priced state of the pair
    kind: str  # "below_min" | "above_max" | "not_monotone"


def validate_offer(offer: OfferSurface, params: DeviceParams, grid) -> list[Violation]:
    """Check offer box and per-hour monotonicity against the grid's price order.

    Returns an empty list iff the offer is feasible; otherwise one entry per
    violated constraint.  Comparisons are exact: projection is expected to
    produce exactly feasible surfaces.
    """
    q = offer.quantities
    if q.shape != grid.representative.shape:
        raise InputError(
            f"offer shape {q.shape} does not match grid shape {grid.representative.shape}"
        )
    if offer.n_hours != params.horizon:
        raise InputError(
            f"offer has {offer.n_hours} hours, device horizon is {params.horizon}"
        )
    violations: list[Violation] = []
    for t in range(offer.n_hours):
        order = np.argsort(grid.representative[t], kind="stable")
        row = q[t]
        for s in range(offer.n_states):
            if row[s] < params.offer_min:
                violations.append(Violation(t + 1, s + 1, "below_min"))
            elif row[s] > params.offer_max:
                violations.append(Violation(t + 1, s + 1, "above_max"))
        for k in range(offer.n_states - 1):
            lo, hi = order[k], order[k + 1]
            if row[lo] > row[hi]:
                violations.append(Violation(t + 1, int(lo) + 1, "not_monotone"))
    return violations


def reconstruct_dispatch(delta_e, params: DeviceParams):
    """Map per-hour SOC increments to (charge, discharge, soc) vectors.

    The increment is net stored energy: positive increments charge at
    ``delta_e / eta_ch``, negative ones discharge at ``-delta_e * eta_dis``,
    so exactly one of the pair is nonzero per hour.  ``soc[t]`` is the level
    after hour t.
    """
    de = np.asarray(delta_e, dtype=float)
    if de.shape != (params.horizon,):
        raise InputError(
            f"delta_e must have length {params.horizon}, got shape {de.shape}"
        )
    charge = np.where(de > 0.0, de / params.eta_ch, 0.0)
    discharge = np.where(de < 0.0, -de * params.eta_dis, 0.0)
    soc = params.initial_soc + np.cumsum(de)
    return charge, discharge, soc


def power_cap_excess(charge, discharge, params: DeviceParams) -> list[int]:
    """1-based hours whose reconstructed charge or discharge power exceeds the
    storage rating.  Informational: the recourse feasible set does not carry
    power bounds, so this is a warning condition, not an error."""
    over = np.maximum(charge, discharge) > params.storage_power_cap + FEAS_TOL
    return [int(t) + 1 for t in np.nonzero(over)[0]]


@dataclass(frozen=True)
class DispatchTrajectory:
    """Hourly real-time dispatch: PV output, storage motion, SOC, the
    aggregate net injection and its mismatch against the commitment."""

    pv: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray
    soc: np.ndarray
    aggregate: np.ndarray
    mismatch: np.ndarray

    def __post_init__(self):
        for name in ("pv", "charge", "discharge", "soc", "aggregate", "mismatch"):
            object.__setattr__(self, name, readonly_array(getattr(self, name)))
        n = self.pv.shape[0]
        for name in ("charge", "discharge", "soc", "aggregate", "mismatch"):
            if getattr(self, name).shape != (n,):
                raise InputError(f"dispatch field {name} has inconsistent length")


def build_dispatch(delta_e, pv, committed, params: DeviceParams) -> DispatchTrajectory:
    """Assemble a full trajectory from SOC increments, a PV output profile and
    the committed quantities."""
    pv = np.asarray(pv, dtype=float)
    committed = np.asarray(committed, dtype=float)
    if pv.shape != (params.horizon,) or committed.shape != (params.horizon,):
        raise InputError("pv and committed profiles must match the horizon length")
    charge, discharge, soc = reconstruct_dispatch(delta_e, params)
    aggregate = pv + discharge - charge - params.load
    return DispatchTrajectory(
        pv=pv,
        charge=charge,
        discharge=discharge,
        soc=soc,
        aggregate=aggregate,
        mismatch=aggregate - committed,
    )


def rt_cost_direct(dispatch: DispatchTrajectory, prices, params: DeviceParams) -> float:
    """Real-time cost of a dispatch under a price trajectory.

    Sum over hours of PV operating cost, storage degradation cost on
    discharge, and the incentive-penalty imbalance settlement: shortfall
    energy is bought at price + kappa, surplus energy is credited at
    price - kappa.
    """
    lam = np.asarray(prices, dtype=float)
    if lam.shape != (params.horizon,):
        raise InputError(
            f"price trajectory must have length {params.horizon}, got shape {lam.shape}"
        )
    mis = dispatch.mismatch
    shortfall = np.maximum(-mis, 0.0)
    surplus = np.maximum(mis, 0.0)
    terms = (
        params.cost_pv * dispatch.pv
        + params.cost_es * dispatch.discharge
        + (lam + params.kappa) * shortfall
        - (lam - params.kappa) * surplus
    )
    return float(np.sum(terms))


def delta_e_of(charge, discharge, params: DeviceParams) -> np.ndarray:
    """Inverse of :func:`reconstruct_dispatch`: net stored energy per hour."""
    return params.eta_ch * np.asarray(charge, float) - np.asarray(discharge, float) / params.eta_dis


def make_params(
    horizon: int,
    load: Sequence[float] | np.ndarray,
    *,
    storage_power_cap: float = 10.0,
    energy_min: float = 0.0,
    energy_max: float = 10.0,
    initial_soc: float = 5.0,
    eta_ch: float = 0.92,
    eta_dis: float = 0.92,
    cost_pv: float = 5.0,
    cost_es: float = 1.0,
    kappa: float = 4.0,
    offer_min: float = -50.0,
    offer_max: float = 50.0,
) -> DeviceParams:
    """Keyword-friendly constructor with benign defaults, mainly for tests
    and scripts."""
    return DeviceParams(
        horizon=horizon,
        storage_power_cap=storage_power_cap,
        energy_min=energy_min,
        energy_max=energy_max,
        initial_soc=initial_soc,
        eta_ch=eta_ch,
        eta_dis=eta_dis,
        cost_pv=cost_pv,
        cost_es=cost_es,
        kappa=kappa,
        offer_min=offer_min,
        offer_max=offer_max,
        load=np.asarray(load, dtype=float),
    )
