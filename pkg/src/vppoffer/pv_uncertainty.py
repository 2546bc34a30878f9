"""Budgeted uncertainty set for PV availability and its worst case.

The set is an interval box around a nominal profile with a budget cap on the
total normalized deviation.  Because the recourse cost is nonincreasing in
available PV (prices exceed the PV marginal cost), the worst case pushes
availability down on the highest-priced hours first, a continuous knapsack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InputError
from .model import readonly_array

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class BudgetSet:
    """Profiles ``nominal + half_width * xi`` with ``|xi_t| <= 1`` and
    ``sum_t |xi_t| <= budget``."""

    nominal: np.ndarray
    half_width: np.ndarray
    budget: float

    def __post_init__(self):
        nom = readonly_array(self.nominal)
        w = readonly_array(self.half_width)
        object.__setattr__(self, "nominal", nom)
        object.__setattr__(self, "half_width", w)
        if nom.ndim != 1 or w.shape != nom.shape:
            raise InputError("nominal and half_width must be 1-D and equal length")
        if np.any(w < 0.0):
            raise InputError("half widths must be nonnegative")
        if np.any(nom - w < 0.0):
            raise InputError("availability lower edge (nominal - half_width) must be nonnegative")
        if not (0.0 <= self.budget <= nom.shape[0]):
            raise InputError(
                f"budget must lie in [0, {nom.shape[0]}], got {self.budget}"
            )

    @classmethod
    def from_bounds(cls, lower, upper, budget: float) -> "BudgetSet":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if np.any(upper < lower):
            raise InputError("PV bounds reversed: upper < lower for some hour")
        return cls(nominal=(upper + lower) / 2.0, half_width=(upper - lower) / 2.0, budget=budget)

    @classmethod
    def constant_width(cls, nominal, width: float, budget: float) -> "BudgetSet":
        """Variant with a single half-width for every hour (forecast accuracy
        uniform across the horizon)."""
        nominal = np.asarray(nominal, dtype=float)
        return cls(nominal=nominal, half_width=np.full(nominal.shape, float(width)), budget=budget)

    @property
    def horizon(self) -> int:
        return self.nominal.shape[0]

    def contains(self, profile, tol: float = MEMBERSHIP_TOL) -> bool:
        """Membership test.  Hours with zero width admit only the nominal
        value exactly; elsewhere the box and budget checks get an absolute
        tolerance."""
        p = np.asarray(profile, dtype=float)
        if p.shape != self.nominal.shape:
            raise InputError(
                f"profile length {p.shape} does not match horizon {self.nominal.shape}"
            )
        dev = p - self.nominal
        zero_w = self.half_width == 0.0
        if np.any(dev[zero_w] != 0.0):
            return False
        xi = np.zeros_like(dev)
        np.divide(np.abs(dev), self.half_width, out=xi, where=~zero_w)
        if np.any(xi > 1.0 + tol):
            return False
        return bool(np.sum(xi) <= self.budget + tol)


def worst_case_profile(bset: BudgetSet, prices) -> np.ndarray:
    """Cost-maximizing availability profile for one price trajectory.

    Sorts hours by price descending (ties to the lower hour index), assigns a
    full downward deviation to the floor(budget) highest-priced hours and the
    fractional remainder to the next one.  Zero-width hours never enter the
    ranking.  This attains the optimum of the linear worst-case problem over
    the set, so the result is independent of the recourse details.
    """
    lam = np.asarray(prices, dtype=float)
    if lam.shape != bset.nominal.shape:
        raise InputError("price trajectory length does not match the uncertainty set horizon")
    if np.any(lam <= 0.0):
        bad = int(np.argmax(lam <= 0.0)) + 1
        raise InputError(
            f"nonpositive price at hour {bad}: worst-case ranking requires positive prices"
        )
    xi = np.zeros(bset.horizon)
    eligible = [t for t in range(bset.horizon) if bset.half_width[t] > 0.0]
    # stable sort on -price keeps lower hour index first among equal prices
    eligible.sort(key=lambda t: (-lam[t], t))
    remaining = float(bset.budget)
    for t in eligible:
        if remaining <= 0.0:
            break
        take = min(1.0, remaining)
        xi[t] = -take
        remaining -= take
    return bset.nominal + bset.half_width * xi


class DecouplingCheck(NamedTuple):
    """Outcome of the per-scenario condition under which the sequential
    worst-case-then-dispatch evaluation is provably exact."""

    close_pairs: tuple[tuple[int, int], ...]  # 1-based hour pairs with |price gap|/2 < kappa
    thin_margin_hours: tuple[int, ...]  # 1-based hours with price - cost_pv < kappa

    @property
    def ok(self) -> bool:
        return not self.close_pairs and not self.thin_margin_hours


def check_decoupling_condition(prices, kappa: float, cost_pv: float) -> DecouplingCheck:
    """Validate that kappa is small against every pairwise price gap and
    against each hour's price margin over the PV cost.

    With a discretized price grid, repeated representative prices inside one
    trajectory make the pairwise bound vacuous; callers should surface the
    returned pairs as warnings and treat the decoupled solve as a heuristic.
    """
    lam = np.asarray(prices, dtype=float)
    pairs = []
    for t in range(lam.shape[0]):
        for u in range(t + 1, lam.shape[0]):
            if abs(lam[t] - lam[u]) / 2.0 < kappa:
                pairs.append((t + 1, u + 1))
    hours = [t + 1 for t in range(lam.shape[0]) if lam[t] - cost_pv < kappa]
    return DecouplingCheck(close_pairs=tuple(pairs), thin_margin_hours=tuple(hours))
