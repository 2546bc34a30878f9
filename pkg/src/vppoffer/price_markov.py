"""Time-inhomogeneous Markov model of day-ahead prices.

Historical prices are discretized per hour into equal-frequency intervals,
each represented by the mean of its observations.  Transition probabilities
are estimated by counting state transitions between consecutive hours across
historical days, and scenario sets are drawn by ancestral sampling with one
independent RNG stream per trajectory index (reproducible regardless of
evaluation order or worker count).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import readonly_array

PROB_TOL = 1e-12


@dataclass(frozen=True)
class PriceGrid:
    """Per-hour price intervals ``[lower, upper)`` (the last one closed on the
    right) with a representative price each, strictly increasing in the state
    index."""

    lower: np.ndarray  # (T, N)
    upper: np.ndarray  # (T, N)
    representative: np.ndarray  # (T, N)

    def __post_init__(self):
        lo = readonly_array(self.lower)
        up = readonly_array(self.upper)
        rep = readonly_array(self.representative)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "representative", rep)
        if lo.ndim != 2 or up.shape != lo.shape or rep.shape != lo.shape:
            raise InputError("grid arrays must share a (hours, states) shape")
        if np.any(up < lo):
            raise InputError("grid interval with upper edge below lower edge")
        if lo.shape[1] > 1:
            if np.any(lo[:, 1:] < up[:, :-1]):
                raise InputError("grid intervals overlap within an hour")
            if np.any(np.diff(rep, axis=1) <= 0.0):
                raise InputError("representative prices must increase strictly with the state")

    @property
    def n_hours(self) -> int:
        return self.lower.shape[0]

    @property
    def n_states(self) -> int:
        return self.lower.shape[1]

    def state_of(self, hour: int, price: float, clamp: bool = False) -> tuple[int, bool]:
        """0-based state containing ``price`` at 0-based ``hour``.

        Returns ``(state, clamped)``.  Out-of-range prices raise unless
        ``clamp`` is set, in which case they map to the nearest edge state.
        """
        lo = self.lower[hour]
        up = self.upper[hour]
        if price < lo[0] or price > up[-1]:
            if clamp:
                return (0 if price < lo[0] else self.n_states - 1), True
            raise InputError(
                f"price {price} at hour {hour + 1} outside grid range [{lo[0]}, {up[-1]}]"
            )
        s = int(np.searchsorted(lo, price, side="right")) - 1
        # contiguous intervals: a price below upper[s] belongs to s, at the
        # seam it belongs to the next state, and the top edge stays in the
        # last (closed) interval
        if price >= up[s] and s < self.n_states - 1:
            s += 1
        return s, False

    def prices_of(self, states: np.ndarray) -> np.ndarray:
        """Representative price sequence for a (T,) 0-based state sequence."""
        states = np.asarray(states, dtype=int)
        return self.representative[np.arange(self.n_hours), states]


@dataclass(frozen=True)
class TransitionModel:
    """Initial state distribution at hour 1 plus per-hour transition matrices
    for hours 1..T-1."""

    initial: np.ndarray  # (N,)
    transitions: np.ndarray  # (T-1, N, N), row-stochastic
    fallback_rows: tuple[tuple[int, int], ...] = ()  # (1-based hour, 1-based state) rows never visited

    def __post_init__(self):
        init = readonly_array(self.initial)
        trans = readonly_array(self.transitions)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "transitions", trans)
        n = init.shape[0]
        if trans.ndim != 3 or trans.shape[1:] != (n, n):
            raise InputError("transition tensor must have shape (T-1, N, N)")
        if abs(float(init.sum()) - 1.0) > PROB_TOL or np.any(init < 0.0) or np.any(init > 1.0):
            raise InputError("initial distribution is not a probability vector")
        rowsums = trans.sum(axis=2)
        if np.any(np.abs(rowsums - 1.0) > PROB_TOL) or np.any(trans < 0.0) or np.any(trans > 1.0):
            raise InputError("transition rows must be probability vectors")

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def n_hours(self) -> int:
        return self.transitions.shape[0] + 1


@dataclass(frozen=True)
class ScenarioSet:
    """Sampled price trajectories with probability weights summing to one."""

    states: np.ndarray  # (W, T) int, 0-based
    prices: np.ndarray  # (W, T)
    weights: np.ndarray  # (W,)

    def __post_init__(self):
        st = readonly_array(self.states, dtype=int)
        pr = readonly_array(self.prices)
        wt = readonly_array(self.weights)
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "prices", pr)
        object.__setattr__(self, "weights", wt)
        if st.ndim != 2 or pr.shape != st.shape or wt.shape != (st.shape[0],):
            raise InputError("scenario arrays have inconsistent shapes")
        if abs(float(wt.sum()) - 1.0) > PROB_TOL or np.any(wt < 0.0):
            raise InputError("scenario weights must be nonnegative and sum to one")

    @property
    def n_scenarios(self) -> int:
        return self.states.shape[0]

    @property
    def n_hours(self) -> int:
        return self.states.shape[1]


def _hour_edges(observations: np.ndarray, n_states: int, hour: int) -> np.ndarray:
    """Equal-frequency edges for one hour; falls back to quantiles of the
    distinct values when duplicates collapse raw quantile edges."""
    qs = np.linspace(0.0, 1.0, n_states + 1)
    edges = np.quantile(observations, qs)
    if np.all(np.diff(edges) > 0.0):
        return edges
    distinct = np.unique(observations)
    edges = np.quantile(distinct, qs)
    if not np.all(np.diff(edges) > 0.0):
        raise InputError(
            f"hour {hour + 1}: cannot build {n_states} strictly ordered price intervals"
        )
    return edges


def build_grid(history, n_states: int) -> PriceGrid:
    """Discretize a (days x hours) price matrix into ``n_states`` per-hour
    intervals with in-bin mean representatives."""
    hist = np.asarray(history, dtype=float)
    if hist.ndim != 2:
        raise InputError("price history must be a (days x hours) matrix")
    if n_states < 1:
        raise InputError(f"n_states must be >= 1, got {n_states}")
    n_days, n_hours = hist.shape
    if n_days < 1:
        raise InputError("price history has no days")
    lower = np.empty((n_hours, n_states))
    upper = np.empty((n_hours, n_states))
    rep = np.empty((n_hours, n_states))
    for t in range(n_hours):
        obs = hist[:, t]
        n_distinct = np.unique(obs).shape[0]
        if n_distinct < n_states:
            raise InputError(
                f"hour {t + 1}: {n_distinct} distinct prices observed, "
                f"need at least {n_states} for {n_states} states"
            )
        edges = _hour_edges(obs, n_states, t)
        lower[t] = edges[:-1]
        upper[t] = edges[1:]
        for s in range(n_states):
            if s < n_states - 1:
                members = obs[(obs >= edges[s]) & (obs < edges[s + 1])]
            else:
                members = obs[(obs >= edges[s]) & (obs <= edges[s + 1])]
            if members.size == 0:
                raise InputError(f"hour {t + 1}: price state {s + 1} captured no observations")
            rep[t, s] = members.mean()
    return PriceGrid(lower=lower, upper=upper, representative=rep)


def estimate_transitions(history, grid: PriceGrid) -> TransitionModel:
    """Count observed state transitions between consecutive hours.

    Each row is normalized by the visits to its source state; rows that were
    never visited default to the uniform distribution and are listed in
    ``fallback_rows``.  The initial distribution is the empirical frequency
    of hour-1 states.
    """
    hist = np.asarray(history, dtype=float)
    if hist.ndim != 2 or hist.shape[1] != grid.n_hours:
        raise InputError(
            f"history must be (days x {grid.n_hours}), got shape {hist.shape}"
        )
    n_days = hist.shape[0]
    n = grid.n_states
    states = np.empty(hist.shape, dtype=int)
    for d in range(n_days):
        for t in range(grid.n_hours):
            try:
                states[d, t], _ = grid.state_of(t, hist[d, t])
            except InputError as exc:
                raise InputError(
                    f"day {d + 1}, hour {t + 1}: price {hist[d, t]} maps to no grid interval"
                ) from exc
    initial = np.bincount(states[:, 0], minlength=n).astype(float) / n_days
    trans = np.zeros((grid.n_hours - 1, n, n))
    fallback = []
    for t in range(grid.n_hours - 1):
        counts = np.zeros((n, n))
        for d in range(n_days):
            counts[states[d, t], states[d, t + 1]] += 1.0
        visits = counts.sum(axis=1)
        for s in range(n):
            if visits[s] > 0.0:
                trans[t, s] = counts[s] / visits[s]
            else:
                trans[t, s] = 1.0 / n
                fallback.append((t + 1, s + 1))
    return TransitionModel(initial=initial, transitions=trans, fallback_rows=tuple(fallback))


def sample_trajectories(
    model: TransitionModel,
    grid: PriceGrid,
    n_samples: int,
    seed: int,
    weighting: str = "uniform",
) -> ScenarioSet:
    """Draw ``n_samples`` ancestral samples of the price chain.

    Each trajectory index gets its own spawned RNG stream, so the result is a
    pure function of ``seed`` and the index.  ``weighting="uniform"`` keeps
    duplicates and weights every sample 1/W (unbiased Monte Carlo);
    ``weighting="dedup"`` collapses duplicate paths and weights each unique
    path by its chain probability, renormalized over the sampled support.
    """
    if n_samples < 1:
        raise InputError(f"n_samples must be >= 1, got {n_samples}")
    if weighting not in ("uniform", "dedup"):
        raise InputError(f"unknown weighting {weighting!r}")
    if grid.n_states != model.n_states or grid.n_hours != model.n_hours:
        raise InputError("grid and transition model dimensions disagree")
    n_hours = model.n_hours
    streams = np.random.SeedSequence(seed).spawn(n_samples)
    states = np.empty((n_samples, n_hours), dtype=int)
    for w, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        s = int(rng.choice(model.n_states, p=model.initial))
        states[w, 0] = s
        for t in range(n_hours - 1):
            s = int(rng.choice(model.n_states, p=model.transitions[t, s]))
            states[w, t + 1] = s
    if weighting == "dedup":
        states = np.unique(states, axis=0)
        logp = np.log(np.maximum(model.initial[states[:, 0]], 1e-300))
        for t in range(n_hours - 1):
            logp += np.log(
                np.maximum(model.transitions[t, states[:, t], states[:, t + 1]], 1e-300)
            )
        weights = np.exp(logp - logp.max())
        weights /= weights.sum()
    else:
        weights = np.full(states.shape[0], 1.0 / states.shape[0])
    prices = np.vstack([grid.prices_of(states[w]) for w in range(states.shape[0])])
    return ScenarioSet(states=states, prices=prices, weights=weights)
