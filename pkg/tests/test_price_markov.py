import numpy as np
import pytest

from conftest import synthetic_price_history
from vppoffer.errors import InputError
from vppoffer.price_markov import (
    PriceGrid,
    TransitionModel,
    build_grid,
    estimate_transitions,
    sample_trajectories,
)


class TestBuildGrid:
    def test_quantile_split_with_inbin_means(self):
        history = np.array([[10.0], [20.0], [30.0], [40.0]])
        grid = build_grid(history, 2)
        assert grid.lower[0].tolist() == [10.0, 25.0]
        assert grid.upper[0].tolist() == [25.0, 40.0]
        assert grid.representative[0].tolist() == [15.0, 35.0]

    def test_single_state_covers_range(self):
        history = np.array([[10.0], [20.0], [30.0]])
        grid = build_grid(history, 1)
        assert grid.lower[0, 0] == 10.0
        assert grid.upper[0, 0] == 30.0
        assert grid.representative[0, 0] == pytest.approx(20.0)

    def test_constant_prices_single_state(self):
        history = np.full((5, 2), 7.5)
        grid = build_grid(history, 1)
        assert np.all(grid.representative == 7.5)

    def test_too_few_distinct_values_names_hour(self):
        history = np.array([[10.0, 10.0], [10.0, 20.0], [10.0, 30.0]])
        with pytest.raises(InputError, match="hour 1"):
            build_grid(history, 2)

    def test_representatives_strictly_increase(self):
        rng = np.random.default_rng(0)
        history = synthetic_price_history(rng, 100, 24)
        grid = build_grid(history, 5)
        assert np.all(np.diff(grid.representative, axis=1) > 0.0)
        # intervals tile the observed range
        assert np.allclose(grid.lower[:, 1:], grid.upper[:, :-1])
        assert np.allclose(grid.lower[:, 0], history.min(axis=0))
        assert np.allclose(grid.upper[:, -1], history.max(axis=0))

    def test_states_cover_every_observation(self):
        rng = np.random.default_rng(1)
        history = synthetic_price_history(rng, 60, 8)
        grid = build_grid(history, 4)
        for d in range(history.shape[0]):
            for t in range(history.shape[1]):
                s, clamped = grid.state_of(t, history[d, t])
                assert not clamped
                assert 0 <= s < 4


class TestEstimateTransitions:
    def test_direct_counting(self):
        # hour-1 states (1,1,2), hour-2 states (2,1,2)
        history = np.array([[10.0, 20.0], [10.0, 10.0], [20.0, 20.0]])
        grid = build_grid(history, 2)
        model = estimate_transitions(history, grid)
        assert model.initial.tolist() == [2.0 / 3.0, 1.0 / 3.0]
        assert model.transitions[0, 0].tolist() == [0.5, 0.5]
        assert model.transitions[0, 1].tolist() == [0.0, 1.0]
        assert model.fallback_rows == ()

    def test_single_day_gives_unit_rows(self):
        rng = np.random.default_rng(2)
        big = synthetic_price_history(rng, 50, 4)
        grid = build_grid(big, 3)
        model = estimate_transitions(big[:1], grid)
        for t in range(3):
            s = model.transitions[t].sum(axis=1)
            visited = np.nonzero(s > 0)[0]
            for row in visited:
                if (t + 1, row + 1) not in model.fallback_rows:
                    assert set(model.transitions[t, row]) <= {0.0, 1.0}

    def test_unvisited_row_defaults_to_uniform_and_is_flagged(self):
        rng = np.random.default_rng(3)
        big = synthetic_price_history(rng, 80, 3)
        grid = build_grid(big, 4)
        # estimate on a slice that misses at least one state somewhere
        model = estimate_transitions(big[:3], grid)
        assert model.fallback_rows  # 3 days cannot visit 4 states everywhere
        for t1, s1 in model.fallback_rows:
            assert np.allclose(model.transitions[t1 - 1, s1 - 1], 0.25)

    def test_unmappable_price_errors_with_location(self):
        history = np.array([[10.0, 20.0], [12.0, 22.0], [14.0, 24.0]])
        grid = build_grid(history, 2)
        bad = history.copy()
        bad[1, 1] = 99.0
        with pytest.raises(InputError, match="day 2, hour 2"):
            estimate_transitions(bad, grid)


def manual_model():
    grid = PriceGrid(
        lower=np.array([[0.0, 10.0], [0.0, 10.0]]),
        upper=np.array([[10.0, 20.0], [10.0, 20.0]]),
        representative=np.array([[5.0, 15.0], [6.0, 16.0]]),
    )
    model = TransitionModel(
        initial=np.array([1.0, 0.0]),
        transitions=np.array([[[0.5, 0.5], [0.2, 0.8]]]),
    )
    return grid, model


class TestSampling:
    def test_single_state_chain_is_deterministic(self):
        grid = PriceGrid(
            lower=np.array([[0.0], [0.0]]),
            upper=np.array([[10.0], [10.0]]),
            representative=np.array([[5.0], [6.0]]),
        )
        model = TransitionModel(initial=np.array([1.0]), transitions=np.ones((1, 1, 1)))
        scen = sample_trajectories(model, grid, 4, seed=0)
        assert np.all(scen.states == 0)
        assert np.all(scen.prices == np.array([5.0, 6.0]))

    def test_unit_transition_rows_make_identical_trajectories(self):
        grid, _ = manual_model()
        model = TransitionModel(
            initial=np.array([1.0, 0.0]),
            transitions=np.array([[[0.0, 1.0], [1.0, 0.0]]]),
        )
        scen = sample_trajectories(model, grid, 8, seed=1)
        assert np.all(scen.states == np.array([0, 1]))

    def test_empirical_frequency_matches_transition(self):
        grid, model = manual_model()
        scen = sample_trajectories(model, grid, 100_000, seed=7)
        freq = float(np.mean(scen.states[:, 1] == 1))
        assert freq == pytest.approx(0.5, abs=0.01)

    def test_same_seed_reproduces_bitwise(self):
        grid, model = manual_model()
        a = sample_trajectories(model, grid, 64, seed=11)
        b = sample_trajectories(model, grid, 64, seed=11)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.prices, b.prices)
        assert np.array_equal(a.weights, b.weights)

    def test_prefix_stability_across_sample_counts(self):
        # per-index RNG streams: first trajectories identical regardless of W
        grid, model = manual_model()
        small = sample_trajectories(model, grid, 8, seed=3)
        large = sample_trajectories(model, grid, 32, seed=3)
        assert np.array_equal(small.states, large.states[:8])

    def test_prices_follow_states_exactly(self):
        grid, model = manual_model()
        scen = sample_trajectories(model, grid, 50, seed=5)
        for w in range(scen.n_scenarios):
            assert np.array_equal(scen.prices[w], grid.prices_of(scen.states[w]))

    def test_uniform_weights(self):
        grid, model = manual_model()
        scen = sample_trajectories(model, grid, 10, seed=2)
        assert np.allclose(scen.weights, 0.1)

    def test_dedup_weighting(self):
        grid, model = manual_model()
        scen = sample_trajectories(model, grid, 200, seed=2, weighting="dedup")
        assert scen.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.unique(scen.states, axis=0).shape[0] == scen.n_scenarios
        # path probability ordering carries over to the weights
        order = np.argsort(scen.weights)
        p_first = model.initial[scen.states[:, 0]]
        p_step = model.transitions[0, scen.states[:, 0], scen.states[:, 1]]
        assert np.all(np.diff((p_first * p_step)[order]) >= -1e-12)


def test_reestimation_recovers_known_model():
    grid, model = manual_model()
    scen = sample_trajectories(model, grid, 100_000, seed=13)
    refit = estimate_transitions(scen.prices, grid)
    visits = np.bincount(scen.states[:, 0], minlength=2).astype(float)
    for s in range(2):
        for s2 in range(2):
            theta = model.transitions[0, s, s2]
            sigma = np.sqrt(theta * (1 - theta) / visits[s])
            assert abs(refit.transitions[0, s, s2] - theta) <= 3.0 * sigma + 1e-12
