import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vppoffer.errors import InputError
from vppoffer.model import (
    DeviceParams,
    OfferSurface,
    build_dispatch,
    delta_e_of,
    make_params,
    power_cap_excess,
    reconstruct_dispatch,
    rt_cost_direct,
    validate_offer,
)
from vppoffer.price_markov import PriceGrid
from vppoffer.recourse import EnergyFeasibleSet


def tiny_grid():
    # one hour, two states at prices 10 and 20
    return PriceGrid(
        lower=np.array([[5.0, 15.0]]),
        upper=np.array([[15.0, 25.0]]),
        representative=np.array([[10.0, 20.0]]),
    )


def one_hour_params(**kw):
    defaults = dict(offer_min=0.0, offer_max=10.0, kappa=5.0)
    defaults.update(kw)
    return make_params(1, [0.0], **defaults)


class TestValidateOffer:
    def test_monotone_within_bounds_is_valid(self):
        offer = OfferSurface(np.array([[3.0, 5.0]]))
        assert validate_offer(offer, one_hour_params(), tiny_grid()) == []

    def test_reversed_pair_reports_monotonicity(self):
        offer = OfferSurface(np.array([[5.0, 3.0]]))
        violations = validate_offer(offer, one_hour_params(), tiny_grid())
        assert len(violations) == 1
        v = violations[0]
        assert (v.hour, v.state, v.kind) == (1, 1, "not_monotone")

    def test_below_lower_bound(self):
        offer = OfferSurface(np.array([[-1.0, 5.0]]))
        violations = validate_offer(offer, one_hour_params(), tiny_grid())
        assert [(v.hour, v.state, v.kind) for v in violations] == [(1, 1, "below_min")]

    def test_dimension_mismatch(self):
        offer = OfferSurface(np.array([[1.0, 2.0, 3.0]]))
        with pytest.raises(InputError):
            validate_offer(offer, one_hour_params(), tiny_grid())


class TestReconstructDispatch:
    def test_charging_inverts_efficiency(self):
        params = make_params(1, [0.0], eta_ch=0.9)
        charge, discharge, soc = reconstruct_dispatch(np.array([0.9]), params)
        assert charge[0] == pytest.approx(1.0)
        assert discharge[0] == 0.0

    def test_discharging_scales_by_efficiency(self):
        params = make_params(1, [0.0], eta_dis=0.9)
        charge, discharge, soc = reconstruct_dispatch(np.array([-0.9]), params)
        assert discharge[0] == pytest.approx(0.81)
        assert charge[0] == 0.0

    def test_zero_increment_is_identity(self):
        params = make_params(3, [0.0, 0.0, 0.0], initial_soc=4.0)
        charge, discharge, soc = reconstruct_dispatch(np.zeros(3), params)
        assert np.all(charge == 0.0) and np.all(discharge == 0.0)
        assert np.all(soc == 4.0)

    @given(st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=24))
    @settings(max_examples=80, deadline=None)
    def test_roundtrip_is_exact(self, increments):
        params = make_params(len(increments), np.zeros(len(increments)),
                             eta_ch=0.9, eta_dis=0.85,
                             energy_min=-1e6, energy_max=1e6, initial_soc=0.0)
        de = np.asarray(increments)
        charge, discharge, _ = reconstruct_dispatch(de, params)
        # multiply-then-divide costs at most a couple of ulps
        assert np.allclose(delta_e_of(charge, discharge, params), de, rtol=1e-15, atol=1e-18)
        # never both moving at once
        assert np.all(charge * discharge == 0.0)

    def test_power_cap_flagged_not_raised(self):
        params = make_params(2, [0.0, 0.0], storage_power_cap=1.0, eta_ch=0.5,
                             energy_min=0.0, energy_max=10.0, initial_soc=5.0)
        charge, discharge, _ = reconstruct_dispatch(np.array([2.0, -2.0]), params)
        assert power_cap_excess(charge, discharge, params) == [1, 2]


class TestRtCostDirect:
    def test_shortfall_priced_above(self):
        params = one_hour_params()
        d = build_dispatch(np.zeros(1), np.zeros(1), np.array([1.0]), params)
        assert d.mismatch[0] == -1.0
        assert rt_cost_direct(d, np.array([50.0]), params) == pytest.approx(55.0)

    def test_surplus_credited_below(self):
        params = make_params(1, [0.0], offer_min=-10.0, offer_max=10.0, kappa=5.0)
        d = build_dispatch(np.zeros(1), np.zeros(1), np.array([-1.0]), params)
        assert d.mismatch[0] == 1.0
        assert rt_cost_direct(d, np.array([50.0]), params) == pytest.approx(-45.0)

    def test_degradation_term_only(self):
        params = make_params(1, [0.0], cost_es=2.0, kappa=5.0, eta_dis=1.0,
                             energy_min=0.0, energy_max=10.0, initial_soc=5.0)
        d = build_dispatch(np.array([-2.0]), np.zeros(1), np.array([2.0]), params)
        assert d.mismatch[0] == pytest.approx(0.0)
        assert rt_cost_direct(d, np.array([50.0]), params) == pytest.approx(4.0)

    def test_length_mismatch(self):
        params = one_hour_params()
        d = build_dispatch(np.zeros(1), np.zeros(1), np.zeros(1), params)
        with pytest.raises(InputError):
            rt_cost_direct(d, np.array([50.0, 60.0]), params)


def test_feasible_increments_reconstruct_within_bounds():
    # sample feasible SOC paths directly, then check the reconstruction
    rng = np.random.default_rng(3)
    for _ in range(200):
        horizon = int(rng.integers(1, 12))
        params = make_params(horizon, np.zeros(horizon), energy_min=1.0,
                             energy_max=6.0, initial_soc=3.0)
        soc = np.concatenate([
            rng.uniform(1.0, 6.0, size=horizon - 1), [params.initial_soc]
        ])
        de = np.diff(np.concatenate([[params.initial_soc], soc]))
        feas = EnergyFeasibleSet.from_params(params)
        assert feas.contains(de)
        _, _, soc_rec = reconstruct_dispatch(de, params)
        assert np.all(soc_rec >= params.energy_min - 1e-9)
        assert np.all(soc_rec <= params.energy_max + 1e-9)
        assert soc_rec[-1] == pytest.approx(params.initial_soc, abs=1e-9)


def test_device_params_validation():
    with pytest.raises(InputError):
        make_params(1, [0.0], eta_ch=0.0)
    with pytest.raises(InputError):
        make_params(1, [0.0], kappa=0.0)
    with pytest.raises(InputError):
        make_params(1, [0.0], energy_min=5.0, energy_max=4.0, initial_soc=4.5)
    with pytest.raises(InputError):
        make_params(1, [0.0], offer_min=2.0, offer_max=1.0)
    with pytest.raises(InputError):
        make_params(2, [0.0], )  # load length mismatch


def test_immutability():
    params = make_params(2, [1.0, 2.0])
    with pytest.raises(ValueError):
        params.load[0] = 9.0
    offer = OfferSurface(np.array([[1.0, 2.0]]))
    with pytest.raises(ValueError):
        offer.quantities[0, 0] = 5.0
