import math

import numpy as np
import pytest

from lsehedge.core.distributions import LinExpDemand, LogNormalPrice, PointDemand, UniformDemand, UniformPrice
from lsehedge.core.models import CallTerms, DrTerms, ForwardTerms, HedgeDecision, HedgeKind, MarketParams
from lsehedge.services import hedging


def test_base_profit_examples(demo_params):
    assert hedging.base_profit(demo_params) == pytest.approx(-2500.0)
    cheap = demo_params.replace(price=UniformPrice(80.0))
    assert hedging.base_profit(cheap) == pytest.approx(500.0)


def test_optimal_forward_example(demo_params):
    decision = hedging.optimal_forward(demo_params, ForwardTerms(50.0))
    assert decision.kind is HedgeKind.FORWARD
    assert decision.decision == pytest.approx(50.0)
    assert decision.expected_profit == pytest.approx(-1250.0)


def test_forward_not_profitable_falls_back_to_base(demo_params):
    decision = hedging.optimal_forward(demo_params, ForwardTerms(120.0))
    assert decision.kind is HedgeKind.NONE
    assert decision.decision == 0.0
    assert decision.expected_profit == pytest.approx(-2500.0)


def test_optimal_call_example(demo_params):
    terms = CallTerms(40.0, 10.0)
    assert hedging.effective_strike(demo_params, terms) == pytest.approx(36.0)
    assert hedging.call_value_per_unit(demo_params, terms) == pytest.approx(64.0)
    decision = hedging.optimal_call(demo_params, terms)
    assert decision.kind is HedgeKind.CALL
    assert decision.decision == pytest.approx(84.375)
    assert decision.expected_profit == pytest.approx(-221.875)


def test_call_not_profitable_when_premium_exceeds_value(demo_params):
    decision = hedging.optimal_call(demo_params, CallTerms(40.0, 70.0))
    assert decision.kind is HedgeKind.NONE


def test_optimal_dr_example(demo_params):
    decision = hedging.optimal_dr(demo_params, DrTerms(0.05))
    assert decision.kind is HedgeKind.DEMAND_RESPONSE
    assert decision.decision == pytest.approx(1200.0)
    assert decision.expected_profit == pytest.approx(-1600.0)


def test_dr_zero_reward_when_elasticity_too_small(demo_params):
    # 1/alpha = 100 >= E[lambda_s] - lambda_f = 50
    decision = hedging.optimal_dr(demo_params, DrTerms(0.01))
    assert decision.kind is HedgeKind.DEMAND_RESPONSE
    assert decision.decision == 0.0
    assert decision.expected_profit == pytest.approx(-2500.0)


def test_dr_not_profitable_when_spot_below_tariff(demo_params):
    params = demo_params.replace(price=UniformPrice(80.0))
    decision = hedging.optimal_dr(params, DrTerms(0.05))
    assert decision.kind is HedgeKind.NONE
    assert decision.expected_profit == pytest.approx(hedging.base_profit(params))


def test_optimize_dispatches_on_terms(demo_params, demo_terms):
    fwd, call, dr = demo_terms
    assert hedging.optimize(demo_params, fwd).kind is HedgeKind.FORWARD
    assert hedging.optimize(demo_params, call).kind is HedgeKind.CALL
    assert hedging.optimize(demo_params, dr).kind is HedgeKind.DEMAND_RESPONSE


def test_best_decision_on_demo(demo_params, demo_terms):
    decisions = [hedging.optimize(demo_params, t) for t in demo_terms]
    assert hedging.best_decision(hedging.base_profit(demo_params), decisions) is HedgeKind.CALL


def test_best_decision_tie_order():
    tied = [HedgeDecision(HedgeKind.DEMAND_RESPONSE, 1.0, 5.0), HedgeDecision(HedgeKind.CALL, 1.0, 5.0)]
    assert hedging.best_decision(0.0, tied) is HedgeKind.CALL
    assert hedging.best_decision(5.0, tied) is HedgeKind.NONE


def test_cvar_levels_on_demo(demo_params, demo_terms):
    levels = hedging.cvar_levels(demo_params, *demo_terms)
    assert levels == pytest.approx((0.5, 0.84375, 0.6))
    assert hedging.cvar_levels(demo_params, None, demo_terms[1], None)[0] is None


def test_profit_via_cvar_matches_optimum(demo_params, demo_terms):
    for terms in demo_terms:
        optimum = hedging.optimize(demo_params, terms)
        assert hedging.profit_via_cvar(demo_params, terms) == pytest.approx(optimum.expected_profit, abs=1e-9)


def test_profit_via_cvar_rejects_unprofitable(demo_params):
    with pytest.raises(ValueError):
        hedging.profit_via_cvar(demo_params, ForwardTerms(250.0))


def test_profit_via_dispersion_matches_optimum(demo_params, demo_terms):
    for d_min, d_max in ((0.0, 100.0), (20.0, 70.0)):
        params = demo_params.replace(demand=UniformDemand(d_min, d_max))
        for terms in demo_terms:
            optimum = hedging.optimize(params, terms)
            if optimum.kind is HedgeKind.NONE:
                continue
            assert hedging.profit_via_dispersion(params, terms) == pytest.approx(optimum.expected_profit, abs=1e-9)


def test_dispersion_slopes_in_sigma_at_fixed_d_min(demo_params, demo_terms):
    # optimal profits of uniform demand on [10, 10 + w] are affine in sigma
    fwd, call, dr = demo_terms
    margin = demo_params.lambda_f - hedging.effective_strike(demo_params, call)
    cases = [
        (fwd, lambda law: demo_params.lambda_f * law.mean(), -math.sqrt(3.0) * 100.0 * (1.0 - 0.5 ** 2), -50.0 * 10.0),
        (call, lambda law: margin * law.mean(), -math.sqrt(3.0) * 64.0 * (1.0 - 0.84375 ** 2), -10.0 * 10.0),
        (dr, lambda law: 0.0, -math.sqrt(3.0) * 50.0 * (1.0 - 0.6 ** 2), -10.0 / 0.05),
    ]
    for terms, mean_term, slope_expected, intercept_expected in cases:
        sigmas, profits = [], []
        for w in np.linspace(20.0, 200.0, 10):
            law = UniformDemand(10.0, 10.0 + w)
            params = demo_params.replace(demand=law)
            sigmas.append(law.sigma)
            profits.append(hedging.optimize(params, terms).expected_profit - mean_term(law))
        slope, intercept = np.polyfit(sigmas, profits, 1)
        assert slope == pytest.approx(slope_expected, rel=1e-9)
        assert intercept == pytest.approx(intercept_expected, rel=1e-9, abs=1e-7)


def test_profit_via_dispersion_needs_uniform(demo_params):
    params = demo_params.replace(demand=LinExpDemand.from_decay(0.08, 20.0, 120.0))
    with pytest.raises(ValueError):
        hedging.profit_via_dispersion(params, ForwardTerms(50.0))


def test_point_demand_dispersion_equals_perfect_information(demo_params, demo_terms):
    params = demo_params.replace(demand=PointDemand(80.0))
    fwd, call, _ = demo_terms
    for terms in (fwd, call):
        _, profit = hedging.perfect_info(80.0, params, terms)
        assert hedging.profit_via_dispersion(params, terms) == pytest.approx(profit)
        assert hedging.optimize(params, terms).expected_profit == pytest.approx(profit)


def test_perfect_info_examples(demo_params, demo_terms):
    fwd, call, dr = demo_terms
    assert hedging.perfect_info(80.0, demo_params, fwd) == pytest.approx((80.0, 0.0))
    assert hedging.perfect_info(80.0, demo_params, call) == pytest.approx((80.0, 320.0))
    assert hedging.perfect_info(80.0, demo_params, dr) == pytest.approx((1600.0, -1600.0))
    with pytest.raises(ValueError):
        hedging.perfect_info(-1.0, demo_params, fwd)


def test_every_optimum_dominates_base():
    rng = np.random.Generator(np.random.Philox(11))
    for _ in range(50):
        demand = LinExpDemand.from_decay(rng.uniform(0.01, 0.2), rng.uniform(0.0, 30.0), rng.uniform(60.0, 200.0))
        price = LogNormalPrice(rng.uniform(3.5, 5.0), rng.uniform(0.2, 0.8))
        params = MarketParams(rng.uniform(20.0, 120.0), demand, price)
        base = hedging.base_profit(params)
        m = price.mean()
        for terms in (ForwardTerms(rng.uniform(0.2, 1.2) * m), CallTerms(rng.uniform(0.1, 1.0) * m, rng.uniform(0.0, 0.5) * m),
                      DrTerms(rng.uniform(0.005, 0.2))):
            decision = hedging.optimize(params, terms)
            assert decision.expected_profit >= base - 1e-9 * max(abs(base), 1.0)


def test_profit_monotone_in_instrument_prices(demo_params):
    forward = [hedging.optimal_forward(demo_params, ForwardTerms(x)).expected_profit for x in np.linspace(0, 120, 25)]
    assert all(b <= a + 1e-9 for a, b in zip(forward, forward[1:]))
    premium = [hedging.optimal_call(demo_params, CallTerms(40.0, p)).expected_profit for p in np.linspace(0, 70, 25)]
    assert all(b <= a + 1e-9 for a, b in zip(premium, premium[1:]))
    strike = [hedging.optimal_call(demo_params, CallTerms(k, 10.0)).expected_profit for k in np.linspace(0, 200, 25)]
    assert all(b <= a + 1e-9 for a, b in zip(strike, strike[1:]))
    dr = [hedging.optimal_dr(demo_params, DrTerms(a)).expected_profit for a in np.linspace(0.005, 1.0, 25)]
    assert all(b >= a - 1e-9 for a, b in zip(dr, dr[1:]))


def _random_case(seed, demand_kind='uniform', price_kind='uniform'):
    rng = np.random.Generator(np.random.Philox(seed))
    d_min = rng.uniform(0.0, 40.0)
    width = rng.uniform(20.0, 200.0)
    if demand_kind == 'uniform':
        demand = UniformDemand(d_min, d_min + width)
    else:
        demand = LinExpDemand.from_decay(rng.uniform(0.5, 10.0) / width, d_min, d_min + width)
    if price_kind == 'uniform':
        price = UniformPrice(rng.uniform(80.0, 400.0))
    else:
        price = LogNormalPrice(rng.uniform(3.8, 5.0), rng.uniform(0.2, 0.8))
    m = price.mean()
    params = MarketParams(rng.uniform(0.2, 0.8) * m, demand, price)
    lambda_c = rng.uniform(0.1, 1.0) * m
    k = hedging.call_value_per_unit(params, CallTerms(lambda_c, 0.0))
    gap = m - params.lambda_f
    terms = (ForwardTerms(rng.uniform(0.2, 0.9) * m), CallTerms(lambda_c, rng.uniform(0.05, 0.8) * k),
             DrTerms(1.0 / (rng.uniform(0.05, 0.8) * gap)))
    return params, terms


def _profit_tol(params):
    return 1e-9 * params.price.mean() * params.demand.mean()


@pytest.mark.parametrize('seed', range(5))
@pytest.mark.parametrize('demand_kind', ['uniform', 'linexp'])
@pytest.mark.parametrize('price_kind', ['uniform', 'lognormal'])
def test_profit_via_cvar_matches_optimum_on_random_markets(seed, demand_kind, price_kind):
    params, terms = _random_case(seed, demand_kind, price_kind)
    for t in terms:
        optimum = hedging.optimize(params, t)
        assert optimum.kind is not HedgeKind.NONE
        assert hedging.profit_via_cvar(params, t) == pytest.approx(
            optimum.expected_profit, rel=1e-9, abs=_profit_tol(params))


@pytest.mark.parametrize('seed', range(20))
def test_profit_via_dispersion_matches_optimum_on_random_markets(seed):
    params, terms = _random_case(100 + seed, price_kind='lognormal' if seed % 2 else 'uniform')
    for t in terms:
        optimum = hedging.optimize(params, t)
        assert hedging.profit_via_dispersion(params, t) == pytest.approx(
            optimum.expected_profit, rel=1e-9, abs=_profit_tol(params))
