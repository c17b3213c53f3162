import math

import numpy as np
import pytest

from lsehedge.core.data import MC_DEFAULT_DRAWS
from lsehedge.core.distributions import (
    EmpiricalDemand,
    LinExpDemand,
    LogNormalPrice,
    PointDemand,
    UniformDemand,
    UniformPrice,
)
from lsehedge.core.models import (
    CallTerms,
    Classification,
    DrTerms,
    ForwardTerms,
    HedgeKind,
    MarketParams,
    PortfolioPair,
)
from lsehedge.services import hedging, oracle

SETS_PER_INSTRUMENT = 50


def _random_params(rng, dr=False):
    width = rng.uniform(20.0, 200.0)
    d_min = 0.0 if dr else rng.uniform(0.0, 50.0)
    if rng.random() < 0.5:
        demand = UniformDemand(d_min, d_min + width)
    else:
        demand = LinExpDemand.from_decay(rng.uniform(0.5, 10.0) / width, d_min, d_min + width)
    if rng.random() < 0.5:
        price = UniformPrice(rng.uniform(50.0, 400.0))
    else:
        price = LogNormalPrice(rng.uniform(3.5, 5.0), rng.uniform(0.2, 0.8))
    m = price.mean()
    lambda_f = rng.uniform(0.2, 0.8) * m if dr else rng.uniform(20.0, 80.0)
    return MarketParams(lambda_f, demand, price)


def _random_terms(kind, params, rng):
    m = params.price.mean()
    if kind is HedgeKind.FORWARD:
        return ForwardTerms(rng.uniform(0.2, 0.9) * m)
    if kind is HedgeKind.CALL:
        lambda_c = rng.uniform(0.1, 1.0) * m
        k = hedging.call_value_per_unit(params, CallTerms(lambda_c, 0.0))
        return CallTerms(lambda_c, rng.uniform(0.05, 0.8) * k)
    gap = m - params.lambda_f
    return DrTerms(1.0 / (rng.uniform(0.05, 0.8) * gap))


def test_objectives_at_zero_equal_base(demo_params, demo_terms):
    fwd, call, dr = demo_terms
    base = hedging.base_profit(demo_params)
    assert oracle.expected_profit_forward(0.0, demo_params, fwd) == pytest.approx(base)
    assert oracle.expected_profit_call(0.0, demo_params, call) == pytest.approx(base)
    assert oracle.expected_profit_dr(0.0, demo_params, dr) == pytest.approx(base)


def test_objective_values_on_demo(demo_params, demo_terms):
    fwd, call, dr = demo_terms
    assert oracle.expected_profit_forward(50.0, demo_params, fwd) == pytest.approx(-1250.0, abs=1e-8)
    assert oracle.expected_profit_call(84.375, demo_params, call) == pytest.approx(-221.875, abs=1e-8)
    assert oracle.expected_profit_dr(1200.0, demo_params, dr) == pytest.approx(-1600.0, abs=1e-8)
    # volumes past d_max buy everything forward
    assert oracle.expected_profit_forward(150.0, demo_params, fwd) == pytest.approx(50.0 * 50.0 - 50.0 * 150.0)


def test_objectives_are_vectorized(demo_params, demo_terms):
    qs = np.array([0.0, 25.0, 50.0, 75.0])
    values = oracle.expected_profit_forward(qs, demo_params, demo_terms[0])
    assert values.shape == qs.shape
    assert values[2] == pytest.approx(-1250.0, abs=1e-8)


def test_negative_decision_is_rejected(demo_params, demo_terms):
    with pytest.raises(ValueError):
        oracle.expected_profit_forward(-1.0, demo_params, demo_terms[0])


def test_dr_objective_past_full_shift():
    params = MarketParams(50.0, UniformDemand(10.0, 60.0), UniformPrice(200.0))
    terms = DrTerms(0.1)
    # h = 100 >= d_max: everything above d_min is shed
    assert oracle.expected_profit_dr(1000.0, params, terms) == pytest.approx((50.0 - 100.0) * 10.0 - 1000.0)


def test_call_with_free_unlimited_option_is_nondecreasing():
    params = MarketParams(50.0, UniformDemand(0.0, 100.0), UniformPrice(200.0))
    terms = CallTerms(200.0, 0.0)
    values = oracle.expected_profit_call(np.linspace(0.0, 150.0, 31), params, terms)
    assert np.all(np.diff(values) >= -1e-9)


def test_numeric_argmax_on_parabola():
    curve = oracle.numeric_argmax(lambda x: -(np.asarray(x) - 3.0) ** 2, 0.0, 10.0)
    assert curve.argmax == pytest.approx(3.0, abs=1e-4)
    assert curve.max_value == pytest.approx(0.0, abs=1e-9)
    assert not curve.at_endpoint
    edge = oracle.numeric_argmax(lambda x: -np.asarray(x), 0.0, 10.0)
    assert edge.argmax == pytest.approx(0.0, abs=1e-5)
    assert edge.at_endpoint


@pytest.mark.parametrize('kind', [HedgeKind.FORWARD, HedgeKind.CALL, HedgeKind.DEMAND_RESPONSE])
def test_closed_forms_match_quadrature_oracle(kind):
    rng = np.random.Generator(np.random.Philox(2024))
    for _ in range(SETS_PER_INSTRUMENT):
        params = _random_params(rng, dr=kind is HedgeKind.DEMAND_RESPONSE)
        terms = _random_terms(kind, params, rng)
        closed = hedging.optimize(params, terms)
        assert closed.kind is kind
        curve = oracle.oracle_decision(kind, params, terms)
        scale = oracle.decision_scale(kind, params, terms)
        assert abs(closed.decision - curve.argmax) <= 1e-4 * scale
        assert closed.expected_profit == pytest.approx(curve.max_value, rel=1e-6, abs=1e-6)


def test_monte_carlo_base_case_within_three_standard_errors(demo_params):
    mean, se = oracle.monte_carlo_profit(HedgeKind.NONE, 0.0, demo_params, seed=3)
    # (50 - s) d with s ~ U(0, 200), d ~ U(0, 100): variance 5833.33 * 3333.33 - 2500^2
    sd = math.sqrt((10000.0 / 3.0 + 2500.0) * 10000.0 / 3.0 - 2500.0 ** 2)
    assert se == pytest.approx(sd / math.sqrt(MC_DEFAULT_DRAWS), rel=0.01)
    assert abs(mean - hedging.base_profit(demo_params)) <= 3.0 * se


def test_monte_carlo_is_deterministic_across_worker_counts(demo_params, demo_terms):
    one = oracle.monte_carlo_profit(HedgeKind.CALL, 84.375, demo_params, demo_terms[1], n=300_000, seed=5, workers=1)
    four = oracle.monte_carlo_profit(HedgeKind.CALL, 84.375, demo_params, demo_terms[1], n=300_000, seed=5, workers=4)
    again = oracle.monte_carlo_profit(HedgeKind.CALL, 84.375, demo_params, demo_terms[1], n=300_000, seed=5, workers=4)
    assert one == four == again


def test_monte_carlo_agrees_with_quadrature():
    rng = np.random.Generator(np.random.Philox(99))
    kinds = [HedgeKind.FORWARD, HedgeKind.CALL, HedgeKind.DEMAND_RESPONSE]
    for i in range(10):
        kind = kinds[i % 3]
        params = _random_params(rng, dr=kind is HedgeKind.DEMAND_RESPONSE)
        terms = _random_terms(kind, params, rng)
        decision = rng.uniform(0.0, 1.0) * oracle.decision_scale(kind, params, terms)
        expected = float(oracle.objective_for(kind, params, terms)(np.array([decision]))[0])
        mean, se = oracle.monte_carlo_profit(kind, decision, params, terms, n=1_000_000, seed=i)
        assert abs(mean - expected) <= 4.0 * se


def test_monte_carlo_needs_terms(demo_params):
    with pytest.raises(ValueError):
        oracle.monte_carlo_profit(HedgeKind.FORWARD, 10.0, demo_params, None, n=10)


def test_saddle_check_on_demo(demo_params, demo_terms):
    fwd, call, dr = demo_terms
    for pair in PortfolioPair:
        report = oracle.pairwise_saddle_check(pair, demo_params, fwd, call, dr)
        assert report.classification in (Classification.SADDLE, Classification.NO_INTERIOR_POINT)
    # forward + DR on the demo has the stationary point (10, 800)
    report = oracle.pairwise_saddle_check(PortfolioPair.FORWARD_DR, demo_params, fwd, call, dr)
    assert report.classification is Classification.SADDLE
    assert report.stationary_point == pytest.approx((10.0, 800.0), rel=1e-3)
    assert report.det < 0


def test_forward_dr_saddle_with_interior_point(demo_params):
    report = oracle.pairwise_saddle_check(PortfolioPair.FORWARD_DR, demo_params, ForwardTerms(60.0), None, DrTerms(0.05))
    assert report.classification is Classification.SADDLE
    assert report.stationary_point == pytest.approx((20.0, 400.0), rel=1e-3)


def test_forward_call_interior_point_is_a_maximum(demo_params):
    # lambda_F - P = 30 lies below E[min(lambda_s, lambda_C)] = 36, so both volumes are interior
    report = oracle.pairwise_saddle_check(PortfolioPair.FORWARD_CALL, demo_params, ForwardTerms(40.0),
                                          CallTerms(40.0, 10.0), None)
    assert report.classification is Classification.MAX
    q_f, q_c = report.stationary_point
    assert q_f == pytest.approx(100.0 / 6.0, rel=1e-3)
    assert q_f + q_c == pytest.approx(84.375, rel=1e-3)


def test_call_dr_hessian_sign_follows_effective_strike():
    # det H = alpha^2 (E[lambda_s] - c)(c - lambda_f) f(q + h) f(h) with c = E[min(lambda_s, lambda_C)]
    params = MarketParams(20.0, UniformDemand(0.0, 100.0), UniformPrice(200.0))
    call, dr = CallTerms(40.0, 10.0), DrTerms(0.05)
    report = oracle.pairwise_saddle_check(PortfolioPair.CALL_DR, params, None, call, dr)
    assert report.classification is Classification.MAX
    assert report.det > 0


def test_saddle_check_on_point_demand_is_degenerate(demo_params, demo_terms):
    params = demo_params.replace(demand=PointDemand(50.0))
    report = oracle.pairwise_saddle_check(PortfolioPair.FORWARD_CALL, params, *demo_terms)
    assert report.classification is Classification.DEGENERATE
    assert report.det == pytest.approx(0.0, abs=1e-6)


def test_saddle_check_needs_both_instruments(demo_params, demo_terms):
    with pytest.raises(ValueError):
        oracle.pairwise_saddle_check(PortfolioPair.CALL_DR, demo_params, demo_terms[0], None, demo_terms[2])


def test_pairwise_classification_matches_hessian_sign():
    # uniform demand on [0, d_max]: FC det >= 0, FD points are saddles,
    # CD points saddles exactly when lambda_f exceeds E[min(lambda_s, lambda_C)]
    rng = np.random.Generator(np.random.Philox(31))
    checked = 0
    for _ in range(10):
        params = MarketParams(rng.uniform(30.0, 70.0), UniformDemand(0.0, rng.uniform(50.0, 200.0)),
                              UniformPrice(rng.uniform(150.0, 300.0)))
        call = CallTerms(rng.uniform(30.0, 80.0), rng.uniform(2.0, 15.0))
        strike_cost = hedging.effective_strike(params, call)
        if abs(params.lambda_f - strike_cost) < 5.0:
            continue
        fwd, dr = ForwardTerms(rng.uniform(30.0, 90.0)), DrTerms(rng.uniform(0.03, 0.2))
        expected = {
            PortfolioPair.FORWARD_CALL: (Classification.MAX, Classification.DEGENERATE),
            PortfolioPair.FORWARD_DR: (Classification.SADDLE,),
            PortfolioPair.CALL_DR: (Classification.SADDLE,) if params.lambda_f > strike_cost else (Classification.MAX,),
        }
        for pair, labels in expected.items():
            report = oracle.pairwise_saddle_check(pair, params, fwd, call, dr)
            if report.classification is Classification.NO_INTERIOR_POINT:
                continue
            assert report.classification in labels
            checked += 1
    assert checked > 0


@pytest.mark.parametrize('kind', [HedgeKind.FORWARD, HedgeKind.CALL, HedgeKind.DEMAND_RESPONSE])
def test_objective_is_concave_around_closed_form_optimum(kind):
    rng = np.random.Generator(np.random.Philox(77))
    for _ in range(SETS_PER_INSTRUMENT):
        params = _random_params(rng, dr=kind is HedgeKind.DEMAND_RESPONSE)
        terms = _random_terms(kind, params, rng)
        closed = hedging.optimize(params, terms)
        objective = oracle.objective_for(kind, params, terms)
        h = 1e-3 * oracle.decision_scale(kind, params, terms)
        center = max(closed.decision, h)
        left, mid, right = objective(np.array([center - h, center, center + h]))
        assert left - 2.0 * mid + right <= 1e-8 * max(1.0, abs(mid))
        assert max(left, right) <= mid + 1e-8 * max(1.0, abs(mid))


def test_closed_forms_hold_with_tied_demand_samples(demo_params, demo_terms):
    # repeated meter readings put point masses at 0 and 30
    params = demo_params.replace(demand=EmpiricalDemand([0.0, 0.0, 30.0, 30.0, 30.0, 60.0, 100.0]))
    expected_decisions = (30.0, 62.5, 30.0 / 0.05)
    for terms, expected in zip(demo_terms, expected_decisions):
        closed = hedging.optimize(params, terms)
        assert closed.decision == pytest.approx(expected)
        objective = oracle.objective_for(closed.kind, params, terms)
        step = 1e-2 * oracle.decision_scale(closed.kind, params, terms)
        left, mid, right = objective(np.array([closed.decision - step, closed.decision, closed.decision + step]))
        assert mid == pytest.approx(closed.expected_profit, rel=1e-6)
        assert left < mid and right < mid
        curve = oracle.oracle_decision(closed.kind, params, terms)
        assert curve.max_value == pytest.approx(closed.expected_profit, rel=1e-4)
        assert hedging.profit_via_cvar(params, terms) == pytest.approx(closed.expected_profit, rel=1e-9)
