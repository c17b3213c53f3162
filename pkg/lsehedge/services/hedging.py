"""Closed-form optimal hedges for a load-serving entity.

Every optimizer takes a MarketParams (tariff, demand law F, spot-price law G)
plus the instrument terms and returns a HedgeDecision. When an instrument's
profitability condition fails the decision falls back to no hedging with the
base-case profit, so the functions are total.
"""
from typing import Iterable, Optional, Tuple, Union

import logging
import math

from lsehedge.core.distributions import (
    PointDemand,
    UniformDemand,
    cvar,
    price_partial_integral,
)
from lsehedge.core.models import (
    CallTerms,
    DrTerms,
    ForwardTerms,
    HedgeDecision,
    HedgeKind,
    MarketParams,
)

logger = logging.getLogger(__name__)

Terms = Union[ForwardTerms, CallTerms, DrTerms]

_KIND_BY_TERMS = {ForwardTerms: HedgeKind.FORWARD, CallTerms: HedgeKind.CALL, DrTerms: HedgeKind.DEMAND_RESPONSE}
# tie-break order for best_decision
_PREFERENCE = (HedgeKind.NONE, HedgeKind.FORWARD, HedgeKind.CALL, HedgeKind.DEMAND_RESPONSE)


def _kind_of(terms: Terms, kind: Optional[HedgeKind] = None) -> HedgeKind:
    inferred = _KIND_BY_TERMS.get(type(terms))
    if inferred is None:
        raise ValueError(f'unsupported instrument terms: {terms!r}')
    if kind is not None and HedgeKind(kind) is not inferred:
        raise ValueError(f'kind {kind} does not match terms {type(terms).__name__}')
    return inferred


def _no_hedge(params: MarketParams) -> HedgeDecision:
    return HedgeDecision(HedgeKind.NONE, 0.0, base_profit(params))


def base_profit(params: MarketParams) -> float:
    """(lambda_f - E[lambda_s]) E[d]."""
    return (params.lambda_f - params.price.mean()) * params.demand.mean()


def effective_strike(params: MarketParams, terms: CallTerms) -> float:
    """E[min(lambda_s, lambda_C)] = lambda_C - integral of G over [0, lambda_C]."""
    return terms.lambda_C - price_partial_integral(params.price, terms.lambda_C)


def call_value_per_unit(params: MarketParams, terms: CallTerms) -> float:
    """K = E[lambda_s] - lambda_C + integral of G over [0, lambda_C]."""
    return params.price.mean() - effective_strike(params, terms)


def optimal_forward(params: MarketParams, terms: ForwardTerms) -> HedgeDecision:
    mean_spot = params.price.mean()
    if mean_spot <= terms.lambda_F:
        logger.debug('forward not profitable: E[lambda_s]=%s <= lambda_F=%s', mean_spot, terms.lambda_F)
        return _no_hedge(params)
    demand = params.demand
    q = float(demand.quantile(1.0 - terms.lambda_F / mean_spot))
    if demand.is_continuous:
        profit = params.lambda_f * demand.mean() - mean_spot * float(demand.tail_expectation(q))
    else:
        profit = params.lambda_f * demand.mean() - terms.lambda_F * q - mean_spot * float(demand.stop_loss(q))
    return HedgeDecision(HedgeKind.FORWARD, q, profit)


def optimal_call(params: MarketParams, terms: CallTerms) -> HedgeDecision:
    k = call_value_per_unit(params, terms)
    if k <= terms.premium:
        logger.debug('call not profitable: K=%s <= P=%s', k, terms.premium)
        return _no_hedge(params)
    demand = params.demand
    q = float(demand.quantile(1.0 - terms.premium / k))
    margin = params.lambda_f - effective_strike(params, terms)
    if demand.is_continuous:
        profit = margin * demand.mean() - k * float(demand.tail_expectation(q))
    else:
        profit = margin * demand.mean() - terms.premium * q - k * float(demand.stop_loss(q))
    return HedgeDecision(HedgeKind.CALL, q, profit)


def optimal_dr(params: MarketParams, terms: DrTerms) -> HedgeDecision:
    """Optimal reward r* for a linear demand shift h(r) = alpha r.

    The closed form works on the unshifted F; with d_min > 0 it prices the
    shifted-away mass at zero rather than at d_min.
    """
    gap = params.price.mean() - params.lambda_f
    if gap <= 0:
        logger.debug('demand response not profitable: E[lambda_s] - lambda_f = %s', gap)
        return _no_hedge(params)
    demand = params.demand
    alpha = terms.alpha_elastic
    if 1.0 / alpha >= gap:
        return HedgeDecision(HedgeKind.DEMAND_RESPONSE, 0.0, -gap * demand.mean())
    shift = float(demand.quantile(1.0 - 1.0 / (alpha * gap)))
    if demand.is_continuous:
        profit = -gap * float(demand.tail_expectation(shift))
    else:
        profit = -gap * float(demand.stop_loss(shift)) - shift / alpha
    return HedgeDecision(HedgeKind.DEMAND_RESPONSE, shift / alpha, profit)


def optimize(params: MarketParams, terms: Terms) -> HedgeDecision:
    kind = _kind_of(terms)
    if kind is HedgeKind.FORWARD:
        return optimal_forward(params, terms)
    if kind is HedgeKind.CALL:
        return optimal_call(params, terms)
    return optimal_dr(params, terms)


def _forward_level(params: MarketParams, terms: ForwardTerms) -> Optional[float]:
    return 1.0 - terms.lambda_F / params.price.mean()


def _call_level(params: MarketParams, terms: CallTerms) -> Optional[float]:
    k = call_value_per_unit(params, terms)
    if k <= 0:
        return None
    return 1.0 - terms.premium / k


def _dr_level(params: MarketParams, terms: DrTerms) -> Optional[float]:
    gap = params.price.mean() - params.lambda_f
    if gap <= 0:
        return None
    return 1.0 - 1.0 / (terms.alpha_elastic * gap)


def _valid_level(level: Optional[float]) -> Optional[float]:
    if level is None or not 0.0 <= level < 1.0:
        return None
    return level


def cvar_level(params: MarketParams, terms: Terms) -> Optional[float]:
    """Confidence level at which the instrument's optimum sits; None when not profitable."""
    kind = _kind_of(terms)
    if kind is HedgeKind.FORWARD:
        return _valid_level(_forward_level(params, terms))
    if kind is HedgeKind.CALL:
        return _valid_level(_call_level(params, terms))
    return _valid_level(_dr_level(params, terms))


def cvar_levels(params: MarketParams, fwd: Optional[ForwardTerms], call: Optional[CallTerms],
                dr: Optional[DrTerms]) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """(alpha_F, alpha_C, alpha_DR); an entry is None when the instrument is absent or unprofitable."""
    return tuple(cvar_level(params, terms) if terms is not None else None for terms in (fwd, call, dr))


def profit_via_cvar(params: MarketParams, terms: Terms, kind: Optional[HedgeKind] = None) -> float:
    """Optimal expected profit written with CVaR of demand at the instrument's level."""
    kind = _kind_of(terms, kind)
    level = cvar_level(params, terms)
    if level is None:
        raise ValueError(f'{kind.value} has no CVaR level: its profitability condition fails')
    demand_cvar = cvar(params.demand, level)
    expected_demand = params.demand.mean()
    if kind is HedgeKind.FORWARD:
        return params.lambda_f * expected_demand - terms.lambda_F * demand_cvar
    if kind is HedgeKind.CALL:
        margin = params.lambda_f - effective_strike(params, terms)
        return margin * expected_demand - terms.premium * demand_cvar
    return -demand_cvar / terms.alpha_elastic


def profit_via_dispersion(params: MarketParams, terms: Terms, kind: Optional[HedgeKind] = None) -> float:
    """Optimal expected profit for uniform demand written in d_min and the standard deviation sigma.

    A point-mass demand is accepted as the sigma = 0 limit.
    """
    kind = _kind_of(terms, kind)
    demand = params.demand
    if isinstance(demand, UniformDemand):
        sigma = demand.sigma
    elif isinstance(demand, PointDemand):
        sigma = 0.0
    else:
        raise ValueError(f'dispersion form needs uniform demand, got {demand!r}')
    level = cvar_level(params, terms)
    if level is None:
        raise ValueError(f'{kind.value} has no dispersion form: its profitability condition fails')
    d_min = demand.d_min
    spread = math.sqrt(3.0) * (1.0 - level ** 2) * sigma
    if kind is HedgeKind.FORWARD:
        return (params.lambda_f * demand.mean() - terms.lambda_F * d_min
                - params.price.mean() * spread)
    if kind is HedgeKind.CALL:
        margin = params.lambda_f - effective_strike(params, terms)
        return (margin * demand.mean() - terms.premium * d_min
                - call_value_per_unit(params, terms) * spread)
    gap = params.price.mean() - params.lambda_f
    return -d_min / terms.alpha_elastic - gap * spread


def perfect_info(d: float, params: MarketParams, terms: Terms,
                 kind: Optional[HedgeKind] = None) -> Tuple[float, float]:
    """(decision, profit) when demand is known to be exactly d."""
    if not d >= 0:
        raise ValueError(f'demand must be >= 0, got {d}')
    kind = _kind_of(terms, kind)
    if kind is HedgeKind.FORWARD:
        return d, (params.lambda_f - terms.lambda_F) * d
    if kind is HedgeKind.CALL:
        unit = params.lambda_f - effective_strike(params, terms) - terms.premium
        return d, unit * d
    reward = d / terms.alpha_elastic
    return reward, -reward


def best_decision(base: float, decisions: Iterable[HedgeDecision]) -> HedgeKind:
    """Kind with the highest expected profit; ties keep the earlier of None, Forward, Call, DemandResponse."""
    profits = {HedgeKind.NONE: base}
    for decision in decisions:
        if decision.kind is HedgeKind.NONE:
            continue
        profits[decision.kind] = decision.expected_profit
    best = HedgeKind.NONE
    for kind in _PREFERENCE:
        if kind in profits and profits[kind] > profits[best]:
            best = kind
    return best
