"""Decision boundaries of equal optimal expected profit between two instruments.

The ``*_closed`` functions hold for uniform demand on [0, d_max] and a spot
price uniform on [0, 2 E[lambda_s]]. ``numeric_boundary`` works with any laws:
it roots the profit difference of the closed-form optima with a safeguarded
Newton iteration. Parameter names understood on the axes:

    lambda_f       retail tariff (USD/MWh)
    mean_spot      E[lambda_s]; the price law is rescaled with ``with_mean``
    lambda_F       forward price
    lambda_C       call strike
    premium        call premium
    alpha_elastic  DR elasticity (MWh/USD)
    inv_alpha      1 / alpha_elastic (USD/MWh)
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, Optional, Tuple

import logging
import math

import numpy as np

from lsehedge.core.data import BOUNDARY_FTOL, NEWTON_MAX_ITER, NEWTON_STEP, NEWTON_XTOL, WORKERS
from lsehedge.core.distributions import UniformPrice
from lsehedge.core.errors import NoCrossingError, NumericalError
from lsehedge.core.models import (
    AxisSpec,
    BoundaryPair,
    BoundaryQuery,
    BoundarySurface,
    CallTerms,
    DrTerms,
    ForwardTerms,
    MarketParams,
)
from lsehedge.services import hedging

logger = logging.getLogger(__name__)

MARKET_AXES = ('lambda_f', 'mean_spot')
DR_AXES = ('alpha_elastic', 'inv_alpha')
CALL_AXES = ('lambda_C', 'premium')
PAIR_AXES = {
    BoundaryPair.FORWARD_VS_CALL: MARKET_AXES + ('lambda_F',) + CALL_AXES,
    BoundaryPair.DR_VS_FORWARD: MARKET_AXES + ('lambda_F',) + DR_AXES,
    BoundaryPair.DR_VS_CALL: MARKET_AXES + CALL_AXES + DR_AXES,
}


def _uniform_call_value(mean_spot: float, lambda_c: float) -> float:
    """K for a price uniform on [0, 2 mean_spot]."""
    price = UniformPrice(2.0 * mean_spot)
    return mean_spot - lambda_c + price.partial_integral(lambda_c)


def forward_vs_call_closed(mean_spot: float, lambda_C: float, premium: float) -> float:
    """Largest forward price at which the forward is still preferred over the call.

    E[lambda_s] - (K - P) sqrt(E[lambda_s] / K).
    """
    if not mean_spot > 0:
        raise ValueError(f'mean_spot must be > 0, got {mean_spot}')
    k = _uniform_call_value(mean_spot, lambda_C)
    if not k > 0:
        raise ValueError(f'square-root argument E[lambda_s] / K is not positive (K = {k})')
    return mean_spot - (k - premium) * math.sqrt(mean_spot / k)


def dr_vs_forward_closed(mean_spot: float, lambda_f: float, lambda_F: float) -> float:
    """Largest 1/alpha at which DR is preferred over the forward.

    (E[lambda_s] - lambda_f) (1 - (E[lambda_s] - lambda_F) / sqrt(E[lambda_s] (E[lambda_s] - lambda_f))).
    """
    gap = mean_spot - lambda_f
    if not gap > 0:
        raise ValueError(f'need E[lambda_s] > lambda_f, got {mean_spot} <= {lambda_f}')
    if not mean_spot >= lambda_F:
        raise ValueError(f'need E[lambda_s] >= lambda_F, got {mean_spot} < {lambda_F}')
    return gap * (1.0 - (mean_spot - lambda_F) / math.sqrt(mean_spot * gap))


def dr_call_value(mean_spot: float, lambda_C: float, literal_l: bool = False) -> float:
    """L = E[lambda_s] - lambda_C + lambda_C^2 / (4 E[lambda_s]).

    ``literal_l`` evaluates (E[lambda_s] - lambda_C + lambda_C^2) / (4 E[lambda_s])
    instead, for comparison only.
    """
    if literal_l:
        return (mean_spot - lambda_C + lambda_C ** 2) / (4.0 * mean_spot)
    return mean_spot - lambda_C + lambda_C ** 2 / (4.0 * mean_spot)


def dr_vs_call_closed(mean_spot: float, lambda_f: float, lambda_C: float, premium: float,
                      literal_l: bool = False) -> float:
    """Largest 1/alpha at which DR is preferred over the call.

    (E[lambda_s] - lambda_f) (1 - sqrt(L / (E[lambda_s] - lambda_f)) (1 - P / L)).
    """
    gap = mean_spot - lambda_f
    if not gap > 0:
        raise ValueError(f'need E[lambda_s] > lambda_f, got {mean_spot} <= {lambda_f}')
    value = dr_call_value(mean_spot, lambda_C, literal_l=literal_l)
    if not value > premium:
        raise ValueError(f'need L > P, got L = {value}, P = {premium}')
    return gap * (1.0 - math.sqrt(value / gap) * (1.0 - premium / value))


def dr_profitability_bound(mean_spot: float, lambda_f: float, free_axis: str = 'alpha_elastic') -> float:
    """Smallest elasticity at which DR pays: 1 / (E[lambda_s] - lambda_f); as 1/alpha the bound is the gap itself."""
    gap = mean_spot - lambda_f
    if free_axis == 'inv_alpha':
        return gap if gap > 0 else math.nan
    return 1.0 / gap if gap > 0 else math.nan


def apply_values(params: MarketParams, fwd: Optional[ForwardTerms], call: Optional[CallTerms],
                 dr: Optional[DrTerms], values: Dict[str, float]):
    """Copy of (params, fwd, call, dr) with named parameters overridden.

    Without configured call terms both lambda_C and premium must be given.
    """
    if call is None and any(name in values for name in CALL_AXES):
        missing = [name for name in CALL_AXES if name not in values]
        if missing:
            raise ValueError(f'no call terms configured and {", ".join(missing)} not given')
        call = CallTerms(values['lambda_C'], values['premium'])
    for name, value in values.items():
        if name == 'lambda_f':
            params = params.replace(lambda_f=value)
        elif name == 'mean_spot':
            params = params.replace(price=params.price.with_mean(value))
        elif name == 'lambda_F':
            fwd = ForwardTerms(value)
        elif name in CALL_AXES:
            call = replace(call, **{name: value})
        elif name == 'alpha_elastic':
            dr = DrTerms(value)
        elif name == 'inv_alpha':
            dr = DrTerms(1.0 / value)
        else:
            raise ValueError(f'unknown parameter {name!r}')
    return params, fwd, call, dr


def _check_axis(pair: BoundaryPair, name: str):
    if name not in PAIR_AXES[pair]:
        raise ValueError(f'parameter {name!r} does not apply to {pair.value}; '
                         f'expected one of {", ".join(PAIR_AXES[pair])}')


def profit_gap(pair: BoundaryPair, params: MarketParams, fwd: Optional[ForwardTerms],
               call: Optional[CallTerms], dr: Optional[DrTerms]) -> float:
    """Optimal profit of the first-named instrument minus that of the second."""
    pair = BoundaryPair(pair)
    if pair is BoundaryPair.FORWARD_VS_CALL:
        first, second = hedging.optimal_forward(params, fwd), hedging.optimal_call(params, call)
    elif pair is BoundaryPair.DR_VS_FORWARD:
        first, second = hedging.optimal_dr(params, dr), hedging.optimal_forward(params, fwd)
    else:
        first, second = hedging.optimal_dr(params, dr), hedging.optimal_call(params, call)
    return first.expected_profit - second.expected_profit


def _safe_newton(fn, lo: float, hi: float, f_lo: float, f_hi: float, ftol: float) -> float:
    """Newton on a sign-changing bracket; bisect whenever the step leaves it or stalls."""
    if f_lo > 0:
        lo, hi, f_lo, f_hi = hi, lo, f_hi, f_lo
    # now fn(lo) < 0 < fn(hi), lo may exceed hi
    left, right = min(lo, hi), max(lo, hi)
    width = right - left
    step = NEWTON_STEP * width
    xtol = NEWTON_XTOL * max(width, 1.0)
    x = 0.5 * (lo + hi)
    dx_old = dx = width
    f = fn(x)
    for _ in range(NEWTON_MAX_ITER):
        if abs(f) <= ftol:
            return x
        x_up, x_down = min(x + step, right), max(x - step, left)
        df = (fn(x_up) - fn(x_down)) / (x_up - x_down)
        out_of_bracket = ((x - hi) * df - f) * ((x - lo) * df - f) >= 0.0
        if df == 0.0 or out_of_bracket or abs(2.0 * f) > abs(dx_old * df):
            dx_old = dx
            dx = 0.5 * (hi - lo)
            x = lo + dx
        else:
            dx_old = dx
            dx = f / df
            x = x - dx
        if abs(dx) <= xtol:
            return x
        f = fn(x)
        if f < 0:
            lo = x
        else:
            hi = x
    raise NumericalError(f'boundary search did not converge in {NEWTON_MAX_ITER} iterations')


def _plateau_edge(is_tie, lo: float, hi: float, from_low: bool) -> float:
    """Bisect for the end of the tie region that touches ``lo`` (or ``hi``)."""
    inside, outside = (lo, hi) if from_low else (hi, lo)
    xtol = NEWTON_XTOL * max(abs(hi - lo), 1.0)
    for _ in range(NEWTON_MAX_ITER):
        if abs(outside - inside) <= xtol:
            break
        mid = 0.5 * (inside + outside)
        if is_tie(mid):
            inside = mid
        else:
            outside = mid
    return inside


def numeric_boundary(query: BoundaryQuery, params: MarketParams, fwd: Optional[ForwardTerms] = None,
                     call: Optional[CallTerms] = None, dr: Optional[DrTerms] = None) -> float:
    """Value of the free parameter at which both instruments' optimal profits agree.

    Raises NoCrossingError when the difference keeps one sign on the search interval.
    """
    pair = BoundaryPair(query.pair)
    _check_axis(pair, query.free_axis)
    for name in query.fixed:
        _check_axis(pair, name)
    lo, hi = query.search_interval
    fixed = dict(query.fixed)
    if call is None and query.free_axis in CALL_AXES:
        # call terms are built from the fixed value and the free one together
        fixed[query.free_axis] = lo
    params, fwd, call, dr = apply_values(params, fwd, call, dr, fixed)

    def gap(x: float) -> float:
        scenario = apply_values(params, fwd, call, dr, {query.free_axis: x})
        return profit_gap(pair, *scenario)

    ftol = BOUNDARY_FTOL * max(abs(hedging.base_profit(params)), 1.0)
    f_lo, f_hi = gap(lo), gap(hi)
    tie_lo, tie_hi = abs(f_lo) <= ftol, abs(f_hi) <= ftol
    if tie_lo and tie_hi:
        raise NoCrossingError(f'{pair.value}: profits tie over all of {query.free_axis} in [{lo}, {hi}]')
    if tie_lo or tie_hi:
        # a tie at an endpoint may extend into the interval; the boundary is where it ends
        edge = _plateau_edge(lambda x: abs(gap(x)) <= ftol, lo, hi, from_low=tie_lo)
        logger.debug('%s tie plateau ends at %s=%s', pair.value, query.free_axis, edge)
        return edge
    if f_lo * f_hi > 0:
        raise NoCrossingError(f'{pair.value}: profit difference keeps sign {np.sign(f_lo):+.0f} on '
                              f'{query.free_axis} in [{lo}, {hi}]')
    root = _safe_newton(gap, lo, hi, f_lo, f_hi, ftol)
    logger.debug('%s boundary at %s=%s (fixed %s)', pair.value, query.free_axis, root, query.fixed)
    return root


def _surface_cell(pair, free_axis, interval, fixed, params, fwd, call, dr) -> Tuple[float, bool]:
    query = BoundaryQuery(pair=pair, free_axis=free_axis, fixed=fixed, search_interval=interval)
    try:
        return numeric_boundary(query, params, fwd, call, dr), True
    except NoCrossingError as exc:
        logger.warning('no crossing at %s: %s', fixed, exc.message)
        return math.nan, False
    except Exception:
        logger.exception('boundary cell %s failed', fixed)
        raise


def boundary_surface(pair: BoundaryPair, axis1: AxisSpec, axis2: AxisSpec, free_axis: str,
                     search_interval: Tuple[float, float], params: MarketParams,
                     fwd: Optional[ForwardTerms] = None, call: Optional[CallTerms] = None,
                     dr: Optional[DrTerms] = None, workers: Optional[int] = None) -> BoundarySurface:
    """numeric_boundary on every (axis1, axis2) cell; cells are independent.

    DrVsForward surfaces over an elasticity axis also carry the DR
    profitability bound per cell, in the units of the free axis.
    """
    pair = BoundaryPair(pair)
    for name in (axis1.name, axis2.name, free_axis):
        _check_axis(pair, name)
    if len({axis1.name, axis2.name, free_axis}) != 3:
        raise ValueError('axis1, axis2 and the free axis must be distinct parameters')
    g1, g2 = axis1.grid(), axis2.grid()
    cells = [(i, j) for i in range(g1.size) for j in range(g2.size)]

    def run(cell):
        i, j = cell
        fixed = {axis1.name: float(g1[i]), axis2.name: float(g2[j])}
        return _surface_cell(pair, free_axis, search_interval, fixed, params, fwd, call, dr)

    with ThreadPoolExecutor(max_workers=workers or WORKERS) as executor:
        results = list(executor.map(run, cells))
    values = np.full((g1.size, g2.size), math.nan)
    crossed = np.zeros((g1.size, g2.size), dtype=bool)
    for (i, j), (value, ok) in zip(cells, results):
        values[i, j] = value
        crossed[i, j] = ok

    bound = None
    if pair is BoundaryPair.DR_VS_FORWARD and free_axis in DR_AXES:
        bound = np.empty_like(values)
        for i, j in cells:
            cell_params, _, _, _ = apply_values(params, fwd, call, dr,
                                                {axis1.name: float(g1[i]), axis2.name: float(g2[j])})
            bound[i, j] = dr_profitability_bound(cell_params.price.mean(), cell_params.lambda_f, free_axis)
    logger.info('%s surface: %d of %d cells crossed', pair.value, int(crossed.sum()), crossed.size)
    return BoundarySurface(pair=pair, free_axis=free_axis, axis1=axis1, axis2=axis2,
                           boundary_values=values, crossed=crossed, lower_bound_surface=bound)
