"""Numerical oracles for the hedging closed forms.

The expected-profit functions integrate the raw profit expressions against
the demand density with scipy quadrature and never call the closed forms in
``lsehedge.services.hedging``. Monte Carlo draws use a counter-based Philox
stream per fixed-size chunk, so results do not depend on the worker count.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import logging
import math

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.optimize import minimize_scalar, root

from lsehedge.core.data import (
    ARGMAX_GRID_POINTS,
    ARGMAX_XTOL,
    DEFAULT_SEED,
    FD_STEP,
    MC_CHUNK_SIZE,
    MC_DEFAULT_DRAWS,
    QUAD_EPSABS,
    QUAD_EPSREL,
    QUAD_LIMIT,
    WORKERS,
)
from lsehedge.core.models import (
    CallTerms,
    Classification,
    DrTerms,
    ForwardTerms,
    HedgeKind,
    MarketParams,
    ObjectiveCurve,
    PortfolioPair,
    SaddleReport,
)

logger = logging.getLogger(__name__)


def _as_output(values, like):
    if np.ndim(like) == 0:
        return float(np.asarray(values).reshape(()))
    return np.asarray(values, dtype=float)


def _check_decision(x, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f'{what} must be finite and >= 0')
    return arr


def _atom_moments(demand, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    locs, masses = demand.atoms()
    if locs.size == 0:
        zero = np.zeros_like(t)
        return zero, zero, zero
    a, m, tt = locs[None, :], masses[None, :], t[:, None]
    below = np.sum(np.where(a <= tt, a * m, 0.0), axis=1)
    mass = np.sum(np.where(a > tt, m, 0.0), axis=1)
    excess = np.sum(np.maximum(a - tt, 0.0) * m, axis=1)
    return below, mass, excess


def _split_moments(demand, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per threshold t: (integral of x dF up to t, mass above t, E[(d - t)+]).

    Point masses are summed exactly. For the continuous part each segment
    [lo, t] and [t, hi] is mapped onto [0, 1] so one quad_vec call integrates
    all thresholds at once with no kink inside the domain.
    """
    shape = np.shape(t)
    t = np.asarray(t, dtype=float).ravel()
    below, mass, excess = _atom_moments(demand, t)
    if not demand.has_density:
        return below.reshape(shape), mass.reshape(shape), excess.reshape(shape)
    lo, hi = demand.d_min, demand.upper_limit()
    tc = np.clip(t, lo, hi)
    width_below = tc - lo
    width_above = hi - tc
    n = tc.size

    def integrand(u):
        x_low = lo + u * width_below
        x_up = tc + u * width_above
        f_low = np.asarray(demand.density(x_low))
        f_up = np.asarray(demand.density(x_up))
        return np.concatenate([
            width_below * x_low * f_low,
            width_above * f_up,
            width_above * (x_up - tc) * f_up,
        ])

    values, _ = quad_vec(integrand, 0.0, 1.0, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, norm='max')
    c_below, c_mass, c_excess = values[:n], values[n:2 * n], values[2 * n:]
    # thresholds under d_min: the whole continuous part sits above t
    c_excess = c_excess + (tc - t) * c_mass
    return ((below + c_below).reshape(shape), (mass + c_mass).reshape(shape),
            (excess + c_excess).reshape(shape))


def stop_loss_quad(demand, t):
    """E[(d - t)+] by quadrature."""
    _, _, excess = _split_moments(demand, np.atleast_1d(np.asarray(t, dtype=float)))
    return _as_output(excess, t)


def _expected_min_price(price, strike: float) -> float:
    """E[min(lambda_s, strike)] as the integral of 1 - G over [0, strike]; price atoms need no special case."""
    upper = min(strike, price.upper_limit())
    body, _ = quad(lambda y: 1.0 - float(price.cdf(y)), 0.0, upper,
                   epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    # past the upper limit only the truncated tail is left
    return body + max(strike - upper, 0.0) * (1.0 - float(price.cdf(upper)))


def expected_profit_forward(q, params: MarketParams, terms: ForwardTerms):
    """-q lambda_F + lambda_f integral_0^q x f + lambda_f q (1 - F(q)) + (lambda_f - E[lambda_s]) E[(d - q)+]."""
    qs = _check_decision(q, 'forward volume')
    below, mass, excess = _split_moments(params.demand, qs)
    lam_f = params.lambda_f
    values = (-qs * terms.lambda_F + lam_f * below + lam_f * qs * mass
              + (lam_f - params.price.mean()) * excess)
    return _as_output(values, q)


def expected_profit_call(q, params: MarketParams, terms: CallTerms):
    """Expectation of the call-option profit: the first q units cost min(lambda_s, lambda_C), the rest lambda_s."""
    qs = _check_decision(q, 'call volume')
    below, mass, excess = _split_moments(params.demand, qs)
    covered = below + qs * mass
    strike_cost = _expected_min_price(params.price, terms.lambda_C)
    lam_f = params.lambda_f
    values = (-terms.premium * qs + (lam_f - strike_cost) * covered
              + (lam_f - params.price.mean()) * excess)
    return _as_output(values, q)


def shifted_demand_mean(demand, shift):
    """E[max(d - h, d_min)]: the shifted law keeps the displaced mass at d_min."""
    h = np.atleast_1d(np.asarray(shift, dtype=float))
    _, _, excess = _split_moments(demand, demand.d_min + h)
    return _as_output(demand.d_min + excess, shift)


def expected_profit_dr(r, params: MarketParams, terms: DrTerms):
    """(lambda_f - E[lambda_s]) E[d(r)] - r with d(r) = max(d - alpha r, d_min)."""
    rs = _check_decision(r, 'reward')
    shifted = np.atleast_1d(shifted_demand_mean(params.demand, terms.shift(rs)))
    values = (params.lambda_f - params.price.mean()) * shifted - rs
    return _as_output(values, r)


def objective_for(kind: HedgeKind, params: MarketParams, terms=None) -> Callable:
    if kind is HedgeKind.FORWARD:
        return lambda x: expected_profit_forward(x, params, terms)
    if kind is HedgeKind.CALL:
        return lambda x: expected_profit_call(x, params, terms)
    if kind is HedgeKind.DEMAND_RESPONSE:
        return lambda x: expected_profit_dr(x, params, terms)
    raise ValueError(f'no objective for kind {kind}')


def decision_scale(kind: HedgeKind, params: MarketParams, terms=None) -> float:
    """Natural upper end of the decision range: d_max for volumes, d_max / alpha for rewards."""
    top = params.demand.upper_limit()
    if kind is HedgeKind.DEMAND_RESPONSE:
        return top / terms.alpha_elastic
    return top


def numeric_argmax(objective: Callable, lo: float, hi: float,
                   grid_points: int = ARGMAX_GRID_POINTS) -> ObjectiveCurve:
    """Coarse grid followed by bounded Brent refinement inside the best grid cell.

    ``objective`` must accept a numpy array. ``at_endpoint`` is set when the
    maximum sits on lo or hi.
    """
    if not lo < hi:
        raise ValueError(f'need lo < hi, got ({lo}, {hi})')
    grid = np.linspace(lo, hi, max(int(grid_points), 3))
    values = np.asarray(objective(grid), dtype=float)
    k = int(np.argmax(values))
    best_x, best_value = float(grid[k]), float(values[k])
    left = grid[max(k - 1, 0)]
    right = grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda x: -float(objective(np.array([x]))[0]), bounds=(left, right),
                          method='bounded', options={'xatol': ARGMAX_XTOL * (hi - lo)})
    if res.success and -res.fun > best_value:
        best_x, best_value = float(res.x), float(-res.fun)
    tol = ARGMAX_XTOL * (hi - lo)
    at_endpoint = best_x - lo <= tol or hi - best_x <= tol
    if at_endpoint:
        logger.debug('numeric_argmax: maximum at bracket endpoint x=%s', best_x)
    return ObjectiveCurve(decision_grid=grid, profit_values=values, argmax=best_x,
                          max_value=best_value, at_endpoint=at_endpoint)


def oracle_decision(kind: HedgeKind, params: MarketParams, terms=None) -> ObjectiveCurve:
    """numeric_argmax of the quadrature objective over [0, decision scale]."""
    return numeric_argmax(objective_for(kind, params, terms), 0.0, decision_scale(kind, params, terms))


def _realized_profit(kind: HedgeKind, decision: float, params: MarketParams, terms, d, s):
    lam_f = params.lambda_f
    if kind is HedgeKind.NONE:
        return (lam_f - s) * d
    if kind is HedgeKind.FORWARD:
        return lam_f * d - terms.lambda_F * decision - s * np.maximum(d - decision, 0.0)
    if kind is HedgeKind.CALL:
        return (lam_f * d - terms.premium * decision - np.minimum(s, terms.lambda_C) * np.minimum(d, decision)
                - s * np.maximum(d - decision, 0.0))
    shifted = np.maximum(d - terms.shift(decision), params.demand.d_min)
    return (lam_f - s) * shifted - decision


def _chunk_stats(kind, decision, params, terms, seed: int, index: int, size: int) -> Tuple[int, float, float]:
    try:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))
        d = np.asarray(params.demand.sample(rng.random(size)), dtype=float)
        s = np.asarray(params.price.sample(rng.random(size)), dtype=float)
        profit = _realized_profit(kind, decision, params, terms, d, s)
        mean = float(profit.mean())
        return size, mean, float(np.sum((profit - mean) ** 2))
    except Exception:
        logger.exception('Monte Carlo chunk %d failed', index)
        raise


def monte_carlo_profit(kind: HedgeKind, decision: float, params: MarketParams, terms=None,
                       n: int = MC_DEFAULT_DRAWS, seed: int = DEFAULT_SEED,
                       workers: Optional[int] = None) -> Tuple[float, float]:
    """(sample mean, standard error) of the realized profit over n (d, lambda_s) draws."""
    if n < 1:
        raise ValueError(f'n must be >= 1, got {n}')
    kind = HedgeKind(kind)
    if kind is not HedgeKind.NONE and terms is None:
        raise ValueError(f'{kind.value} needs instrument terms')
    sizes = [min(MC_CHUNK_SIZE, n - start) for start in range(0, n, MC_CHUNK_SIZE)]
    with ThreadPoolExecutor(max_workers=workers or WORKERS) as executor:
        parts = list(executor.map(
            lambda item: _chunk_stats(kind, decision, params, terms, seed, item[0], item[1]),
            enumerate(sizes)))
    # pairwise merge of (count, mean, M2) in chunk order
    count, mean, m2 = 0, 0.0, 0.0
    for c, m, s2 in parts:
        total = count + c
        delta = m - mean
        mean += delta * c / total
        m2 += s2 + delta * delta * count * c / total
        count = total
    if count < 2:
        return mean, 0.0
    return mean, math.sqrt(m2 / (count - 1) / count)


def pairwise_objective(pair: PortfolioPair, params: MarketParams, fwd: Optional[ForwardTerms] = None,
                       call: Optional[CallTerms] = None, dr: Optional[DrTerms] = None) -> Callable:
    """Expected profit of a two-instrument portfolio as a function of (x, y).

    ForwardCall: (forward volume, call volume), the call covering demand above
    the forward volume. ForwardDr: (forward volume, reward). CallDr: (call
    volume, reward). Both arguments may be arrays of the same shape.
    """
    pair = PortfolioPair(pair)
    demand = params.demand
    lam_f = params.lambda_f
    mean_spot = params.price.mean()
    d_min = demand.d_min

    def stop_loss(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(stop_loss_quad(demand, t.ravel())).reshape(t.shape)

    def shifted_terms(q, h):
        # E[d'] and E[(d' - q)+] for d' = max(d - h, d_min)
        expected = d_min + stop_loss(d_min + h)
        over = stop_loss(np.maximum(q, d_min) + h) + np.maximum(d_min - q, 0.0)
        return expected, over

    if pair is PortfolioPair.FORWARD_CALL:
        strike_cost = _expected_min_price(params.price, call.lambda_C)
        expected_demand = demand.mean()

        def objective(q_f, q_c):
            q_f = np.asarray(q_f, dtype=float)
            q_c = np.asarray(q_c, dtype=float)
            above_forward = stop_loss(q_f)
            above_both = stop_loss(q_f + q_c)
            return (lam_f * expected_demand - fwd.lambda_F * q_f - call.premium * q_c
                    - strike_cost * (above_forward - above_both) - mean_spot * above_both)
        return objective

    if pair is PortfolioPair.FORWARD_DR:
        def objective(q_f, r):
            q_f = np.asarray(q_f, dtype=float)
            r = np.asarray(r, dtype=float)
            expected, over = shifted_terms(q_f, dr.shift(r))
            return lam_f * expected - r - fwd.lambda_F * q_f - mean_spot * over
        return objective

    strike_cost = _expected_min_price(params.price, call.lambda_C)

    def objective(q_c, r):
        q_c = np.asarray(q_c, dtype=float)
        r = np.asarray(r, dtype=float)
        expected, over = shifted_terms(q_c, dr.shift(r))
        return (lam_f - strike_cost) * expected - r - call.premium * q_c - (mean_spot - strike_cost) * over
    return objective


def pair_scales(pair: PortfolioPair, params: MarketParams, dr: Optional[DrTerms] = None) -> Tuple[float, float]:
    top = params.demand.upper_limit()
    if PortfolioPair(pair) is PortfolioPair.FORWARD_CALL:
        return top, top
    return top, top / dr.alpha_elastic


def _hessian(objective, x: float, y: float, hx: float, hy: float) -> np.ndarray:
    xs = np.array([x + hx, x, x - hx, x, x, x + hx, x + hx, x - hx, x - hx])
    ys = np.array([y, y, y, y + hy, y - hy, y + hy, y - hy, y + hy, y - hy])
    v = np.asarray(objective(xs, ys), dtype=float)
    h_xx = (v[0] - 2.0 * v[1] + v[2]) / hx ** 2
    h_yy = (v[3] - 2.0 * v[1] + v[4]) / hy ** 2
    h_xy = (v[5] - v[6] - v[7] + v[8]) / (4.0 * hx * hy)
    return np.array([[h_xx, h_xy], [h_xy, h_yy]])


def classify_hessian(hessian: np.ndarray) -> Tuple[float, Classification]:
    det = float(np.linalg.det(hessian))
    tol = 1e-9 * (abs(hessian[0, 0] * hessian[1, 1]) + hessian[0, 1] ** 2) + 1e-15
    if det < -tol:
        return det, Classification.SADDLE
    if det > tol:
        return det, Classification.MAX if np.trace(hessian) < 0 else Classification.MIN
    return det, Classification.DEGENERATE


def _stationary_points(objective, scales: Tuple[float, float], profit_scale: float) -> List[Tuple[float, float]]:
    sx, sy = scales
    hx, hy = FD_STEP * sx, FD_STEP * sy

    def gradient(z):
        x, y = z
        v = np.asarray(objective(np.array([x + hx, x - hx, x, x]), np.array([y, y, y + hy, y - hy])), dtype=float)
        return np.array([(v[0] - v[1]) / (2 * hx), (v[2] - v[3]) / (2 * hy)])

    found: List[Tuple[float, float]] = []
    margin = 2.0 * FD_STEP
    for fx in np.linspace(0.1, 0.9, 5):
        for fy in np.linspace(0.1, 0.9, 5):
            sol = root(gradient, np.array([fx * sx, fy * sy]), method='hybr')
            if not sol.success:
                continue
            x, y = (float(v) for v in sol.x)
            if not (margin * sx < x < (1 - margin) * sx and margin * sy < y < (1 - margin) * sy):
                continue
            g = gradient(sol.x)
            if abs(g[0]) * sx + abs(g[1]) * sy > 1e-6 * profit_scale:
                continue
            if any(abs(x - px) <= 1e-4 * sx and abs(y - py) <= 1e-4 * sy for px, py in found):
                continue
            found.append((x, y))
    return sorted(found)


def pairwise_saddle_check(pair: PortfolioPair, params: MarketParams, fwd: Optional[ForwardTerms] = None,
                          call: Optional[CallTerms] = None, dr: Optional[DrTerms] = None) -> SaddleReport:
    """Locate interior stationary points of a two-instrument portfolio and classify them by the Hessian.

    Gradients and Hessians use central differences with step FD_STEP times
    each axis scale. A point-mass demand gives a piecewise-linear surface and
    is reported Degenerate at a fixed interior point.
    """
    pair = PortfolioPair(pair)
    needed = {
        PortfolioPair.FORWARD_CALL: (fwd, call),
        PortfolioPair.FORWARD_DR: (fwd, dr),
        PortfolioPair.CALL_DR: (call, dr),
    }[pair]
    if any(terms is None for terms in needed):
        raise ValueError(f'{pair.value} needs both instruments configured')
    objective = pairwise_objective(pair, params, fwd, call, dr)
    scales = pair_scales(pair, params, dr)
    hx, hy = FD_STEP * scales[0], FD_STEP * scales[1]

    if not params.demand.has_density:
        point = (0.3 * scales[0], 0.4 * scales[1])
        hessian = _hessian(objective, point[0], point[1], hx, hy)
        return SaddleReport(pair, point, tuple(map(tuple, hessian.tolist())), float(np.linalg.det(hessian)),
                            Classification.DEGENERATE, 0)

    profit_scale = max(abs(float(objective(np.array([0.0]), np.array([0.0]))[0])), 1.0)
    points = _stationary_points(objective, scales, profit_scale)
    if not points:
        logger.info('%s: no interior stationary point', pair.value)
        return SaddleReport(pair, None, None, None, Classification.NO_INTERIOR_POINT, 0)
    reports = []
    for x, y in points:
        hessian = _hessian(objective, x, y, hx, hy)
        det, label = classify_hessian(hessian)
        reports.append(((x, y), hessian, det, label))
    # a reported Max takes precedence so it can never hide behind a saddle
    reports.sort(key=lambda item: item[3] is not Classification.MAX)
    point, hessian, det, label = reports[0]
    logger.debug('%s: %d stationary point(s), first %s classified %s', pair.value, len(points), point, label.value)
    return SaddleReport(pair, point, tuple(map(tuple, hessian.tolist())), det, label, len(points))
