"""Demand and spot-price laws plus the integral functionals the optimizers consume.

Demand laws describe aggregate consumption d (MWh) with CDF F on
[d_min, d_max]; price laws describe the wholesale spot price (USD/MWh) with CDF G
on [0, inf). All objects are immutable after construction and their methods
accept scalars or numpy arrays.

Integrals written with an infinite upper limit stop at d_max for bounded laws
and at quantile(1 - TAIL_PROBABILITY) for unbounded ones.
"""
from abc import ABC, abstractmethod
from typing import Tuple

import logging
import math

import numpy as np
from scipy import special, stats
from scipy.integrate import quad
from scipy.optimize import brentq

from lsehedge.core.data import (
    QUAD_EPSABS,
    QUAD_EPSREL,
    QUAD_LIMIT,
    QUANTILE_XTOL,
    TAIL_PROBABILITY,
)

logger = logging.getLogger(__name__)

_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def _quad(fn, a: float, b: float, points=None) -> float:
    if not b > a:
        return 0.0
    value, _ = quad(fn, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, points=points)
    return value


def _scalar_or_array(values, like):
    if np.ndim(like) == 0:
        return float(np.asarray(values).reshape(()))
    return np.asarray(values, dtype=float)


class _SampleInterpolation:
    """CDF interpolating the sorted samples x_(k) at k / (n - 1).

    A run of m equal samples becomes a jump of (m - 1) / (n - 1) at that value;
    between neighbouring distinct values the CDF rises linearly by 1 / (n - 1).
    Without ties this is the plain piecewise-linear interpolation.
    """

    def __init__(self, samples, what: str):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if not np.all(np.isfinite(x)):
            raise ValueError(f'{what} samples must be finite')
        xs, counts = np.unique(x, return_counts=True)
        if xs.size < 2:
            raise ValueError(f'{what} needs at least two distinct samples')
        n = x.size
        last = np.cumsum(counts) - 1
        self.samples = x
        self.xs = xs
        self.p_hi = last / (n - 1.0)
        self.p_lo = (last - counts + 1) / (n - 1.0)
        self.atom_mass = self.p_hi - self.p_lo
        self.dens = (1.0 / (n - 1.0)) / np.diff(xs)
        # first moment up to and including the atom at each distinct value
        segment = self.dens * (xs[1:] ** 2 - xs[:-1] ** 2) / 2.0
        self.moment_hi = np.cumsum(xs * self.atom_mass + np.concatenate([[0.0], segment]))
        # integral of the CDF from xs[0] to each distinct value
        self.cdf_area = np.concatenate([[0.0], np.cumsum(np.diff(xs) * (self.p_hi[:-1] + self.p_lo[1:]) / 2.0)])

    def _segment(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.xs, x, side='right') - 1, 0, self.dens.size - 1)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self._segment(x)
        inner = self.p_hi[idx] + self.dens[idx] * (x - self.xs[idx])
        return np.where(x < self.xs[0], 0.0, np.where(x >= self.xs[-1], 1.0, inner))

    def density(self, x) -> np.ndarray:
        """Density of the continuous part; atoms are reported by ``atoms``."""
        x = np.asarray(x, dtype=float)
        inside = (x >= self.xs[0]) & (x <= self.xs[-1])
        return np.where(inside, self.dens[self._segment(x)], 0.0)

    def quantile(self, p) -> np.ndarray:
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        idx = np.minimum(np.searchsorted(self.p_hi, p, side='left'), self.xs.size - 1)
        prev = np.maximum(idx - 1, 0)
        inner = self.xs[prev] + (p - self.p_hi[prev]) / self.dens[prev]
        return np.where(p >= self.p_lo[idx], self.xs[idx], inner)

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        tied = self.atom_mass > 0
        return self.xs[tied], self.atom_mass[tied]

    def partial_moment(self, t) -> np.ndarray:
        """Integral of x dF over [xs[0], t], atom at t included."""
        t = np.asarray(t, dtype=float)
        t_c = np.clip(t, self.xs[0], self.xs[-1])
        idx = self._segment(t_c)
        inner = self.moment_hi[idx] + self.dens[idx] * (t_c ** 2 - self.xs[idx] ** 2) / 2.0
        return np.where(t < self.xs[0], 0.0, np.where(t_c >= self.xs[-1], self.moment_hi[-1], inner))

    def cdf_integral(self, lam: float) -> float:
        if lam <= self.xs[0]:
            return 0.0
        if lam >= self.xs[-1]:
            return float(self.cdf_area[-1] + (lam - self.xs[-1]))
        idx = int(self._segment(np.asarray(lam)))
        return float(self.cdf_area[idx] + (lam - self.xs[idx]) * (self.p_hi[idx] + float(self.cdf(lam))) / 2.0)


class DemandDistribution(ABC):
    """Law F of the aggregate demand d.

    Subclasses supply density, cdf, mean and support; quantile, tail
    expectation and the stop-loss transform have generic quadrature / root
    finding fallbacks that closed-form laws override. Laws with point masses
    list them in ``atoms``; ``density`` then covers the continuous part only
    and ``tail_expectation(t)`` excludes an atom sitting at t.
    """

    has_density = True

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        """(locations, masses) of the point masses of F."""
        return np.empty(0), np.empty(0)

    @property
    def is_continuous(self) -> bool:
        return self.has_density and self.atoms()[0].size == 0

    @abstractmethod
    def density(self, x):
        ...

    @abstractmethod
    def cdf(self, x):
        ...

    @abstractmethod
    def mean(self) -> float:
        ...

    @abstractmethod
    def support(self) -> Tuple[float, float]:
        ...

    @property
    def d_min(self) -> float:
        return self.support()[0]

    @property
    def d_max(self) -> float:
        return self.support()[1]

    def upper_limit(self) -> float:
        """Finite integration bound standing in for infinity."""
        hi = self.d_max
        if math.isfinite(hi):
            return hi
        return float(self.quantile(1.0 - TAIL_PROBABILITY))

    def width(self) -> float:
        return self.upper_limit() - self.d_min

    def quantile(self, p):
        """Inverse CDF by bisection on the CDF (brentq); p=0 -> d_min, p=1 -> upper limit."""
        lo = self.d_min

        def one(prob: float) -> float:
            if prob <= 0.0:
                return lo
            hi = self.upper_limit()
            if prob >= 1.0:
                return hi
            return brentq(lambda x: float(self.cdf(x)) - prob, lo, hi, xtol=QUANTILE_XTOL * max(hi - lo, 1.0))

        p_arr = np.asarray(p, dtype=float)
        values = np.vectorize(one, otypes=[float])(p_arr)
        return _scalar_or_array(values, p)

    def tail_expectation(self, t):
        """Integral of x f(x) from t to the upper limit."""
        hi = self.upper_limit()

        def one(tt: float) -> float:
            return _quad(lambda x: x * float(self.density(x)), max(tt, self.d_min), hi)

        values = np.vectorize(one, otypes=[float])(np.asarray(t, dtype=float))
        return _scalar_or_array(values, t)

    def stop_loss(self, t):
        """E[(d - t)+]."""
        t_arr = np.asarray(t, dtype=float)
        t_in = np.maximum(t_arr, self.d_min)
        inside = np.asarray(self.tail_expectation(t_in)) - t_in * (1.0 - np.asarray(self.cdf(t_in)))
        values = np.where(t_arr < self.d_min, self.mean() - t_arr, np.maximum(inside, 0.0))
        return _scalar_or_array(values, t)

    def cvar(self, level: float) -> float:
        """Mean of the upper (1 - level) share of F; an atom at the quantile counts for its excess over level."""
        q = float(self.quantile(level))
        spill = q * (float(self.cdf(q)) - level)
        return (float(self.tail_expectation(q)) + spill) / (1.0 - level)

    def sample(self, u):
        """Inverse-CDF transform of uniforms u in [0, 1)."""
        return self.quantile(u)


class UniformDemand(DemandDistribution):
    def __init__(self, d_min: float, d_max: float):
        if not (0 <= d_min < d_max and math.isfinite(d_max)):
            raise ValueError(f'UniformDemand needs 0 <= d_min < d_max, got ({d_min}, {d_max})')
        self._lo = float(d_min)
        self._hi = float(d_max)

    def __repr__(self):
        return f'UniformDemand(d_min={self._lo}, d_max={self._hi})'

    def support(self):
        return self._lo, self._hi

    @property
    def sigma(self) -> float:
        return (self._hi - self._lo) / (2.0 * math.sqrt(3.0))

    def density(self, x):
        x_arr = np.asarray(x, dtype=float)
        inside = (x_arr >= self._lo) & (x_arr <= self._hi)
        return _scalar_or_array(np.where(inside, 1.0 / (self._hi - self._lo), 0.0), x)

    def cdf(self, x):
        values = np.clip((np.asarray(x, dtype=float) - self._lo) / (self._hi - self._lo), 0.0, 1.0)
        return _scalar_or_array(values, x)

    def quantile(self, p):
        values = self._lo + (self._hi - self._lo) * np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        return _scalar_or_array(values, p)

    def mean(self):
        return 0.5 * (self._lo + self._hi)

    def tail_expectation(self, t):
        t_c = np.clip(np.asarray(t, dtype=float), self._lo, self._hi)
        return _scalar_or_array((self._hi ** 2 - t_c ** 2) / (2.0 * (self._hi - self._lo)), t)


def solve_linexp_params(c: float, d_min: float, d_max: float) -> Tuple[float, float]:
    """Scale a and offset gamma making F(d_min) = 0 and F(d_max) = 1.

    gamma = (a / c^2) e^{-c d_min},
    a = c^2 / (e^{-c d_min} - (1 + c (d_max - d_min)) e^{-c d_max}).
    """
    if not c > 0:
        raise ValueError(f'decay c must be > 0, got {c}')
    if not d_min < d_max:
        raise ValueError(f'need d_min < d_max, got ({d_min}, {d_max})')
    w = d_max - d_min
    # 1 - (1 + cw) e^{-cw}, written to keep precision when cw is small
    scaled_denominator = -math.expm1(-c * w) - c * w * math.exp(-c * w)
    assert scaled_denominator > 0, 'normalizing denominator must be positive for c > 0 and d_min < d_max'
    gamma = 1.0 / scaled_denominator
    log_a = 2.0 * math.log(c) + math.log(gamma) + c * d_min
    if log_a >= _LOG_FLOAT_MAX:
        raise ValueError(f'decay c={c} with d_min={d_min} puts the scale a = e^{log_a:.1f} beyond float range')
    a = math.exp(log_a)
    return a, gamma


class LinExpDemand(DemandDistribution):
    """Density a (x - d_min) e^{-c x} on [d_min, d_max], CDF
    (a / c^2)(c d_min - c x - 1) e^{-c x} + gamma."""

    def __init__(self, a: float, c: float, gamma: float, d_min: float, d_max: float):
        if not (a > 0 and c > 0):
            raise ValueError(f'LinExpDemand needs a > 0 and c > 0, got a={a}, c={c}')
        if not (0 <= d_min < d_max and math.isfinite(d_max)):
            raise ValueError(f'LinExpDemand needs 0 <= d_min < d_max, got ({d_min}, {d_max})')
        self.a = float(a)
        self.c = float(c)
        self.gamma = float(gamma)
        self._lo = float(d_min)
        self._hi = float(d_max)
        # a e^{-c d_min}; all evaluations are done in x - d_min to avoid overflow
        self._k = self.a * math.exp(-self.c * self._lo)
        if abs(self._k / (self.c ** 2) - self.gamma) > 1e-9 * self.gamma:
            raise ValueError('gamma is inconsistent with a: F(d_min) would not be 0')
        top = float(self.cdf(self._hi))
        if abs(top - 1.0) > 1e-9:
            raise ValueError(f'(a, gamma) do not normalize the law: F(d_max) = {top}')

    @classmethod
    def from_decay(cls, c: float, d_min: float, d_max: float) -> 'LinExpDemand':
        a, gamma = solve_linexp_params(c, d_min, d_max)
        return cls(a=a, c=c, gamma=gamma, d_min=d_min, d_max=d_max)

    def __repr__(self):
        return f'LinExpDemand(c={self.c}, d_min={self._lo}, d_max={self._hi})'

    def support(self):
        return self._lo, self._hi

    def density(self, x):
        x_arr = np.asarray(x, dtype=float)
        y = np.clip(x_arr - self._lo, 0.0, self._hi - self._lo)
        values = self._k * y * np.exp(-self.c * y)
        inside = (x_arr >= self._lo) & (x_arr <= self._hi)
        return _scalar_or_array(np.where(inside, values, 0.0), x)

    def cdf(self, x):
        y = np.clip(np.asarray(x, dtype=float) - self._lo, 0.0, self._hi - self._lo)
        values = self.gamma * (-np.expm1(-self.c * y) - self.c * y * np.exp(-self.c * y))
        return _scalar_or_array(np.clip(values, 0.0, 1.0), x)

    def quantile(self, p):
        """Closed form through the lower Lambert-W branch:
        1 + c (x - d_min) = -W_{-1}(-(1 - p / gamma) / e)."""
        p_arr = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        arg = -(1.0 - p_arr / self.gamma) / math.e
        arg = np.clip(arg, -1.0 / math.e, 0.0)
        w = special.lambertw(arg, k=-1).real
        y = (-w - 1.0) / self.c
        values = np.where(p_arr <= 0.0, self._lo, np.where(p_arr >= 1.0, self._hi, self._lo + y))
        return _scalar_or_array(np.clip(values, self._lo, self._hi), p)

    def _moment_antiderivative(self, y):
        c = self.c
        e = np.exp(-c * y)
        second = (y * y / c + 2.0 * y / c ** 2 + 2.0 / c ** 3)
        first = (y / c + 1.0 / c ** 2)
        return -self._k * e * (second + self._lo * first)

    def mean(self):
        w = self._hi - self._lo
        return float(self._moment_antiderivative(w) - self._moment_antiderivative(0.0))

    def tail_expectation(self, t):
        w = self._hi - self._lo
        y = np.clip(np.asarray(t, dtype=float) - self._lo, 0.0, w)
        values = self._moment_antiderivative(w) - self._moment_antiderivative(y)
        return _scalar_or_array(np.maximum(values, 0.0), t)


class EmpiricalDemand(DemandDistribution):
    """Sample-interpolating law; tied samples become point masses."""

    def __init__(self, samples):
        self._law = _SampleInterpolation(samples, 'EmpiricalDemand')
        if self._law.xs[0] < 0:
            raise ValueError('demand samples must be >= 0')

    def __repr__(self):
        law = self._law
        return f'EmpiricalDemand(n={law.samples.size}, d_min={law.xs[0]}, d_max={law.xs[-1]})'

    def support(self):
        return float(self._law.xs[0]), float(self._law.xs[-1])

    def atoms(self):
        return self._law.atoms()

    def density(self, x):
        return _scalar_or_array(self._law.density(x), x)

    def cdf(self, x):
        return _scalar_or_array(self._law.cdf(x), x)

    def quantile(self, p):
        return _scalar_or_array(self._law.quantile(p), p)

    def mean(self):
        return float(self._law.moment_hi[-1])

    def tail_expectation(self, t):
        values = self._law.moment_hi[-1] - self._law.partial_moment(t)
        return _scalar_or_array(np.maximum(values, 0.0), t)


class PointDemand(DemandDistribution):
    """Degenerate law: d_min = d_max = d (perfect information)."""

    has_density = False

    def __init__(self, d: float):
        if not (d >= 0 and math.isfinite(d)):
            raise ValueError(f'PointDemand needs a finite d >= 0, got {d}')
        self.d = float(d)

    def __repr__(self):
        return f'PointDemand(d={self.d})'

    def support(self):
        return self.d, self.d

    def atoms(self):
        return np.array([self.d]), np.array([1.0])

    def density(self, x):
        raise ValueError('a point-mass demand has no density')

    def cdf(self, x):
        return _scalar_or_array((np.asarray(x, dtype=float) >= self.d).astype(float), x)

    def quantile(self, p):
        return _scalar_or_array(np.full(np.shape(p), self.d), p)

    def mean(self):
        return self.d

    def tail_expectation(self, t):
        return _scalar_or_array(np.where(np.asarray(t, dtype=float) < self.d, self.d, 0.0), t)

    def stop_loss(self, t):
        return _scalar_or_array(np.maximum(self.d - np.asarray(t, dtype=float), 0.0), t)

    def cvar(self, level: float) -> float:
        return self.d


class ScipyDemand(DemandDistribution):
    """Any frozen continuous scipy.stats law with support inside [0, inf)."""

    def __init__(self, rv):
        lo, hi = rv.support()
        if lo < 0:
            raise ValueError(f'demand support must start at >= 0, got {lo}')
        self.rv = rv
        self._lo = float(lo)
        self._hi = float(hi)

    def __repr__(self):
        return f'ScipyDemand({self.rv.dist.name}, args={self.rv.args}, kwds={self.rv.kwds})'

    def support(self):
        return self._lo, self._hi

    def density(self, x):
        return _scalar_or_array(self.rv.pdf(np.asarray(x, dtype=float)), x)

    def cdf(self, x):
        return _scalar_or_array(self.rv.cdf(np.asarray(x, dtype=float)), x)

    def quantile(self, p):
        p_arr = np.clip(np.asarray(p, dtype=float), 0.0, 1.0 - TAIL_PROBABILITY)
        return _scalar_or_array(self.rv.ppf(p_arr), p)

    def mean(self):
        return float(self.rv.mean())


class PriceDistribution(ABC):
    """Law G of the spot price on [0, inf)."""

    @abstractmethod
    def cdf(self, y):
        ...

    @abstractmethod
    def pdf(self, y):
        ...

    @abstractmethod
    def mean(self) -> float:
        ...

    @abstractmethod
    def quantile(self, p):
        ...

    @abstractmethod
    def with_mean(self, mean: float) -> 'PriceDistribution':
        """Same law rescaled so that its mean equals ``mean``."""

    def upper_limit(self) -> float:
        return float(self.quantile(1.0 - TAIL_PROBABILITY))

    def partial_integral(self, lam: float) -> float:
        """Integral of G(y) over [0, lam] by quadrature."""
        return _quad(lambda y: float(self.cdf(y)), 0.0, lam)

    def sample(self, u):
        return self.quantile(u)


class UniformPrice(PriceDistribution):
    def __init__(self, s_max: float):
        if not (s_max > 0 and math.isfinite(s_max)):
            raise ValueError(f'UniformPrice needs s_max > 0, got {s_max}')
        self.s_max = float(s_max)

    def __repr__(self):
        return f'UniformPrice(s_max={self.s_max})'

    def cdf(self, y):
        return _scalar_or_array(np.clip(np.asarray(y, dtype=float) / self.s_max, 0.0, 1.0), y)

    def pdf(self, y):
        y_arr = np.asarray(y, dtype=float)
        return _scalar_or_array(np.where((y_arr >= 0) & (y_arr <= self.s_max), 1.0 / self.s_max, 0.0), y)

    def mean(self):
        return 0.5 * self.s_max

    def quantile(self, p):
        return _scalar_or_array(self.s_max * np.clip(np.asarray(p, dtype=float), 0.0, 1.0), p)

    def upper_limit(self):
        return self.s_max

    def with_mean(self, mean):
        return UniformPrice(2.0 * mean)

    def partial_integral(self, lam):
        if lam <= self.s_max:
            return lam * lam / (2.0 * self.s_max)
        return 0.5 * self.s_max + (lam - self.s_max)


class LogNormalPrice(PriceDistribution):
    """ln(lambda_s) ~ Normal(mu_log, sigma_log^2)."""

    def __init__(self, mu_log: float, sigma_log: float):
        if not (sigma_log > 0 and math.isfinite(sigma_log) and math.isfinite(mu_log)):
            raise ValueError(f'LogNormalPrice needs finite mu_log and sigma_log > 0, got ({mu_log}, {sigma_log})')
        self.mu_log = float(mu_log)
        self.sigma_log = float(sigma_log)
        self.rv = stats.lognorm(s=self.sigma_log, scale=math.exp(self.mu_log))

    def __repr__(self):
        return f'LogNormalPrice(mu_log={self.mu_log}, sigma_log={self.sigma_log})'

    def cdf(self, y):
        return _scalar_or_array(self.rv.cdf(np.asarray(y, dtype=float)), y)

    def pdf(self, y):
        return _scalar_or_array(self.rv.pdf(np.asarray(y, dtype=float)), y)

    def mean(self):
        return math.exp(self.mu_log + 0.5 * self.sigma_log ** 2)

    def quantile(self, p):
        p_arr = np.clip(np.asarray(p, dtype=float), 0.0, 1.0 - TAIL_PROBABILITY)
        return _scalar_or_array(self.rv.ppf(p_arr), p)

    def with_mean(self, mean):
        return LogNormalPrice(math.log(mean) - 0.5 * self.sigma_log ** 2, self.sigma_log)

    def partial_integral(self, lam):
        """lam G(lam) - E[lambda_s; lambda_s <= lam] in closed form."""
        if lam <= 0:
            return 0.0
        z = (math.log(lam) - self.mu_log) / self.sigma_log
        return lam * special.ndtr(z) - self.mean() * special.ndtr(z - self.sigma_log)


class EmpiricalPrice(PriceDistribution):
    """Sample-interpolating law over non-negative prices; tied prices become point masses."""

    def __init__(self, samples):
        law = _SampleInterpolation(samples, 'EmpiricalPrice')
        if law.xs[0] < 0:
            raise ValueError('negative prices must be excluded before building a price law')
        self._law = law

    def __repr__(self):
        return f'EmpiricalPrice(n={self._law.samples.size})'

    def atoms(self):
        return self._law.atoms()

    def cdf(self, y):
        return _scalar_or_array(self._law.cdf(y), y)

    def pdf(self, y):
        """Density of the continuous part."""
        return _scalar_or_array(self._law.density(y), y)

    def mean(self):
        return float(self._law.moment_hi[-1])

    def quantile(self, p):
        return _scalar_or_array(self._law.quantile(p), p)

    def upper_limit(self):
        return float(self._law.xs[-1])

    def with_mean(self, mean):
        return EmpiricalPrice(self._law.samples * (mean / self.mean()))

    def partial_integral(self, lam):
        return self._law.cdf_integral(lam)


def tail_expectation(dist: DemandDistribution, t: float) -> float:
    """E[d; d > t]; below d_min this is the whole mean."""
    if not math.isfinite(t):
        raise ValueError(f't must be finite, got {t}')
    if t < dist.d_min:
        return float(dist.mean())
    return float(dist.tail_expectation(t))


def cvar(dist: DemandDistribution, level: float) -> float:
    """E[d | d >= F^{-1}(level)]."""
    if not 0 <= level < 1:
        raise ValueError(f'CVaR level must lie in [0, 1), got {level}')
    return dist.cvar(level)


def price_partial_integral(dist: PriceDistribution, lam: float) -> float:
    """Integral of G(y) over [0, lam]."""
    if not lam >= 0:
        raise ValueError(f'lambda must be >= 0, got {lam}')
    return float(dist.partial_integral(lam))
