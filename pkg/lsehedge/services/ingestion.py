"""Smart-meter and LMP loading, aggregation and density fitting.

Meter CSV:  timestamp,meter_id,kwh           (timestamp YYYY-MM-DDTHH:00)
LMP CSV:    timestamp,price_usd_mwh          (timestamp YYYY-MM-DDTHH:MM, 5-minute marks)

Malformed rows are counted and skipped while they stay under
MALFORMED_ROW_LIMIT of the file; above it the load fails with DataError.
"""
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import logging
import math

import numpy as np
import pandas as pd

from lsehedge.core.data import (
    DEFAULT_HOURS,
    INTERVALS_PER_HOUR,
    MALFORMED_ROW_LIMIT,
    MIN_FIT_SAMPLES,
    MIN_INTERVALS_PER_HOUR,
)
from lsehedge.core.distributions import LinExpDemand, LogNormalPrice
from lsehedge.core.errors import DataError
from lsehedge.core.models import FitReport, HourlyDemandSample, LmpRecord, MeterReading
from lsehedge.services.oracle import numeric_argmax

logger = logging.getLogger(__name__)

METER_COLUMNS = ('timestamp', 'meter_id', 'kwh')
LMP_COLUMNS = ('timestamp', 'price_usd_mwh')
METER_TIME_FORMAT = '%Y-%m-%dT%H:%M'
LMP_TIME_FORMAT = '%Y-%m-%dT%H:%M'
KWH_PER_MWH = 1000.0
# decay search range, in units of 1 / (d_max - d_min)
DECAY_SEARCH = (1e-4, 50.0)
DECAY_GRID_POINTS = 97


def _read_table(path: Union[str, Path], columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f'input file not found: {path}')
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError(f'{path.name}: file is empty')
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f'{path.name}: missing column(s) {", ".join(missing)}')
    return frame[list(columns)]


def _check_malformed(path: Union[str, Path], bad: pd.Series) -> int:
    count = int(bad.sum())
    total = int(bad.size)
    if total and count / total > MALFORMED_ROW_LIMIT:
        raise DataError(f'{Path(path).name}: {count} of {total} rows malformed '
                        f'(limit {MALFORMED_ROW_LIMIT:.0%})')
    if count:
        logger.warning('%s: skipped %d malformed row(s) of %d', Path(path).name, count, total)
    return count


def load_meter_frame(path: Union[str, Path]) -> pd.DataFrame:
    """Parsed meter readings as a DataFrame sorted by (timestamp, meter_id)."""
    raw = _read_table(path, METER_COLUMNS)
    stamps = pd.to_datetime(raw['timestamp'].str.strip(), format=METER_TIME_FORMAT, errors='coerce')
    energy = pd.to_numeric(raw['kwh'], errors='coerce')
    meter = raw['meter_id'].str.strip()
    bad = stamps.isna() | energy.isna() | meter.isna() | (meter == '') | (energy < 0) | ~np.isfinite(energy.fillna(0))
    _check_malformed(path, bad)
    frame = pd.DataFrame({'timestamp': stamps, 'meter_id': meter, 'kwh': energy})[~bad]
    return frame.sort_values(['timestamp', 'meter_id'], kind='mergesort').reset_index(drop=True)


def load_meter_csv(path: Union[str, Path]) -> List[MeterReading]:
    frame = load_meter_frame(path)
    return [MeterReading(ts.to_pydatetime(), meter_id, float(kwh))
            for ts, meter_id, kwh in frame.itertuples(index=False, name=None)]


def _meter_frame(readings) -> pd.DataFrame:
    if isinstance(readings, pd.DataFrame):
        return readings
    return pd.DataFrame({
        'timestamp': pd.to_datetime([r.timestamp for r in readings]),
        'meter_id': [r.meter_id for r in readings],
        'kwh': [r.energy for r in readings],
    })


def aggregate_demand(readings, group_size: int, hours: Iterable[int] = DEFAULT_HOURS,
                     seed: int = 0) -> List[HourlyDemandSample]:
    """Sum hourly energy over disjoint random groups of ``group_size`` meters.

    Meters are sorted, shuffled with a seeded Philox stream and cut into
    groups; leftover meters are dropped. A (group, hour) sample is kept only
    when every meter of the group reported in that hour.
    """
    if group_size < 1:
        raise DataError(f'group size must be >= 1, got {group_size}')
    frame = _meter_frame(readings)
    meters = np.array(sorted(frame['meter_id'].unique()))
    if meters.size < group_size:
        raise DataError(f'group size {group_size} exceeds the {meters.size} meters available')
    rng = np.random.Generator(np.random.Philox(seed))
    n_groups = meters.size // group_size
    order = rng.permutation(meters.size)[:n_groups * group_size]
    group_of = pd.Series(np.repeat(np.arange(n_groups), group_size), index=meters[order])
    if meters.size % group_size:
        logger.info('dropping %d meter(s) left over after grouping', meters.size % group_size)

    hours = sorted(set(int(h) for h in hours))
    window = frame[frame['timestamp'].dt.hour.isin(hours)]
    window = window[window['meter_id'].isin(group_of.index)].copy()
    window['group'] = window['meter_id'].map(group_of)
    totals = (window.groupby(['group', 'timestamp'], sort=True)
              .agg(kwh=('kwh', 'sum'), meters=('meter_id', 'nunique'))
              .reset_index())
    complete = totals['meters'] == group_size
    if (~complete).any():
        logger.warning('dropped %d incomplete group-hour(s)', int((~complete).sum()))
    totals = totals[complete]
    return [
        HourlyDemandSample(hour_window=f'{ts.hour:02d}-{ts.hour + 1:02d}', group_size=group_size,
                           aggregate_energy=float(kwh), timestamp=ts.to_pydatetime(), group=int(group))
        for group, ts, kwh in totals[['group', 'timestamp', 'kwh']].itertuples(index=False, name=None)
    ]


def _as_mwh(samples) -> np.ndarray:
    values = [s.aggregate_energy / KWH_PER_MWH if isinstance(s, HourlyDemandSample) else s for s in samples]
    return np.asarray(values, dtype=float)


def _ecdf_at_samples(x: np.ndarray) -> np.ndarray:
    return np.searchsorted(x, x, side='right') / x.size


def linexp_cdf_sse(c: float, x: np.ndarray) -> float:
    """Squared distance between the linexp CDF with decay c (support = sample range) and the ECDF of sorted x."""
    fitted = LinExpDemand.from_decay(c, float(x[0]), float(x[-1]))
    return float(np.sum((np.asarray(fitted.cdf(x)) - _ecdf_at_samples(x)) ** 2))


def _histogram_distance(x: np.ndarray, density, bins: int) -> float:
    """L1 distance between the normalized histogram and the density at bin centres."""
    heights, edges = np.histogram(x, bins=bins, density=True)
    centres = 0.5 * (edges[1:] + edges[:-1])
    return float(np.sum(np.abs(heights - np.asarray(density(centres))) * np.diff(edges)))


def fit_demand_density(samples, bins: int = 30) -> Tuple[LinExpDemand, FitReport]:
    """Fit the truncated linear-exponential demand law.

    d_min / d_max are the sample extremes; the decay c minimizes the squared
    distance between the fitted CDF and the empirical CDF at every sample.
    HourlyDemandSample inputs are converted from kWh to MWh.
    """
    x = np.sort(_as_mwh(samples))
    x = x[np.isfinite(x)]
    if x.size < MIN_FIT_SAMPLES:
        raise DataError(f'need at least {MIN_FIT_SAMPLES} demand samples, got {x.size}')
    d_min, d_max = float(x[0]), float(x[-1])
    if not d_max > d_min:
        raise DataError('demand samples are degenerate: all values are equal')
    width = d_max - d_min
    target = _ecdf_at_samples(x)
    c_hi = DECAY_SEARCH[1] / width
    if d_max > 0:
        # keep exp(c d_min) inside double range
        c_hi = min(c_hi, 700.0 / d_max)
    log_lo, log_hi = math.log(DECAY_SEARCH[0] / width), math.log(c_hi)
    curve = numeric_argmax(np.vectorize(lambda lc: -linexp_cdf_sse(math.exp(lc), x)), log_lo, log_hi,
                           grid_points=DECAY_GRID_POINTS)
    c = math.exp(curve.argmax)
    if curve.at_endpoint:
        logger.warning('decay fit stopped at the search limit c=%.6g', c)
    fitted = LinExpDemand.from_decay(c, d_min, d_max)
    report = FitReport(
        model='linexp',
        params={'c': c, 'a': fitted.a, 'gamma': fitted.gamma, 'd_min': d_min, 'd_max': d_max},
        objective=-curve.max_value,
        objective_kind='sse_cdf',
        sample_count=int(x.size),
        diagnostics={
            'ks': float(np.max(np.abs(np.asarray(fitted.cdf(x)) - target))),
            'hist_l1': _histogram_distance(x, fitted.density, bins),
            'bins': float(bins),
        },
    )
    logger.info('fitted linexp demand c=%.6g on %d samples', c, x.size)
    return fitted, report


def load_lmp_frame(path: Union[str, Path]) -> pd.DataFrame:
    raw = _read_table(path, LMP_COLUMNS)
    stamps = pd.to_datetime(raw['timestamp'].str.strip(), format=LMP_TIME_FORMAT, errors='coerce')
    price = pd.to_numeric(raw['price_usd_mwh'], errors='coerce')
    bad = stamps.isna() | price.isna() | ~np.isfinite(price.fillna(0))
    _check_malformed(path, bad)
    frame = pd.DataFrame({'timestamp': stamps, 'price': price})[~bad]
    if frame.empty:
        raise DataError(f'{Path(path).name}: no price records')
    frame = frame.sort_values('timestamp', kind='mergesort')
    duplicated = frame['timestamp'].duplicated()
    if duplicated.any():
        logger.warning('%s: dropped %d duplicate timestamp(s)', Path(path).name, int(duplicated.sum()))
        frame = frame[~duplicated]
    return frame.reset_index(drop=True)


def load_lmp_csv(path: Union[str, Path]) -> List[LmpRecord]:
    frame = load_lmp_frame(path)
    return [LmpRecord(ts.to_pydatetime(), float(p)) for ts, p in frame.itertuples(index=False, name=None)]


def to_hourly(records) -> pd.Series:
    """Hourly mean of 5-minute prices, indexed by the hour start.

    Hours with fewer than MIN_INTERVALS_PER_HOUR of INTERVALS_PER_HOUR
    intervals are dropped.
    """
    if isinstance(records, pd.DataFrame):
        frame = records
    else:
        frame = pd.DataFrame({'timestamp': pd.to_datetime([r.timestamp for r in records]),
                              'price': [r.price for r in records]})
    if frame.empty:
        raise DataError('no price records to convert')
    grouped = frame.groupby(frame['timestamp'].dt.floor('h'))['price'].agg(['mean', 'count'])
    sparse = grouped['count'] < MIN_INTERVALS_PER_HOUR
    if sparse.any():
        logger.warning('dropped %d hour(s) with fewer than %d of %d intervals',
                       int(sparse.sum()), MIN_INTERVALS_PER_HOUR, INTERVALS_PER_HOUR)
    hourly = grouped.loc[~sparse, 'mean']
    hourly.index.name = 'hour'
    hourly.name = 'price'
    return hourly


def condition_on_threshold(hourly, xi: float, strict: bool = False) -> List[float]:
    """Prices whose two preceding consecutive hours both reached ``xi`` (``> xi`` when strict).

    A plain sequence is read as consecutive hours.
    """
    if not isinstance(hourly, pd.Series):
        values = list(hourly)
        hourly = pd.Series(values, index=pd.date_range('2000-01-01', periods=len(values), freq='h'),
                           dtype=float)
    if len(hourly) < 3:
        return []
    index = pd.DatetimeIndex(hourly.index)
    one_back = hourly.reindex(index - pd.Timedelta(hours=1)).to_numpy()
    two_back = hourly.reindex(index - pd.Timedelta(hours=2)).to_numpy()
    if strict:
        selected = (one_back > xi) & (two_back > xi)
    else:
        selected = (one_back >= xi) & (two_back >= xi)
    return [float(v) for v in hourly.to_numpy()[selected]]


def fit_lognormal(prices) -> Tuple[LogNormalPrice, FitReport]:
    """Log-normal maximum likelihood on the strictly positive prices."""
    values = np.asarray(list(prices), dtype=float)
    values = values[np.isfinite(values)]
    positive = values[values > 0]
    discarded = int(values.size - positive.size)
    if discarded:
        logger.warning('discarded %d non-positive price(s)', discarded)
    if positive.size < MIN_FIT_SAMPLES:
        raise DataError(f'insufficient conditioned samples: {positive.size} positive prices, '
                        f'need {MIN_FIT_SAMPLES}')
    logs = np.log(positive)
    mu_log = float(logs.mean())
    sigma_log = float(logs.std(ddof=0))
    if not sigma_log > 0:
        raise DataError('price samples are degenerate: sigma_log is 0')
    fitted = LogNormalPrice(mu_log, sigma_log)
    loglik = float(np.sum(fitted.rv.logpdf(positive)))
    report = FitReport(
        model='lognormal',
        params={'mu_log': mu_log, 'sigma_log': sigma_log},
        objective=loglik,
        objective_kind='loglik',
        sample_count=int(positive.size),
        discarded=discarded,
        diagnostics={'mean': fitted.mean()},
    )
    logger.info('fitted lognormal prices mu_log=%.6g sigma_log=%.6g on %d samples',
                mu_log, sigma_log, positive.size)
    return fitted, report
