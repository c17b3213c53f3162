"""Seeded synthetic meter and LMP data in the ingestion CSV formats.

Real utility data is not redistributable, so fixtures and tests are built
from these generators. Every draw comes from a Philox stream keyed by the seed.
"""
from pathlib import Path
from typing import Optional, Union

import logging

import numpy as np
import pandas as pd

from lsehedge.core.distributions import LinExpDemand
from lsehedge.services.ingestion import LMP_TIME_FORMAT, METER_TIME_FORMAT

logger = logging.getLogger(__name__)

# evening peak multiplier by civil hour
_HOURLY_PROFILE = np.array([
    0.55, 0.5, 0.48, 0.47, 0.48, 0.55, 0.7, 0.85, 0.8, 0.75, 0.72, 0.72,
    0.74, 0.76, 0.8, 0.9, 1.0, 1.05, 1.0, 0.95, 0.9, 0.8, 0.7, 0.6,
])


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


def meter_frame(n_users: int = 300, days: int = 30, seed: int = 0, start: str = '2023-07-01',
                c: float = 2.0, d_min: float = 0.1, d_max: float = 4.0) -> pd.DataFrame:
    """Hourly kWh per user: inverse-CDF draws from a per-user linexp law scaled by an hourly profile."""
    if n_users < 1 or days < 1:
        raise ValueError('n_users and days must be >= 1')
    rng = _rng(seed, 0)
    stamps = pd.date_range(start, periods=24 * days, freq='h')
    # per-user decay jitter keeps users heterogeneous
    decays = c * rng.uniform(0.7, 1.3, size=n_users)
    profile = _HOURLY_PROFILE[stamps.hour.to_numpy()]
    columns = []
    for decay in decays:
        law = LinExpDemand.from_decay(decay, d_min, d_max)
        kwh = np.asarray(law.sample(rng.random(stamps.size))) * profile
        columns.append(kwh)
    energy = np.stack(columns, axis=1)
    frame = pd.DataFrame({
        'timestamp': np.repeat(stamps.strftime(METER_TIME_FORMAT), n_users),
        'meter_id': np.tile([f'm{i:04d}' for i in range(n_users)], stamps.size),
        'kwh': np.round(energy.ravel(), 4),
    })
    return frame


def lmp_frame(days: int = 60, seed: int = 0, start: str = '2023-07-01', mu_log: float = 4.3,
              sigma_log: float = 0.45, noise: float = 0.08, negative_prob: float = 0.01) -> pd.DataFrame:
    """5-minute prices: log-normal hourly levels with an evening lift, multiplicative noise
    and occasional negative prints."""
    rng = _rng(seed, 1)
    hours = pd.date_range(start, periods=24 * days, freq='h')
    lift = 0.35 * np.exp(-0.5 * ((hours.hour.to_numpy() - 17.5) / 2.0) ** 2)
    levels = np.exp(mu_log + lift + sigma_log * rng.standard_normal(hours.size))
    stamps = pd.date_range(start, periods=24 * days * 12, freq='5min')
    prices = np.repeat(levels, 12) * np.exp(noise * rng.standard_normal(stamps.size))
    negative = rng.random(stamps.size) < negative_prob
    prices[negative] = -rng.uniform(1.0, 30.0, size=int(negative.sum()))
    return pd.DataFrame({'timestamp': stamps.strftime(LMP_TIME_FORMAT), 'price_usd_mwh': np.round(prices, 3)})


def write_meter_csv(path: Union[str, Path], seed: int = 0, **kwargs) -> Path:
    path = Path(path)
    meter_frame(seed=seed, **kwargs).to_csv(path, index=False)
    logger.info('wrote synthetic meter data to %s', path)
    return path


def write_lmp_csv(path: Union[str, Path], seed: int = 0, drop_fraction: Optional[float] = None,
                  **kwargs) -> Path:
    """Write an LMP fixture; ``drop_fraction`` randomly removes rows to exercise the completeness rule."""
    path = Path(path)
    frame = lmp_frame(seed=seed, **kwargs)
    if drop_fraction:
        keep = _rng(seed, 2).random(len(frame)) >= drop_fraction
        frame = frame[keep]
    frame.to_csv(path, index=False)
    logger.info('wrote synthetic LMP data to %s', path)
    return path
