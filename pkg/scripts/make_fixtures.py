"""Write the synthetic fixtures into the data directory.

Usage:
  python3 scripts/make_fixtures.py [--seed N] [--users 300] [--days 30]

Produces data/meters_sample.csv (hourly kWh per meter) and data/lmp_sample.csv
(5-minute prices with occasional negative prints and a few missing intervals).
"""
import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from lsehedge.core.data import APP_DATA_DIR, LMP_FIXTURE_CSV, METER_FIXTURE_CSV  # noqa: E402
from lsehedge.services.synthetic import write_lmp_csv, write_meter_csv  # noqa: E402


def main(seed: int = 0, users: int = 300, days: int = 30):
    APP_DATA_DIR.mkdir(parents=True, exist_ok=True)
    write_meter_csv(METER_FIXTURE_CSV, seed=seed, n_users=users, days=days)
    write_lmp_csv(LMP_FIXTURE_CSV, seed=seed, days=2 * days, drop_fraction=0.02)
    print('Wrote', METER_FIXTURE_CSV, 'and', LMP_FIXTURE_CSV)


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--users', type=int, default=300)
    parser.add_argument('--days', type=int, default=30)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)
    main(seed=args.seed, users=args.users, days=args.days)
