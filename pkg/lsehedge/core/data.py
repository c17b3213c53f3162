"""Settings, paths and numeric constants (single source of truth).

Environment overrides are read from the process environment and an optional
``.env`` file in the repository root.
"""
import os
from pathlib import Path

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
load_dotenv(PROJECT_ROOT / '.env')

# --- Centralized data directory: project-root `data/` ---
APP_DATA_DIR = Path(os.environ.get('LSEHEDGE_DATA_DIR', str(PROJECT_ROOT / 'data')))

# Bundled fixtures (written by scripts/make_fixtures.py)
METER_FIXTURE_CSV = APP_DATA_DIR / 'meters_sample.csv'
LMP_FIXTURE_CSV = APP_DATA_DIR / 'lmp_sample.csv'
DEMO_CONFIG_JSON = APP_DATA_DIR / 'demo_config.json'

WORKERS = int(os.environ.get('LSEHEDGE_WORKERS', '4'))
LOG_LEVEL = os.environ.get('LSEHEDGE_LOG_LEVEL', 'WARNING').upper()
DEFAULT_SEED = int(os.environ.get('LSEHEDGE_SEED', '0'))

# Quadrature
QUAD_EPSABS = 1e-11
QUAD_EPSREL = 1e-11
QUAD_LIMIT = 200
# Unbounded laws are integrated up to quantile(1 - TAIL_PROBABILITY)
TAIL_PROBABILITY = 1e-9
QUANTILE_XTOL = 1e-10

# Oracle
ARGMAX_GRID_POINTS = 513
ARGMAX_XTOL = 1e-6
FD_STEP = 1e-4
MC_CHUNK_SIZE = 1 << 16
MC_DEFAULT_DRAWS = 1_000_000

# Boundaries
NEWTON_STEP = 1e-5
NEWTON_MAX_ITER = 100
NEWTON_XTOL = 1e-13
BOUNDARY_FTOL = 1e-10

# Ingestion
MALFORMED_ROW_LIMIT = 0.01
MIN_INTERVALS_PER_HOUR = 9
INTERVALS_PER_HOUR = 12
MIN_FIT_SAMPLES = 30
DEFAULT_HOURS = (16, 17)
