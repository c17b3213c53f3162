import sys
from pathlib import Path

import pytest

# Ensure project root (one level up from tests) is on sys.path so tests can import lsehedge.*
ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from lsehedge.core.data import DEMO_CONFIG_JSON  # noqa: E402
from lsehedge.core.distributions import UniformDemand, UniformPrice  # noqa: E402
from lsehedge.core.models import CallTerms, DrTerms, ForwardTerms, MarketParams  # noqa: E402


@pytest.fixture
def demo_params():
    # tariff 50 USD/MWh, demand U(0, 100) MWh, spot U(0, 200) USD/MWh
    return MarketParams(lambda_f=50.0, demand=UniformDemand(0.0, 100.0), price=UniformPrice(200.0))


@pytest.fixture
def demo_terms():
    return ForwardTerms(50.0), CallTerms(40.0, 10.0), DrTerms(0.05)


@pytest.fixture
def demo_config_path():
    return DEMO_CONFIG_JSON
