from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import math

import numpy as np


class HedgeKind(str, Enum):
    NONE = 'None'
    FORWARD = 'Forward'
    CALL = 'Call'
    DEMAND_RESPONSE = 'DemandResponse'


class PortfolioPair(str, Enum):
    FORWARD_CALL = 'ForwardCall'
    FORWARD_DR = 'ForwardDr'
    CALL_DR = 'CallDr'


class BoundaryPair(str, Enum):
    FORWARD_VS_CALL = 'ForwardVsCall'
    DR_VS_FORWARD = 'DrVsForward'
    DR_VS_CALL = 'DrVsCall'


class Classification(str, Enum):
    SADDLE = 'Saddle'
    MAX = 'Max'
    MIN = 'Min'
    DEGENERATE = 'Degenerate'
    NO_INTERIOR_POINT = 'NoInteriorPoint'


@dataclass(frozen=True)
class MarketParams:
    """Retail tariff (USD/MWh) plus the demand and spot-price laws."""
    lambda_f: float
    demand: Any
    price: Any

    def __post_init__(self):
        if not (self.lambda_f >= 0 and math.isfinite(self.lambda_f)):
            raise ValueError(f'lambda_f must be finite and >= 0, got {self.lambda_f}')

    def replace(self, **changes) -> 'MarketParams':
        values = {'lambda_f': self.lambda_f, 'demand': self.demand, 'price': self.price}
        values.update(changes)
        return MarketParams(**values)


@dataclass(frozen=True)
class ForwardTerms:
    lambda_F: float

    def __post_init__(self):
        if not self.lambda_F >= 0:
            raise ValueError(f'lambda_F must be >= 0, got {self.lambda_F}')


@dataclass(frozen=True)
class CallTerms:
    lambda_C: float
    premium: float

    def __post_init__(self):
        if not self.lambda_C >= 0:
            raise ValueError(f'lambda_C must be >= 0, got {self.lambda_C}')
        if not self.premium >= 0:
            raise ValueError(f'premium must be >= 0, got {self.premium}')


@dataclass(frozen=True)
class DrTerms:
    """Linear demand shift h(r) = alpha_elastic * r (MWh per USD)."""
    alpha_elastic: float

    def __post_init__(self):
        if not self.alpha_elastic > 0:
            raise ValueError(f'alpha_elastic must be > 0, got {self.alpha_elastic}')

    def shift(self, reward):
        return self.alpha_elastic * reward


@dataclass(frozen=True)
class HedgeDecision:
    """Optimal decision: volume (MWh) for Forward/Call, reward (USD) for DR."""
    kind: HedgeKind
    decision: float
    expected_profit: float

    def __post_init__(self):
        if self.decision < 0:
            raise ValueError(f'decision must be >= 0, got {self.decision}')
        if self.kind is HedgeKind.NONE and self.decision != 0:
            raise ValueError('a no-hedge decision carries decision 0')

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind.value, 'decision': self.decision, 'expected_profit': self.expected_profit}


@dataclass(frozen=True)
class ObjectiveCurve:
    decision_grid: np.ndarray
    profit_values: np.ndarray
    argmax: float
    max_value: float
    at_endpoint: bool = False


@dataclass(frozen=True)
class SaddleReport:
    pair: PortfolioPair
    stationary_point: Optional[Tuple[float, float]]
    hessian: Optional[Tuple[Tuple[float, float], Tuple[float, float]]]
    det: Optional[float]
    classification: Classification
    candidates: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'pair': self.pair.value,
            'stationary_point': list(self.stationary_point) if self.stationary_point is not None else None,
            'hessian': [list(row) for row in self.hessian] if self.hessian is not None else None,
            'det': self.det,
            'classification': self.classification.value,
            'candidates': self.candidates,
        }


@dataclass(frozen=True)
class AxisSpec:
    name: str
    lo: float
    hi: float
    steps: int

    def grid(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([float(self.lo)])
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class BoundaryQuery:
    pair: BoundaryPair
    free_axis: str
    fixed: Dict[str, float]
    search_interval: Tuple[float, float]

    def __post_init__(self):
        if self.free_axis in self.fixed:
            raise ValueError(f'free axis {self.free_axis!r} must not also be fixed')
        lo, hi = self.search_interval
        if not lo < hi:
            raise ValueError(f'search interval must satisfy lo < hi, got {self.search_interval}')


@dataclass(frozen=True)
class BoundarySurface:
    """Boundary values per (axis1, axis2) cell; NaN where there is no crossing."""
    pair: BoundaryPair
    free_axis: str
    axis1: AxisSpec
    axis2: AxisSpec
    boundary_values: np.ndarray
    crossed: np.ndarray
    lower_bound_surface: Optional[np.ndarray] = None

    @property
    def axis1_grid(self) -> np.ndarray:
        return self.axis1.grid()

    @property
    def axis2_grid(self) -> np.ndarray:
        return self.axis2.grid()


@dataclass(frozen=True)
class MeterReading:
    timestamp: datetime
    meter_id: str
    energy: float


@dataclass(frozen=True)
class LmpRecord:
    timestamp: datetime
    price: float


@dataclass(frozen=True)
class HourlyDemandSample:
    hour_window: str
    group_size: int
    aggregate_energy: float
    timestamp: Optional[datetime] = None
    group: int = 0

    def __post_init__(self):
        if self.aggregate_energy < 0:
            raise ValueError('aggregate_energy must be >= 0')
        if self.group_size < 1:
            raise ValueError('group_size must be >= 1')


@dataclass
class FitReport:
    model: str
    params: Dict[str, float]
    objective: float
    objective_kind: str
    sample_count: int
    discarded: int = 0
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Flat key-value form used for fitted-model files."""
        flat: Dict[str, Any] = {
            'model': self.model,
            'objective': self.objective,
            'objective_kind': self.objective_kind,
            'sample_count': self.sample_count,
            'discarded': self.discarded,
        }
        flat.update(self.params)
        flat.update({f'diag_{k}': v for k, v in self.diagnostics.items()})
        return flat


@dataclass
class ResultEnvelope:
    config: Dict[str, Any]
    version: str
    base_profit: float
    decisions: Dict[str, HedgeDecision]
    best: str
    validation: Optional[Dict[str, Dict[str, float]]] = None
    cvar: Optional[Dict[str, Dict[str, Optional[float]]]] = None

    def to_dict(self) -> Dict[str, Any]:
        payload = {
            'config': self.config,
            'version': self.version,
            'base_profit': self.base_profit,
            'decisions': {name: d.to_dict() for name, d in self.decisions.items()},
            'best': self.best,
        }
        if self.validation is not None:
            payload['validation'] = self.validation
        if self.cvar is not None:
            payload['cvar'] = self.cvar
        return payload
