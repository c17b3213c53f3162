"""Run configuration: JSON file plus ``--set`` overrides, validated into internal units.

Prices carry a mandatory unit tag, either ``{"value": 0.05, "unit": "USD/kWh"}``
or the string ``"0.05 USD/kWh"``; USD/kWh is converted to USD/MWh. Energies
are MWh. The elasticity takes an optional ``MWh/USD`` (default) or ``kWh/USD``
tag. Every error names the offending field path.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import json
import logging

from lsehedge.core.distributions import (
    DemandDistribution,
    EmpiricalDemand,
    EmpiricalPrice,
    LinExpDemand,
    LogNormalPrice,
    PointDemand,
    PriceDistribution,
    UniformDemand,
    UniformPrice,
)
from lsehedge.core.errors import ConfigError
from lsehedge.core.models import CallTerms, DrTerms, ForwardTerms, MarketParams

logger = logging.getLogger(__name__)

PRICE_UNITS = {'USD/MWh': 1.0, 'USD/kWh': 1000.0}
ELASTICITY_UNITS = {'MWh/USD': 1.0, 'kWh/USD': 0.001}


@dataclass
class RunConfig:
    params: MarketParams
    forward: Optional[ForwardTerms] = None
    call: Optional[CallTerms] = None
    dr: Optional[DrTerms] = None
    seed: int = 0
    output: Optional[str] = None
    echo: Dict[str, Any] = field(default_factory=dict)

    @property
    def demand(self) -> DemandDistribution:
        return self.params.demand

    @property
    def price(self) -> PriceDistribution:
        return self.params.price


def _split_tagged(raw, path: str):
    if isinstance(raw, dict):
        if 'value' not in raw:
            raise ConfigError('expected {"value": ..., "unit": ...}', path)
        return raw['value'], raw.get('unit')
    if isinstance(raw, str):
        parts = raw.split()
        if len(parts) != 2:
            raise ConfigError(f'expected "<number> <unit>", got {raw!r}', path)
        return parts[0], parts[1]
    return raw, None


def _number(raw, path: str) -> float:
    if isinstance(raw, bool):
        raise ConfigError(f'expected a number, got {raw!r}', path)
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f'expected a number, got {raw!r}', path) from None


def parse_price(raw, path: str) -> float:
    """Price in USD/MWh; the unit tag is mandatory."""
    value, unit = _split_tagged(raw, path)
    if unit is None:
        raise ConfigError(f'unit tag required, one of {", ".join(PRICE_UNITS)}', path)
    if unit not in PRICE_UNITS:
        raise ConfigError(f'unknown price unit {unit!r}', path)
    return _number(value, path) * PRICE_UNITS[unit]


def parse_elasticity(raw, path: str) -> float:
    value, unit = _split_tagged(raw, path)
    unit = unit or 'MWh/USD'
    if unit not in ELASTICITY_UNITS:
        raise ConfigError(f'unknown elasticity unit {unit!r}', path)
    return _number(value, path) * ELASTICITY_UNITS[unit]


def _block(raw: Dict[str, Any], name: str, required: bool = True) -> Optional[Dict[str, Any]]:
    block = raw.get(name)
    if block is None:
        if required:
            raise ConfigError('block is required', name)
        return None
    if not isinstance(block, dict):
        raise ConfigError('expected an object', name)
    return block


def _require(block: Dict[str, Any], key: str, path: str):
    if key not in block:
        raise ConfigError('field is required', f'{path}.{key}')
    return block[key]


def _resolve(path_value: str, base_dir: Optional[Path]) -> Path:
    path = Path(path_value)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return path


def load_model_file(path: Union[str, Path], field_path: str = 'model_file') -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f'model file not found: {path}', field_path) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f'model file is not valid JSON: {exc}', field_path) from None


def demand_from_model(model: Dict[str, Any], path: str = 'demand.model_file') -> LinExpDemand:
    if model.get('model') != 'linexp':
        raise ConfigError(f'expected a linexp demand model, got {model.get("model")!r}', path)
    try:
        return LinExpDemand.from_decay(float(model['c']), float(model['d_min']), float(model['d_max']))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f'invalid demand model: {exc}', path) from None


def price_from_model(model: Dict[str, Any], path: str = 'price.model_file') -> LogNormalPrice:
    if model.get('model') != 'lognormal':
        raise ConfigError(f'expected a lognormal price model, got {model.get("model")!r}', path)
    try:
        return LogNormalPrice(float(model['mu_log']), float(model['sigma_log']))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f'invalid price model: {exc}', path) from None


def _parse_demand(block: Dict[str, Any], base_dir: Optional[Path]):
    has_kind, has_file = 'kind' in block, 'model_file' in block
    if has_kind == has_file:
        raise ConfigError('give exactly one of "kind" or "model_file"', 'demand')
    if has_file:
        model = load_model_file(_resolve(block['model_file'], base_dir), 'demand.model_file')
        demand = demand_from_model(model)
        return demand, {'kind': 'linexp', 'c': demand.c, 'd_min': demand.d_min, 'd_max': demand.d_max}
    kind = block['kind']
    try:
        if kind == 'uniform':
            d_min = _number(_require(block, 'd_min', 'demand'), 'demand.d_min')
            d_max = _number(_require(block, 'd_max', 'demand'), 'demand.d_max')
            return UniformDemand(d_min, d_max), {'kind': kind, 'd_min': d_min, 'd_max': d_max}
        if kind == 'linexp':
            c = _number(_require(block, 'c', 'demand'), 'demand.c')
            d_min = _number(_require(block, 'd_min', 'demand'), 'demand.d_min')
            d_max = _number(_require(block, 'd_max', 'demand'), 'demand.d_max')
            return LinExpDemand.from_decay(c, d_min, d_max), {'kind': kind, 'c': c, 'd_min': d_min, 'd_max': d_max}
        if kind == 'point':
            d = _number(_require(block, 'd', 'demand'), 'demand.d')
            return PointDemand(d), {'kind': kind, 'd': d}
        if kind == 'empirical':
            samples = [_number(v, 'demand.samples') for v in _require(block, 'samples', 'demand')]
            return EmpiricalDemand(samples), {'kind': kind, 'samples': samples}
    except ValueError as exc:
        raise ConfigError(str(exc), 'demand') from None
    raise ConfigError(f'unknown demand kind {kind!r}', 'demand.kind')


def _parse_price(block: Dict[str, Any], base_dir: Optional[Path]):
    has_kind, has_file = 'kind' in block, 'model_file' in block
    if has_kind == has_file:
        raise ConfigError('give exactly one of "kind" or "model_file"', 'price')
    if has_file:
        model = load_model_file(_resolve(block['model_file'], base_dir), 'price.model_file')
        price = price_from_model(model)
        return price, {'kind': 'lognormal', 'mu_log': price.mu_log, 'sigma_log': price.sigma_log}
    kind = block['kind']
    try:
        if kind == 'uniform':
            s_max = parse_price(_require(block, 's_max', 'price'), 'price.s_max')
            return UniformPrice(s_max), {'kind': kind, 's_max': s_max}
        if kind == 'lognormal':
            mu_log = _number(_require(block, 'mu_log', 'price'), 'price.mu_log')
            sigma_log = _number(_require(block, 'sigma_log', 'price'), 'price.sigma_log')
            return LogNormalPrice(mu_log, sigma_log), {'kind': kind, 'mu_log': mu_log, 'sigma_log': sigma_log}
        if kind == 'empirical':
            samples = [parse_price(v, 'price.samples') for v in _require(block, 'samples', 'price')]
            return EmpiricalPrice(samples), {'kind': kind, 'samples': samples}
    except ValueError as exc:
        raise ConfigError(str(exc), 'price') from None
    raise ConfigError(f'unknown price kind {kind!r}', 'price.kind')


def _terms(factory, path: str, **values):
    try:
        return factory(**values)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def parse_run_config(raw: Dict[str, Any], base_dir: Optional[Path] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError('configuration must be a JSON object')
    market = _block(raw, 'market')
    lambda_f = parse_price(_require(market, 'lambda_f', 'market'), 'market.lambda_f')
    demand, demand_echo = _parse_demand(_block(raw, 'demand'), base_dir)
    price, price_echo = _parse_price(_block(raw, 'price'), base_dir)
    try:
        params = MarketParams(lambda_f=lambda_f, demand=demand, price=price)
    except ValueError as exc:
        raise ConfigError(str(exc), 'market.lambda_f') from None
    echo: Dict[str, Any] = {
        'market': {'lambda_f': lambda_f, 'unit': 'USD/MWh'},
        'demand': demand_echo,
        'price': price_echo,
    }

    forward = call = dr = None
    block = _block(raw, 'forward', required=False)
    if block is not None:
        lambda_F = parse_price(_require(block, 'lambda_F', 'forward'), 'forward.lambda_F')
        forward = _terms(ForwardTerms, 'forward', lambda_F=lambda_F)
        echo['forward'] = {'lambda_F': lambda_F}
    block = _block(raw, 'call', required=False)
    if block is not None:
        lambda_C = parse_price(_require(block, 'lambda_C', 'call'), 'call.lambda_C')
        premium = parse_price(_require(block, 'premium', 'call'), 'call.premium')
        call = _terms(CallTerms, 'call', lambda_C=lambda_C, premium=premium)
        echo['call'] = {'lambda_C': lambda_C, 'premium': premium}
    block = _block(raw, 'dr', required=False)
    if block is not None:
        alpha = parse_elasticity(_require(block, 'alpha_elastic', 'dr'), 'dr.alpha_elastic')
        dr = _terms(DrTerms, 'dr', alpha_elastic=alpha)
        echo['dr'] = {'alpha_elastic': alpha, 'unit': 'MWh/USD'}

    seed = raw.get('seed', 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f'expected a non-negative integer, got {seed!r}', 'seed')
    echo['seed'] = seed
    output = raw.get('output')
    if output is not None and not isinstance(output, str):
        raise ConfigError('expected a path string', 'output')
    return RunConfig(params=params, forward=forward, call=call, dr=dr, seed=seed, output=output, echo=echo)


def apply_overrides(raw: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply ``dotted.path=value`` assignments; values are parsed as JSON when possible."""
    for item in overrides:
        key, sep, text = item.partition('=')
        if not sep or not key:
            raise ConfigError(f'expected key=value, got {item!r}', 'overrides')
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts: List[str] = key.strip().split('.')
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = value
        logger.debug('config override %s=%r', key, value)
    return raw


def load_run_config(path: Union[str, Path], overrides: Iterable[str] = (), seed: Optional[int] = None,
                    output: Optional[str] = None) -> RunConfig:
    """Read, override and validate a RunConfig; explicit ``seed``/``output`` win over the file."""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f'config file not found: {path}', 'config') from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f'config is not valid JSON: {exc}', 'config') from None
    raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw['seed'] = seed
    if output is not None:
        raw['output'] = output
    return parse_run_config(raw, base_dir=path.parent)
