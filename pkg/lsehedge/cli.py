"""Command-line entry points: fit-demand, fit-prices, optimize, boundary, saddle.

Every command is deterministic for fixed inputs and seed. Errors are printed
as a JSON object on stderr and mapped to exit codes (2 config, 3 data,
4 numerical).
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import argparse
import json
import logging
import sys

import pandas as pd

from lsehedge import __version__
from lsehedge.core.config import RunConfig, load_run_config
from lsehedge.core.data import DEFAULT_HOURS, LOG_LEVEL
from lsehedge.core.distributions import PointDemand, UniformDemand
from lsehedge.core.errors import ConfigError, DataError, HedgingError
from lsehedge.core.models import AxisSpec, BoundaryPair, HedgeKind, PortfolioPair, ResultEnvelope
from lsehedge.services import boundaries, hedging, ingestion, oracle

logger = logging.getLogger(__name__)

LOG_FORMAT = '[%(asctime)s] %(levelname)s %(name)s: %(message)s'
INSTRUMENTS = (('forward', HedgeKind.FORWARD), ('call', HedgeKind.CALL), ('dr', HedgeKind.DEMAND_RESPONSE))
DEFAULT_INTERVALS = {
    'lambda_F': (0.0, 1000.0),
    'lambda_C': (0.0, 1000.0),
    'premium': (0.0, 500.0),
    'alpha_elastic': (1e-5, 10.0),
    'inv_alpha': (1e-3, 1000.0),
}


def _dump(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + '\n'


def _write_json(payload: Dict[str, Any], out: Optional[str]) -> None:
    text = _dump(payload)
    if out:
        Path(out).write_text(text, encoding='utf-8')
        logger.info('wrote %s', out)
    else:
        sys.stdout.write(text)


def cmd_fit_demand(meters: str, group_size: int, seed: int = 0, out: Optional[str] = None,
                   hours: Sequence[int] = DEFAULT_HOURS, bins: int = 30) -> Dict[str, Any]:
    readings = ingestion.load_meter_frame(meters)
    n_meters = readings['meter_id'].nunique()
    if group_size > n_meters:
        raise DataError(f'group size {group_size} exceeds the {n_meters} meters in {Path(meters).name}')
    samples = ingestion.aggregate_demand(readings, group_size, hours=hours, seed=seed)
    _, report = ingestion.fit_demand_density(samples, bins=bins)
    payload = report.to_dict()
    payload.update({'group_size': group_size, 'seed': seed, 'hours': list(hours), 'unit': 'MWh'})
    _write_json(payload, out)
    return payload


def cmd_fit_prices(lmp: str, xi: float, out: Optional[str] = None, strict: bool = False) -> Dict[str, Any]:
    records = ingestion.load_lmp_frame(lmp)
    hourly = ingestion.to_hourly(records)
    conditioned = ingestion.condition_on_threshold(hourly, xi, strict=strict)
    logger.info('%d of %d hours pass the threshold %s', len(conditioned), len(hourly), xi)
    _, report = ingestion.fit_lognormal(conditioned)
    payload = report.to_dict()
    payload.update({'xi': xi, 'strict': strict, 'hours': int(len(hourly)), 'unit': 'USD/MWh'})
    _write_json(payload, out)
    return payload


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1.0)


def _validate(config: RunConfig, decisions) -> Dict[str, Dict[str, float]]:
    deltas = {}
    for name, kind in INSTRUMENTS:
        terms = getattr(config, name)
        if terms is None:
            continue
        curve = oracle.oracle_decision(kind, config.params, terms)
        scale = oracle.decision_scale(kind, config.params, terms)
        decision = decisions[name]
        deltas[name] = {
            'oracle_decision': curve.argmax,
            'oracle_profit': curve.max_value,
            'decision_delta': abs(decision.decision - curve.argmax) / scale,
            'profit_delta': _relative(decision.expected_profit, curve.max_value),
        }
    return deltas


def _cvar_block(config: RunConfig) -> Dict[str, Dict[str, Optional[float]]]:
    block = {}
    for name, _ in INSTRUMENTS:
        terms = getattr(config, name)
        if terms is None:
            continue
        level = hedging.cvar_level(config.params, terms)
        profit = hedging.profit_via_cvar(config.params, terms) if level is not None else None
        block[name] = {'level': level, 'profit': profit}
    return block


def cmd_optimize(config: RunConfig, validate: bool = False, with_cvar: bool = False) -> ResultEnvelope:
    params = config.params
    base = hedging.base_profit(params)
    decisions = {}
    for name, _ in INSTRUMENTS:
        terms = getattr(config, name)
        if terms is not None:
            decisions[name] = hedging.optimize(params, terms)
    if not decisions:
        raise ConfigError('configure at least one of forward, call, dr', 'instruments')
    best = hedging.best_decision(base, decisions.values())
    envelope = ResultEnvelope(config=config.echo, version=__version__, base_profit=base,
                              decisions=decisions, best=best.value)
    if validate:
        envelope.validation = _validate(config, decisions)
    if with_cvar:
        envelope.cvar = _cvar_block(config)
    return envelope


def parse_axis(text: str, field: str) -> AxisSpec:
    """``name:lo:hi:steps``."""
    parts = text.split(':')
    if len(parts) != 4:
        raise ConfigError(f'expected name:lo:hi:steps, got {text!r}', field)
    name = parts[0]
    try:
        lo, hi, steps = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise ConfigError(f'bad numbers in {text!r}', field) from None
    if steps < 1 or (steps > 1 and not lo < hi):
        raise ConfigError('need steps >= 1 and lo < hi', field)
    return AxisSpec(name, lo, hi, steps)


def _default_free_axis(pair: BoundaryPair) -> str:
    return 'lambda_F' if pair is BoundaryPair.FORWARD_VS_CALL else 'alpha_elastic'


def cmd_boundary(pair: str, axis1: str, axis2: str, config: RunConfig, out: str,
                 free_axis: Optional[str] = None,
                 interval: Optional[Tuple[float, float]] = None) -> Dict[str, Any]:
    try:
        pair = BoundaryPair(pair)
    except ValueError:
        raise ConfigError(f'unknown pair {pair!r}', 'pair') from None
    spec1, spec2 = parse_axis(axis1, 'axis1'), parse_axis(axis2, 'axis2')
    free_axis = free_axis or _default_free_axis(pair)
    for field, name in (('axis1', spec1.name), ('axis2', spec2.name), ('free', free_axis)):
        if name not in boundaries.PAIR_AXES[pair]:
            raise ConfigError(f'axis {name!r} does not apply to {pair.value}', field)
    if interval is None:
        if free_axis not in DEFAULT_INTERVALS:
            raise ConfigError(f'give --interval for free axis {free_axis!r}', 'interval')
        interval = DEFAULT_INTERVALS[free_axis]
    try:
        surface = boundaries.boundary_surface(pair, spec1, spec2, free_axis, tuple(interval), config.params,
                                              config.forward, config.call, config.dr)
    except ValueError as exc:
        raise ConfigError(str(exc), 'axes') from None

    g1, g2 = surface.axis1_grid, surface.axis2_grid
    rows = []
    for i, v1 in enumerate(g1):
        for j, v2 in enumerate(g2):
            row = {
                spec1.name: v1,
                spec2.name: v2,
                'boundary_value': surface.boundary_values[i, j],
                'marker': 'crossed' if surface.crossed[i, j] else 'no_crossing',
            }
            if surface.lower_bound_surface is not None:
                row['dr_profitability_bound'] = surface.lower_bound_surface[i, j]
            rows.append(row)
    out_path = Path(out)
    pd.DataFrame(rows).to_csv(out_path, index=False, float_format='%.12g', na_rep='')
    meta = {
        'pair': pair.value,
        'free_axis': free_axis,
        'search_interval': list(interval),
        'axis1': {'name': spec1.name, 'lo': spec1.lo, 'hi': spec1.hi, 'steps': spec1.steps},
        'axis2': {'name': spec2.name, 'lo': spec2.lo, 'hi': spec2.hi, 'steps': spec2.steps},
        'cells': int(surface.crossed.size),
        'crossed': int(surface.crossed.sum()),
        'config': config.echo,
        'version': __version__,
    }
    _write_json(meta, str(out_path.with_suffix('.json')))
    return meta


def cmd_saddle(pair: str, config: RunConfig) -> Dict[str, Any]:
    try:
        pair = PortfolioPair(pair)
    except ValueError:
        raise ConfigError(f'unknown pair {pair!r}', 'pair') from None
    if not isinstance(config.demand, (UniformDemand, PointDemand)):
        raise ConfigError('the saddle check covers uniform demand only, where a single instrument '
                          'is always optimal', 'demand.kind')
    try:
        report = oracle.pairwise_saddle_check(pair, config.params, config.forward, config.call, config.dr)
    except ValueError as exc:
        raise ConfigError(str(exc), 'instruments') from None
    return report.to_dict()


def _load(args) -> RunConfig:
    return load_run_config(args.config, overrides=args.set or (), seed=args.seed, output=args.out)


def _interval(values: Optional[List[float]]) -> Optional[Tuple[float, float]]:
    if values is None:
        return None
    lo, hi = values
    if not lo < hi:
        raise ConfigError('need lo < hi', 'interval')
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='lsehedge', description=__doc__.splitlines()[0])
    parser.add_argument('--verbose', '-v', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('fit-demand', help='fit the linexp demand law from meter data')
    p.add_argument('--meters', required=True)
    p.add_argument('--group-size', type=int, required=True)
    p.add_argument('--hours', type=int, nargs='+', default=list(DEFAULT_HOURS))
    p.add_argument('--bins', type=int, default=30)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out')

    p = sub.add_parser('fit-prices', help='fit the log-normal price law from 5-minute LMPs')
    p.add_argument('--lmp', required=True)
    p.add_argument('--xi', type=float, required=True, help='threshold in USD/MWh')
    p.add_argument('--strict', action='store_true', help='require prices strictly above xi')
    p.add_argument('--out')

    def with_config(p):
        p.add_argument('--config', required=True)
        p.add_argument('--set', action='append', metavar='KEY=VALUE', help='override a config field')
        p.add_argument('--seed', type=int)
        p.add_argument('--out')

    p = sub.add_parser('optimize', help='optimal decision per configured instrument')
    with_config(p)
    p.add_argument('--validate', action='store_true', help='append oracle cross-check deltas')
    p.add_argument('--cvar', action='store_true', help='append CVaR levels and CVaR-form profits')

    p = sub.add_parser('boundary', help='decision-boundary surface as CSV plus JSON sidecar')
    with_config(p)
    p.add_argument('--pair', required=True, choices=[x.value for x in BoundaryPair])
    p.add_argument('--axis1', required=True, help='name:lo:hi:steps')
    p.add_argument('--axis2', required=True, help='name:lo:hi:steps')
    p.add_argument('--free', help='free parameter (default lambda_F or alpha_elastic)')
    p.add_argument('--interval', type=float, nargs=2, metavar=('LO', 'HI'))

    p = sub.add_parser('saddle', help='Hessian check of a two-instrument portfolio')
    with_config(p)
    p.add_argument('--pair', required=True, choices=[x.value for x in PortfolioPair])
    return parser


def run(args) -> int:
    if args.command == 'fit-demand':
        cmd_fit_demand(args.meters, args.group_size, seed=args.seed, out=args.out, hours=args.hours, bins=args.bins)
    elif args.command == 'fit-prices':
        cmd_fit_prices(args.lmp, args.xi, out=args.out, strict=args.strict)
    elif args.command == 'optimize':
        config = _load(args)
        envelope = cmd_optimize(config, validate=args.validate, with_cvar=args.cvar)
        _write_json(envelope.to_dict(), config.output)
    elif args.command == 'boundary':
        config = _load(args)
        if not config.output:
            raise ConfigError('an output CSV path is required', 'out')
        cmd_boundary(args.pair, args.axis1, args.axis2, config, config.output,
                     free_axis=args.free, interval=_interval(args.interval))
    elif args.command == 'saddle':
        config = _load(args)
        _write_json(cmd_saddle(args.pair, config), config.output)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else LOG_LEVEL, format=LOG_FORMAT)
    try:
        return run(args)
    except HedgingError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + '\n')
        return exc.exit_code


if __name__ == '__main__':
    sys.exit(main())
