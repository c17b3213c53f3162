import json

import pandas as pd
import pytest

from lsehedge.cli import main
from lsehedge.services import synthetic


def _read(path):
    return json.loads(path.read_text(encoding='utf-8'))


def _config(tmp_path, name='run.json', **changes):
    raw = {
        'market': {'lambda_f': '0.05 USD/kWh'},
        'demand': {'kind': 'uniform', 'd_min': 0, 'd_max': 100},
        'price': {'kind': 'uniform', 's_max': '200 USD/MWh'},
        'seed': 0,
    }
    raw.update(changes)
    path = tmp_path / name
    path.write_text(json.dumps(raw), encoding='utf-8')
    return path


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_optimize_demo_config(tmp_path, demo_config_path):
    out = tmp_path / 'result.json'
    assert main(['optimize', '--config', str(demo_config_path), '--out', str(out)]) == 0
    result = _read(out)
    assert result['base_profit'] == pytest.approx(-2500.0)
    assert result['decisions']['forward']['decision'] == pytest.approx(50.0)
    assert result['decisions']['forward']['expected_profit'] == pytest.approx(-1250.0)
    assert result['decisions']['call']['decision'] == pytest.approx(84.375)
    assert result['decisions']['call']['expected_profit'] == pytest.approx(-221.875)
    assert result['decisions']['dr']['decision'] == pytest.approx(1200.0)
    assert result['decisions']['dr']['expected_profit'] == pytest.approx(-1600.0)
    assert result['best'] == 'Call'
    assert result['config']['market']['lambda_f'] == 50.0


def test_optimize_validate_and_cvar(tmp_path, demo_config_path):
    out = tmp_path / 'result.json'
    assert main(['optimize', '--config', str(demo_config_path), '--validate', '--cvar', '--out', str(out)]) == 0
    result = _read(out)
    for name in ('forward', 'call', 'dr'):
        assert result['validation'][name]['profit_delta'] < 1e-6
        assert result['validation'][name]['decision_delta'] < 1e-4
    assert result['cvar']['forward']['level'] == pytest.approx(0.5)
    assert result['cvar']['call']['level'] == pytest.approx(0.84375)
    assert result['cvar']['dr']['level'] == pytest.approx(0.6)
    assert result['cvar']['call']['profit'] == pytest.approx(-221.875)


def test_optimize_is_byte_deterministic(tmp_path, demo_config_path):
    first, second = tmp_path / 'a.json', tmp_path / 'b.json'
    assert main(['optimize', '--config', str(demo_config_path), '--validate', '--out', str(first)]) == 0
    assert main(['optimize', '--config', str(demo_config_path), '--validate', '--out', str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_tariff_units_are_interchangeable(tmp_path, demo_config_path):
    kwh, mwh = tmp_path / 'kwh.json', tmp_path / 'mwh.json'
    assert main(['optimize', '--config', str(demo_config_path), '--out', str(kwh)]) == 0
    assert main(['optimize', '--config', str(demo_config_path), '--set', 'market.lambda_f="50 USD/MWh"',
                 '--out', str(mwh)]) == 0
    assert kwh.read_bytes() == mwh.read_bytes()


def test_missing_unit_tag_is_a_config_error(tmp_path, capsys):
    path = _config(tmp_path, market={'lambda_f': 0.05}, forward={'lambda_F': '50 USD/MWh'})
    assert main(['optimize', '--config', str(path)]) == 2
    error = _error(capsys)
    assert error['status'] == 'error'
    assert error['field'] == 'market.lambda_f'


def test_dr_only_below_tariff_keeps_base(tmp_path):
    path = _config(tmp_path, market={'lambda_f': '150 USD/MWh'}, dr={'alpha_elastic': 0.05})
    out = tmp_path / 'result.json'
    assert main(['optimize', '--config', str(path), '--out', str(out)]) == 0
    result = _read(out)
    assert result['decisions']['dr']['kind'] == 'None'
    assert result['decisions']['dr']['decision'] == 0.0
    assert result['decisions']['dr']['expected_profit'] == pytest.approx(result['base_profit'])
    assert result['best'] == 'None'


def test_optimize_without_instruments_fails(tmp_path):
    assert main(['optimize', '--config', str(_config(tmp_path))]) == 2


def test_fit_demand_then_optimize_with_model_file(tmp_path):
    meters = synthetic.write_meter_csv(tmp_path / 'meters.csv', seed=0, n_users=300, days=20)
    model = tmp_path / 'demand_model.json'
    assert main(['fit-demand', '--meters', str(meters), '--group-size', '250', '--seed', '0',
                 '--out', str(model)]) == 0
    fitted = _read(model)
    assert fitted['model'] == 'linexp'
    assert fitted['c'] > 0 and fitted['d_max'] > fitted['d_min']
    again = tmp_path / 'again.json'
    assert main(['fit-demand', '--meters', str(meters), '--group-size', '250', '--seed', '0',
                 '--out', str(again)]) == 0
    assert model.read_bytes() == again.read_bytes()

    path = _config(tmp_path, demand={'model_file': model.name}, forward={'lambda_F': '50 USD/MWh'})
    out = tmp_path / 'result.json'
    assert main(['optimize', '--config', str(path), '--out', str(out)]) == 0
    assert _read(out)['config']['demand']['kind'] == 'linexp'


def test_fit_demand_group_too_large(tmp_path, capsys):
    meters = synthetic.write_meter_csv(tmp_path / 'meters.csv', seed=0, n_users=300, days=2)
    assert main(['fit-demand', '--meters', str(meters), '--group-size', '400']) == 3
    message = _error(capsys)['message']
    assert '400' in message and '300' in message


def test_fit_prices(tmp_path, capsys):
    lmp = synthetic.write_lmp_csv(tmp_path / 'lmp.csv', seed=0, days=60)
    out = tmp_path / 'price_model.json'
    assert main(['fit-prices', '--lmp', str(lmp), '--xi', '80', '--out', str(out)]) == 0
    fitted = _read(out)
    assert fitted['model'] == 'lognormal'
    assert fitted['sigma_log'] > 0
    assert 'discarded' in fitted
    assert main(['fit-prices', '--lmp', str(lmp), '--xi', '1000000']) == 3
    assert 'insufficient conditioned samples' in _error(capsys)['message']


def test_boundary_surface_files(tmp_path, demo_config_path):
    out = tmp_path / 'surface.csv'
    assert main(['boundary', '--config', str(demo_config_path), '--pair', 'DrVsForward',
                 '--axis1', 'lambda_F:30:70:3', '--axis2', 'mean_spot:70:150:3', '--out', str(out)]) == 0
    table = pd.read_csv(out)
    assert len(table) == 9
    assert {'lambda_F', 'mean_spot', 'boundary_value', 'marker', 'dr_profitability_bound'} <= set(table.columns)
    meta = _read(out.with_suffix('.json'))
    assert meta['pair'] == 'DrVsForward'
    assert meta['free_axis'] == 'alpha_elastic'
    assert meta['cells'] == 9


def test_boundary_single_cell(tmp_path, demo_config_path):
    out = tmp_path / 'cell.csv'
    assert main(['boundary', '--config', str(demo_config_path), '--pair', 'DrVsCall', '--free', 'inv_alpha',
                 '--interval', '0.5', '49', '--axis1', 'premium:10:10:1', '--axis2', 'lambda_C:40:40:1',
                 '--out', str(out)]) == 0
    table = pd.read_csv(out)
    assert len(table) == 1
    assert table['boundary_value'][0] == pytest.approx(2.2703, abs=1e-4)


def test_boundary_rejects_axis_of_other_pair(tmp_path, demo_config_path, capsys):
    out = tmp_path / 'surface.csv'
    assert main(['boundary', '--config', str(demo_config_path), '--pair', 'DrVsForward',
                 '--axis1', 'premium:1:10:3', '--axis2', 'mean_spot:70:150:3', '--out', str(out)]) == 2
    assert _error(capsys)['field'] == 'axis1'


def test_saddle_command(tmp_path, demo_config_path):
    out = tmp_path / 'saddle.json'
    assert main(['saddle', '--config', str(demo_config_path), '--pair', 'ForwardDr', '--out', str(out)]) == 0
    assert _read(out)['classification'] == 'Saddle'
    assert main(['saddle', '--config', str(demo_config_path), '--pair', 'ForwardCall', '--out', str(out)]) == 0
    assert _read(out)['classification'] in ('Saddle', 'NoInteriorPoint')
    assert main(['saddle', '--config', str(demo_config_path), '--pair', 'CallDr',
                 '--set', 'demand={"kind": "point", "d": 50}', '--out', str(out)]) == 0
    assert _read(out)['classification'] == 'Degenerate'


def test_saddle_rejects_non_uniform_demand(demo_config_path):
    code = main(['saddle', '--config', str(demo_config_path), '--pair', 'ForwardCall',
                 '--set', 'demand={"kind": "linexp", "c": 0.08, "d_min": 20, "d_max": 120}'])
    assert code == 2


def test_linexp_scale_overflow_is_a_config_error(tmp_path, capsys):
    path = _config(tmp_path, demand={'kind': 'linexp', 'c': 10, 'd_min': 80, 'd_max': 100},
                   forward={'lambda_F': '50 USD/MWh'})
    assert main(['optimize', '--config', str(path)]) == 2
    error = _error(capsys)
    assert error['status'] == 'error'
    assert error['field'] == 'demand'
