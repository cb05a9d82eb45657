import json
import math

import numpy as np
import pytest

from cli import EXIT_CLAIM_FAILED, EXIT_INPUT_ERROR, EXIT_OK, CommandRunner, main, sanitize
from config.settings import Config
from models.data_models import RunConfig
from models.distributions import CONSTANT_LABEL
from models.maps import scaling_map, split_map
from services.distribution_core import map_to_dict

U02 = {'atoms': [{'label': CONSTANT_LABEL, 'mass': 1.0, 'density': {'family': 'uniform', 'a': 0, 'b': 2}}]}


@pytest.fixture
def write_json(tmp_path):
    def write(name, document):
        target = tmp_path / name
        target.write_text(json.dumps(document, indent=1))
        return str(target)
    return write


def structured(capsys):
    return json.loads(capsys.readouterr().out)


def test_split_identity_command(capsys):
    assert main(['split-identity', '--lambda', '1', '--p', '0.5', '--format', 'structured']) == EXIT_OK
    report = structured(capsys)
    assert report['command'] == 'split-identity'
    assert report['inputs']['lam'] == 1.0
    assert report['results']['lhs'] == pytest.approx(1 + math.log(2))
    assert report['diagnostics'] == []
    assert 'seed' not in report


def test_entropy_of_distribution_file(capsys, write_json):
    assert main(['entropy', '--dist', write_json('u02.json', U02), '--format', 'structured']) == EXIT_OK
    result = structured(capsys)['results']['entropy']
    assert result['value'] == pytest.approx(math.log(2), abs=1e-8)
    assert result['certified'] is True


def test_human_output_lists_dotted_keys(capsys, write_json):
    assert main(['check', '--spec', write_json('u02.json', U02)]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'goodness.passed: True' in out
    assert 'term_magnitudes: ' in out


def test_split_map_preserves_entropy(capsys, write_json):
    args = ['transform', '--dist', write_json('u02.json', U02),
            '--map', write_json('split.json', map_to_dict(split_map([1.0]))), '--format', 'structured']
    assert main(args) == EXIT_OK
    results = structured(capsys)['results']
    assert results['certified'] is True
    assert abs(results['difference']) <= 1e-8


def test_scaling_map_fails_its_claim(capsys, write_json):
    args = ['transform', '--dist', write_json('u02.json', U02),
            '--map', write_json('scale.json', map_to_dict(scaling_map(2.0, [CONSTANT_LABEL])))]
    assert main(args) == EXIT_CLAIM_FAILED
    assert 'note: unit derivative check failed' in capsys.readouterr().out


def test_collapsing_map_is_rejected(capsys, write_json):
    collapsing = {'regions': [
        {'input_label': CONSTANT_LABEL, 'interval': [0, 1], 'output_label': 'a',
         'map': {'type': 'affine', 'slope': 1.0}},
        {'input_label': CONSTANT_LABEL, 'interval': [1, 2], 'output_label': 'a',
         'map': {'type': 'affine', 'slope': 1.0, 'intercept': -0.5}}]}
    args = ['transform', '--dist', write_json('u02.json', U02), '--map', write_json('bad.json', collapsing),
            '--format', 'structured']
    assert main(args) == EXIT_CLAIM_FAILED
    report = structured(capsys)
    assert report['results'] is None
    assert report['diagnostics']


def test_missing_file_is_an_input_error(capsys, tmp_path):
    assert main(['entropy', '--dist', str(tmp_path / 'absent.json')]) == EXIT_INPUT_ERROR
    assert 'No such file' in capsys.readouterr().out


def test_unknown_flag_is_an_input_error():
    assert main(['entropy', '--bogus']) == EXIT_INPUT_ERROR


def test_stochastic_command_needs_a_seed(capsys):
    assert main(['simulate', '--lambda', '1', '--T', '10']) == EXIT_INPUT_ERROR
    assert 'needs --seed' in capsys.readouterr().out


def test_missing_parameter_is_an_input_error(capsys):
    assert main(['split-identity', '--lambda', '1']) == EXIT_INPUT_ERROR
    assert '--p' in capsys.readouterr().out


def test_invalid_document_is_an_input_error(capsys, write_json):
    assert main(['entropy', '--dist', write_json('bad.json', {'atoms': [{'mass': 1.0}]})]) == EXIT_INPUT_ERROR


def test_simulation_as_csv(capsys):
    assert main(['simulate', '--lambda', '1', '--T', '20', '--seed', '1', '--p', '0.5', '--format', 'csv']) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'time,mark'
    assert {line.split(',')[1] for line in lines[1:]} <= {'H', 'T'}


def test_stochastic_report_records_seed_and_version(capsys):
    assert main(['simulate', '--lambda', '2', '--T', '5', '--seed', '9', '--format', 'structured']) == EXIT_OK
    report = structured(capsys)
    assert report['seed'] == 9
    assert report['trials'] == 1
    assert 'version' in report


def test_report_written_to_output_file(capsys, tmp_path):
    target = tmp_path / 'report.json'
    assert main(['horizon', '--lambda', '1', '--T', '1', '--format', 'structured', '--output', str(target)]) == EXIT_OK
    assert capsys.readouterr().out == ''
    results = json.loads(target.read_text())['results']
    assert results['count_entropy'] == pytest.approx(1.304842, abs=1e-6)


def test_chain_rate(capsys, write_json):
    chain = write_json('chain.json', {'lambda': 2.0, 'P': [[0.5, 0.5], [0.5, 0.5]], 'stationary': True})
    assert main(['ctmc-rate', '--chain', chain, '--format', 'structured']) == EXIT_OK
    results = structured(capsys)['results']
    assert results['entropy_rate'] == pytest.approx(2.0)
    assert results['stationary'] == pytest.approx([0.5, 0.5])


def test_order_statistics_command(capsys, write_json):
    density = write_json('unit.json', {'family': 'uniform', 'a': 0, 'b': 1})
    assert main(['order-stats', '--spec', density, '--n', '2', '--format', 'structured']) == EXIT_OK
    assert structured(capsys)['results']['h_sorted'] == pytest.approx(-math.log(2), abs=1e-4)


def test_discrete_estimate_from_file(capsys, tmp_path):
    samples = tmp_path / 'coins.txt'
    samples.write_text('H\nT\nH\nT\n')
    assert main(['estimate', '--samples', str(samples), '--discrete', '--format', 'structured']) == EXIT_OK
    assert structured(capsys)['results']['estimate']['value'] == pytest.approx(math.log(2))


def test_sanitize_spells_out_non_finite_values():
    clean = sanitize({'a': math.inf, 'b': np.float64(1.5), 'c': np.array([1, 2]), 'd': (-math.inf, math.nan)})
    assert clean == {'a': 'inf', 'b': 1.5, 'c': [1, 2], 'd': ['-inf', 'nan']}


def test_monte_carlo_entropy_report_records_seed_and_version(capsys, write_json):
    args = ['entropy', '--dist', write_json('u02.json', U02), '--method', 'monte-carlo', '--seed', '3',
            '--n', '1000', '--format', 'structured']
    assert main(args) == EXIT_OK
    report = structured(capsys)
    assert report['seed'] == 3
    assert report['trials'] == 1
    assert 'version' in report


def test_nearest_neighbour_estimate_report_records_seed(capsys, tmp_path):
    samples = tmp_path / 'draws.txt'
    samples.write_text('\n'.join(str(v) for v in np.random.default_rng(5).uniform(0, 2, 200)))
    assert main(['estimate', '--samples', str(samples), '--seed', '11', '--format', 'structured']) == EXIT_OK
    report = structured(capsys)
    assert report['seed'] == 11
    assert 'version' in report


def test_deterministic_report_has_no_seed(capsys, tmp_path):
    samples = tmp_path / 'coins.txt'
    samples.write_text('H\nT\n')
    assert main(['estimate', '--samples', str(samples), '--discrete', '--format', 'structured']) == EXIT_OK
    assert 'seed' not in structured(capsys)


def test_identity_tolerance_does_not_leak_into_the_given_config():
    config = Config(PROBE_POINTS=100)
    runner = CommandRunner(RunConfig('split-identity', lam=1.0, p=0.5, tol=1e-3), config)
    assert runner.config.IDENTITY_TOL == 1e-3
    assert config.IDENTITY_TOL == Config.IDENTITY_TOL
    assert runner.config.PROBE_POINTS == 100
