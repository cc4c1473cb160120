#!/usr/bin/env python3
"""
Tests for the command-line interface and its exit codes
"""

import json

from learner_cli import create_parser, main
from synthetic_data_manager import read_dataset

SMALL_RUN = ['--dim', '2', '--k', '2', '--n-train', '1500', '--n-valid', '600', '--n-test', '1500',
             '--max-iterations', '1000', '--seed', '2']


def test_no_command_prints_help(capsys):
    assert main([]) == 0
    assert 'learn-halfspace' in capsys.readouterr().out


def test_parser_defaults_leave_config_fields_unset():
    args = create_parser().parse_args(['learn-boolean', '--K', '2'])
    assert args.K == 2
    assert args.epsilon is None
    assert args.require_certificate is None


def test_gen_data_writes_both_formats(tmp_path):
    for fmt in ('text', 'binary'):
        path = tmp_path / f"data.{fmt}"
        code = main(['--quiet', 'gen-data', '--dim', '3', '--n-train', '200', '--noise', 'none',
                     '--format', fmt, '--out', str(path)])
        assert code == 0
        data = read_dataset(path)
        assert (data.size, data.dim) == (200, 3)


def test_gen_data_requires_out():
    assert main(['gen-data', '--dim', '2']) == 4


def test_usage_errors_exit_with_4(capsys):
    assert main(['learn-halfspace', '--dim', 'abc']) == 4
    assert main(['learn-boolean', '--solver-method', 'newton']) == 4
    assert main(['--quiet', 'unknown-command']) == 4
    assert 'usage:' in capsys.readouterr().err


def test_invalid_input_exits_with_4(tmp_path):
    assert main(['--quiet', 'learn-halfspace', '--epsilon', '0.7']) == 4
    assert main(['--quiet', 'learn-halfspace', '--dataset', str(tmp_path / 'missing.txt')]) == 4
    bad = tmp_path / "config.json"
    bad.write_text('{"learning_rate": 1}')
    assert main(['--quiet', 'learn-halfspace', '--config', str(bad)]) == 4
    assert main(['--quiet', 'verify', '--suite', 'nonexistent']) == 4


def test_learn_halfspace_writes_report(tmp_path):
    out = tmp_path / "report.json"
    assert main(['--quiet', 'learn-halfspace', *SMALL_RUN, '--out', str(out)]) == 0
    report = json.loads(out.read_text())
    for key in ('task', 'config', 'parameters', 'solver', 'subspace', 'cover', 'hypothesis', 'errors',
                'checks', 'timings', 'guarantee', 'status'):
        assert key in report
    assert report['task'] == 'halfspace'
    assert report['config']['degree_k'] == 2


def test_config_file_values_are_overridden_by_flags(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({'dim': 5, 'seed': 9, 'noise': 'none'}))
    out = tmp_path / "report.json"
    assert main(['--quiet', 'learn-halfspace', '--config', str(config), *SMALL_RUN, '--out', str(out)]) == 0
    report = json.loads(out.read_text())
    assert report['config']['dim'] == 2
    assert report['config']['noise'] == 'none'


def test_budget_failure_exits_with_3_and_partial_report(tmp_path):
    out = tmp_path / "partial.json"
    assert main(['--quiet', 'learn-halfspace', *SMALL_RUN, '--max-cover', '5', '--out', str(out)]) == 3
    report = json.loads(out.read_text())
    assert report['status'] == 'failed'
    assert report['failed_stage'] == 'cover'


def test_brute_force_dimension_guard():
    assert main(['--quiet', 'brute-force', '--dim', '5']) == 4


def test_verify_quick_suite(tmp_path):
    out = tmp_path / "verify.json"
    assert main(['--quiet', 'verify', '--suite', 'cellerm', '--quick', '--out', str(out)]) == 0
    result = json.loads(out.read_text())
    assert result['passed']
    assert result['n_failed'] == 0
    assert {check['suite'] for check in result['checks']} == {'cellerm'}


def test_brute_force_on_low_dimensional_dataset_file(tmp_path):
    data = tmp_path / "plane.txt"
    assert main(['--quiet', 'gen-data', '--dim', '2', '--n-train', '400', '--seed', '5', '--out', str(data)]) == 0
    out = tmp_path / "brute.json"
    assert main(['--quiet', 'brute-force', '--dataset', str(data), '--out', str(out)]) == 0
    report = json.loads(out.read_text())
    assert report['task'] == 'brute-force'
    assert report['cover']['rank'] == 2
    assert report['guarantee']['passed'] is None


def test_max_candidates_flag_reaches_the_cover():
    assert main(['--quiet', 'brute-force', '--dim', '3', '--max-candidates', '1000']) == 3
    assert main(['--quiet', 'learn-halfspace', '--max-candidates', '0']) == 4
