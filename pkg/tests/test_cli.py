import pytest

from core.pipeline import STAGES
from main import build_parser, main

INVALID = """
[boundary]
g = 0

[solution]
boundary_data = x2

[grid]
resolution = 17
"""


def test_subcommands():
    parser = build_parser()
    for stage in STAGES:
        args = parser.parse_args([stage, '--resolution', '33'])
        assert args.command == stage
        assert args.resolution == 33
    args = parser.parse_args(['pipeline', '--force', '--out', 'results/x'])
    assert args.force and str(args.out) == 'results/x'


def test_plot_data_requires_directory():
    with pytest.raises(SystemExit):
        build_parser().parse_args(['plot-data'])


def test_missing_config_exits_with_validation_code(tmp_path):
    assert main(['solve', '--config', str(tmp_path / 'absent.ini')]) == 2


def test_invalid_config_exits_with_validation_code(tmp_path):
    path = tmp_path / 'invalid.ini'
    path.write_text(INVALID, encoding='utf-8')
    assert main(['pipeline', '--config', str(path), '--out', str(tmp_path / 'run')]) == 2


def test_plot_data_without_reports(tmp_path, capsys):
    assert main(['plot-data', '--out', str(tmp_path)]) == 2
    assert 'not found' in capsys.readouterr().err
