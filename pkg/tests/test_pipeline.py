import pytest

from core.errors import ConfigValidationError, ReportMissingError
from core.pipeline import STAGES, Pipeline, PipelineConfig, emit_plot_data, run_pipeline
from core.reports import read_json, read_plot_data, write_csv

BASE = """
[material]
lambda = 1
mu = 2
thickness = 0.1

[boundary]
g = 0

[solution]
boundary_data = 2*x1*x2
exact = 2*x1*x2

[grid]
resolution = 17

[carleman]
family_size = 2
resolution = 33
taus = 2, 5
radii = 0.4, 0.8

[doubling]
radii = 0.05, 0.1, 0.2, 0.4
"""


def _config(extra: str = '', drop: str = None) -> PipelineConfig:
    text = BASE
    if drop:
        start = text.index(f'[{drop}]')
        end = text.index('[', start + 1)
        text = text[:start] + text[end:]
    return PipelineConfig.from_string(text + extra)


def test_defaults_filled():
    config = _config()
    assert config['boundary']['r0'] == 1.0
    assert config['chart']['method'] == 'polynomial'
    assert config['doubling']['quasi_radii'] == [0.05, 0.2, 0.8]
    assert config['carleman']['taus'] == [2.0, 5.0]


@pytest.mark.parametrize('extra, drop', [
    ('', 'material'),
    ('[extra]\nkey = 1\n', None),
    ('[output]\ncolour = red\n', None),
    ('[chart]\nmethod = schwarz\n', None),
])
def test_invalid_blocks(extra, drop):
    with pytest.raises(ConfigValidationError) as info:
        _config(extra, drop)
    assert info.value.exit_code == 2


@pytest.mark.parametrize('resolution', [16, 15, 18])
def test_resolution_must_be_odd_and_large(resolution):
    with pytest.raises(ConfigValidationError):
        _config().with_resolution(resolution)


def test_refinement_must_be_power_of_two_plus_one():
    text = BASE.replace('resolution = 17\n', 'resolution = 17\nrefinement = 17, 31\n', 1)
    with pytest.raises(ConfigValidationError):
        PipelineConfig.from_string(text)


def test_malformed_values():
    with pytest.raises(ConfigValidationError):
        PipelineConfig.from_string(BASE.replace('thickness = 0.1', 'thickness = thin'))
    with pytest.raises(ConfigValidationError):
        PipelineConfig.from_string(BASE.replace('g = 0', 'g = log(x)'))
    with pytest.raises(ConfigValidationError):
        PipelineConfig.from_string(BASE + '[doubling\n')


def test_quasi_radii_ordering():
    with pytest.raises(ConfigValidationError):
        PipelineConfig.from_string(BASE.replace('[doubling]\n',
                                                '[doubling]\nquasi_radii = 0.1, 0.15, 0.8\n'))


def test_config_hash_ignores_output():
    base = _config()
    moved = _config('[output]\ndirectory = elsewhere\n')
    assert base.config_hash == moved.config_hash
    assert base.config_hash != base.with_resolution(33).config_hash


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigValidationError):
        PipelineConfig.from_file(tmp_path / 'absent.ini')


def test_unknown_stage(tmp_path):
    with pytest.raises(ConfigValidationError):
        Pipeline(_config(), tmp_path).run(['solve', 'mesh'])


def test_downstream_stage_needs_inputs(tmp_path):
    manifest = run_pipeline(_config(), tmp_path, stages=['transform'])
    record = manifest.stages['transform']
    assert record.status == 'failed'
    assert record.exit_code == ReportMissingError.exit_code
    assert manifest.exit_code == ReportMissingError.exit_code


def test_plot_data_from_empty_reports(tmp_path):
    write_csv(tmp_path / 'doubling.csv', ('radius', 'mass', 'slope'), [])
    write_csv(tmp_path / 'carleman.csv', ('function_id', 'tau', 'r', 'lhs_group1', 'lhs_group2',
                                          'rhs', 'ratio'), [])
    write_csv(tmp_path / 'solve_refinement.csv', ('resolution', 'h', 'error_max',
                                                  'interior_residual', 'order'), [])
    written = emit_plot_data(tmp_path, tmp_path / 'plots')
    assert written['mass_curve'].read_text(encoding='utf-8') == '# log_s log_m\n'
    header, data = read_plot_data(written['residual_vs_resolution'])
    assert header == ['resolution', 'interior_residual', 'error_max']
    assert data.shape == (0, 3)


def test_plot_data_needs_reports(tmp_path):
    with pytest.raises(ReportMissingError):
        emit_plot_data(tmp_path)


@pytest.mark.slow
def test_full_run_is_idempotent(tmp_path):
    config = _config()
    pipeline = Pipeline(config, tmp_path)
    manifest = pipeline.run()
    assert manifest.exit_code == 0
    assert all(manifest.stages[name].status == 'passed' for name in STAGES)
    assert pipeline.stats['stages_run'] == len(STAGES)

    solve_report = read_json(tmp_path / 'solve_report.json')
    assert solve_report['boundary_value_residual'] < 1e-10
    summary = read_json(tmp_path / 'doubling_summary.json')
    assert summary['N'] >= 1.0

    rerun = Pipeline(config, tmp_path)
    rerun.run()
    assert rerun.stats['stages_skipped'] == len(STAGES)
    assert rerun.stats['stages_run'] == 0

    written = emit_plot_data(tmp_path)
    header, data = read_plot_data(written['ratio_vs_tau'])
    assert header == ['tau', 'ratio_r0.4', 'ratio_r0.8']
    assert data.shape == (2, 3)
