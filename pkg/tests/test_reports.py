import math

import numpy as np
import pytest

from core.errors import ReportMissingError
from core.reports import (read_csv, read_json, read_plot_data, sha256_json, write_csv, write_json,
                          write_plot_data)


def test_csv_keeps_full_precision(tmp_path):
    path = write_csv(tmp_path / 'values.csv', ('name', 'count', 'value'),
                     [('a', 3, 0.1), ('b', 4, 1.0 / 3.0)])
    text = path.read_text(encoding='utf-8').splitlines()
    assert text[0] == 'name,count,value'
    assert text[1] == 'a,3,0.10000000000000001'
    rows = read_csv(path)
    assert rows[1]['value'] == 1.0 / 3.0
    assert rows[1]['count'] == 4


def test_identical_reports_are_identical_bytes(tmp_path):
    rows = [(0.1 * k, math.sqrt(k)) for k in range(5)]
    first = write_csv(tmp_path / 'a.csv', ('x', 'y'), rows)
    second = write_csv(tmp_path / 'b.csv', ('x', 'y'), rows)
    assert first.read_bytes() == second.read_bytes()


def test_json_handles_numpy_and_non_finite(tmp_path):
    path = write_json(tmp_path / 'report.json', {'n': np.int64(3), 'x': np.float64(0.5),
                                                 'bad': math.inf, 'arr': np.arange(3)})
    data = read_json(path)
    assert data == {'n': 3, 'x': 0.5, 'bad': 'inf', 'arr': [0, 1, 2]}


def test_plot_data_header_only(tmp_path):
    path = write_plot_data(tmp_path / 'empty.dat', ('log_s', 'log_m'), [])
    assert path.read_text(encoding='utf-8') == '# log_s log_m\n'
    header, data = read_plot_data(path)
    assert header == ['log_s', 'log_m']
    assert data.shape == (0, 2)


def test_plot_data_values(tmp_path):
    path = write_plot_data(tmp_path / 'mass.dat', ('log_s', 'log_m'), [(0.0, 1.5), (1.0, 2.5)])
    header, data = read_plot_data(path)
    np.testing.assert_array_equal(data, [[0.0, 1.5], [1.0, 2.5]])


@pytest.mark.parametrize('reader', [read_csv, read_json, read_plot_data])
def test_missing_report(tmp_path, reader):
    with pytest.raises(ReportMissingError):
        reader(tmp_path / 'absent')


def test_hash_ignores_key_order():
    assert sha256_json({'a': 1, 'b': [1, 2]}) == sha256_json({'b': [1, 2], 'a': 1})
    assert sha256_json({'a': 1}) != sha256_json({'a': 2})
