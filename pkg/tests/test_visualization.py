from core.reports import write_plot_data
from core.visualization import FigureRenderer


def test_render_available_curves(tmp_path):
    write_plot_data(tmp_path / 'mass_curve.dat', ('log_s', 'log_m'), [(-3.0, -10.0), (-1.0, -2.0)])
    write_plot_data(tmp_path / 'ratio_vs_tau.dat', ('tau', 'ratio_r0.4'), [])
    figures = FigureRenderer(dpi=50).render_all(tmp_path)
    assert figures == [tmp_path / 'mass_curve.png']
    assert figures[0].stat().st_size > 0


def test_empty_directory_renders_nothing(tmp_path):
    assert FigureRenderer().render_all(tmp_path) == []
