"""
Visualization - Figures PNG optionnelles à partir des fichiers de tracé (.dat)
Courbe log-log des masses, rapports de Carleman en fonction de tau, résidus en fonction
de la résolution
"""
import logging
from pathlib import Path
from typing import List, Optional, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from core.reports import read_plot_data  # noqa: E402

logger = logging.getLogger(__name__)

PLOT_FILES = {
    'mass_curve': 'mass_curve.dat',
    'ratio_vs_tau': 'ratio_vs_tau.dat',
    'residual_vs_resolution': 'residual_vs_resolution.dat',
}


class FigureRenderer:
    """Rendu des courbes de la chaîne de calcul"""

    def __init__(self, dpi: int = 150):
        self.dpi = dpi
        self.colors = {
            'mass': (0.20, 0.60, 0.86),
            'fit': (0.91, 0.30, 0.24),
            'residual': (0.56, 0.27, 0.68),
        }
        self.cycle = ['#2ecc71', '#3498db', '#e67e22', '#9b59b6', '#e74c3c', '#34495e']

    def _save(self, fig, path: Path) -> Path:
        fig.tight_layout()
        fig.savefig(path, dpi=self.dpi)
        plt.close(fig)
        logger.info(f"✅ Figure saved: {path}")
        return path

    def render_mass_curve(self, dat_path: Union[str, Path]) -> Optional[Path]:
        header, data = read_plot_data(dat_path)
        if data.shape[0] == 0:
            logger.warning(f"⚠️ No data in {dat_path}, figure skipped")
            return None
        fig, ax = plt.subplots(figsize=(6, 4.5))
        ax.plot(data[:, 0], data[:, 1], 'o-', color=self.colors['mass'], label='log m(s)')
        if data.shape[0] >= 2:
            slope = (data[-1, 1] - data[0, 1]) / (data[-1, 0] - data[0, 0])
            ax.plot(data[[0, -1], 0], data[[0, -1], 1], '--', color=self.colors['fit'],
                    label=f'mean slope {slope:.3f}')
        ax.set_xlabel(header[0])
        ax.set_ylabel(header[1])
        ax.set_title('Mass curve at P')
        ax.grid(True, alpha=0.3)
        ax.legend()
        return self._save(fig, Path(dat_path).with_suffix('.png'))

    def render_ratio_vs_tau(self, dat_path: Union[str, Path]) -> Optional[Path]:
        header, data = read_plot_data(dat_path)
        if data.shape[0] == 0:
            logger.warning(f"⚠️ No data in {dat_path}, figure skipped")
            return None
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for k, name in enumerate(header[1:], start=1):
            ax.semilogy(data[:, 0], data[:, k], 'o-', color=self.cycle[(k - 1) % len(self.cycle)],
                        label=name)
        ax.set_xlabel('tau')
        ax.set_ylabel('max LHS / RHS')
        ax.set_title('Carleman ratio')
        ax.grid(True, which='both', alpha=0.3)
        ax.legend()
        return self._save(fig, Path(dat_path).with_suffix('.png'))

    def render_residual_vs_resolution(self, dat_path: Union[str, Path]) -> Optional[Path]:
        header, data = read_plot_data(dat_path)
        if data.shape[0] == 0:
            logger.warning(f"⚠️ No data in {dat_path}, figure skipped")
            return None
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for k, name in enumerate(header[1:], start=1):
            ax.loglog(data[:, 0], data[:, k], 's-', color=self.cycle[(k - 1) % len(self.cycle)],
                      label=name)
        ax.set_xlabel(header[0])
        ax.set_ylabel('residual')
        ax.set_title('Residual vs resolution')
        ax.grid(True, which='both', alpha=0.3)
        ax.legend()
        return self._save(fig, Path(dat_path).with_suffix('.png'))

    def render_all(self, directory: Union[str, Path]) -> List[Path]:
        directory = Path(directory)
        renderers = {
            'mass_curve': self.render_mass_curve,
            'ratio_vs_tau': self.render_ratio_vs_tau,
            'residual_vs_resolution': self.render_residual_vs_resolution,
        }
        figures = []
        for key, render in renderers.items():
            path = directory / PLOT_FILES[key]
            if path.exists():
                figure = render(path)
                if figure is not None:
                    figures.append(figure)
        return figures
