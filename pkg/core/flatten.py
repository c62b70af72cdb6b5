"""
Flatten - Premier pas du redressement: w = u o Phi, opérateur aplati,
coefficient gamma du bord et torsion exponentielle v = exp(y2 gamma(y1) / 2) w

L'opérateur complet est évalué numériquement (dérivées en x composées avec M = DPhi^-1)
puis normalisé pour que le coefficient de Delta^2 soit 1:
    Lw = Delta^2 w + b . grad Delta w + Q2(w)
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from config.settings import TRANSFORM_CONFIG
from core.conformal import ConformalChart
from core.errors import ChartError
from core.grid_field import GridField, derivative, laplacian, partial
from core.material import PlateConstants

logger = logging.getLogger(__name__)


def _pulled_material(chart: ConformalChart, pc: PlateConstants) -> Dict[str, np.ndarray]:
    """B, nu et a~ = 2 grad B / B évalués en Phi(y)"""
    x1, x2 = chart.phi.values, chart.psi.values
    B, nu = pc.evaluate(x1, x2)
    if pc.exact:
        dB1 = pc.B_expr.derivative(1, 0)(x1, x2)
        dB2 = pc.B_expr.derivative(0, 1)(x1, x2)
    else:
        dB1 = pc.B.sample(x1, x2, dx=1)
        dB2 = pc.B.sample(x1, x2, dy=1)
    return {'B': B, 'nu': nu, 'a_tilde': np.stack([2.0 * dB1 / B, 2.0 * dB2 / B])}


@dataclass(eq=False)
class FlattenedOperator:
    """
    Coefficients b (champ de vecteurs sur R) et opérateur complet sur la grille de R

    Sans carte ni matériau (from_coefficients), l'opérateur se réduit à Delta^2 + b . grad Delta.
    """
    b: np.ndarray                          # (2, n1, n2)
    y1: np.ndarray
    y2: np.ndarray
    chart: Optional[ConformalChart] = None
    material: Optional[Dict[str, np.ndarray]] = None
    accuracy: int = 4
    _q2: Optional[Dict[str, np.ndarray]] = field(default=None, init=False, repr=False)

    @classmethod
    def from_coefficients(cls, b, y1: np.ndarray, y2: np.ndarray,
                          accuracy: int = 4) -> 'FlattenedOperator':
        shape = (y1.size, y2.size)
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            b = np.stack([np.full(shape, b[0]), np.full(shape, b[1])])
        return cls(b, np.asarray(y1, dtype=float), np.asarray(y2, dtype=float), accuracy=accuracy)

    @property
    def h1(self) -> float:
        return float(self.y1[1] - self.y1[0])

    @property
    def h2(self) -> float:
        return float(self.y2[1] - self.y2[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.y1.size, self.y2.size

    def _d(self, values, nx=0, ny=0):
        return partial(values, self.h1, self.h2, nx, ny, self.accuracy)

    def _lap(self, values):
        return laplacian(values, self.h1, self.h2, self.accuracy)

    def grad_lap(self, values: np.ndarray) -> np.ndarray:
        lap = self._lap(values)
        return np.stack([self._d(lap, 1, 0), self._d(lap, 0, 1)])

    def leading(self, values: np.ndarray) -> np.ndarray:
        """Delta^2 w + b . grad Delta w"""
        values = np.asarray(values, dtype=float)
        bilap = self._lap(self._lap(values))
        return bilap + np.einsum('k...,k...->...', self.b, self.grad_lap(values))

    def _dx(self, values: np.ndarray, i: int) -> np.ndarray:
        """d/dx_i = sum_k M_ki d/dy_k"""
        M = self.chart.inverse_jacobian
        return M[0, i] * self._d(values, 1, 0) + M[1, i] * self._d(values, 0, 1)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """
        Opérateur transformé complet: (L u)(Phi) / (B(Phi) |grad phi|^-4) avec u = w o Phi^-1
        """
        if self.chart is None:
            return self.leading(values)
        values = np.asarray(values, dtype=float)
        B, nu = self.material['B'], self.material['nu']
        D = B * (1.0 - nu)
        u1 = self._dx(values, 0)
        u11 = self._dx(u1, 0)
        u12 = self._dx(u1, 1)
        u22 = self._dx(self._dx(values, 1), 1)
        lap = u11 + u22
        M11 = D * u11 + B * nu * lap
        M12 = D * u12
        M22 = D * u22 + B * nu * lap
        L_u = (self._dx(self._dx(M11, 0), 0) + 2.0 * self._dx(self._dx(M12, 0), 1)
               + self._dx(self._dx(M22, 1), 1))
        J = 1.0 / self.chart.grad_sq
        return L_u / (B * J ** 2)

    def remainder(self, values: np.ndarray) -> np.ndarray:
        """Q2(w) = Lw - Delta^2 w - b . grad Delta w"""
        return self.apply(values) - self.leading(values)

    def q2_coefficients(self) -> Dict[str, np.ndarray]:
        """Coefficients C_alpha de Q2 identifiés sur les monômes de degré <= 2"""
        if self._q2 is None:
            yy1, yy2 = np.meshgrid(self.y1, self.y2, indexing='ij')
            R = self.remainder
            c0 = R(np.ones_like(yy1))
            c1 = R(yy1) - c0 * yy1
            c2 = R(yy2) - c0 * yy2
            c11 = R(0.5 * yy1 ** 2) - c1 * yy1 - 0.5 * c0 * yy1 ** 2
            c12 = R(yy1 * yy2) - c1 * yy2 - c2 * yy1 - c0 * yy1 * yy2
            c22 = R(0.5 * yy2 ** 2) - c2 * yy2 - 0.5 * c0 * yy2 ** 2
            self._q2 = {'0': c0, '1': c1, '2': c2, '11': c11, '12': c12, '22': c22}
        return self._q2

    def coefficient_bounds(self) -> Dict[str, float]:
        m = TRANSFORM_CONFIG['interior_margin']
        inner = (slice(m, -m), slice(m, -m))
        bounds = {'b': float(np.max(np.abs(self.b)))}
        if self.chart is not None:
            bounds['Q2'] = max(float(np.max(np.abs(c[inner])))
                               for c in self.q2_coefficients().values())
        return bounds


def assemble_flattened_operator(chart: ConformalChart, material: PlateConstants) -> FlattenedOperator:
    """
    b = 2 grad J / J + M (a~ o Phi) / J avec J = |grad phi|^-2

    Raises:
        ChartError: |grad phi| sous le seuil de dégénérescence
    """
    grad_sq = chart.grad_sq
    if np.min(np.sqrt(grad_sq)) < 1e-12:
        node = np.unravel_index(int(np.argmin(grad_sq)), grad_sq.shape)
        raise ChartError(f"Degenerate chart: |grad phi| < 1e-12 at node {node}", stage='transform')

    accuracy = TRANSFORM_CONFIG['fd_accuracy']
    pulled = _pulled_material(chart, material)
    J = 1.0 / grad_sq
    h1, h2 = chart.phi.hx, chart.phi.hy
    grad_J = np.stack([partial(J, h1, h2, 1, 0, accuracy), partial(J, h1, h2, 0, 1, accuracy)])
    M_a = np.einsum('ki...,i...->k...', chart.inverse_jacobian, pulled['a_tilde'])
    b = 2.0 * grad_J / J + M_a / J

    op = FlattenedOperator(b, chart.y1, chart.y2, chart, pulled, accuracy)
    logger.info(f"✅ Flattened operator assembled: max|b| = {float(np.max(np.abs(b))):.4g} "
                f"(leading coefficient of Delta^2 normalised to 1)")
    return op


# === TORSION EXPONENTIELLE ===

@dataclass(frozen=True, eq=False)
class TwistData:
    """gamma(y1) et a(y) = exp(-y2 gamma(y1) / 2)"""
    y1: np.ndarray
    y2: np.ndarray
    gamma: np.ndarray
    a: GridField

    @classmethod
    def from_gamma(cls, gamma, y1: np.ndarray, y2: np.ndarray) -> 'TwistData':
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), y1.shape).copy()
        a = np.exp(-0.5 * y2[None, :] * gamma[:, None])
        return cls(y1, y2, gamma, GridField(y1, y2, a, name='a'))

    @property
    def is_trivial(self) -> bool:
        return bool(np.all(self.gamma == 0.0))


def gamma_from_fields(nu_bottom: np.ndarray, grad_sq: GridField) -> np.ndarray:
    """gamma = ((1 - nu)/2) |grad phi|^2 d_y2(|grad phi|^-2) sur y2 = 0, stencil unilatéral à 3 points"""
    J = 1.0 / grad_sq.values
    dJ = derivative(J, grad_sq.hy, axis=1, order=1, accuracy=TRANSFORM_CONFIG['edge_accuracy'])
    return 0.5 * (1.0 - np.asarray(nu_bottom)) * grad_sq.values[:, 0] * dJ[:, 0]


def gamma_coefficient(chart: ConformalChart, material: PlateConstants) -> TwistData:
    _, nu = material.evaluate(chart.phi.values[:, 0], chart.psi.values[:, 0])
    grad_sq = chart.phi.with_values(chart.grad_sq, name='grad_sq')
    gamma = gamma_from_fields(nu, grad_sq)
    logger.info(f"Boundary coefficient gamma in [{gamma.min():.4g}, {gamma.max():.4g}]")
    return TwistData.from_gamma(gamma, chart.y1, chart.y2)


def to_v(w: GridField, twist: TwistData) -> GridField:
    """v = exp(y2 gamma(y1) / 2) w, soit w = a v"""
    edge = float(np.max(np.abs(w.values[:, 0])))
    if edge > 1e-8 * max(1.0, float(np.max(np.abs(w.values)))):
        logger.warning(f"⚠️ w does not vanish on the bottom edge (max |w| = {edge:.3e})")
    return w.with_values(w.values / twist.a.values, name='v')


def twist_remainders(v: np.ndarray, a: np.ndarray, hx: float, hy: float,
                     accuracy: int = 4) -> Dict[str, np.ndarray]:
    """
    Restes d'ordre inférieur de
        Delta^2(a v) = a Delta^2 v + 4 grad a . grad Delta v + p
        grad Delta(a v) = a grad Delta v + q
    """
    def lap(f):
        return laplacian(f, hx, hy, accuracy)

    def d(f, nx, ny):
        return partial(f, hx, hy, nx, ny, accuracy)

    av = a * v
    lap_v = lap(v)
    grad_lap_v = (d(lap_v, 1, 0), d(lap_v, 0, 1))
    grad_a = (d(a, 1, 0), d(a, 0, 1))
    lap_av = lap(av)
    bilap_rem = (lap(lap_av) - a * lap(lap_v)
                 - 4.0 * (grad_a[0] * grad_lap_v[0] + grad_a[1] * grad_lap_v[1]))
    grad_rem = np.stack([d(lap_av, 1, 0) - a * grad_lap_v[0], d(lap_av, 0, 1) - a * grad_lap_v[1]])
    return {'bilaplacian': bilap_rem, 'grad_laplacian': grad_rem}


def boundary_residuals_flattened(w: GridField, v: GridField, twist: TwistData,
                                 op: FlattenedOperator) -> Dict[str, float]:
    """
    Conditions de bord sur y2 = 0 avant et après torsion, identité
    Delta v = Delta w + gamma d_y2 w, et résidu intérieur de l'équation en v
    """
    accuracy = TRANSFORM_CONFIG['fd_accuracy']
    lap_w = w.laplacian(accuracy)
    lap_v = v.laplacian(accuracy)
    w_2 = w.partial(0, 1, accuracy)
    oblique = lap_w[:, 0] + twist.gamma * w_2[:, 0]

    m = TRANSFORM_CONFIG['interior_margin']
    inner = (slice(m, -m), slice(m, -m))
    a = twist.a.values
    interior = op.apply(a * v.values) / a
    scale = max(1.0, float(np.max(np.abs(op.leading(v.values)[inner]))))

    report = {
        'w_edge': float(np.max(np.abs(w.values[:, 0]))),
        'oblique_condition': float(np.max(np.abs(oblique))),
        'v_edge': float(np.max(np.abs(v.values[:, 0]))),
        'laplacian_v_edge': float(np.max(np.abs(lap_v[:, 0]))),
        'edge_equivalence': float(np.max(np.abs(lap_v[:, 0] - oblique))),
        'interior_residual': float(np.max(np.abs(interior[inner]))) / scale,
        'convention': 'leading coefficient of Delta^2 normalised to 1',
    }
    logger.info(f"Flattened boundary residuals: |w|={report['w_edge']:.3e}, "
                f"|Dw+g w_2|={report['oblique_condition']:.3e}, |v|={report['v_edge']:.3e}, "
                f"|Dv|={report['laplacian_v_edge']:.3e}")
    return report
