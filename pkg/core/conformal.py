"""
Conformal - Carte conforme Phi = (phi, psi) du rectangle R = (-1,1) x (0,1)
sur un voisinage de Gamma, avec Phi([-1,1] x {0}) dans Gamma et Phi(0,0) = (0,0)

Deux constructions:
    polynomial: prolongement analytique F(z) = r1 z + i P(z) de la paramétrisation
                t -> (r1 t, g(r1 t)), P interpolant de Tchebychev de g(r1 t)
    laplace:    psi harmonique discrète à données de bord ajustées par point fixe,
                phi conjuguée harmonique par intégration de Cauchy-Riemann
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Chebyshev
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import splu

from config.settings import CHART_CONFIG, TRANSFORM_CONFIG
from core.errors import ChartError, ParameterError
from core.expressions import Expression
from core.geometry import BoundaryProfile
from core.grid_field import GridField, derivative, laplacian, uniform_axis
from core.reports import read_json, write_json

logger = logging.getLogger(__name__)

CHART_METHODS = ('polynomial', 'laplace')


def chart_grid_shape(resolution: int) -> Tuple[int, int]:
    """Grille de R à pas égal dans les deux directions"""
    n1 = int(resolution)
    return n1, (n1 - 1) // 2 + 1


@dataclass(frozen=True, eq=False)
class ConformalChart:
    """Composantes phi, psi sur R, gradient de phi et constantes mesurées"""
    phi: GridField
    psi: GridField
    phi_1: GridField
    phi_2: GridField
    profile: BoundaryProfile
    r1: float
    method: str
    K: float
    c0: float
    C0: float = 1.0
    diagnostics: Dict[str, float] = field(default_factory=dict)
    polynomial: Optional[Chebyshev] = None

    @property
    def r0(self) -> float:
        return self.profile.r0

    @property
    def y1(self) -> np.ndarray:
        return self.phi.x

    @property
    def y2(self) -> np.ndarray:
        return self.phi.y

    @property
    def grad_sq(self) -> np.ndarray:
        """|grad phi|^2 = det DPhi"""
        return self.phi_1.values ** 2 + self.phi_2.values ** 2

    @property
    def jacobian_norm(self) -> np.ndarray:
        """|DPhi| (norme de Frobenius) = sqrt(2) |grad phi|"""
        return np.sqrt(2.0 * self.grad_sq)

    @property
    def inverse_jacobian(self) -> np.ndarray:
        """M = (DPhi)^-1 = |grad phi|^-2 [[phi_1, -phi_2], [phi_2, phi_1]], forme (2, 2, n1, n2)"""
        p1, p2 = self.phi_1.values, self.phi_2.values
        g = self.grad_sq
        return np.array([[p1 / g, -p2 / g], [p2 / g, p1 / g]])

    # --- évaluation hors grille ---
    def evaluate(self, y1, y2) -> Tuple[np.ndarray, np.ndarray]:
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.polynomial is not None:
            F = self.r1 * (y1 + 1j * y2) + 1j * self.polynomial(y1 + 1j * y2)
            return F.real - self.diagnostics.get('shift_x1', 0.0), \
                F.imag - self.diagnostics.get('shift_x2', 0.0)
        return self.phi.sample(y1, y2), self.psi.sample(y1, y2)

    def gradient(self, y1, y2) -> Tuple[np.ndarray, np.ndarray]:
        """(phi_1, phi_2) en des points arbitraires"""
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.polynomial is not None:
            dF = self.r1 + 1j * self.polynomial.deriv()(y1 + 1j * y2)
            return dF.real, -dF.imag
        return self.phi.sample(y1, y2, dx=1), self.phi.sample(y1, y2, dy=1)

    def inverse(self, x1, x2, tol: Optional[float] = None,
                max_iter: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Phi^-1 par itérations de Newton, pas M (x - Phi(y))

        Returns:
            (y1, y2, converged)
        """
        tol = tol or CHART_CONFIG['newton_tolerance']
        max_iter = max_iter or CHART_CONFIG['newton_max_iter']
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        y1, y2 = x1 / self.r1, x2 / self.r1
        step = np.full(np.broadcast(x1, x2).shape, np.inf)
        for _ in range(max_iter):
            f1, f2 = self.evaluate(y1, y2)
            e1, e2 = x1 - f1, x2 - f2
            p1, p2 = self.gradient(y1, y2)
            g = p1 ** 2 + p2 ** 2
            d1 = (p1 * e1 - p2 * e2) / g
            d2 = (p2 * e1 + p1 * e2) / g
            y1 = np.clip(y1 + d1, -1.5, 1.5)
            y2 = np.clip(y2 + d2, -0.5, 1.5)
            step = np.hypot(d1, d2)
            if np.all(step < tol):
                break
        return y1, y2, step < tol

    def identity_residuals(self) -> Dict[str, float]:
        """(DPhi)^T DPhi = |grad phi|^2 I, M M^T = |grad phi|^-2 I, harmonicité de phi et psi"""
        p1, p2 = self.phi_1.values, self.phi_2.values
        D = np.array([[p1, p2], [-p2, p1]])
        g = self.grad_sq
        DtD = np.einsum('ki...,kj...->ij...', D, D)
        M = self.inverse_jacobian
        MMt = np.einsum('ik...,jk...->ij...', M, M)
        eye = np.eye(2)[:, :, None, None]
        margin = TRANSFORM_CONFIG['interior_margin']
        inner = (slice(margin, -margin), slice(margin, -margin))
        lap_phi = self.phi.laplacian(accuracy=4)[inner]
        lap_psi = self.psi.laplacian(accuracy=4)[inner]
        return {
            'dtd': float(np.max(np.abs(DtD - g * eye)) / np.max(g)),
            'mmt': float(np.max(np.abs(MMt - eye / g)) * np.min(g)),
            'harmonic_phi': float(np.max(np.abs(lap_phi))),
            'harmonic_psi': float(np.max(np.abs(lap_psi))),
        }

    # --- fichiers ---
    def save(self, directory: Union[str, Path]) -> List[Path]:
        """Deux fichiers de champ (phi, psi) et l'enregistrement des constantes"""
        directory = Path(directory)
        paths = [self.phi.save(directory / 'phi.grid'), self.psi.save(directory / 'psi.grid')]
        record = {
            'method': self.method,
            'r0': self.r0, 'M0': self.profile.M0, 'alpha': self.profile.alpha,
            'profile': self.profile.g.text,
            'r1': self.r1, 'K': self.K, 'c0': self.c0, 'C0': self.C0,
            'diagnostics': self.diagnostics,
            'chebyshev_coefficients': (self.polynomial.coef.tolist()
                                       if self.polynomial is not None else None),
        }
        paths.append(write_json(directory / 'chart.json', record))
        return paths

    @classmethod
    def load(cls, directory: Union[str, Path]) -> 'ConformalChart':
        directory = Path(directory)
        record = read_json(directory / 'chart.json')
        phi = GridField.load(directory / 'phi.grid', name='phi')
        psi = GridField.load(directory / 'psi.grid', name='psi')
        profile = BoundaryProfile.from_text(record['profile'], record['r0'], record['M0'],
                                            record['alpha'])
        polynomial = None
        if record.get('chebyshev_coefficients') is not None:
            polynomial = Chebyshev(np.asarray(record['chebyshev_coefficients'], dtype=float))
        chart = cls(phi, psi, phi, phi, profile, record['r1'], record['method'],
                    record['K'], record['c0'], record['C0'], record['diagnostics'], polynomial)
        yy1, yy2 = phi.meshgrid()
        p1, p2 = chart.gradient(yy1, yy2)
        object.__setattr__(chart, 'phi_1', phi.with_values(p1, name='phi_1'))
        object.__setattr__(chart, 'phi_2', phi.with_values(p2, name='phi_2'))
        return chart


@dataclass
class ChartBounds:
    """Plages mesurées de |DPhi|, |DPhi^-1| et |Phi(y)|/|y| face aux fenêtres de la carte"""
    dphi_min: float
    dphi_max: float
    dphi_inv_min: float
    dphi_inv_max: float
    ratio_min: float
    ratio_max: float
    K: float
    c0: float
    C0: float
    r1: float
    containment_passed: bool
    containment_samples: int
    k_above_8: bool
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and self.containment_passed

    def to_dict(self) -> Dict:
        data = dict(vars(self))
        data['passed'] = self.passed
        return data


# === CONSTRUCTION ===

def _chebyshev_interpolant(profile: BoundaryProfile, r1: float) -> Chebyshev:
    """Interpolant de t -> g(r1 t) sur [-1, 1], degré doublé jusqu'à décroissance des coefficients"""
    tol = CHART_CONFIG['chebyshev_tolerance']
    degree = 16
    while True:
        poly = Chebyshev.interpolate(lambda t: profile(r1 * t), degree)
        scale = max(float(np.max(np.abs(poly.coef))), 1e-300)
        if float(np.max(np.abs(poly.coef[-4:]))) <= tol * scale or scale <= 1e-300:
            return poly
        if degree >= CHART_CONFIG['chebyshev_max_degree']:
            logger.warning(f"⚠️ Chebyshev interpolant of g not resolved at degree {degree}")
            return poly
        degree *= 2


def _polynomial_chart(profile: BoundaryProfile, r1: float, y1: np.ndarray, y2: np.ndarray):
    poly = _chebyshev_interpolant(profile, r1)
    yy1, yy2 = np.meshgrid(y1, y2, indexing='ij')
    z = yy1 + 1j * yy2
    F = r1 * z + 1j * poly(z)
    dF = r1 + 1j * poly.deriv()(z)
    return F.real, F.imag, dF.real, -dF.imag, poly


def _laplace_chart(profile: BoundaryProfile, r1: float, y1: np.ndarray, y2: np.ndarray):
    """psi harmonique discrète (5 points), données de bord par point fixe, phi conjuguée"""
    n1, n2 = y1.size, y2.size
    h1, h2 = y1[1] - y1[0], y2[1] - y2[0]
    index = np.arange(n1 * n2).reshape(n1, n2)
    interior = np.zeros((n1, n2), dtype=bool)
    interior[1:-1, 1:-1] = True

    rows, cols, vals = [], [], []
    for i, j in zip(*np.nonzero(interior)):
        k = index[i, j]
        rows += [k] * 5
        cols += [k, index[i - 1, j], index[i + 1, j], index[i, j - 1], index[i, j + 1]]
        vals += [-2.0 / h1 ** 2 - 2.0 / h2 ** 2, 1.0 / h1 ** 2, 1.0 / h1 ** 2,
                 1.0 / h2 ** 2, 1.0 / h2 ** 2]
    L = sp.csr_matrix((vals, (rows, cols)), shape=(n1 * n2, n1 * n2))
    inner = interior.ravel()
    lu = splu(L[inner][:, inner].tocsc())
    L_boundary = L[inner][:, ~inner]

    centre = n1 // 2
    phi_bottom = r1 * y1
    yy1, yy2 = np.meshgrid(y1, y2, indexing='ij')
    for iteration in range(CHART_CONFIG['laplace_max_iter']):
        g_bottom = profile(phi_bottom)
        psi = np.zeros((n1, n2))
        psi[:, 0] = g_bottom
        psi[:, -1] = g_bottom + r1
        psi[0, :] = g_bottom[0] + r1 * y2
        psi[-1, :] = g_bottom[-1] + r1 * y2
        flat = psi.reshape(-1)
        flat[inner] = lu.solve(-L_boundary @ flat[~inner])

        # phi_1 = psi_2, phi_2 = -psi_1
        psi_2 = derivative(psi, h2, axis=1, order=1, accuracy=4)
        psi_1 = derivative(psi, h1, axis=0, order=1, accuracy=4)
        bottom = cumulative_trapezoid(psi_2[:, 0], y1, initial=0.0)
        bottom -= bottom[centre]
        phi = bottom[:, None] - cumulative_trapezoid(psi_1, y2, axis=1, initial=0.0)

        change = float(np.max(np.abs(phi[:, 0] - phi_bottom)))
        phi_bottom = phi[:, 0]
        logger.debug(f"Laplace chart iteration {iteration}: boundary change {change:.3e}")
        if change < CHART_CONFIG['laplace_tolerance']:
            break
    else:
        logger.warning(f"⚠️ Laplace chart fixed point not converged (last change {change:.3e})")

    phi_1 = derivative(phi, h1, axis=0, order=1, accuracy=4)
    phi_2 = derivative(phi, h2, axis=1, order=1, accuracy=4)
    return phi, psi, phi_1, phi_2, None


def _orientation_check(phi: np.ndarray, psi: np.ndarray, grad_sq: np.ndarray,
                       y1: np.ndarray, y2: np.ndarray):
    """det DPhi > 0 aux noeuds et aire orientée > 0 pour chaque cellule image"""
    if np.min(grad_sq) <= CHART_CONFIG['degenerate_threshold']:
        node = np.unravel_index(int(np.argmin(grad_sq)), grad_sq.shape)
        raise ChartError(f"Degenerate chart: |grad phi|^2 = {grad_sq[node]:.3e} at "
                         f"y=({y1[node[0]]:.4f}, {y2[node[1]]:.4f})", stage='flatten-chart')
    d1x = phi[1:, 1:] - phi[:-1, :-1]
    d1y = psi[1:, 1:] - psi[:-1, :-1]
    d2x = phi[:-1, 1:] - phi[1:, :-1]
    d2y = psi[:-1, 1:] - psi[1:, :-1]
    area = 0.5 * (d1x * d2y - d2x * d1y)
    if np.any(area <= 0.0):
        cell = np.unravel_index(int(np.argmin(area)), area.shape)
        raise ChartError(f"Orientation test failed: cell {tuple(int(c) for c in cell)} at "
                         f"y=({y1[cell[0]]:.4f}, {y2[cell[1]]:.4f}) is folded",
                         stage='flatten-chart', residual=float(area[cell]))


def _measure_constants(chart_r0: float, phi: np.ndarray, psi: np.ndarray, grad_sq: np.ndarray,
                       y1: np.ndarray, y2: np.ndarray) -> Tuple[float, float, Dict[str, float]]:
    yy1, yy2 = np.meshgrid(y1, y2, indexing='ij')
    radius = np.hypot(yy1, yy2)
    away = radius > 1e-14
    ratio = np.hypot(phi, psi)[away] / radius[away]
    ratio_min = float(np.min(ratio))
    if not ratio_min > 0.0 or not np.isfinite(ratio_min):
        raise ChartError("No finite K: |Phi(y)|/|y| vanishes on the grid", stage='flatten-chart')
    K = chart_r0 / ratio_min
    c0 = 2.0 * float(np.min(np.sqrt(2.0 * grad_sq))) / chart_r0
    return K, c0, {'ratio_min': ratio_min, 'ratio_max': float(np.max(ratio))}


def _enforce_tolerances(diagnostics: Dict[str, float], method: str):
    """Cauchy-Riemann, bord inférieur sur Gamma et Phi(0,0) = (0,0) avant normalisation"""
    checks = (
        ('Cauchy-Riemann residual', diagnostics['cr_residual'], diagnostics['cr_tolerance']),
        ('Bottom edge distance to Gamma', diagnostics['boundary_residual'],
         CHART_CONFIG['boundary_tolerance']),
        ('Origin offset of Phi(0,0)', diagnostics['origin_residual'],
         CHART_CONFIG['origin_tolerance']),
    )
    for label, residual, tolerance in checks:
        if not residual <= tolerance:
            logger.error(f"❌ {label} {residual:.3e} above tolerance {tolerance:.3e} "
                         f"({method} chart)")
            raise ChartError(f"{label} {residual:.3e} exceeds {tolerance:.3e} ({method} chart)",
                             stage='flatten-chart', residual=residual)


def build_chart(profile: BoundaryProfile, resolution: int, method: Optional[str] = None,
                r1: Optional[float] = None) -> ConformalChart:
    """
    Construit la carte conforme sur une grille (resolution, (resolution - 1)/2 + 1) de R

    Raises:
        ChartError: carte dégénérée ou repliée (emplacement nommé), résidu de
            Cauchy-Riemann, du bord inférieur ou de l'origine hors tolérance
    """
    method = method or CHART_CONFIG['method']
    if method not in CHART_METHODS:
        raise ParameterError(f"Unknown chart method '{method}' (expected one of {CHART_METHODS})")
    profile.validate()
    r1 = r1 or CHART_CONFIG['r1_ratio'] * profile.r0
    n1, n2 = chart_grid_shape(resolution)
    if n2 < 9:
        raise ParameterError(f"Chart resolution {resolution} too small")
    y1 = uniform_axis(-1.0, 1.0, n1)
    y2 = uniform_axis(0.0, 1.0, n2)

    if method == 'polynomial':
        phi, psi, phi_1, phi_2, poly = _polynomial_chart(profile, r1, y1, y2)
    else:
        phi, psi, phi_1, phi_2, poly = _laplace_chart(profile, r1, y1, y2)

    # normalisation Phi(0,0) = (0,0)
    centre = n1 // 2
    shift = (float(phi[centre, 0]), float(psi[centre, 0]))
    phi = phi - shift[0]
    psi = psi - shift[1]

    grad_sq = phi_1 ** 2 + phi_2 ** 2
    _orientation_check(phi, psi, grad_sq, y1, y2)
    K, c0, ratios = _measure_constants(profile.r0, phi, psi, grad_sq, y1, y2)

    phi_field = GridField(y1, y2, phi, name='phi')
    psi_field = GridField(y1, y2, psi, name='psi')

    cr = max(float(np.max(np.abs(phi_field.partial(1, 0, 4) - psi_field.partial(0, 1, 4)))),
             float(np.max(np.abs(phi_field.partial(0, 1, 4) + psi_field.partial(1, 0, 4)))))
    dphi_max = float(np.max(np.sqrt(2.0 * grad_sq)))
    boundary = float(np.max(np.abs(psi[:, 0] - profile(phi[:, 0]))))
    diagnostics = {
        'cr_residual': cr,
        'cr_tolerance': CHART_CONFIG['cr_tolerance_factor'] * dphi_max,
        'boundary_residual': boundary,
        'origin_residual': float(math.hypot(*shift)),
        'shift_x1': shift[0],
        'shift_x2': shift[1],
        **ratios,
    }
    _enforce_tolerances(diagnostics, method)

    chart = ConformalChart(phi_field, psi_field, GridField(y1, y2, phi_1, name='phi_1'),
                           GridField(y1, y2, phi_2, name='phi_2'), profile, r1, method,
                           K, c0, 1.0, diagnostics, poly)
    logger.info(f"✅ Conformal chart ({method}) on {n1}x{n2}: r1={r1:.4g}, K={K:.4g}, "
                f"c0={c0:.4g}, CR residual {cr:.3e}")
    return chart


# === VÉRIFICATION ===

def _containment(chart: ConformalChart) -> Tuple[bool, int]:
    """Points de B_{r0/K} inter Omega ramenés dans R par Newton"""
    n = CHART_CONFIG['containment_samples']
    radius = chart.r0 / chart.K * (1.0 - 1e-9)
    rho = radius * (np.arange(1, n + 1) / n)
    theta = np.linspace(-math.pi, math.pi, 2 * n, endpoint=False)
    rr, tt = np.meshgrid(rho, theta, indexing='ij')
    x1, x2 = (rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()
    keep = x2 > chart.profile(x1)
    x1, x2 = x1[keep], x2[keep]
    y1, y2, converged = chart.inverse(x1, x2)
    tol = 1e-9
    inside = (np.abs(y1) <= 1.0 + tol) & (y2 >= -tol) & (y2 <= 1.0 + tol)
    passed = bool(np.all(converged & inside))
    if not passed:
        bad = np.nonzero(~(converged & inside))[0][0]
        logger.debug(f"Containment failed at x=({x1[bad]:.4f}, {x2[bad]:.4f}) -> "
                     f"y=({y1[bad]:.4f}, {y2[bad]:.4f})")
    return passed, int(x1.size)


def verify_bounds(chart: ConformalChart) -> ChartBounds:
    """
    Mesure |DPhi|, |DPhi^-1|, |Phi(y)|/|y| et contrôle les fenêtres
    c0 r0 / 2C0 <= |DPhi| <= r0/2, 4/r0 <= |DPhi^-1| <= 4C0/(c0 r0),
    r0|y|/K <= |Phi(y)| <= r0|y|/2, et B_{r0/K} inter Omega dans Phi(R)
    """
    r0, K, c0, C0 = chart.r0, chart.K, chart.c0, chart.C0
    if not np.isfinite(K):
        raise ChartError("No finite K satisfies the lower bound on |Phi(y)|", stage='flatten-chart')
    dphi = chart.jacobian_norm
    dphi_inv = np.sqrt(2.0 / chart.grad_sq)
    ratio_min, ratio_max = chart.diagnostics['ratio_min'], chart.diagnostics['ratio_max']
    slack = 1e-12

    failures = []
    if float(np.min(dphi)) < c0 * r0 / (2.0 * C0) * (1.0 - slack):
        failures.append('dphi_lower')
    if float(np.max(dphi)) > r0 / 2.0 * (1.0 + slack):
        failures.append('dphi_upper')
    if float(np.min(dphi_inv)) < 4.0 / r0 * (1.0 - slack):
        failures.append('dphi_inv_lower')
    if float(np.max(dphi_inv)) > 4.0 * C0 / (c0 * r0) * (1.0 + slack):
        failures.append('dphi_inv_upper')
    if ratio_min < r0 / K * (1.0 - slack):
        failures.append('phi_lower')
    if ratio_max > r0 / 2.0 * (1.0 + slack):
        failures.append('phi_upper')

    containment, samples = _containment(chart)
    bounds = ChartBounds(
        dphi_min=float(np.min(dphi)), dphi_max=float(np.max(dphi)),
        dphi_inv_min=float(np.min(dphi_inv)), dphi_inv_max=float(np.max(dphi_inv)),
        ratio_min=ratio_min, ratio_max=ratio_max,
        K=K, c0=c0, C0=C0, r1=chart.r1,
        containment_passed=containment, containment_samples=samples,
        k_above_8=K > 8.0, failures=failures,
    )
    if bounds.passed:
        logger.info(f"✅ Chart bounds verified (K={K:.4g}, c0={c0:.4g}, {samples} containment samples)")
    else:
        logger.warning(f"⚠️ Chart bounds violated: {failures or ['containment']}")
    return bounds


# === TRANSPORT DE CHAMPS ===

def pullback(u: GridField, chart: ConformalChart, order: int = 3) -> GridField:
    """
    w(y) = u(Phi(y)) par interpolation spline de u (bicubique par défaut)

    Raises:
        ChartError: Phi(y) hors de l'enveloppe de la grille de u
    """
    x1, x2 = chart.phi.values, chart.psi.values
    outside = ~u.contains(x1, x2, tol=1e-12)
    if np.any(outside):
        node = tuple(int(k) for k in np.argwhere(outside)[0])
        raise ChartError(f"Pullback would extrapolate: Phi{node} = ({x1[node]:.4f}, "
                         f"{x2[node]:.4f}) outside the grid of '{u.name}'", stage='transform')
    order = min(order, u.x.size - 1, u.y.size - 1)
    return GridField(chart.y1, chart.y2, u.sample(x1, x2, order=order), name='w')


def pullback_function(func: Union[Expression, Callable], chart: ConformalChart,
                      name: str = 'w') -> GridField:
    """Composition exacte w = u o Phi pour u donnée analytiquement"""
    return GridField(chart.y1, chart.y2, func(chart.phi.values, chart.psi.values), name=name)


def _laplacian_at_image(u: Union[GridField, Expression], chart: ConformalChart) -> np.ndarray:
    x1, x2 = chart.phi.values, chart.psi.values
    if isinstance(u, GridField):
        lap = u.with_values(u.laplacian(accuracy=4), name='lap_u')
        return lap.sample(x1, x2, order=min(5, u.x.size - 1))
    return u.derivative(2, 0)(x1, x2) + u.derivative(0, 2)(x1, x2)


def _interior(values: np.ndarray) -> np.ndarray:
    m = TRANSFORM_CONFIG['interior_margin']
    return values[m:-m, m:-m]


def laplacian_pullback_check(u: Union[GridField, Expression], w: GridField,
                             chart: ConformalChart) -> float:
    """max |(Delta u)(Phi) - |grad phi|^-2 Delta w| à l'intérieur, normalisé par max(1, |Delta u|)"""
    lhs = _laplacian_at_image(u, chart)
    rhs = w.laplacian(accuracy=4) / chart.grad_sq
    residual = float(np.max(np.abs(_interior(lhs - rhs))))
    return residual / max(1.0, float(np.max(np.abs(_interior(lhs)))))


def bilaplacian_pullback_check(u: Expression, w: GridField, chart: ConformalChart) -> float:
    """(Delta^2 u)(Phi) = |grad phi|^-2 Delta(|grad phi|^-2 Delta w)"""
    x1, x2 = chart.phi.values, chart.psi.values
    lhs = (u.derivative(4, 0)(x1, x2) + 2.0 * u.derivative(2, 2)(x1, x2)
           + u.derivative(0, 4)(x1, x2))
    inner = w.laplacian(accuracy=4) / chart.grad_sq
    rhs = laplacian(inner, w.hx, w.hy, accuracy=4) / chart.grad_sq
    residual = float(np.max(np.abs(_interior(lhs - rhs))))
    return residual / max(1.0, float(np.max(np.abs(_interior(lhs)))))
