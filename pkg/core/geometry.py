"""
Geometry - Profil de bord C^{4,alpha}, domaine Omega_r0 et quadrature sur B_s inter Omega
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from config.settings import GEOMETRY_CONFIG
from core.errors import GeometryError, ParameterError
from core.expressions import Expression
from core.grid_field import GridField, uniform_axis

logger = logging.getLogger(__name__)

REGION_KINDS = ('disc', 'half_disc_plus', 'half_disc_minus', 'rectangle')


@dataclass(frozen=True, eq=False)
class BoundaryProfile:
    """Graphe g du bord sur [-r0, r0] avec constantes M0 et alpha"""
    g: Expression
    r0: float = 1.0
    M0: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.r0 <= 0 or self.M0 <= 0:
            raise GeometryError("r0 and M0 must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise GeometryError(f"Hölder exponent must lie in (0, 1), got {self.alpha}")

    @classmethod
    def from_text(cls, text: str, r0: float = 1.0, M0: float = 1.0,
                  alpha: float = 0.5) -> 'BoundaryProfile':
        return cls(Expression(text), r0, M0, alpha)

    @property
    def height(self) -> float:
        """Demi-hauteur 2 M0 r0 du rectangle R_{r0, 2M0r0}"""
        return 2.0 * self.M0 * self.r0

    def __call__(self, x1) -> np.ndarray:
        return self.g(x1)

    def derivative(self, k: int) -> Expression:
        return self.g.derivative(k, 0) if k else self.g

    def validate(self):
        """g(0) = g'(0) = 0 à la tolérance près (dérivée exacte)"""
        tol = GEOMETRY_CONFIG['origin_tolerance']
        g0 = float(self.g(0.0))
        dg0 = float(self.derivative(1)(0.0))
        if abs(g0) > tol or abs(dg0) > tol:
            raise GeometryError(
                f"Boundary profile must satisfy g(0)=g'(0)=0, got g(0)={g0:.3e}, g'(0)={dg0:.3e}"
            )

    def holder_surrogate(self, n: int = 257) -> Dict[str, float]:
        """
        Substitut de la norme C^{4,alpha}: sommes des sup pondérées par r0^i et
        semi-norme de Hölder de g'''' estimée aux échelles hx et r0/8
        """
        t = uniform_axis(-self.r0, self.r0, n)
        norm = 0.0
        for i in range(5):
            norm += self.r0 ** i * float(np.max(np.abs(self.derivative(i)(t))))

        g4 = self.derivative(4)(t)
        hx = t[1] - t[0]
        seminorm = 0.0
        for scale in (hx, self.r0 / GEOMETRY_CONFIG['coarse_scale_divisor']):
            step = max(1, int(round(scale / hx)))
            if step >= n:
                continue
            quotient = np.abs(g4[step:] - g4[:-step]) / (step * hx) ** self.alpha
            seminorm = max(seminorm, float(np.max(quotient)))
        norm += self.r0 ** (4 + self.alpha) * seminorm

        bound = self.M0 * self.r0
        return {'norm': norm, 'bound': bound, 'passed': norm <= bound}


@dataclass(frozen=True, eq=False)
class DomainChart:
    """Omega_r0 = {x in R_{r0,2M0r0} : x2 > g(x1)} sur grille structurée"""
    profile: BoundaryProfile
    x1: np.ndarray
    x2: np.ndarray
    mask: np.ndarray
    boundary_x1: np.ndarray
    boundary_x2: np.ndarray
    area: float
    regularity: Dict[str, float]

    @property
    def hx(self) -> float:
        return float(self.x1[1] - self.x1[0])

    @property
    def hy(self) -> float:
        return float(self.x2[1] - self.x2[0])

    @property
    def top(self) -> float:
        return self.profile.height

    def inside(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        r0, H = self.profile.r0, self.profile.height
        return (np.abs(x1) < r0) & (x2 < H) & (x2 > -H) & (x2 > self.profile(x1))

    def field(self, values: np.ndarray, name: str = 'field') -> GridField:
        return GridField(self.x1, self.x2, values, self.mask, name)

    def sample_function(self, func: Callable, name: str = 'field') -> GridField:
        return GridField.from_function(func, self.x1, self.x2, self.mask, name)


def build_domain(profile: BoundaryProfile, resolution: Union[int, Tuple[int, int]]) -> DomainChart:
    """
    Construit le masque de Omega_r0, les points de Gamma_r0 et mesure |Omega_r0|

    Raises:
        ParameterError: moins de 16 noeuds par axe
        GeometryError: profil violant g(0) = g'(0) = 0
    """
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    nx, ny = int(nx), int(ny)
    if min(nx, ny) < GEOMETRY_CONFIG['min_resolution']:
        raise ParameterError(f"Domain resolution must be >= {GEOMETRY_CONFIG['min_resolution']} "
                             f"nodes per axis, got ({nx}, {ny})")
    profile.validate()

    regularity = profile.holder_surrogate()
    if not regularity['passed']:
        logger.warning(f"⚠️ C^(4,alpha) surrogate {regularity['norm']:.4g} exceeds "
                       f"M0*r0 = {regularity['bound']:.4g}")

    r0, H = profile.r0, profile.height
    x1 = uniform_axis(-r0, r0, nx)
    x2 = uniform_axis(-H, H, ny)
    xx, yy = np.meshgrid(x1, x2, indexing='ij')
    mask = yy > profile(xx)

    # |Omega_r0| = int (H - g) dx1 par Gauss-Legendre composite
    nodes, weights = _composite_gauss(-r0, r0, 16, 8)
    area = float(np.sum(weights * (H - profile(nodes))))

    chart = DomainChart(profile, x1, x2, mask, x1.copy(), profile(x1), area, regularity)
    logger.info(f"✅ Domain built on {nx}x{ny} grid, |Omega_r0| = {area:.6f}")
    return chart


# === QUADRATURE ===

def _composite_gauss(a: float, b: float, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True, eq=False)
class Region:
    """Disque B_s(P), demi-disques B_s^+/-, rectangle, éventuellement intersectés avec Omega"""
    kind: str
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    half_height: Optional[float] = None
    chart: Optional[DomainChart] = None

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ParameterError(f"Unknown region kind '{self.kind}'")
        if self.radius <= 0:
            raise ParameterError(f"Region radius must be positive, got {self.radius}")
        if self.kind == 'rectangle' and self.half_height is not None and self.half_height <= 0:
            raise ParameterError("Rectangle half height must be positive")

    @classmethod
    def disc(cls, radius: float, center=(0.0, 0.0), chart: Optional[DomainChart] = None) -> 'Region':
        return cls('disc', tuple(center), radius, None, chart)

    @classmethod
    def half_disc(cls, radius: float, sign: int = 1, center=(0.0, 0.0)) -> 'Region':
        return cls('half_disc_plus' if sign > 0 else 'half_disc_minus', tuple(center), radius)

    @classmethod
    def rectangle(cls, a: float, b: float, center=(0.0, 0.0),
                  chart: Optional[DomainChart] = None) -> 'Region':
        """R_{a,b} = (-a, a) x (-b, b) centré en center"""
        return cls('rectangle', tuple(center), a, b, chart)

    @property
    def is_round(self) -> bool:
        return self.kind != 'rectangle'

    def contains(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        dx, dy = x1 - self.center[0], x2 - self.center[1]
        if self.kind == 'rectangle':
            inside = (np.abs(dx) < self.radius) & (np.abs(dy) < (self.half_height or self.radius))
        else:
            inside = dx ** 2 + dy ** 2 < self.radius ** 2
            if self.kind == 'half_disc_plus':
                inside &= dy > 0
            elif self.kind == 'half_disc_minus':
                inside &= dy < 0
        if self.chart is not None:
            inside &= self.chart.inside(x1, x2)
        return inside

    def column_interval(self, x1: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Intervalle [lo, hi] en x2 de la région au-dessus de chaque abscisse"""
        x1 = np.asarray(x1, dtype=float)
        P1, P2 = self.center
        if self.kind == 'rectangle':
            b = self.half_height or self.radius
            inside = np.abs(x1 - P1) <= self.radius
            lo = np.where(inside, P2 - b, P2)
            hi = np.where(inside, P2 + b, P2)
        else:
            half_chord = np.sqrt(np.maximum(self.radius ** 2 - (x1 - P1) ** 2, 0.0))
            lo, hi = P2 - half_chord, P2 + half_chord
            if self.kind == 'half_disc_plus':
                lo = np.full_like(x1, P2)
            elif self.kind == 'half_disc_minus':
                hi = np.full_like(x1, P2)
        if self.chart is not None:
            lo = np.maximum(lo, self.chart.profile(x1))
            hi = np.minimum(hi, self.chart.top)
            outside = np.abs(x1) >= self.chart.profile.r0
            hi = np.where(outside, lo, hi)
        return lo, np.maximum(hi, lo)

    def x_nodes(self, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
        """Abscisses et poids; substitution x1 = P1 - s cos(theta) pour les disques"""
        P1 = self.center[0]
        if self.kind == 'rectangle':
            return _composite_gauss(P1 - self.radius, P1 + self.radius, panels, order)
        theta, w_theta = _composite_gauss(0.0, math.pi, panels, order)
        return P1 - self.radius * np.cos(theta), self.radius * np.sin(theta) * w_theta


@dataclass
class MassEstimate:
    value: float
    empty: bool
    n_points: int


FieldLike = Union[GridField, Callable]


def integrate_square(field: FieldLike, region: Region, spacing: Optional[float] = None,
                     order: Optional[int] = None) -> MassEstimate:
    """
    Quadrature de |field|^2 sur la région par colonnes

    Chaque colonne x1 est découpée exactement par le bord de la région, par Gamma
    (courbe x2 = g(x1)) et par l'étendue de la grille; Gauss-Legendre composite dans
    les deux directions, les panneaux suivant le pas de la grille.
    """
    order = order or GEOMETRY_CONFIG['quadrature_order']
    refinement = GEOMETRY_CONFIG['cut_cell_refinement']
    chunk = GEOMETRY_CONFIG['chunk_size']

    if isinstance(field, GridField):
        evaluate = field.sample
        x_lo, x_hi, y_lo, y_hi = field.extent
        hx = spacing or field.hx
        hy = spacing or field.hy
    else:
        evaluate = field
        x_lo = y_lo = -np.inf
        x_hi = y_hi = np.inf
        hx = hy = spacing or region.radius / 64.0

    span = math.pi * region.radius if region.is_round else 2.0 * region.radius
    panels_x = max(refinement, int(math.ceil(span / hx)))
    xs, wx = region.x_nodes(panels_x, order)
    lo, hi = region.column_interval(xs)
    inside_x = (xs >= x_lo) & (xs <= x_hi)
    lo = np.clip(lo, y_lo, y_hi)
    hi = np.clip(hi, y_lo, y_hi)
    length = np.where(inside_x, hi - lo, 0.0)

    if not np.any(length > 0):
        logger.warning(f"⚠️ Empty intersection for region {region.kind} r={region.radius}")
        return MassEstimate(0.0, True, 0)

    t, wt = np.polynomial.legendre.leggauss(order)
    panels_y = max(refinement, int(math.ceil(float(np.max(length)) / hy)))
    edges = np.linspace(0.0, 1.0, panels_y + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    unit_nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    unit_weights = (half[:, None] * wt[None, :]).ravel()

    total = 0.0
    n_points = 0
    active = np.nonzero(length > 0)[0]
    for start in range(0, active.size, chunk):
        idx = active[start:start + chunk]
        col_x = np.repeat(xs[idx][:, None], unit_nodes.size, axis=1)
        col_y = lo[idx][:, None] + length[idx][:, None] * unit_nodes[None, :]
        weights = (wx[idx] * length[idx])[:, None] * unit_weights[None, :]
        values = np.asarray(evaluate(col_x, col_y), dtype=float)
        total += float(np.sum(weights * values ** 2))
        n_points += values.size

    return MassEstimate(total, False, n_points)


def mass(field: FieldLike, region: Region, spacing: Optional[float] = None) -> float:
    """Approximation de l'intégrale de |field|^2 sur la région (0 si vide)"""
    return integrate_square(field, region, spacing).value
