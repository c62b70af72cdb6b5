"""
Plate Solver - Problème de plaque appuyée sous forme faible sur Omega_r0
Grille adaptée au bord (x2 = g + eta (H - g) / H), énergie hessienne discrète,
factorisation creuse directe et diagnostics de résidus
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import LinearOperator, onenormest, splu
from tqdm import tqdm

from config.settings import SOLVER_CONFIG, TRANSFORM_CONFIG
from core.errors import AssemblyError, GeometryError, ParameterError, SolverError
from core.expressions import Expression
from core.geometry import BoundaryProfile, DomainChart, build_domain
from core.grid_field import GridField, derivative, uniform_axis
from core.material import StiffnessTensor

logger = logging.getLogger(__name__)


def solver_grid_shape(profile: BoundaryProfile, resolution: int) -> Tuple[int, int]:
    """Noeuds (xi, eta) à pas égal: resolution noeuds sur [-r0, r0]"""
    n1 = int(resolution)
    n2 = int(round((n1 - 1) * profile.height / (2.0 * profile.r0))) + 1
    return n1, max(n2, 5)


def domain_for(profile: BoundaryProfile, resolution: int) -> DomainChart:
    """DomainChart dont les lignes x2 >= 0 coïncident avec les lignes eta du solveur plat"""
    n1, n2 = solver_grid_shape(profile, resolution)
    return build_domain(profile, (n1, 2 * n2 - 1))


class StretchedGrid:
    """Grille (xi, eta) -> (x1, x2) = (xi, g(xi) + eta (H - g(xi)) / H)"""

    def __init__(self, profile: BoundaryProfile, n1: int, n2: int):
        self.profile = profile
        self.H = profile.height
        self.n1, self.n2 = n1, n2
        self.xi = uniform_axis(-profile.r0, profile.r0, n1)
        self.eta = uniform_axis(0.0, self.H, n2)
        self.h1 = float(self.xi[1] - self.xi[0])
        self.h2 = float(self.eta[1] - self.eta[0])

        g = profile(self.xi)
        if np.any(g >= self.H):
            raise GeometryError("Boundary profile reaches the top of R_{r0,2M0r0}")

        self.XI, self.ETA = np.meshgrid(self.xi, self.eta, indexing='ij')
        self.metric = self.metric_at(self.XI, self.ETA)
        self.X1, self.X2 = self.physical(self.XI, self.ETA)

    def physical(self, xi, eta) -> Tuple[np.ndarray, np.ndarray]:
        g = self.profile(xi)
        return np.asarray(xi, dtype=float), g + np.asarray(eta) * (self.H - g) / self.H

    def computational(self, x1, x2) -> Tuple[np.ndarray, np.ndarray]:
        g = self.profile(x1)
        return np.asarray(x1, dtype=float), self.H * (np.asarray(x2) - g) / (self.H - g)

    def metric_at(self, xi, eta) -> Dict[str, np.ndarray]:
        """Dérivées physiques de eta(x1, x2) et jacobien s = dx2/deta"""
        H = self.H
        g = self.profile(xi)
        g1 = self.profile.derivative(1)(xi)
        g2 = self.profile.derivative(2)(xi)
        d = H - g
        return {
            'eta_1': -g1 * (H - eta) / d,
            'eta_2': H / d,
            'eta_11': -(H - eta) * (g2 * d + 2.0 * g1 ** 2) / d ** 2,
            'eta_12': H * g1 / d ** 2,
            'jacobian': d / H,
        }

    def index(self, i, j) -> np.ndarray:
        return np.asarray(i) * self.n2 + np.asarray(j)

    # --- dérivées physiques par règle de chaîne sur tableaux nodaux ---
    def d1(self, values: np.ndarray, accuracy: int = 4) -> np.ndarray:
        return (derivative(values, self.h1, 0, 1, accuracy)
                + self.metric['eta_1'] * derivative(values, self.h2, 1, 1, accuracy))

    def d2(self, values: np.ndarray, accuracy: int = 4) -> np.ndarray:
        return self.metric['eta_2'] * derivative(values, self.h2, 1, 1, accuracy)

    def hessian(self, values: np.ndarray, accuracy: int = 4) -> Dict[str, np.ndarray]:
        u1 = self.d1(values, accuracy)
        return {
            '11': self.d1(u1, accuracy),
            '12': self.d2(u1, accuracy),
            '22': self.d2(self.d2(values, accuracy), accuracy),
        }


@dataclass(frozen=True, eq=False)
class PlateProblem:
    """Données du problème appuyé sur Omega_r0"""
    chart: DomainChart
    tensor: StiffnessTensor
    boundary_data: Expression
    source: Optional[Expression] = None

    @property
    def constants(self):
        return self.tensor.pc

    @property
    def is_conformant(self) -> bool:
        return self.source is None or (self.source.is_constant and float(self.source(0.0)) == 0.0)

    def grid(self) -> StretchedGrid:
        n1 = self.chart.x1.size
        n2 = (self.chart.x2.size + 1) // 2
        return StretchedGrid(self.chart.profile, n1, n2)


@dataclass
class LinearSystem:
    """Système assemblé sur tous les noeuds, partitionné en inconnues / valeurs imposées"""
    matrix: sp.csr_matrix
    grid: StretchedGrid
    unknown: np.ndarray          # bool (n1, n2)
    known_values: np.ndarray     # (n1, n2), valeurs imposées (0 sur Gamma, données ailleurs)
    load: np.ndarray             # (n1 * n2,) second membre de la source
    node_weights: np.ndarray     # (n1, n2)

    def stencil_row(self, node: Tuple[int, int]) -> Dict[Tuple[int, int], float]:
        """Ligne de la matrice divisée par le poids du noeud, indexée par décalage (di, dj)"""
        i, j = node
        row = self.matrix.getrow(int(self.grid.index(i, j)))
        weight = self.node_weights[i, j]
        stencil = {}
        for col, value in zip(row.indices, row.data):
            ci, cj = divmod(int(col), self.grid.n2)
            if value != 0.0:
                stencil[(ci - i, cj - j)] = float(value) / weight
        return stencil

    def symmetry_defect(self) -> float:
        diff = self.matrix - self.matrix.T
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


@dataclass
class SolveReport:
    """Résidus intérieurs et de bord, statistiques du solveur"""
    interior_residual: float
    interior_residual_max: float
    expanded_residual: float
    boundary_value_residual: float
    boundary_moment_residual: float
    solver_stats: Dict = field(default_factory=dict)
    computational: Optional[GridField] = None

    def to_dict(self) -> Dict:
        return {
            'interior_residual': self.interior_residual,
            'interior_residual_max': self.interior_residual_max,
            'expanded_residual': self.expanded_residual,
            'boundary_value_residual': self.boundary_value_residual,
            'boundary_moment_residual': self.boundary_moment_residual,
            'solver_stats': self.solver_stats,
        }


# === ASSEMBLAGE ===

def _operator(grid: StretchedGrid, pi: np.ndarray, pj: np.ndarray,
              entries: Sequence[Tuple[int, int, np.ndarray]]) -> sp.csr_matrix:
    """Opérateur creux (points x noeuds) à partir d'une liste (di, dj, coefficients)"""
    n_points = pi.size
    rows, cols, vals = [], [], []
    for di, dj, coef in entries:
        coef = np.broadcast_to(np.asarray(coef, dtype=float), (n_points,))
        ci = pi + di
        cj = pj + dj
        valid = (ci >= 0) & (ci < grid.n1) & (cj >= 0) & (cj < grid.n2)
        coef = np.where(valid, coef, 0.0)
        rows.append(np.arange(n_points))
        cols.append(grid.index(np.clip(ci, 0, grid.n1 - 1), np.clip(cj, 0, grid.n2 - 1)))
        vals.append(coef)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n_points, grid.n1 * grid.n2))


def _nodal_hessian_operators(grid: StretchedGrid, pi, pj):
    h1, h2 = grid.h1, grid.h2
    m = {k: v[pi, pj] for k, v in grid.metric.items()}
    e1, e11 = m['eta_1'], m['eta_11']
    e2 = m['eta_2']

    d_xixi = [(-1, 0, 1.0 / h1 ** 2), (0, 0, -2.0 / h1 ** 2), (1, 0, 1.0 / h1 ** 2)]
    d_etaeta = [(0, -1, 1.0 / h2 ** 2), (0, 0, -2.0 / h2 ** 2), (0, 1, 1.0 / h2 ** 2)]
    d_xieta = [(1, 1, 0.25 / (h1 * h2)), (1, -1, -0.25 / (h1 * h2)),
               (-1, 1, -0.25 / (h1 * h2)), (-1, -1, 0.25 / (h1 * h2))]
    d_eta = [(0, 1, 0.5 / h2), (0, -1, -0.5 / h2)]

    def scaled(stencil, factor):
        return [(di, dj, factor * c) for di, dj, c in stencil]

    g11 = (d_xixi + scaled(d_xieta, 2.0 * e1) + scaled(d_etaeta, e1 ** 2)
           + scaled(d_eta, e11))
    g22 = scaled(d_etaeta, e2 ** 2)
    return _operator(grid, pi, pj, g11), _operator(grid, pi, pj, g22)


def _cell_mixed_operator(grid: StretchedGrid, ci, cj):
    h1, h2 = grid.h1, grid.h2
    xi_c = grid.xi[ci] + 0.5 * h1
    eta_c = grid.eta[cj] + 0.5 * h2
    m = grid.metric_at(xi_c, eta_c)
    e1, e2, e12 = m['eta_1'], m['eta_2'], m['eta_12']

    first_row = (cj == 0).astype(float)
    inner_rows = 1.0 - first_row

    compact = [(1, 1, 1.0), (1, 0, -1.0), (0, 1, -1.0), (0, 0, 1.0)]
    entries = [(di, dj, e2 * c / (h1 * h2)) for di, dj, c in compact]
    for di in (0, 1):
        entries += [(di, 1, e12 * 0.5 / h2), (di, 0, -e12 * 0.5 / h2)]
        # u_eta_eta au centre: moyenne des lignes j, j+1 (ligne 1 seule contre Gamma)
        w = e1 * e2 * 0.5 / h2 ** 2
        entries += [(di, -1, 0.5 * w * inner_rows), (di, 0, -0.5 * w * inner_rows),
                    (di, 1, -0.5 * w * inner_rows), (di, 2, 0.5 * w * inner_rows)]
        entries += [(di, 0, w * first_row), (di, 1, -2.0 * w * first_row),
                    (di, 2, w * first_row)]
    return _operator(grid, ci, cj, entries), m['jacobian']


def assemble_weak_form(p: PlateProblem) -> LinearSystem:
    """
    Assemble la forme bilinéaire int c_ijlk d2_lk u d2_ij v sur l'espace test discret

    Les fonctions test s'annulent sur Gamma (valeur seulement) et sur les deux
    couches extérieures (valeur et dérivée normale).

    Raises:
        AssemblyError: système singulier (pas d'inconnue ou diagonale nulle)
    """
    grid = p.grid()
    n1, n2 = grid.n1, grid.n2
    if n1 * n2 > SOLVER_CONFIG['max_nodes']:
        raise ParameterError(f"Grid {n1}x{n2} exceeds the desk-scale limit of "
                             f"{SOLVER_CONFIG['max_nodes']} nodes")
    layers = SOLVER_CONFIG['clamped_layers']
    start = time.time()

    # quadrature nodale (hessiennes 11 et 22)
    ii, jj = np.meshgrid(np.arange(1, n1 - 1), np.arange(1, n2 - 1), indexing='ij')
    pi, pj = ii.ravel(), jj.ravel()
    G11, G22 = _nodal_hessian_operators(grid, pi, pj)
    B_n, nu_n = p.constants.evaluate(grid.X1[pi, pj], grid.X2[pi, pj])
    w_n = grid.h1 * grid.h2 * grid.metric['jacobian'][pi, pj]

    # quadrature aux centres de cellules (hessienne mixte)
    ci, cj = np.meshgrid(np.arange(0, n1 - 1), np.arange(0, n2 - 2), indexing='ij')
    ci, cj = ci.ravel(), cj.ravel()
    G12, jac_c = _cell_mixed_operator(grid, ci, cj)
    xc1, xc2 = grid.physical(grid.xi[ci] + 0.5 * grid.h1, grid.eta[cj] + 0.5 * grid.h2)
    B_c, nu_c = p.constants.evaluate(xc1, xc2)
    w_c = grid.h1 * grid.h2 * jac_c

    W_B = sp.diags(w_n * B_n)
    W_Bnu = sp.diags(w_n * B_n * nu_n)
    W_D = sp.diags(2.0 * w_c * B_c * (1.0 - nu_c))
    A = (G11.T @ W_B @ G11 + G22.T @ W_B @ G22 + G11.T @ W_Bnu @ G22
         + G22.T @ W_Bnu @ G11 + G12.T @ W_D @ G12)
    A = (0.5 * (A + A.T)).tocsr()

    unknown = np.zeros((n1, n2), dtype=bool)
    unknown[layers:n1 - layers, 1:n2 - layers] = True
    if not np.any(unknown):
        raise AssemblyError(f"Grid {n1}x{n2} leaves no unknowns after constraints")

    known_values = np.zeros((n1, n2))
    clamped = ~unknown
    clamped[:, 0] = False
    known_values[clamped] = p.boundary_data(grid.X1[clamped], grid.X2[clamped])

    node_weights = grid.h1 * grid.h2 * grid.metric['jacobian']
    load = np.zeros(n1 * n2)
    if p.source is not None:
        load = (node_weights * p.source(grid.X1, grid.X2)).ravel()

    diagonal = A.diagonal().reshape(n1, n2)
    bad = unknown & ~(diagonal > 0)
    if np.any(bad):
        node = tuple(int(k) for k in np.argwhere(bad)[0])
        raise AssemblyError(f"Singular system: zero stiffness at node {node}", stage='solve')

    logger.info(f"Weak form assembled: {n1}x{n2} nodes, {int(unknown.sum())} unknowns, "
                f"nnz={A.nnz} ({time.time() - start:.2f}s)")
    return LinearSystem(A, grid, unknown, known_values, load, node_weights)


# === RÉSOLUTION ===

def _condition_estimate(matrix: sp.csc_matrix, lu=None) -> Dict[str, float]:
    stats = {'norm1': float(onenormest(matrix))}
    if lu is not None:
        n = matrix.shape[0]
        inverse = LinearOperator((n, n), matvec=lu.solve,
                                 rmatvec=lambda b: lu.solve(b, trans='T'), dtype=float)
        stats['inverse_norm1'] = float(onenormest(inverse))
        stats['condition_estimate'] = stats['norm1'] * stats['inverse_norm1']
    diagonal = np.abs(matrix.diagonal())
    stats['diagonal_ratio'] = float(diagonal.max() / max(diagonal.min(), 1e-300))
    return stats


def solve_system(system: LinearSystem) -> Tuple[np.ndarray, Dict]:
    """Factorisation LU creuse du bloc des inconnues"""
    unknown = system.unknown.ravel()
    known = ~unknown
    A = system.matrix
    A_uu = A[unknown][:, unknown].tocsc()
    A_uk = A[unknown][:, known]
    rhs = system.load[unknown] - A_uk @ system.known_values.ravel()[known]

    start = time.time()
    try:
        lu = splu(A_uu)
    except RuntimeError as e:
        stats = _condition_estimate(A_uu)
        raise SolverError(f"Sparse factorization failed: {e} (||A||_1 ~ {stats['norm1']:.3e}, "
                          f"diag ratio {stats['diagonal_ratio']:.3e})", stage='solve') from e
    solution = lu.solve(rhs)
    elapsed = time.time() - start

    stats = _condition_estimate(A_uu, lu)
    if not np.all(np.isfinite(solution)):
        raise SolverError(f"Non-finite solution (condition ~ {stats.get('condition_estimate'):.3e})",
                          stage='solve')
    values = system.known_values.ravel().copy()
    values[unknown] = solution
    stats.update({
        'unknowns': int(unknown.sum()),
        'nnz': int(A_uu.nnz),
        'factor_nnz': int(lu.L.nnz + lu.U.nnz),
        'factor_time_s': elapsed,
        'symmetry_defect': system.symmetry_defect(),
    })
    return values.reshape(system.unknown.shape), stats


def to_physical(values: np.ndarray, grid: StretchedGrid, chart: DomainChart,
                order: Optional[int] = None) -> GridField:
    """Rééchantillonne la solution sur la grille physique (extension impaire sous Gamma)"""
    order = order or TRANSFORM_CONFIG['pullback_order']
    eta_ext = np.concatenate([-grid.eta[:0:-1], grid.eta])
    values_ext = np.concatenate([-values[:, :0:-1], values], axis=1)
    spline = RectBivariateSpline(grid.xi, eta_ext, values_ext, kx=order, ky=order, s=0)

    xx, yy = np.meshgrid(chart.x1, chart.x2, indexing='ij')
    _, eta = grid.computational(xx, yy)
    eta = np.clip(eta, -grid.H, grid.H)
    physical = spline.ev(xx.ravel(), eta.ravel()).reshape(xx.shape)
    return chart.field(physical, name='u')


def solve(p: PlateProblem) -> Tuple[GridField, SolveReport]:
    """
    Résout le problème appuyé: u = 0 sur Gamma, condition naturelle imposée faiblement

    Returns:
        (u sur la grille physique du DomainChart, SolveReport)
    """
    system = assemble_weak_form(p)
    values, stats = solve_system(system)
    computational = GridField(system.grid.xi, system.grid.eta, values, name='u_computational')
    report = residuals_on_grid(values, p, system.grid)
    report.solver_stats = stats
    report.computational = computational
    u = to_physical(values, system.grid, p.chart)

    logger.info(f"✅ Plate solved: interior residual {report.interior_residual:.3e}, "
                f"boundary residuals ({report.boundary_value_residual:.3e}, "
                f"{report.boundary_moment_residual:.3e}), cond ~ "
                f"{stats.get('condition_estimate', float('nan')):.3e}")
    return u, report


# === RÉSIDUS ===

def _moment_fields(grid: StretchedGrid, p: PlateProblem, values: np.ndarray, accuracy: int):
    hess = grid.hessian(values, accuracy)
    B, nu = p.constants.evaluate(grid.X1, grid.X2)
    lap = hess['11'] + hess['22']
    D = B * (1.0 - nu)
    moments = {
        '11': D * hess['11'] + B * nu * lap,
        '12': D * hess['12'],
        '22': D * hess['22'] + B * nu * lap,
    }
    return hess, moments, B, nu


def divergence_form(grid: StretchedGrid, moments: Dict[str, np.ndarray],
                    accuracy: int = 4) -> np.ndarray:
    """L(u) = d2_11 M11 + 2 d2_12 M12 + d2_22 M22"""
    return (grid.d1(grid.d1(moments['11'], accuracy), accuracy)
            + 2.0 * grid.d1(grid.d2(moments['12'], accuracy), accuracy)
            + grid.d2(grid.d2(moments['22'], accuracy), accuracy))


def residuals_on_grid(values: np.ndarray, p: PlateProblem, grid: StretchedGrid,
                      accuracy: int = 4) -> SolveReport:
    hess, moments, B, nu = _moment_fields(grid, p, values, accuracy)
    L_u = divergence_form(grid, moments, accuracy)

    # forme développée B (Delta^2 u + a~ . grad Delta u + q~2(u)), lecture exacte de q~2
    lap = hess['11'] + hess['22']
    lap_1, lap_2 = grid.d1(lap, accuracy), grid.d2(lap, accuracy)
    bilap = grid.d1(grid.d1(lap, accuracy), accuracy) + grid.d2(grid.d2(lap, accuracy), accuracy)
    D, Bnu = B * (1.0 - nu), B * nu
    hD, hBnu = grid.hessian(D, accuracy), grid.hessian(Bnu, accuracy)
    lap_Bnu = hBnu['11'] + hBnu['22']
    a1, a2 = 2.0 * grid.d1(B, accuracy) / B, 2.0 * grid.d2(B, accuracy) / B
    q2 = ((hD['11'] + lap_Bnu) * hess['11'] + 2.0 * hD['12'] * hess['12']
          + (hD['22'] + lap_Bnu) * hess['22']) / B
    expanded = B * (bilap + a1 * lap_1 + a2 * lap_2 + q2)

    layers = SOLVER_CONFIG['clamped_layers']
    n1, n2 = values.shape
    interior = np.zeros_like(values, dtype=bool)
    interior[layers:n1 - layers, 1:n2 - layers] = True
    weights = grid.h1 * grid.h2 * grid.metric['jacobian']
    l2 = float(np.sqrt(np.sum(weights[interior] * L_u[interior] ** 2)))
    l2_expanded = float(np.sqrt(np.sum(weights[interior] * expanded[interior] ** 2)))

    # conditions sur Gamma (j = 0), normale extérieure n = (g', -1) / sqrt(1 + g'^2)
    g1 = p.chart.profile.derivative(1)(grid.xi)
    norm = np.sqrt(1.0 + g1 ** 2)
    n_1, n_2 = g1 / norm, -1.0 / norm
    u_nn = (hess['11'][:, 0] * n_1 ** 2 + 2.0 * hess['12'][:, 0] * n_1 * n_2
            + hess['22'][:, 0] * n_2 ** 2)
    moment_nn = B[:, 0] * (1.0 - nu[:, 0]) * u_nn + B[:, 0] * nu[:, 0] * lap[:, 0]

    return SolveReport(
        interior_residual=l2,
        interior_residual_max=float(np.max(np.abs(L_u[interior]))),
        expanded_residual=l2_expanded,
        boundary_value_residual=float(np.max(np.abs(values[:, 0]))),
        boundary_moment_residual=float(np.max(np.abs(moment_nn[layers:n1 - layers]))),
    )


def residuals(u: GridField, p: PlateProblem) -> SolveReport:
    """
    Évalue L(u) à l'intérieur et les deux conditions de bord sur Gamma pour un champ
    donné sur la grille physique du DomainChart
    """
    grid = p.grid()
    order = min(TRANSFORM_CONFIG['pullback_order'], u.x.size - 1, u.y.size - 1)
    values = u.sample(grid.X1, grid.X2, order=order)
    report = residuals_on_grid(values, p, grid)
    if report.boundary_value_residual > SOLVER_CONFIG['symmetry_tolerance']:
        logger.warning(f"⚠️ u does not vanish on Gamma: max |u| = "
                       f"{report.boundary_value_residual:.3e}")
    return report


def integration_by_parts_defect(u: Expression, v: Expression, p: PlateProblem) -> float:
    """
    Défaut relatif de l'identité
    int c d2u d2v = int_Gamma (c d2u n n) d_n v + int d2_ij(c d2_lk u) v
    pour v nulle sur Gamma et à support compact dans Omega_r0 près du bord extérieur
    """
    grid = p.grid()
    X1, X2 = grid.X1, grid.X2
    hu = {'11': u.derivative(2, 0)(X1, X2), '12': u.derivative(1, 1)(X1, X2),
          '22': u.derivative(0, 2)(X1, X2)}
    hv = {'11': v.derivative(2, 0)(X1, X2), '12': v.derivative(1, 1)(X1, X2),
          '22': v.derivative(0, 2)(X1, X2)}
    B, nu = p.constants.evaluate(X1, X2)
    lap = hu['11'] + hu['22']
    D = B * (1.0 - nu)
    moments = {'11': D * hu['11'] + B * nu * lap, '12': D * hu['12'],
               '22': D * hu['22'] + B * nu * lap}
    L_u = divergence_form(grid, moments)

    w1 = np.full(grid.n1, grid.h1)
    w1[[0, -1]] *= 0.5
    w2 = np.full(grid.n2, grid.h2)
    w2[[0, -1]] *= 0.5
    weights = np.outer(w1, w2) * grid.metric['jacobian']

    energy = float(np.sum(weights * (moments['11'] * hv['11'] + 2.0 * moments['12'] * hv['12']
                                     + moments['22'] * hv['22'])))
    volume = float(np.sum(weights * L_u * v(X1, X2)))

    xi = grid.xi
    g1 = p.chart.profile.derivative(1)(xi)
    norm = np.sqrt(1.0 + g1 ** 2)
    n_1, n_2 = g1 / norm, -1.0 / norm
    xb1, xb2 = X1[:, 0], X2[:, 0]
    m_nn = moments['11'][:, 0] * n_1 ** 2 + 2.0 * moments['12'][:, 0] * n_1 * n_2 \
        + moments['22'][:, 0] * n_2 ** 2
    dn_v = v.derivative(1, 0)(xb1, xb2) * n_1 + v.derivative(0, 1)(xb1, xb2) * n_2
    boundary = float(np.sum(w1 * norm * m_nn * dn_v))

    defect = abs(energy - boundary - volume) / max(abs(energy), 1e-300)
    logger.debug(f"Integration by parts: energy={energy:.6e}, boundary={boundary:.6e}, "
                 f"volume={volume:.6e}, defect={defect:.3e}")
    return defect


# === ÉTUDE DE RAFFINEMENT ===

def refinement_study(problem_factory: Callable[[int], PlateProblem], exact: Expression,
                     resolutions: Optional[Sequence[int]] = None) -> List[Dict]:
    """
    Erreur max |u_h - u*| sur la grille de calcul et ordre observé entre résolutions
    successives (solutions manufacturées)
    """
    resolutions = list(resolutions or SOLVER_CONFIG['refinement_resolutions'])
    rows: List[Dict] = []
    for n in tqdm(resolutions, desc='refinement', leave=False):
        problem = problem_factory(n)
        u, report = solve(problem)
        grid = problem.grid()
        error = float(np.max(np.abs(report.computational.values - exact(grid.X1, grid.X2))))
        row = {'resolution': n, 'h': grid.h1, 'error_max': error,
               'interior_residual': report.interior_residual, 'order': float('nan')}
        if rows and error > 0 and rows[-1]['error_max'] > 0:
            row['order'] = math.log(rows[-1]['error_max'] / error) / math.log(rows[-1]['h'] / grid.h1)
        rows.append(row)
        logger.info(f"Refinement n={n}: error {error:.3e}, order {row['order']:.2f}")
    return rows
