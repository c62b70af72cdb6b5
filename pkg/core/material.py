"""
Material - Modules de Lamé, constantes de plaque et tenseur de rigidité
Convexité forte, formules E, nu, B et coefficients de l'opérateur développé
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from config.settings import MATERIAL_CONFIG
from core.errors import MaterialError
from core.expressions import Expression, combine
from core.grid_field import GridField, partial, uniform_axis

logger = logging.getLogger(__name__)

HESSIAN_INDICES = ('11', '12', '22')


@dataclass(frozen=True, eq=False)
class LameField:
    """Modules de Lamé lambda, mu échantillonnés sur une grille commune"""
    lam: GridField
    mu: GridField
    h: float
    alpha0: float
    gamma0: float
    Lambda0: float
    lam_expr: Optional[Expression] = None
    mu_expr: Optional[Expression] = None
    r0: float = 1.0

    def __post_init__(self):
        if self.lam.shape != self.mu.shape:
            raise MaterialError("lambda and mu must be sampled on the same grid")
        if self.h <= 0 or self.alpha0 <= 0 or self.gamma0 <= 0 or self.Lambda0 <= 0:
            raise MaterialError("h, alpha0, gamma0 and Lambda0 must be positive")

    @classmethod
    def from_expressions(cls, lam_text: str, mu_text: str, x: np.ndarray, y: np.ndarray,
                         h: float, alpha0: float, gamma0: float, Lambda0: float,
                         mask: Optional[np.ndarray] = None, r0: float = 1.0) -> 'LameField':
        lam_expr = Expression(lam_text)
        mu_expr = Expression(mu_text)
        lam = GridField.from_function(lam_expr, x, y, mask, name='lambda')
        mu = GridField.from_function(mu_expr, x, y, mask, name='mu')
        return cls(lam, mu, h, alpha0, gamma0, Lambda0, lam_expr, mu_expr, r0)

    @classmethod
    def constant(cls, lam: float, mu: float, h: float, alpha0: float = None,
                 gamma0: float = None, Lambda0: float = None, n: int = 17,
                 extent: Tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)) -> 'LameField':
        """Champ constant, constantes de convexité déduites si absentes"""
        alpha0 = alpha0 if alpha0 is not None else max(mu / 2.0, 1e-12)
        gamma0 = gamma0 if gamma0 is not None else max((2 * mu + 3 * lam) / 2.0, 1e-12)
        Lambda0 = Lambda0 if Lambda0 is not None else 10.0 * (abs(lam) + abs(mu) + 1.0)
        x = uniform_axis(extent[0], extent[1], n)
        y = uniform_axis(extent[2], extent[3], n)
        return cls.from_expressions(repr(float(lam)), repr(float(mu)), x, y,
                                    h, alpha0, gamma0, Lambda0)

    @property
    def nodes_mask(self) -> np.ndarray:
        return self.lam.mask if self.lam.mask is not None else np.ones(self.lam.shape, bool)


@dataclass
class InequalityCheck:
    """Résultat d'une inégalité vérifiée sur tous les noeuds"""
    name: str
    passed: bool
    margin: float
    worst_node: Tuple[int, int]
    worst_point: Tuple[float, float]


@dataclass
class ConvexityDiagnostic:
    """Diagnostic de convexité forte et de régularité C^2"""
    checks: Dict[str, InequalityCheck]
    c2_norms: Dict[str, float]

    CONVEXITY_CHECKS = ('mu_lower_bound', 'two_mu_three_lambda', 'mu_plus_lambda')

    @property
    def convexity_passed(self) -> bool:
        return all(self.checks[name].passed for name in self.CONVEXITY_CHECKS)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    @property
    def margins(self) -> Tuple[float, ...]:
        return tuple(self.checks[name].margin for name in self.CONVEXITY_CHECKS)

    def first_failure(self) -> Optional[InequalityCheck]:
        for check in self.checks.values():
            if not check.passed:
                return check
        return None

    def to_dict(self) -> Dict:
        return {
            'passed': self.passed,
            'checks': {name: vars(check) for name, check in self.checks.items()},
            'c2_norms': self.c2_norms,
        }


def _inequality(name: str, slack: np.ndarray, lame: LameField) -> InequalityCheck:
    masked = np.where(lame.nodes_mask, slack, np.inf)
    node = np.unravel_index(int(np.argmin(masked)), masked.shape)
    margin = float(masked[node])
    point = (float(lame.lam.x[node[0]]), float(lame.lam.y[node[1]]))
    return InequalityCheck(name, margin >= 0.0, margin, (int(node[0]), int(node[1])), point)


def _derivative_stack(grid: GridField, expr: Optional[Expression], accuracy: int):
    """Valeurs, dérivées premières et secondes (exactes si l'expression est connue)"""
    orders = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    if expr is not None:
        xx, yy = grid.meshgrid()
        return {o: expr.derivative(*o)(xx, yy) for o in orders}
    return {o: grid.partial(o[0], o[1], accuracy) for o in orders}


def c2_surrogate(grid: GridField, expr: Optional[Expression] = None, r0: float = 1.0,
                 accuracy: int = 2) -> float:
    """Substitut de la norme C^2: max_k r0^k max|D^k f| sur les noeuds"""
    stack = _derivative_stack(grid, expr, accuracy)
    mask = grid.mask if grid.mask is not None else np.ones(grid.shape, bool)
    norm = 0.0
    for (nx, ny), values in stack.items():
        norm = max(norm, r0 ** (nx + ny) * float(np.max(np.abs(values[mask]))))
    return norm


def check_strong_convexity(lame: LameField) -> ConvexityDiagnostic:
    """
    Vérifie mu >= alpha0, 2mu + 3lambda >= gamma0, mu + lambda >= min(alpha0, gamma0/2)
    et les bornes C^2 de lambda et mu. Ne lève jamais d'exception.
    """
    lam, mu = lame.lam.values, lame.mu.values
    checks = {
        'mu_lower_bound': _inequality('mu_lower_bound', mu - lame.alpha0, lame),
        'two_mu_three_lambda': _inequality('two_mu_three_lambda',
                                           2 * mu + 3 * lam - lame.gamma0, lame),
        'mu_plus_lambda': _inequality('mu_plus_lambda',
                                      mu + lam - min(lame.alpha0, lame.gamma0 / 2.0), lame),
    }

    accuracy = MATERIAL_CONFIG['fd_accuracy']
    c2_norms = {
        'lambda': c2_surrogate(lame.lam, lame.lam_expr, lame.r0, accuracy),
        'mu': c2_surrogate(lame.mu, lame.mu_expr, lame.r0, accuracy),
    }
    for name, norm in c2_norms.items():
        margin = lame.Lambda0 - norm
        checks[f'c2_{name}'] = InequalityCheck(f'c2_{name}', margin >= 0.0, margin, (-1, -1),
                                               (float('nan'), float('nan')))

    diagnostic = ConvexityDiagnostic(checks, c2_norms)
    if diagnostic.passed:
        logger.debug(f"Strong convexity margins: {diagnostic.margins}")
    else:
        failure = diagnostic.first_failure()
        logger.debug(f"Convexity check '{failure.name}' failed with margin {failure.margin:.3e}")
    return diagnostic


@dataclass(frozen=True, eq=False)
class PlateConstants:
    """Module d'Young E, coefficient de Poisson nu et rigidité de flexion B"""
    E: Optional[GridField]
    nu: GridField
    B: GridField
    B_expr: Optional[Expression] = None
    nu_expr: Optional[Expression] = None

    @classmethod
    def from_expressions(cls, B_text: str, nu_text: str, x: np.ndarray, y: np.ndarray,
                         mask: Optional[np.ndarray] = None) -> 'PlateConstants':
        B_expr, nu_expr = Expression(B_text), Expression(nu_text)
        B = GridField.from_function(B_expr, x, y, mask, name='B')
        nu = GridField.from_function(nu_expr, x, y, mask, name='nu')
        return cls(None, nu, B, B_expr, nu_expr)

    @property
    def exact(self) -> bool:
        return self.B_expr is not None and self.nu_expr is not None

    def evaluate(self, x1, x2) -> Tuple[np.ndarray, np.ndarray]:
        """B et nu en des points physiques arbitraires"""
        if self.exact:
            return self.B_expr(x1, x2), self.nu_expr(x1, x2)
        return self.B.sample(x1, x2), self.nu.sample(x1, x2)


def derive_plate_constants(lame: LameField) -> PlateConstants:
    """
    Calcule E, nu et B à partir des modules de Lamé

    Raises:
        MaterialError: violation de convexité (noeud et inégalité nommés) ou
            désaccord entre les deux formules de B
    """
    diagnostic = check_strong_convexity(lame)
    if not diagnostic.convexity_passed:
        failure = next(diagnostic.checks[n] for n in diagnostic.CONVEXITY_CHECKS
                       if not diagnostic.checks[n].passed)
        raise MaterialError(
            f"Strong convexity violated ({failure.name}) at node {failure.worst_node} "
            f"x={failure.worst_point}, margin {failure.margin:.6g}",
            stage='material', residual=failure.margin,
        )
    for name in ('c2_lambda', 'c2_mu'):
        if not diagnostic.checks[name].passed:
            logger.warning(f"⚠️ C2 surrogate of {name[3:]} exceeds Lambda0 "
                           f"({diagnostic.c2_norms[name[3:]]:.4g} > {lame.Lambda0:.4g})")

    lam, mu, h = lame.lam.values, lame.mu.values, lame.h
    E = mu * (2 * mu + 3 * lam) / (mu + lam)
    nu = lam / (2 * (mu + lam))
    B_stiffness = h ** 3 / 12.0 * E / (1.0 - nu ** 2)
    B_rewritten = h ** 3 / 3.0 * mu * (mu + lam) / (2 * mu + lam)

    mismatch = np.abs(B_stiffness - B_rewritten) / np.abs(B_rewritten)
    worst = float(np.max(mismatch))
    if worst > MATERIAL_CONFIG['dual_b_rtol']:
        node = np.unravel_index(int(np.argmax(mismatch)), mismatch.shape)
        raise MaterialError(f"Bending stiffness formulas disagree at node {node}: "
                            f"relative gap {worst:.3e}", stage='material', residual=worst)

    B_expr = nu_expr = None
    if lame.lam_expr is not None and lame.mu_expr is not None:
        B_expr = combine(lambda l, m: (h ** 3 / 3) * m * (m + l) / (2 * m + l),
                         lame.lam_expr, lame.mu_expr)
        nu_expr = combine(lambda l, m: l / (2 * (m + l)), lame.lam_expr, lame.mu_expr)

    logger.info(f"✅ Plate constants derived: B in [{B_rewritten.min():.4g}, "
                f"{B_rewritten.max():.4g}], nu in [{nu.min():.4g}, {nu.max():.4g}]")
    return PlateConstants(
        E=lame.lam.with_values(E, name='E'),
        nu=lame.lam.with_values(nu, name='nu'),
        B=lame.lam.with_values(B_rewritten, name='B'),
        B_expr=B_expr,
        nu_expr=nu_expr,
    )


class StiffnessTensor:
    """c_ijlk = B(1-nu) d_il d_jk + B nu d_ij d_lk, indices 0-based"""

    def __init__(self, pc: PlateConstants):
        self.pc = pc
        self.B = pc.B.values
        self.nu = pc.nu.values
        self._assert_major_symmetry()

    @staticmethod
    def _entry(i, j, l, k, B, nu):
        return B * (1.0 - nu) * float(i == l and j == k) + B * nu * float(i == j and l == k)

    def component(self, i: int, j: int, l: int, k: int) -> np.ndarray:
        return self._entry(i, j, l, k, self.B, self.nu)

    def __call__(self, i: int, j: int, l: int, k: int) -> np.ndarray:
        return self.component(i, j, l, k)

    def at(self, x1, x2) -> np.ndarray:
        """Tenseur complet (2,2,2,2,...) en des points physiques"""
        B, nu = self.pc.evaluate(x1, x2)
        return np.array([[[[self._entry(i, j, l, k, B, nu) for k in range(2)]
                           for l in range(2)] for j in range(2)] for i in range(2)])

    def tensor(self) -> np.ndarray:
        return np.array([[[[self.component(i, j, l, k) for k in range(2)]
                           for l in range(2)] for j in range(2)] for i in range(2)])

    def contract(self, hessian: np.ndarray) -> np.ndarray:
        """Moments M_ij = c_ijlk d2_lk u pour une hessienne (2,2,...)"""
        hessian = np.asarray(hessian, dtype=float)
        return np.einsum('ijlk...,lk...->ij...', self.tensor(), hessian)

    def _assert_major_symmetry(self):
        for i in range(2):
            for j in range(2):
                for l in range(2):
                    for k in range(2):
                        if not np.array_equal(self.component(i, j, l, k),
                                              self.component(l, k, i, j)):
                            raise MaterialError(f"Major symmetry broken for c[{i}{j}{l}{k}]")


def stiffness_tensor(pc: PlateConstants) -> StiffnessTensor:
    return StiffnessTensor(pc)


@dataclass(frozen=True, eq=False)
class ExpandedCoefficients:
    """Coefficients de L(u) = B (Delta^2 u + a~ . grad Delta u + q~2(u))"""
    a_tilde: np.ndarray                 # (2, nx, ny)
    q2: Dict[str, np.ndarray]           # '11', '12', '22'
    L: float
    reading: str
    grid: GridField
    a_tilde_expr: Optional[Tuple[Expression, Expression]] = None
    _a_fields: Dict[int, GridField] = field(default_factory=dict, init=False, repr=False)

    def apply_q2(self, hessian: Dict[str, np.ndarray]) -> np.ndarray:
        """q~2(u) = c11 u11 + 2 c12 u12 + c22 u22"""
        return (self.q2['11'] * hessian['11'] + 2.0 * self.q2['12'] * hessian['12']
                + self.q2['22'] * hessian['22'])

    def sample_a_tilde(self, x1, x2) -> np.ndarray:
        """a~ en des points physiques (exact si B et nu sont des expressions)"""
        if self.a_tilde_expr is not None:
            return np.stack([self.a_tilde_expr[0](x1, x2), self.a_tilde_expr[1](x1, x2)])
        for i in range(2):
            if i not in self._a_fields:
                self._a_fields[i] = self.grid.with_values(self.a_tilde[i], name=f'a_tilde_{i}')
        return np.stack([self._a_fields[0].sample(x1, x2), self._a_fields[1].sample(x1, x2)])


def expanded_coefficients(pc: PlateConstants, reading: Optional[str] = None) -> ExpandedCoefficients:
    """
    Calcule a~ = 2 grad B / B et les coefficients de q~2

    Args:
        pc: constantes de plaque
        reading: 'literal' (formule affichée, d2_ij(B(1-nu) + nu B d_ij) / B) ou
            'exact' (développement égal à L(u)/B pour nu variable)

    Returns:
        ExpandedCoefficients avec la borne L mesurée
    """
    reading = reading or MATERIAL_CONFIG['q2_reading']
    if reading not in ('literal', 'exact'):
        raise MaterialError(f"Unknown q2 reading '{reading}'")

    B = pc.B.values
    mask = pc.B.mask if pc.B.mask is not None else np.ones(B.shape, bool)
    B_max = float(np.max(np.abs(B[mask])))
    B_min = float(np.min(B[mask]))
    if B_min < MATERIAL_CONFIG['degeneracy_ratio'] * B_max:
        node = np.unravel_index(int(np.argmin(np.where(mask, B, np.inf))), B.shape)
        raise MaterialError(f"Bending stiffness degenerate at node {node}: B={B_min:.3e}",
                            stage='material', residual=B_min)

    accuracy = MATERIAL_CONFIG['fd_accuracy']
    orders = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    a_tilde_expr = None
    if pc.exact:
        xx, yy = pc.B.meshgrid()
        D_expr = combine(lambda b, n: b * (1 - n), pc.B_expr, pc.nu_expr)
        Bnu_expr = combine(lambda b, n: b * n, pc.B_expr, pc.nu_expr)
        dB = {o: pc.B_expr.derivative(*o)(xx, yy) for o in orders}
        dD = {o: D_expr.derivative(*o)(xx, yy) for o in orders}
        dBnu = {o: Bnu_expr.derivative(*o)(xx, yy) for o in orders}
        a_tilde_expr = tuple(combine(lambda b, db: 2 * db / b, pc.B_expr, g)
                             for g in pc.B_expr.gradient())
    else:
        D_values = B * (1.0 - pc.nu.values)
        Bnu_values = B * pc.nu.values
        hx, hy = pc.B.hx, pc.B.hy
        dB = {o: partial(B, hx, hy, o[0], o[1], accuracy) for o in orders}
        dD = {o: partial(D_values, hx, hy, o[0], o[1], accuracy) for o in orders}
        dBnu = {o: partial(Bnu_values, hx, hy, o[0], o[1], accuracy) for o in orders}

    a_tilde = np.stack([2.0 * dB[(1, 0)] / B, 2.0 * dB[(0, 1)] / B])

    if reading == 'literal':
        q2 = {
            '11': dB[(2, 0)] / B,
            '12': dD[(1, 1)] / B,
            '22': dB[(0, 2)] / B,
        }
    else:
        lap_Bnu = dBnu[(2, 0)] + dBnu[(0, 2)]
        q2 = {
            '11': (dD[(2, 0)] + lap_Bnu) / B,
            '12': dD[(1, 1)] / B,
            '22': (dD[(0, 2)] + lap_Bnu) / B,
        }

    bounds = [np.max(np.abs(a_tilde[:, mask]))]
    bounds += [np.max(np.abs(c[mask])) for c in q2.values()]
    if min(B.shape) >= 3:
        for i in range(2):
            for o in ((1, 0), (0, 1)):
                bounds.append(np.max(np.abs(partial(a_tilde[i], pc.B.hx, pc.B.hy,
                                                    o[0], o[1], accuracy)[mask])))
    L = float(max(bounds))
    if not np.isfinite(L):
        raise MaterialError("Expanded-operator coefficients are not finite", stage='material')

    logger.info(f"Expanded coefficients ({reading} reading): L = {L:.4g}")
    return ExpandedCoefficients(a_tilde, q2, L, reading, pc.B, a_tilde_expr)
