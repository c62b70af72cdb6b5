"""
Carleman - Poids rho = phi(|x|), phi(s) = s / (1 + sqrt(s))^2, et évaluation numérique
des deux membres de l'estimation de Carleman sur des familles de fonctions test

    LHS = tau^4 r^2 int rho^(-2-2tau) U^2 + sum_k tau^(6-2k) int rho^(2k+1-2tau) |D^k U|^2
    RHS = int rho^(8-2tau) (Delta^2 U)^2

Les intégrales pondérées sont accumulées en domaine logarithmique (somme compensée).
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from config.settings import CARLEMAN_CONFIG
from core.errors import NumericalStageError, ParameterError
from core.grid_field import GridField, partial, uniform_axis
from core.reports import write_csv

logger = logging.getLogger(__name__)

PROFILES = ('bump', 'radial', 'null')
CSV_COLUMNS = ('function_id', 'tau', 'r', 'lhs_group1', 'lhs_group2', 'rhs', 'ratio')


def phi(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return s / (1.0 + np.sqrt(s)) ** 2


def weight(x, y) -> np.ndarray:
    """rho(x, y) = phi(sqrt(x^2 + y^2))"""
    return phi(np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


# === FONCTIONS TEST ===

def bump(t) -> np.ndarray:
    """exp(-1 / (1 - t^2)) sur |t| < 1, nulle ailleurs"""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    out = np.zeros_like(t)
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def smooth_step(t) -> np.ndarray:
    """Transition C^infini de 0 (t <= 0) à 1 (t >= 1)"""
    t = np.asarray(t, dtype=float)

    def f(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    num = f(t)
    return num / (num + f(1.0 - t))


@dataclass(frozen=True)
class TestFunctionSpec:
    """Anneau support [r_in, r_out], profil et graine"""
    __test__ = False
    r_in: float
    r_out: float
    profile: str = 'bump'
    seed: int = 0
    harmonics: int = CARLEMAN_CONFIG['harmonics']
    resolution: int = CARLEMAN_CONFIG['resolution']

    def __post_init__(self):
        if not 0.0 < self.r_in < self.r_out < 1.0:
            raise ParameterError(f"Annulus must satisfy 0 < r_in < r_out < 1, got "
                                 f"[{self.r_in}, {self.r_out}]")
        if self.profile not in PROFILES:
            raise ParameterError(f"Unknown test-function profile '{self.profile}'")

    @property
    def function_id(self) -> str:
        return f"{self.profile}_{self.r_in:g}_{self.r_out:g}_s{self.seed}"


@dataclass(frozen=True, eq=False)
class TestFunction:
    __test__ = False
    function_id: str
    grid: GridField
    r_in: float
    r_out: float
    seed: Optional[int] = None

    def scaled(self, factor: float) -> 'TestFunction':
        return TestFunction(self.function_id, self.grid.with_values(factor * self.grid.values),
                            self.r_in, self.r_out, self.seed)


def _square_axis(resolution: int) -> np.ndarray:
    return uniform_axis(-1.0, 1.0, resolution)


def make_test_function(spec: TestFunctionSpec) -> TestFunction:
    """U = bosse radiale x (1 + harmoniques angulaires aléatoires) sur [-1, 1]^2"""
    axis = _square_axis(spec.resolution)
    xx, yy = np.meshgrid(axis, axis, indexing='ij')
    radius = np.hypot(xx, yy)
    t = (2.0 * radius - spec.r_in - spec.r_out) / (spec.r_out - spec.r_in)
    values = bump(t)

    if spec.profile == 'null':
        values = np.zeros_like(values)
    elif spec.profile == 'bump':
        rng = np.random.default_rng(spec.seed)
        theta = np.arctan2(yy, xx)
        coeffs = rng.normal(size=(spec.harmonics, 2))
        angular = np.ones_like(theta)
        for k, (ck, sk) in enumerate(coeffs, start=1):
            angular += 0.5 / spec.harmonics * (ck * np.cos(k * theta) + sk * np.sin(k * theta))
        values = values * angular

    grid = GridField(axis, axis, values, name=spec.function_id)
    return TestFunction(spec.function_id, grid, spec.r_in, spec.r_out, spec.seed)


def make_family(r_in: float, r_out: float, size: int, base_seed: int = 0,
                resolution: Optional[int] = None) -> List[TestFunction]:
    resolution = resolution or CARLEMAN_CONFIG['resolution']
    return [make_test_function(TestFunctionSpec(r_in, r_out, 'bump', base_seed + i,
                                                resolution=resolution))
            for i in range(size)]


def cutoff_test_function(vbar: GridField, inner: float, outer: float,
                         function_id: str = 'cutoff_vbar') -> TestFunction:
    """U = eta(|y|) vbar avec eta lisse, égale à 1 au centre de l'anneau, nulle hors (inner, outer)"""
    if not 0.0 < inner < outer < 1.0:
        raise ParameterError(f"Cut-off annulus must satisfy 0 < inner < outer < 1, got "
                             f"[{inner}, {outer}]")
    if not math.isclose(vbar.hx, vbar.hy, rel_tol=1e-9):
        raise ParameterError("Cut-off test function needs a grid with equal spacings")
    xx, yy = vbar.meshgrid()
    radius = np.hypot(xx, yy)
    delta = 0.25 * (outer - inner)
    eta = smooth_step((radius - inner) / delta) * smooth_step((outer - radius) / delta)
    values = np.where(vbar.mask if vbar.mask is not None else True, vbar.values, 0.0) * eta
    return TestFunction(function_id, GridField(vbar.x, vbar.y, values, name=function_id),
                        inner, outer)


# === ÉVALUATION ===

def _derivative_stack(U: GridField, accuracy: int) -> Dict[str, np.ndarray]:
    """|D^k U|^2 = sum_j C(k, j) (d_x^(k-j) d_y^j U)^2 pour k = 0..3, et (Delta^2 U)^2"""
    h = U.hx
    values = U.values
    stack = {'D0': values ** 2}
    for k in (1, 2, 3):
        total = np.zeros_like(values)
        for j in range(k + 1):
            total += math.comb(k, j) * partial(values, h, h, k - j, j, accuracy) ** 2
        stack[f'D{k}'] = total
    bilap = (partial(values, h, h, 4, 0, accuracy) + 2.0 * partial(values, h, h, 2, 2, accuracy)
             + partial(values, h, h, 0, 4, accuracy))
    stack['bilap'] = bilap ** 2
    return stack


def log_weighted_integral(log_rho: np.ndarray, exponent: float, integrand: np.ndarray,
                          cell: float) -> float:
    """log int rho^exponent F dx (F >= 0), -inf si l'intégrale est nulle"""
    positive = integrand > 0.0
    if not np.any(positive):
        return -math.inf
    terms = exponent * log_rho[positive] + np.log(integrand[positive])
    shift = float(np.max(terms))
    return shift + math.log(math.fsum(np.exp(terms - shift).tolist())) + math.log(cell)


def _log_sum(logs: Iterable[float]) -> float:
    logs = [v for v in logs if v > -math.inf]
    if not logs:
        return -math.inf
    shift = max(logs)
    return shift + math.log(math.fsum(math.exp(v - shift) for v in logs))


def _exp(value: float) -> float:
    if value == -math.inf:
        return 0.0
    try:
        return math.exp(value)
    except OverflowError:
        return math.inf


@dataclass
class CarlemanCell:
    function_id: str
    tau: float
    r: float
    lhs_group1: float
    lhs_group2: float
    rhs: float
    ratio: float
    log_lhs: float
    log_rhs: float
    flag: str = 'ok'              # 'ok', 'undefined' (0/0) ou 'non_finite'

    @property
    def lhs(self) -> float:
        return self.lhs_group1 + self.lhs_group2

    def row(self) -> Tuple:
        return (self.function_id, self.tau, self.r, self.lhs_group1, self.lhs_group2,
                self.rhs, self.ratio)


class _PreparedFunction:
    """Pile de dérivées et log rho calculés une fois par fonction test"""

    def __init__(self, U: TestFunction, accuracy: int):
        self.U = U
        xx, yy = U.grid.meshgrid()
        rho = weight(xx, yy)
        with np.errstate(divide='ignore'):
            self.log_rho = np.log(rho)
        self.stack = _derivative_stack(U.grid, accuracy)
        self.cell = U.grid.hx * U.grid.hy
        nonzero = np.abs(U.grid.values) > 0.0
        self.support_min = float(np.min(np.hypot(xx, yy)[nonzero])) if np.any(nonzero) else math.inf

    def evaluate(self, tau: float, r: float) -> CarlemanCell:
        if tau < 1.0:
            raise ParameterError(f"tau must be >= 1, got {tau}")
        if self.support_min <= r / 4.0:
            raise ParameterError(f"Test function '{self.U.function_id}' is not supported in "
                                 f"B_1 minus B_(r/4) for r={r} (support starts at {self.support_min:.4f})")

        def integral(exponent, key):
            return log_weighted_integral(self.log_rho, exponent, self.stack[key], self.cell)

        log_g1 = 4.0 * math.log(tau) + 2.0 * math.log(r) + integral(-2.0 - 2.0 * tau, 'D0')
        log_g2 = _log_sum((6 - 2 * k) * math.log(tau) + integral(2 * k + 1 - 2.0 * tau, f'D{k}')
                          for k in range(4))
        log_rhs = integral(8.0 - 2.0 * tau, 'bilap')
        log_lhs = _log_sum((log_g1, log_g2))

        g1, g2, rhs = _exp(log_g1), _exp(log_g2), _exp(log_rhs)
        flag = 'ok'
        if log_lhs == -math.inf and log_rhs == -math.inf:
            ratio, flag = math.nan, 'undefined'
        elif log_rhs == -math.inf:
            ratio, flag = math.inf, 'non_finite'
        else:
            ratio = _exp(log_lhs - log_rhs)
            if not all(math.isfinite(v) for v in (g1, g2, rhs, ratio)):
                flag = 'non_finite'
        if flag == 'non_finite':
            logger.warning(f"⚠️ Non-finite Carleman cell: {self.U.function_id}, tau={tau}, r={r}")
        return CarlemanCell(self.U.function_id, float(tau), float(r), g1, g2, rhs, ratio,
                            log_lhs, log_rhs, flag)


def evaluate_estimate(U: TestFunction, tau: float, r: float,
                      accuracy: Optional[int] = None) -> CarlemanCell:
    """
    Les deux groupes du membre de gauche, le membre de droite et leur rapport

    Raises:
        ParameterError: tau < 1 ou U non supportée dans B_1 privé de B_(r/4)
    """
    return _PreparedFunction(U, accuracy or CARLEMAN_CONFIG['fd_accuracy']).evaluate(tau, r)


@dataclass
class CarlemanSweep:
    """Cellules (U, tau, r), constante empirique et cellule réalisant le maximum"""
    cells: List[CarlemanCell]
    C_emp: float
    argmax: Optional[Dict]
    tau_stable: Optional[float]
    seeds: List[int] = field(default_factory=list)

    def rows(self) -> List[Tuple]:
        return [cell.row() for cell in self.cells]

    def write_csv(self, path: Union[str, Path]) -> Path:
        return write_csv(path, CSV_COLUMNS, self.rows())

    def summary(self) -> Dict:
        return {
            'C_emp': self.C_emp,
            'argmax': self.argmax,
            'tau_stable': self.tau_stable,
            'cells': len(self.cells),
            'flags': {flag: sum(c.flag == flag for c in self.cells)
                      for flag in ('ok', 'undefined', 'non_finite')},
            'seeds': self.seeds,
            'note': 'C_emp is a lower bound for any admissible constant of the estimate',
        }


def _tau_stable(cells: Sequence[CarlemanCell], taus: Sequence[float]) -> Optional[float]:
    """Plus petit tau à partir duquel max_U,r du rapport varie de moins de 5 % d'un tau au suivant"""
    tolerance = CARLEMAN_CONFIG['stabilization_tolerance']
    taus = sorted(set(float(t) for t in taus))
    per_tau = []
    for tau in taus:
        ratios = [c.ratio for c in cells if c.tau == tau and c.flag == 'ok']
        per_tau.append(max(ratios) if ratios else math.nan)
    for i, tau in enumerate(taus[:-1]):
        tail = per_tau[i:]
        if all(math.isfinite(a) and math.isfinite(b) and abs(b - a) <= tolerance * abs(a)
               for a, b in zip(tail[:-1], tail[1:])):
            return tau
    return None


def sweep(family: Sequence[TestFunction], taus: Optional[Sequence[float]] = None,
          radii: Optional[Sequence[float]] = None, accuracy: Optional[int] = None) -> CarlemanSweep:
    """
    Balayage (U, tau, r); C_emp = max des rapports définis

    Raises:
        ParameterError: famille vide
        NumericalStageError: aucune cellule ne donne un rapport fini
    """
    if not family:
        raise ParameterError("Carleman sweep needs a nonempty family of test functions")
    taus = list(taus or CARLEMAN_CONFIG['taus'])
    radii = list(radii or CARLEMAN_CONFIG['radii'])
    accuracy = accuracy or CARLEMAN_CONFIG['fd_accuracy']

    cells: List[CarlemanCell] = []
    progress = tqdm(total=len(family) * len(taus) * len(radii), desc='carleman', leave=False)
    for U in family:
        prepared = _PreparedFunction(U, accuracy)
        for tau in taus:
            for r in radii:
                cells.append(prepared.evaluate(tau, r))
                progress.update(1)
    progress.close()

    defined = [c for c in cells if c.flag == 'ok']
    if not defined:
        flags = {flag: sum(c.flag == flag for c in cells) for flag in ('undefined', 'non_finite')}
        logger.error(f"❌ Carleman sweep produced no defined ratio ({flags})")
        raise NumericalStageError(f"Empirical Carleman constant is not finite: no defined ratio "
                                  f"among {len(cells)} cells {flags}", stage='carleman-sweep',
                                  residual=math.nan)
    best = max(defined, key=lambda c: c.ratio)
    C_emp = best.ratio
    argmax = {'function_id': best.function_id, 'tau': best.tau, 'r': best.r}
    logger.info(f"✅ Carleman sweep: {len(cells)} cells, C_emp = {C_emp:.6g} at {argmax}")

    seeds = [U.seed for U in family if U.seed is not None]
    return CarlemanSweep(cells, C_emp, argmax, _tau_stable(cells, taus), seeds)
