"""
Doubling - Masses m(s) = int_{B_s(P) inter Omega} |u|^2, fréquence N = m(r0) / m(r0/C),
inégalité de quasi-doubling en v et passage au doubling par équilibrage en tau

Forme visée:  m(s) <= C N^k (s/r)^(log2(C N^k)) m(r)
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import CARLEMAN_CONFIG, DOUBLING_CONFIG, GEOMETRY_CONFIG
from core.errors import ParameterError
from core.geometry import DomainChart, Region, integrate_square
from core.grid_field import GridField
from core.reports import write_csv

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('radius', 'mass', 'slope')
QUASI_MASS_KEYS = ('2r', 'r_bar', 'r', 'r_bar0')

MassFunction = Callable[[float], float]


def _log(value: float) -> float:
    return math.log(value) if value > 0.0 else -math.inf


def _log_sum(*logs: float) -> float:
    logs = [v for v in logs if v > -math.inf]
    if not logs:
        return -math.inf
    shift = max(logs)
    if shift == math.inf:
        return math.inf
    return shift + math.log(math.fsum(math.exp(v - shift) for v in logs))


def _exp(value: float) -> float:
    if value == -math.inf:
        return 0.0
    try:
        return math.exp(value)
    except OverflowError:
        return math.inf


# === MASSES ET FRÉQUENCE ===

@dataclass
class DoublingReport:
    """Masses en un point P de Gamma, fréquence et exposant ajusté"""
    center: Tuple[float, float]
    radii: List[float]
    masses: List[float]
    C: float
    r0: float
    N: float
    kappa: float
    flags: List[str] = field(default_factory=list)

    @property
    def vanishing_order(self) -> float:
        return (self.kappa - 2.0) / 2.0

    def slopes(self) -> np.ndarray:
        """Pente locale d log m / d log s"""
        radii = np.asarray(self.radii, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if radii.size < 2:
            return np.full(radii.size, math.nan)
        with np.errstate(divide='ignore', invalid='ignore'):
            log_m = np.where(masses > 0, np.log(np.where(masses > 0, masses, 1.0)), math.nan)
            return np.gradient(log_m, np.log(radii))

    def doubling_constants(self) -> List[Dict[str, float]]:
        """D(s, r) = m(s)/m(r) (r/s)^kappa sur les rayons consécutifs"""
        table = []
        for r, s, m_r, m_s in zip(self.radii[:-1], self.radii[1:], self.masses[:-1], self.masses[1:]):
            value = m_s / m_r * (r / s) ** self.kappa if m_r > 0 else math.inf
            table.append({'r': r, 's': s, 'D': value})
        return table

    def rows(self) -> List[Tuple]:
        return list(zip(self.radii, self.masses, self.slopes().tolist()))

    def write_csv(self, path: Union[str, Path]) -> Path:
        return write_csv(path, CSV_COLUMNS, self.rows())

    def to_dict(self) -> Dict:
        return {
            'center': list(self.center),
            'radii': self.radii,
            'masses': self.masses,
            'C': self.C,
            'r0': self.r0,
            'N': self.N,
            'kappa': self.kappa,
            'vanishing_order': self.vanishing_order,
            'doubling_constants': self.doubling_constants(),
            'flags': self.flags,
        }


def _check_center(chart: DomainChart, P: Tuple[float, float], largest: float):
    P1, P2 = float(P[0]), float(P[1])
    gap = abs(P2 - float(chart.profile(P1)))
    if gap > GEOMETRY_CONFIG['origin_tolerance']:
        raise ParameterError(f"Point P=({P1:.4g}, {P2:.4g}) is not on Gamma (distance {gap:.3e})")
    if abs(P1) + largest > chart.profile.r0 + 1e-12 or P2 + largest > chart.top + 1e-12:
        raise ParameterError(f"B_{largest:g}(P) inter Omega leaves the grid "
                             f"(r0={chart.profile.r0:g}, top={chart.top:g})")


def _disc_mass(u, chart: DomainChart, P, s: float) -> float:
    return integrate_square(u, Region.disc(s, P, chart)).value


def _fit_exponent(radii: Sequence[float], masses: Sequence[float]) -> float:
    """Moindres carrés de log m contre log s sur la moitié intérieure des rayons"""
    pairs = [(r, m) for r, m in zip(radii, masses) if m > 0.0]
    if len(pairs) < 2:
        return math.nan
    inner = pairs[:max(2, int(math.ceil(len(pairs) / 2)))]
    log_s = np.log([r for r, _ in inner])
    log_m = np.log([m for _, m in inner])
    return float(np.polyfit(log_s, log_m, 1)[0])


def _ratio(numerator: float, denominator: float, flags: List[str]) -> float:
    if denominator <= 0.0:
        flags.append('infinite_frequency')
        logger.warning("⚠️ Vanishing mass at r0/C: frequency reported as infinite")
        return math.inf
    return numerator / denominator


def measure_masses(u: Union[GridField, Callable], chart: DomainChart, P: Tuple[float, float],
                   radii: Sequence[float], r0: Optional[float] = None,
                   C: Optional[float] = None) -> DoublingReport:
    """
    m(s) par quadrature découpée au bord, kappa ajusté, N = m(r0)/m(r0/C)

    r0 vaut par défaut le plus grand rayon.

    Raises:
        ParameterError: rayons vides ou non positifs, P hors de Gamma, disque hors de la grille
    """
    radii = sorted(float(s) for s in radii)
    if not radii or radii[0] <= 0.0:
        raise ParameterError(f"Radii must be a nonempty list of positive values, got {radii}")
    C = float(C or DOUBLING_CONFIG['frequency_C'])
    if C < 1.0:
        raise ParameterError(f"Frequency constant C must be >= 1, got {C}")
    r0 = float(r0 or radii[-1])
    _check_center(chart, P, max(radii[-1], r0))

    masses = [_disc_mass(u, chart, P, s) for s in radii]
    flags: List[str] = []
    if masses[0] <= 0.0:
        flags.append('zero_mass_smallest_radius')
        logger.warning(f"⚠️ Zero mass at the smallest radius s={radii[0]:g}: ratios unavailable")
    if any(b < a for a, b in zip(masses[:-1], masses[1:])):
        flags.append('non_monotone')
        logger.warning("⚠️ Masses are not nondecreasing in s")

    N = _ratio(_disc_mass(u, chart, P, r0), _disc_mass(u, chart, P, r0 / C), flags)
    kappa = _fit_exponent(radii, masses)
    report = DoublingReport(tuple(float(p) for p in P), radii, masses, C, r0, N, kappa, flags)
    logger.info(f"✅ Masses at P={report.center}: kappa={kappa:.4f} "
                f"(order {report.vanishing_order:.3f}), N={N:.6g} with C={C:g}")
    return report


def frequency(u: Union[GridField, Callable], chart: DomainChart, P: Tuple[float, float],
              r0: float, C: Optional[float] = None) -> float:
    """N = m(r0) / m(r0/C); inf si le dénominateur s'annule"""
    C = float(C or DOUBLING_CONFIG['frequency_C'])
    if C < 1.0:
        raise ParameterError(f"Frequency constant C must be >= 1, got {C}")
    _check_center(chart, P, r0)
    return _ratio(_disc_mass(u, chart, P, r0), _disc_mass(u, chart, P, r0 / C), [])


# === QUASI-DOUBLING ===

@dataclass
class QuasiDoublingCheck:
    """
    LHS(tau) = r_bar (2r)^(-2tau) m+(2r) + r_bar^(1-2tau) m+(r_bar)
    RHS(tau) = C [(r/4)^(-2tau) m+(r) + (r_bar0/2)^(-2tau) m+(r_bar0)]

    Toutes les quantités sont gardées en logarithme; C_min(tau) = LHS / (RHS / C).
    """
    r: float
    r_bar: float
    r_bar0: float
    masses: Dict[str, float]
    taus: List[float]
    C: float
    log_lhs: List[float] = field(default_factory=list)
    log_rhs_unit: List[float] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < 2.0 * self.r < self.r_bar < self.r_bar0 / 2.0:
            raise ParameterError(f"Radii must satisfy 0 < 2r < r_bar < r_bar0/2, got "
                                 f"r={self.r}, r_bar={self.r_bar}, r_bar0={self.r_bar0}")
        missing = [k for k in QUASI_MASS_KEYS if k not in self.masses]
        if missing:
            raise ParameterError(f"Missing half-disc masses {missing}")
        if not self.log_lhs:
            self.log_lhs = [self._log_lhs(t) for t in self.taus]
            self.log_rhs_unit = [self._log_rhs_unit(t) for t in self.taus]

    @classmethod
    def from_masses(cls, radii: Tuple[float, float, float], mass: Union[MassFunction, Dict[str, float]],
                    taus: Optional[Sequence[float]] = None,
                    C: Optional[float] = None) -> 'QuasiDoublingCheck':
        """Masses données par une fonction rho -> m+(rho) ou par un dict déjà évalué"""
        r, r_bar, r_bar0 = (float(v) for v in radii)
        if callable(mass):
            radius_of = {'2r': 2.0 * r, 'r_bar': r_bar, 'r': r, 'r_bar0': r_bar0}
            if not 0.0 < 2.0 * r < r_bar < r_bar0 / 2.0:
                raise ParameterError(f"Radii must satisfy 0 < 2r < r_bar < r_bar0/2, got {radii}")
            masses = {k: float(mass(rho)) for k, rho in radius_of.items()}
        else:
            masses = {k: float(v) for k, v in mass.items()}
        taus = [float(t) for t in (taus or CARLEMAN_CONFIG['taus'])]
        return cls(r, r_bar, r_bar0, masses, taus, float(C or DOUBLING_CONFIG['quasi_C']))

    def _log_lhs(self, tau: float) -> float:
        m = self.masses
        return _log_sum(math.log(self.r_bar) - 2.0 * tau * math.log(2.0 * self.r) + _log(m['2r']),
                        (1.0 - 2.0 * tau) * math.log(self.r_bar) + _log(m['r_bar']))

    def _log_rhs_unit(self, tau: float) -> float:
        m = self.masses
        return _log_sum(-2.0 * tau * math.log(self.r / 4.0) + _log(m['r']),
                        -2.0 * tau * math.log(self.r_bar0 / 2.0) + _log(m['r_bar0']))

    def c_min(self) -> List[float]:
        """Frontière de faisabilité: plus petit C vérifiant l'inégalité à chaque tau"""
        values = []
        for log_lhs, log_unit in zip(self.log_lhs, self.log_rhs_unit):
            if log_lhs == -math.inf:
                values.append(0.0)
            elif log_unit == -math.inf:
                values.append(math.inf)
            else:
                values.append(_exp(log_lhs - log_unit))
        return values

    def slack(self) -> List[float]:
        """RHS - LHS (peut être inf quand les deux membres débordent)"""
        log_C = _log(self.C)
        out = []
        for log_lhs, log_unit in zip(self.log_lhs, self.log_rhs_unit):
            lhs, rhs = _exp(log_lhs), _exp(log_C + log_unit)
            out.append(rhs - lhs if math.isfinite(lhs) else -math.inf)
        return out

    def feasible(self) -> List[bool]:
        return [self.C >= c for c in self.c_min()]

    @property
    def any_feasible(self) -> bool:
        return any(self.feasible())

    def to_dict(self) -> Dict:
        return {
            'radii': {'r': self.r, 'r_bar': self.r_bar, 'r_bar0': self.r_bar0},
            'masses': self.masses,
            'C': self.C,
            'taus': self.taus,
            'C_min': self.c_min(),
            'slack': self.slack(),
            'feasible': self.feasible(),
        }


def quasi_doubling_check(v: Union[GridField, Callable], radii: Tuple[float, float, float],
                         taus: Optional[Sequence[float]] = None,
                         C: Optional[float] = None) -> QuasiDoublingCheck:
    """
    Masses de v sur les demi-disques B_rho^+ puis évaluation par tau

    Raises:
        ParameterError: ordre des rayons 0 < 2r < r_bar < r_bar0/2 violé
    """
    r, r_bar, r_bar0 = (float(x) for x in radii)
    if not 0.0 < 2.0 * r < r_bar < r_bar0 / 2.0:
        raise ParameterError(f"Radii must satisfy 0 < 2r < r_bar < r_bar0/2, got {tuple(radii)}")

    def half_mass(rho: float) -> float:
        return integrate_square(v, Region.half_disc(rho, +1)).value

    q = QuasiDoublingCheck.from_masses((r, r_bar, r_bar0), half_mass, taus, C)
    c_min = q.c_min()
    finite = [c for c in c_min if math.isfinite(c)]
    logger.info(f"Quasi-doubling check on {len(q.taus)} tau values: C_min in "
                f"[{min(finite) if finite else math.nan:.4g}, {max(finite) if finite else math.nan:.4g}], "
                f"feasible for C={q.C:g}: {sum(q.feasible())}/{len(q.taus)}")
    return q


# === PASSAGE AU DOUBLING ===

@dataclass
class DoublingStatement:
    """m(s) <= constant m(r) avec s = 2r, constant = C N^k x facteur de forme"""
    s: float
    r: float
    tau: float
    tau_balance: float
    constant: float
    exponent: float
    C: float
    N: float
    k: float
    shape_factor: float
    table: List[Dict[str, float]] = field(default_factory=list)
    flag: str = 'ok'            # 'ok' ou 'no_statement'

    @property
    def emitted(self) -> bool:
        return self.flag == 'ok'

    def to_dict(self) -> Dict:
        return {
            's': self.s, 'r': self.r, 'tau': self.tau, 'tau_balance': self.tau_balance,
            'constant': self.constant, 'exponent': self.exponent, 'C': self.C, 'N': self.N,
            'k': self.k, 'shape_factor': self.shape_factor, 'table': self.table, 'flag': self.flag,
        }


def _no_statement(q: QuasiDoublingCheck, N: float, reason: str) -> DoublingStatement:
    logger.warning(f"⚠️ No doubling statement: {reason}")
    return DoublingStatement(2.0 * q.r, q.r, math.nan, math.nan, math.nan, math.nan,
                             math.nan, N, math.nan, math.nan, [], 'no_statement')


def optimize_tau_to_doubling(q: QuasiDoublingCheck, N: float) -> DoublingStatement:
    """
    Procédure standard rendue explicite

    Divisée par r_bar (2r)^(-2tau) m(r), l'inégalité donne
        m(2r)/m(r) <= const(tau) = [m(2r) + (2r/r_bar)^(2tau) m(r_bar)] / m(r)
    pour tout tau faisable. tau_bal égalise les deux termes du membre de droite en échelle
    logarithmique; tau* est le plus petit tau faisable de la grille, au-delà de tau_bal, dont
    const est à 5 % du minimum de la grille. La constante est écrite C_min(tau*) N^k.
    """
    if N < 1.0:
        raise ParameterError(f"Frequency N must be >= 1, got {N}")
    m = q.masses
    if m['r'] <= 0.0:
        return _no_statement(q, N, "vanishing mass m(r)")
    feasible = q.feasible()
    if not any(feasible):
        return _no_statement(q, N, f"C={q.C:g} below C_min for every tau")

    tau_balance = (math.log(m['r_bar0'] / m['r']) / (2.0 * math.log(2.0 * q.r_bar0 / q.r))
                   if m['r_bar0'] > 0.0 else 0.0)
    c_min = q.c_min()
    ratio = 2.0 * q.r / q.r_bar
    table = []
    for tau, cm, ok in zip(q.taus, c_min, feasible):
        const = (m['2r'] + ratio ** (2.0 * tau) * m['r_bar']) / m['r']
        table.append({'tau': tau, 'C_min': cm, 'feasible': ok, 'constant': const})

    candidates = [row for row in table if row['feasible']]
    best = min(row['constant'] for row in candidates)
    tolerance = DOUBLING_CONFIG['tau_tolerance']
    eligible = [row for row in candidates
                if row['tau'] >= tau_balance and row['constant'] <= (1.0 + tolerance) * best]
    chosen = min(eligible or candidates, key=lambda row: row['tau'])

    const = chosen['constant']
    C = chosen['C_min']
    if N <= 1.0 or C <= 0.0 or not math.isfinite(N):
        k = 0.0
    else:
        k = math.log(const / C) / math.log(N)
    shape = const / (C * N ** k) if C > 0.0 and math.isfinite(N) else 1.0
    statement = DoublingStatement(2.0 * q.r, q.r, chosen['tau'], tau_balance, const,
                                  math.log2(const), C, N, k, shape, table)
    logger.info(f"✅ Doubling statement: m({statement.s:g}) <= {const:.6g} m({q.r:g}) at "
                f"tau*={chosen['tau']:g} (tau_bal={tau_balance:.3f}), exponent {statement.exponent:.4f}")
    return statement


# === FORME FONCTIONNELLE ===

@dataclass
class DoublingFit:
    C: float
    k: float
    N: float
    A: float

    @property
    def exponent(self) -> float:
        return math.log2(self.A)

    def bound(self, s: float, r: float) -> float:
        """C N^k (s/r)^(log2(C N^k))"""
        return self.A * (s / r) ** self.exponent

    def to_dict(self) -> Dict:
        return {'C': self.C, 'k': self.k, 'N': self.N, 'A': self.A, 'exponent': self.exponent}


def _pairs(report: DoublingReport, limit: Optional[float] = None):
    radii, masses = report.radii, report.masses
    for i, (r, m_r) in enumerate(zip(radii, masses)):
        for s, m_s in zip(radii[i + 1:], masses[i + 1:]):
            if limit is not None and s > limit * (1.0 + 1e-12):
                continue
            if m_r > 0.0 and s > r:
                yield r, s, m_r, m_s


def fit_doubling_constants(report: DoublingReport, C: Optional[float] = None) -> DoublingFit:
    """
    Plus petite constante A = C N^k telle que m(s)/m(r) <= A (s/r)^(log2 A) sur toutes
    les paires r < s; log A = max log(m(s)/m(r)) / (1 + log2(s/r))
    """
    C = float(C) if C is not None and math.isfinite(C) and C > 0.0 else 1.0
    log_A = max((math.log(m_s / m_r) / (1.0 + math.log2(s / r))
                 for r, s, m_r, m_s in _pairs(report) if m_s > 0.0), default=0.0)
    log_A = max(log_A, math.log(C))
    N = report.N
    if N <= 1.0 or not math.isfinite(N):
        k = 0.0
        A = math.exp(log_A)
        C = A
    else:
        k = max(0.0, (log_A - math.log(C)) / math.log(N))
        A = C * N ** k
    return DoublingFit(C, k, N, A)


def check_doubling_form(report: DoublingReport, fit: DoublingFit,
                        restrict: bool = True) -> Dict:
    """m(s)/m(r) <= C N^k (s/r)^(log2(C N^k)) pour 0 < r < s < r0/C"""
    limit = report.r0 / report.C if restrict else None
    slack = DOUBLING_CONFIG['form_slack']
    violations = []
    checked = 0
    for r, s, m_r, m_s in _pairs(report, limit):
        checked += 1
        bound = fit.bound(s, r)
        if m_s / m_r > bound * (1.0 + slack):
            violations.append({'r': r, 's': s, 'ratio': m_s / m_r, 'bound': bound})
    if violations:
        logger.warning(f"⚠️ Doubling form violated on {len(violations)}/{checked} radius pairs")
    return {'passed': not violations, 'checked_pairs': checked, 'violations': violations,
            'limit': limit}
