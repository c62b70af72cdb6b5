"""
Reflect - Deuxième pas: source f de l'équation en v, extension impaire à B_1
et vérification de Delta^2 vbar = fbar
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from config.settings import REFLECT_CONFIG
from core.errors import DomainError
from core.flatten import FlattenedOperator, TwistData
from core.grid_field import GridField, bilaplacian, fd_weights, partial

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SourceField:
    """f sur R (contient B_1^+), décomposée en dérive et reste p2"""
    f: GridField
    drift: np.ndarray
    p2: np.ndarray

    def sample(self, y1, y2) -> np.ndarray:
        y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
        outside = ~self.f.contains(y1, y2)
        if np.any(outside):
            k = int(np.flatnonzero(outside)[0])
            raise DomainError(f"Source requested outside R at y=({y1.ravel()[k]:.4f}, "
                              f"{y2.ravel()[k]:.4f})", stage='reflect')
        return self.f.sample(y1, y2)


def compute_source(v: GridField, twist: TwistData, op: FlattenedOperator) -> SourceField:
    """
    f = -[(4 grad a / a + b) . grad Delta v + p2(v)] = Delta^2 v - L(a v) / a
    """
    a = twist.a.values
    values = v.values
    total = op.apply(a * values) / a
    h1, h2 = v.hx, v.hy
    accuracy = op.accuracy
    grad_a = np.stack([partial(a, h1, h2, 1, 0, accuracy), partial(a, h1, h2, 0, 1, accuracy)])
    drift = np.einsum('k...,k...->...', 4.0 * grad_a / a + op.b, op.grad_lap(values))
    bilap = bilaplacian(values, h1, h2, accuracy)
    p2 = total - bilap - drift
    f = -(drift + p2)
    logger.info(f"Source f computed: max|f| = {float(np.max(np.abs(f))):.4g}")
    return SourceField(v.with_values(f, name='f'), drift, p2)


def _reflect_values(values: np.ndarray) -> np.ndarray:
    full = np.concatenate([-values[:, :0:-1], values], axis=1)
    full[:, values.shape[1] - 1] = 0.0
    return full


def odd_reflect(field_plus: GridField, tolerance: Optional[float] = None,
                name: Optional[str] = None) -> GridField:
    """
    Image impaire exacte: vbar(y1, -y2) = -vbar(y1, y2), ligne médiane mise à 0

    Les valeurs de la ligne médiane au-dessus de `tolerance` sont signalées.
    """
    y2 = field_plus.y
    if abs(y2[0]) > 1e-14:
        raise DomainError(f"Field '{field_plus.name}' does not start on the edge y2 = 0",
                          stage='reflect')
    midline = np.abs(field_plus.values[:, 0])
    if tolerance is not None and np.any(midline >= tolerance):
        logger.warning(f"⚠️ {int(np.sum(midline >= tolerance))} midline values of "
                       f"'{field_plus.name}' exceed {tolerance:.3e} (max {midline.max():.3e})")
    y_full = np.concatenate([-y2[:0:-1], y2])
    y_full[y2.size - 1] = 0.0
    values = _reflect_values(field_plus.values)
    yy1, yy2 = np.meshgrid(field_plus.x, y_full, indexing='ij')
    mask = yy1 ** 2 + yy2 ** 2 <= 1.0 + 1e-12
    return GridField(field_plus.x, y_full, values, mask, name or f'{field_plus.name}bar')


@dataclass(frozen=True, eq=False)
class ReflectedField:
    """vbar, fbar sur la grille carrée [-1, 1]^2 masquée par le disque unité"""
    vbar: GridField
    fbar: GridField
    midline_defect: float = 0.0
    snapped: int = 0
    unsnapped: int = 0

    @property
    def midline_index(self) -> int:
        return int(np.argmin(np.abs(self.vbar.y)))

    def symmetry_defect(self) -> float:
        v = self.vbar.values
        return float(np.max(np.abs(v + v[:, ::-1])))


def reflect(v: GridField, source: SourceField, boundary_residual: float = 0.0) -> ReflectedField:
    """Étend v et f; la ligne médiane de v est ramenée à 0 sous 10 x (résidu de bord)"""
    tolerance = REFLECT_CONFIG['snap_factor'] * max(boundary_residual, REFLECT_CONFIG['snap_floor'])
    midline = np.abs(v.values[:, 0])
    snapped = int(np.sum((midline > 0.0) & (midline < tolerance)))
    unsnapped = int(np.sum(midline >= tolerance))
    vbar = odd_reflect(v, tolerance, name='vbar')
    fbar = odd_reflect(source.f, None, name='fbar')
    result = ReflectedField(vbar, fbar, float(midline.max()), snapped, unsnapped)
    logger.info(f"✅ Odd extension built: {snapped} midline nodes snapped, {unsnapped} above "
                f"tolerance, symmetry defect {result.symmetry_defect():.1e}")
    return result


# === VÉRIFICATION ===

def _one_sided(values: np.ndarray, j0: int, order: int, points: int, sign: int) -> np.ndarray:
    offsets = np.arange(points) * sign
    weights = fd_weights(offsets, order)
    return sum(w * values[:, j0 + o] for w, o in zip(weights, offsets))


def jump_indicators(vbar: GridField, max_radius: Optional[float] = None) -> Dict[str, float]:
    """
    Sauts de d2/dy2 et d3/dy3 à travers y2 = 0 et quatrième différence sur la ligne médiane
    (contenu calculable de vbar dans H^4)
    """
    max_radius = max_radius or REFLECT_CONFIG['max_radius']
    values, h = vbar.values, vbar.hy
    j0 = int(np.argmin(np.abs(vbar.y)))
    columns = np.abs(vbar.x) <= max_radius

    d2_plus = _one_sided(values, j0, 2, 4, 1) / h ** 2
    d2_minus = _one_sided(values, j0, 2, 4, -1) / h ** 2
    centred3 = fd_weights(range(-2, 3), 3)
    d3_centre = sum(w * values[:, j0 + o] for w, o in zip(centred3, range(-2, 3))) / h ** 3
    d3_plus = _one_sided(values, j0, 3, 5, 1) / h ** 3

    fourth = fd_weights(range(-2, 3), 4)
    fourth_diff = max(
        float(np.max(np.abs(sum(w * values[columns, j + o]
                                for w, o in zip(fourth, range(-2, 3)))))) / h ** 4
        for j in (j0 - 1, j0, j0 + 1)
    )
    return {
        'jump_d2': float(np.max(np.abs(d2_plus - d2_minus)[columns])),
        'jump_d3': float(np.max(np.abs(d3_centre - d3_plus)[columns])),
        'fourth_difference_midline': fourth_diff,
    }


def verify_extension(r: ReflectedField) -> Dict:
    """
    ||Delta^2 vbar - fbar|| sur B_rho, rho <= 0.9, par anneaux et dans une bande
    autour de y2 = 0, plus les indicateurs de saut
    """
    vbar, fbar = r.vbar, r.fbar
    h1, h2 = vbar.hx, vbar.hy
    residual = bilaplacian(vbar.values, h1, h2, REFLECT_CONFIG['fd_accuracy']) - fbar.values
    xx, yy = vbar.meshgrid()
    radius = np.hypot(xx, yy)
    max_radius = REFLECT_CONFIG['max_radius']
    width = REFLECT_CONFIG['annulus_width']
    cell = h1 * h2

    annuli: List[Dict] = []
    n_annuli = int(round(max_radius / width))
    for k in range(n_annuli):
        inner, outer = k * width, min((k + 1) * width, max_radius)
        ring = (radius >= inner) & ((radius < outer) if k < n_annuli - 1 else (radius <= outer))
        annuli.append({
            'inner': inner, 'outer': outer,
            'l2': float(np.sqrt(cell * np.sum(residual[ring] ** 2))),
            'max': float(np.max(np.abs(residual[ring]))) if np.any(ring) else 0.0,
        })

    disc = radius <= max_radius
    band = disc & (np.abs(yy) <= REFLECT_CONFIG['band_layers'] * h2 + 1e-14)
    report = {
        'residual_l2': float(np.sqrt(cell * np.sum(residual[disc] ** 2))),
        'residual_max': float(np.max(np.abs(residual[disc]))),
        'band_l2': float(np.sqrt(cell * np.sum(residual[band] ** 2))),
        'annuli': annuli,
        'symmetry_defect': r.symmetry_defect(),
        'midline_max': float(np.max(np.abs(vbar.values[:, r.midline_index]))),
        **jump_indicators(vbar, max_radius),
    }
    logger.info(f"Extension residual on B_{max_radius}: l2={report['residual_l2']:.3e}, "
                f"band={report['band_l2']:.3e}, jump d2={report['jump_d2']:.3e}")
    return report
